"""Scenario orchestration, trace files and displacement sweeps."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import IO, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from ..errors import ConfigurationError
from ._transport import TraceEvent
from .types import DeviceBehavior, ScenarioConfig, Verdict
from .world import ProtocolWorld, TransportFactory

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ScenarioResult(NamedTuple):
    verdict: Verdict
    trace: List[TraceEvent]


def run_scenario(
    config: ScenarioConfig,
    *,
    transport_factory: Optional[TransportFactory] = None,
) -> ScenarioResult:
    """Run every protocol step for ``config`` and return the verdict with its trace."""

    logger.info(
        "running %s scenario with seed %d", config.device_behavior.kind, config.seed
    )
    world = ProtocolWorld.setup(config, transport_factory=transport_factory)
    verdict = world.run_all()
    return ScenarioResult(verdict=verdict, trace=world.trace)


def load_scenario(path: PathLike) -> ScenarioConfig:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario '{path}'", field="config", cause=exc)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"scenario '{path}' is not valid JSON", field="config", cause=exc)
    return ScenarioConfig.from_payload(payload)


def _trace_line(event: TraceEvent) -> str:
    return json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":"))


def write_trace(events: Iterable[TraceEvent], stream: IO[str]) -> None:
    """Write ``events`` as JSON lines."""

    for event in events:
        stream.write(_trace_line(event))
        stream.write("\n")


def read_trace(stream: IO[str]) -> List[TraceEvent]:
    events = []
    for number, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            events.append(TraceEvent.from_payload(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"trace line {number} is malformed", field="trace", cause=exc)
    return events


def render_verdict(verdict: Verdict) -> str:
    return json.dumps(verdict.to_dict(), sort_keys=True, indent=2) + "\n"


def _displaced(config: ScenarioConfig, offset: float) -> ScenarioConfig:
    x, y = config.geometry.device
    behavior = DeviceBehavior(kind="displaced", actual_position=(x + offset, y))
    return replace(config, device_behavior=behavior)


def _sweep_task(task: Tuple[ScenarioConfig, float]) -> Verdict:
    config, offset = task
    return run_scenario(_displaced(config, offset)).verdict


def sweep_displacement(
    config: ScenarioConfig,
    offsets: Sequence[float],
    *,
    workers: Optional[int] = None,
) -> List[Tuple[float, Verdict]]:
    """Run ``config`` with the device moved by each offset along x; results keep input order."""

    tasks = [(config, float(offset)) for offset in offsets]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            verdicts = list(pool.map(_sweep_task, tasks))
    else:
        verdicts = [_sweep_task(task) for task in tasks]
    return [(offset, verdict) for (_, offset), verdict in zip(tasks, verdicts)]
