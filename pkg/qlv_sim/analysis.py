"""Fidelity curves, verification-instance probabilities and cloning bounds."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import (
    IO,
    Any,
    Dict,
    Iterable,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from scipy.stats import binom
from typing_extensions import Literal

from .config import Settings, get_settings
from .errors import ConfigurationError, DomainError, ValidationError
from .quantum.channels import ChannelSpec, cat_fidelity
from .quantum.random_noise import (
    FidelityEstimate,
    RandomChannelSpec,
    mean_fidelity_combined_channel,
    mean_fidelity_random_channel,
)

logger = logging.getLogger(__name__)

AnyChannel = Union[ChannelSpec, RandomChannelSpec]
Strategy = Literal["bellStates", "ghzState"]

CLONING_BOUND_BIPARTITE = 0.7
CLONING_BOUND_TRIPARTITE = 0.6
CROSS_CHECK_MAX_QUBITS = 8
CSV_FIELDS = (
    "channel",
    "family_params",
    "N",
    "p",
    "mean_fidelity",
    "stderr",
    "instance_prob_bell",
    "instance_prob_ghz",
)


@dataclass(frozen=True)
class GridSpec:
    """Evenly spaced p values ``start..end`` (inclusive) with ``points`` entries."""

    start: float = 0.0
    end: float = 0.5
    points: int = 101

    def __post_init__(self) -> None:
        if self.points < 1:
            raise ConfigurationError("grid needs at least one point", field="points")
        if not 0.0 <= self.start <= 1.0 or not 0.0 <= self.end <= 1.0:
            raise ConfigurationError("grid bounds must lie in [0, 1]", field="grid")
        if self.points > 1 and self.end <= self.start:
            raise ConfigurationError("grid end must exceed its start", field="grid")

    def values(self) -> Tuple[float, ...]:
        return tuple(float(value) for value in np.linspace(self.start, self.end, self.points))

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``START:END:POINTS``."""

        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"grid '{text}' is not START:END:POINTS", field="grid")
        try:
            return cls(start=float(parts[0]), end=float(parts[1]), points=int(parts[2]))
        except ValueError as exc:
            raise ConfigurationError(f"grid '{text}' is not numeric", field="grid", cause=exc)

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "GridSpec":
        for key in payload:
            if key not in ("start", "end", "points"):
                raise ConfigurationError(f"unknown grid key '{key}'", field=key)
        return cls(
            start=float(payload.get("start", 0.0)),
            end=float(payload.get("end", 0.5)),
            points=int(payload.get("points", 101)),
        )


def channel_from_payload(payload: Mapping[str, Any]) -> AnyChannel:
    """Build a channel spec from its JSON form."""

    if not isinstance(payload, Mapping):
        raise ConfigurationError("channel entries must be JSON objects", field="channels")
    if payload.get("family") == "randomNoise":
        return RandomChannelSpec.from_payload(payload)
    return ChannelSpec.from_payload(payload)


def with_seed(channel: AnyChannel, seed: Optional[int]) -> AnyChannel:
    if seed is None or not channel.is_stochastic:
        return channel
    return replace(channel, seed=seed)


@dataclass(frozen=True)
class CurvePoint:
    p: float
    mean_fidelity: float
    stderr: float = 0.0


@dataclass(frozen=True)
class FidelityCurve:
    """Fidelity of the N-qubit cat state against ``p`` for one channel."""

    channel: AnyChannel
    num_qubits: int
    points: Tuple[CurvePoint, ...]

    def __post_init__(self) -> None:
        ps = [point.p for point in self.points]
        if any(later <= earlier for earlier, later in zip(ps, ps[1:])):
            raise ValidationError("curve points must be strictly ascending in p")
        for point in self.points:
            if not 0.0 <= point.mean_fidelity <= 1.0:
                raise ValidationError(
                    f"fidelity {point.mean_fidelity} at p={point.p} outside [0, 1]"
                )
            if point.stderr < 0:
                raise ValidationError("standard errors are non-negative")

    @property
    def grid(self) -> Tuple[float, ...]:
        return tuple(point.p for point in self.points)

    def fidelity_at(self, p: float) -> float:
        for point in self.points:
            if math.isclose(point.p, p, rel_tol=0.0, abs_tol=1e-12):
                return point.mean_fidelity
        raise DomainError(f"p={p} is not on this curve's grid")


def _check_grid(p_grid: Sequence[float]) -> Tuple[float, ...]:
    grid = tuple(float(p) for p in p_grid)
    if not grid:
        raise ValidationError("p grid must not be empty")
    if any(later <= earlier for earlier, later in zip(grid, grid[1:])):
        raise ValidationError("p grid must be sorted strictly ascending")
    if grid[0] < 0.0 or grid[-1] > 1.0:
        raise ValidationError("p grid values must lie in [0, 1]")
    return grid


def evaluate_point(
    channel: AnyChannel,
    num_qubits: int,
    *,
    cross_check: bool = True,
    settings: Optional[Settings] = None,
) -> FidelityEstimate:
    """Fidelity (and Monte Carlo standard error) of the cat state under ``channel``."""

    if isinstance(channel, RandomChannelSpec):
        return mean_fidelity_random_channel(num_qubits, channel, settings=settings)
    if channel.is_stochastic:
        return mean_fidelity_combined_channel(num_qubits, channel, settings=settings)
    value = cat_fidelity(
        channel,
        num_qubits,
        cross_check=cross_check and num_qubits <= CROSS_CHECK_MAX_QUBITS,
        validate=False,
        settings=settings,
    )
    return FidelityEstimate(value, 0.0)


def _evaluate_task(
    task: Tuple[AnyChannel, int, bool, Settings]
) -> FidelityEstimate:
    channel, num_qubits, cross_check, settings = task
    return evaluate_point(channel, num_qubits, cross_check=cross_check, settings=settings)


def fidelity_curve(
    num_qubits: int,
    channel: AnyChannel,
    p_grid: Sequence[float],
    *,
    cross_check: bool = True,
    workers: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> FidelityCurve:
    """Evaluate ``channel`` on every grid point.

    Deterministic channels yield exact values (``stderr == 0``); damping families are
    cross-checked against per-qubit Kraus application up to eight qubits. With
    ``workers`` the grid points run in a process pool and are reassembled in order.
    """

    grid = _check_grid(p_grid)
    active = settings or get_settings()
    tasks = [(channel.at_p(p), num_qubits, cross_check, active) for p in grid]
    logger.info(
        "computing %s curve for N=%d over %d points", channel.family, num_qubits, len(grid)
    )
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            estimates = list(pool.map(_evaluate_task, tasks))
    else:
        estimates = [_evaluate_task(task) for task in tasks]

    points = tuple(
        CurvePoint(p=p, mean_fidelity=min(max(estimate.mean, 0.0), 1.0), stderr=estimate.stderr)
        for p, estimate in zip(grid, estimates)
    )
    if channel.is_stochastic:
        _warn_if_not_monotone(channel, num_qubits, points)
    return FidelityCurve(channel=channel, num_qubits=num_qubits, points=points)


def _warn_if_not_monotone(
    channel: AnyChannel, num_qubits: int, points: Sequence[CurvePoint]
) -> None:
    for earlier, later in zip(points, points[1:]):
        slack = 3 * math.hypot(earlier.stderr, later.stderr)
        if later.mean_fidelity > earlier.mean_fidelity + slack:
            logger.warning(
                "%s curve for N=%d rises between p=%s and p=%s beyond 3 standard errors",
                channel.family, num_qubits, earlier.p, later.p,
            )


@dataclass(frozen=True)
class VerificationModel:
    """How many states one instance of location verification needs."""

    num_stations: int
    strategy: Strategy
    per_state_fidelity: float

    def __post_init__(self) -> None:
        if self.num_stations < 2:
            raise ValidationError("location verification needs at least two stations")
        if self.strategy not in ("bellStates", "ghzState"):
            raise ValidationError(f"unknown strategy '{self.strategy}'")
        if not 0.0 <= self.per_state_fidelity <= 1.0:
            raise ValidationError("per-state fidelity must lie in [0, 1]")

    @property
    def states_per_instance(self) -> int:
        if self.strategy == "ghzState":
            return 1
        return math.ceil(self.num_stations / 2)


def instance_probability(model: VerificationModel) -> float:
    return model.per_state_fidelity**model.states_per_instance


def at_least_k_of_m(k: int, m: int, fidelity: float) -> float:
    """Probability that at least ``k`` of ``m`` independent decodes succeed."""

    if not 0 <= k <= m:
        raise DomainError(f"need 0 <= k <= m, got k={k}, m={m}")
    if not 0.0 <= fidelity <= 1.0:
        raise DomainError("fidelity must lie in [0, 1]")
    if k == 0:
        return 1.0
    return float(binom.sf(k - 1, m, fidelity))


class CloningPass(NamedTuple):
    probability: float
    log10: float


def cloning_pass_probability(clone_fidelity: float, length: int) -> CloningPass:
    """Chance a cloning adversary decodes all ``length`` challenge states."""

    if length < 1:
        raise DomainError("challenge length must be at least 1")
    if not 0.0 <= clone_fidelity <= 1.0:
        raise DomainError("clone fidelity must lie in [0, 1]")
    if clone_fidelity == 0.0:
        return CloningPass(0.0, -math.inf)
    exponent = length * math.log10(clone_fidelity)
    return CloningPass(10.0**exponent, exponent)


@dataclass(frozen=True)
class ComparisonRow:
    p: float
    fidelity_bell: float
    fidelity_ghz: float
    instance_prob_bell: float
    instance_prob_ghz: float
    bell_relaxed: float

    @property
    def difference(self) -> float:
        """GHZ minus Bell instance probability."""

        return self.instance_prob_ghz - self.instance_prob_bell

    @property
    def ghz_ahead(self) -> bool:
        return self.difference > 0


@dataclass(frozen=True)
class StrategyComparison:
    num_stations: int
    channel: AnyChannel
    rows: Tuple[ComparisonRow, ...]

    @property
    def bell_states_per_instance(self) -> int:
        return math.ceil(self.num_stations / 2)

    @property
    def crossover(self) -> Optional[float]:
        """First p at which the Bell strategy overtakes a previously leading GHZ state."""

        leading = False
        for row in self.rows:
            if row.p > 0 and row.ghz_ahead:
                leading = True
            elif leading and row.difference < 0:
                return row.p
        return None


def _as_channel(channel: Union[str, AnyChannel]) -> AnyChannel:
    if isinstance(channel, str):
        if channel == "randomNoise":
            return RandomChannelSpec(p=0.0)
        return ChannelSpec(family=channel)  # type: ignore[arg-type]
    return channel


def strategy_comparison(
    num_stations: int,
    channel: Union[str, AnyChannel],
    p_grid: Sequence[float],
    *,
    workers: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> StrategyComparison:
    """Compare ``ceil(N/2)`` Bell pairs against one N-qubit GHZ state per instance."""

    if num_stations < 3:
        raise DomainError("strategy comparisons need at least three stations")
    spec = _as_channel(channel)
    bell = fidelity_curve(2, spec, p_grid, workers=workers, settings=settings)
    ghz = fidelity_curve(num_stations, spec, p_grid, workers=workers, settings=settings)
    pairs = math.ceil(num_stations / 2)
    rows = []
    for bell_point, ghz_point in zip(bell.points, ghz.points):
        rows.append(
            ComparisonRow(
                p=bell_point.p,
                fidelity_bell=bell_point.mean_fidelity,
                fidelity_ghz=ghz_point.mean_fidelity,
                instance_prob_bell=instance_probability(
                    VerificationModel(num_stations, "bellStates", bell_point.mean_fidelity)
                ),
                instance_prob_ghz=instance_probability(
                    VerificationModel(num_stations, "ghzState", ghz_point.mean_fidelity)
                ),
                bell_relaxed=at_least_k_of_m(pairs - 1, pairs, bell_point.mean_fidelity),
            )
        )
    comparison = StrategyComparison(num_stations=num_stations, channel=spec, rows=tuple(rows))
    logger.info(
        "compared strategies for %d stations under %s; crossover at p=%s",
        num_stations, spec.family, comparison.crossover,
    )
    return comparison


def _number(value: float) -> str:
    return format(value, ".17g")


@dataclass(frozen=True)
class CurvesConfig:
    """A ``curves`` job: channels by qubit counts over one p grid."""

    channels: Tuple[AnyChannel, ...]
    qubits: Tuple[int, ...]
    grid: GridSpec = GridSpec()
    workers: Optional[int] = None

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "CurvesConfig":
        _reject_unknown(payload, ("channels", "N", "grid", "workers", "description"))
        channels = payload.get("channels")
        if not isinstance(channels, list) or not channels:
            raise ConfigurationError("'channels' must be a non-empty list", field="channels")
        qubits = payload.get("N")
        if not isinstance(qubits, list) or not qubits or not all(
            isinstance(n, int) and n >= 1 for n in qubits
        ):
            raise ConfigurationError("'N' must be a non-empty list of qubit counts", field="N")
        return cls(
            channels=tuple(channel_from_payload(item) for item in channels),
            qubits=tuple(qubits),
            grid=GridSpec.from_payload(payload.get("grid", {})),
            workers=payload.get("workers"),
        )


@dataclass(frozen=True)
class CompareConfig:
    """A ``compare`` job: strategy comparisons for several station counts."""

    channels: Tuple[AnyChannel, ...]
    stations: Tuple[int, ...]
    grid: GridSpec = GridSpec()
    workers: Optional[int] = None

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "CompareConfig":
        _reject_unknown(payload, ("channels", "N", "grid", "workers", "description"))
        channels = payload.get("channels")
        if not isinstance(channels, list) or not channels:
            raise ConfigurationError("'channels' must be a non-empty list", field="channels")
        stations = payload.get("N")
        if not isinstance(stations, list) or not stations or not all(
            isinstance(n, int) and n >= 3 for n in stations
        ):
            raise ConfigurationError("'N' must list station counts of at least 3", field="N")
        return cls(
            channels=tuple(channel_from_payload(item) for item in channels),
            stations=tuple(stations),
            grid=GridSpec.from_payload(payload.get("grid", {})),
            workers=payload.get("workers"),
        )


def _reject_unknown(payload: Mapping[str, Any], allowed: Iterable[str]) -> None:
    if not isinstance(payload, Mapping):
        raise ConfigurationError("configuration must be a JSON object")
    known = set(allowed)
    for key in payload:
        if key not in known:
            raise ConfigurationError(f"unknown configuration key '{key}'", field=key)


def curve_rows(
    curves: Sequence[FidelityCurve], bell_curves: Mapping[str, FidelityCurve]
) -> List[Dict[str, str]]:
    """CSV records for ``curves``.

    ``bell_curves`` maps a channel label to its two-qubit curve on the same grid; the
    Bell instance probability of an N-row is that fidelity to the power ``ceil(N/2)``.
    """

    rows: List[Dict[str, str]] = []
    for curve in curves:
        label = _channel_label(curve.channel)
        bell = bell_curves[label]
        for point, bell_point in zip(curve.points, bell.points):
            bell_probability = instance_probability(
                VerificationModel(max(curve.num_qubits, 2), "bellStates", bell_point.mean_fidelity)
            )
            rows.append(
                {
                    "channel": curve.channel.family,
                    "family_params": curve.channel.family_params(),
                    "N": str(curve.num_qubits),
                    "p": _number(point.p),
                    "mean_fidelity": _number(point.mean_fidelity),
                    "stderr": _number(point.stderr),
                    "instance_prob_bell": _number(bell_probability),
                    "instance_prob_ghz": _number(point.mean_fidelity),
                }
            )
    return rows


def comparison_rows(comparisons: Sequence[StrategyComparison]) -> List[Dict[str, str]]:
    rows: List[Dict[str, str]] = []
    for comparison in comparisons:
        for row in comparison.rows:
            rows.append(
                {
                    "channel": comparison.channel.family,
                    "family_params": comparison.channel.family_params(),
                    "N": str(comparison.num_stations),
                    "p": _number(row.p),
                    "mean_fidelity": _number(row.fidelity_ghz),
                    "stderr": _number(0.0),
                    "instance_prob_bell": _number(row.instance_prob_bell),
                    "instance_prob_ghz": _number(row.instance_prob_ghz),
                }
            )
    return rows


def _channel_label(channel: AnyChannel) -> str:
    return f"{channel.family}|{channel.family_params()}"


def write_csv(rows: Iterable[Mapping[str, str]], stream: IO[str]) -> None:
    writer = csv.DictWriter(stream, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def render_csv(rows: Iterable[Mapping[str, str]]) -> str:
    buffer = io.StringIO()
    write_csv(rows, buffer)
    return buffer.getvalue()


def run_curves_config(
    config: CurvesConfig, *, settings: Optional[Settings] = None
) -> Tuple[List[FidelityCurve], Dict[str, FidelityCurve]]:
    """Evaluate every (channel, N) curve in ``config`` plus the matching Bell curves."""

    grid = config.grid.values()
    curves: List[FidelityCurve] = []
    bell_curves: Dict[str, FidelityCurve] = {}
    for channel in config.channels:
        by_size: Dict[int, FidelityCurve] = {}
        for num_qubits in sorted(set(config.qubits) | {2}):
            by_size[num_qubits] = fidelity_curve(
                num_qubits, channel, grid, workers=config.workers, settings=settings
            )
        bell_curves[_channel_label(channel)] = by_size[2]
        curves.extend(by_size[n] for n in config.qubits)
    return curves, bell_curves
