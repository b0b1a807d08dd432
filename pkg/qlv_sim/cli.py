"""Command-line entry point: ``qlv-sim {curves,compare,protocol,attack,selftest}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import IO, Any, Callable, Iterator, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (
    CompareConfig,
    CurvesConfig,
    GridSpec,
    comparison_rows,
    curve_rows,
    run_curves_config,
    strategy_comparison,
    with_seed,
    write_csv,
)
from .errors import ConfigurationError, QlvError, ResourceError
from .protocol.scenario import (
    load_scenario,
    render_verdict,
    run_scenario,
    write_trace,
)
from .protocol.types import DeviceBehavior, ScenarioConfig
from .selftest import run_selftest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_USAGE = 2
EXIT_REJECTED = 3
SUMMARY_POINTS = (0.05, 0.1, 0.2)


def _load_json(path: Optional[str]) -> Mapping[str, Any]:
    if path is None:
        raise ConfigurationError("--config is required for this command", field="config")
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config '{path}'", field="config", cause=exc)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config '{path}' is not valid JSON", field="config", cause=exc)
    if not isinstance(payload, Mapping):
        raise ConfigurationError("config must be a JSON object", field="config")
    return payload


def _check_output(path: Optional[str]) -> None:
    if path is not None and not Path(path).parent.exists():
        raise ConfigurationError(
            f"output directory '{Path(path).parent}' does not exist", field="out"
        )


@contextmanager
def _open_output(path: Optional[str]) -> Iterator[IO[str]]:
    """Yield ``--out`` opened for writing, or standard output when it is omitted."""

    if path is None:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        yield handle


def run_curves(args: argparse.Namespace) -> int:
    config = CurvesConfig.from_payload(_load_json(args.config))
    config = replace(
        config,
        channels=tuple(with_seed(channel, args.seed) for channel in config.channels),
        grid=args.grid or config.grid,
        workers=args.workers or config.workers,
    )
    _check_output(args.out)
    curves, bell_curves = run_curves_config(config)
    with _open_output(args.out) as stream:
        write_csv(curve_rows(curves, bell_curves), stream)
    if args.out and not args.quiet:
        print(f"{'channel':<24} {'N':>3} " + " ".join(f"F(p={p:<4})" for p in SUMMARY_POINTS))
        for curve in curves:
            fidelities = [point.mean_fidelity for point in curve.points]
            values = np.interp(SUMMARY_POINTS, curve.grid, fidelities)
            cells = " ".join(f"{value:>10.6f}" for value in values)
            print(f"{curve.channel.family:<24} {curve.num_qubits:>3} {cells}")
    return EXIT_OK


def run_compare(args: argparse.Namespace) -> int:
    config = CompareConfig.from_payload(_load_json(args.config))
    grid = (args.grid or config.grid).values()
    _check_output(args.out)
    comparisons = [
        strategy_comparison(
            stations, with_seed(channel, args.seed), grid, workers=args.workers or config.workers
        )
        for channel in config.channels
        for stations in config.stations
    ]
    with _open_output(args.out) as stream:
        write_csv(comparison_rows(comparisons), stream)
    if args.out and not args.quiet:
        for comparison in comparisons:
            crossover = comparison.crossover
            print(
                f"{comparison.channel.family:<24} N={comparison.num_stations:<3} "
                f"crossover p={'none' if crossover is None else format(crossover, '.4f')}"
            )
    return EXIT_OK


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    if args.config is None:
        raise ConfigurationError("--config is required for this command", field="config")
    return load_scenario(args.config).with_seed(args.seed)


def _execute(config: ScenarioConfig, args: argparse.Namespace) -> int:
    _check_output(args.out)
    _check_output(args.trace)
    result = run_scenario(config)
    with _open_output(args.out) as stream:
        stream.write(render_verdict(result.verdict))
    if args.trace:
        with _open_output(args.trace) as stream:
            write_trace(result.trace, stream)
    if args.out and not args.quiet:
        verdict = result.verdict
        status = "ACCEPT" if verdict.accept else "REJECT (" + ", ".join(verdict.reasons) + ")"
        print(
            f"{status}: max residual {verdict.max_residual:.3e} s, "
            f"dibit error rate {verdict.dibit_error_rate:.4f}"
        )
    return EXIT_OK if result.verdict.accept else EXIT_REJECTED


def run_protocol(args: argparse.Namespace) -> int:
    return _execute(_scenario(args), args)


def run_attack(args: argparse.Namespace) -> int:
    config = _scenario(args)
    if args.displace is not None:
        x, y = config.geometry.device
        behavior = DeviceBehavior(kind="displaced", actual_position=(x + args.displace, y))
        config = replace(config, device_behavior=behavior)
    elif args.clone is not None:
        config = replace(
            config, device_behavior=DeviceBehavior(kind="cloner", clone_fidelity=args.clone)
        )
    if config.device_behavior.kind == "honest":
        raise ConfigurationError(
            "attack needs a displaced or cloner device (config or --displace/--clone)",
            field="deviceBehavior",
        )
    return _execute(config, args)


def run_selftest_command(args: argparse.Namespace) -> int:
    report = run_selftest()
    if not args.quiet:
        for line in report.lines():
            print(line)
    return EXIT_OK if report.passed else EXIT_SELFTEST_FAILED


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _grid(text: str) -> GridSpec:
    try:
        return GridSpec.parse(text)
    except ConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qlv-sim",
        description="Decoherence and protocol simulator for quantum location verification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output file (standard output when omitted)")
    common.add_argument("--seed", type=_seed, help="override the configured seed")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="only report errors")
    verbosity.add_argument("--verbose", action="store_true", help="log progress")

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--grid", type=_grid, help="p grid as START:END:POINTS")
    sweep.add_argument("--workers", type=int, help="evaluate grid points in N processes")

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument("--trace", help="write the JSON-lines event trace here")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(
        "curves", parents=[common, sweep], help="fidelity against p for channel families"
    ).set_defaults(handler=run_curves)
    commands.add_parser(
        "compare", parents=[common, sweep], help="Bell pairs against GHZ states per instance"
    ).set_defaults(handler=run_compare)
    commands.add_parser(
        "protocol", parents=[common, scenario], help="run a location verification scenario"
    ).set_defaults(handler=run_protocol)
    attack = commands.add_parser(
        "attack", parents=[common, scenario], help="run a scenario against a dishonest device"
    )
    adversary = attack.add_mutually_exclusive_group()
    adversary.add_argument("--displace", type=float, help="move the device this many metres")
    adversary.add_argument("--clone", type=float, help="cloner fidelity FClone")
    attack.set_defaults(handler=run_attack)
    commands.add_parser(
        "selftest", parents=[common], help="run the invariant suite"
    ).set_defaults(handler=run_selftest_command)
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.WARNING
    if getattr(args, "verbose", False):
        level = logging.INFO
    elif getattr(args, "quiet", False):
        level = logging.ERROR
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except ConfigurationError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        print(f"qlv-sim: configuration error{field}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as exc:
        print(f"qlv-sim: resource error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QlvError as exc:
        print(f"qlv-sim: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
