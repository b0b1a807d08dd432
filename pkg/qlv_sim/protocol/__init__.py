"""Event-driven simulation of the entanglement-swapping location verification protocol."""

from .frames import bell_swap_table, compose, frame_mismatches
from .scenario import (
    ScenarioResult,
    load_scenario,
    read_trace,
    render_verdict,
    run_scenario,
    sweep_displacement,
    write_trace,
)
from .types import (
    ClassicalMessage,
    DeviceBehavior,
    Geometry,
    PairRecord,
    PairRegistry,
    ScenarioConfig,
    Verdict,
)
from .world import ProtocolWorld, Step

__all__ = [
    "ClassicalMessage",
    "DeviceBehavior",
    "Geometry",
    "PairRecord",
    "PairRegistry",
    "ProtocolWorld",
    "ScenarioConfig",
    "ScenarioResult",
    "Step",
    "Verdict",
    "bell_swap_table",
    "compose",
    "frame_mismatches",
    "load_scenario",
    "read_trace",
    "render_verdict",
    "run_scenario",
    "sweep_displacement",
    "write_trace",
]
