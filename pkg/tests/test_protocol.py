from __future__ import annotations

import io
import math
from dataclasses import replace
from typing import List, Tuple

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qlv_sim.errors import (
    ConfigurationError,
    ProtocolCorruptionError,
    ProtocolOrderError,
    ResourceError,
    ValidationError,
)
from qlv_sim.protocol import (
    DeviceBehavior,
    Geometry,
    PairRecord,
    PairRegistry,
    ProtocolWorld,
    ScenarioConfig,
    Step,
    bell_swap_table,
    compose,
    frame_mismatches,
    read_trace,
    run_scenario,
    sweep_displacement,
    write_trace,
)
from qlv_sim.protocol._transport import EventTransport
from qlv_sim.protocol.frames import bit_errors, corrected_dibit
from qlv_sim.protocol.types import Endpoint
from qlv_sim.quantum.channels import ChannelSpec

SPEED = 299_792_458.0
frames = st.integers(min_value=0, max_value=3)


def test_swap_table_agrees_with_frame_composition() -> None:
    assert len(bell_swap_table()) == 64
    assert frame_mismatches() == ()


@given(frames, frames, frames)
def test_frame_composition_is_a_group(a: int, b: int, c: int) -> None:
    assert compose(a, compose(b, c)) == compose(compose(a, b), c)
    assert compose(a, a) == 0
    assert corrected_dibit(compose(a, b, c), b, c) == a


def test_bit_errors() -> None:
    assert bit_errors(0, 3) == 2
    assert bit_errors(2, 3) == 1
    assert bit_errors(1, 1) == 0


def test_transport_delivers_at_light_speed(line_geometry: Geometry) -> None:
    delivered = []
    with EventTransport(line_geometry) as transport:
        message = transport.send(
            "A", "B", {"kind": "ping"}, emit_time=0.0, on_delivery=delivered.append
        )
        assert transport.run() == 2
        assert message.arrive_time == pytest.approx(30_000.0 / SPEED)
        assert delivered[0].payload["from"] == "A"
        assert [m.payload["kind"] for m in transport.open_channel_view()] == ["ping"]
        with pytest.raises(ProtocolOrderError):
            transport.schedule(0.0, "late", "A")
    assert transport.is_closed
    with pytest.raises(ProtocolOrderError):
        transport.schedule(1.0, "after-close", "A")


def test_secured_channel_excludes_device(line_geometry: Geometry) -> None:
    transport = EventTransport(line_geometry)
    transport.send("A", "B", {"kind": "secret"}, emit_time=0.0, channel="secured")
    assert transport.open_channel_view() == []
    with pytest.raises(ValidationError):
        transport.send("A", "C", {"kind": "secret"}, emit_time=0.0, channel="secured")


def test_honest_scenario_accepts(honest_config: ScenarioConfig) -> None:
    verdict = run_scenario(honest_config).verdict
    assert verdict.accept
    assert verdict.reasons == ()
    assert verdict.max_residual < 1e-12
    assert verdict.decoded_dibits == verdict.sent_dibits
    assert verdict.dibit_error_rate == 0.0
    assert verdict.error_rate_threshold == pytest.approx(0.15)
    assert verdict.expected_round_trip["A"] == pytest.approx(2 * 12_000.0 / SPEED)
    assert len(verdict.round_trip_times["B"]) == honest_config.dibits


@pytest.mark.parametrize("seed", range(25))
def test_honest_runs_accept_for_many_seeds(honest_config: ScenarioConfig, seed: int) -> None:
    verdict = run_scenario(honest_config.with_seed(seed)).verdict
    assert verdict.accept
    assert verdict.max_residual < 1e-12


def test_scenarios_are_deterministic(honest_config: ScenarioConfig) -> None:
    first = run_scenario(honest_config)
    second = run_scenario(honest_config)
    assert first.trace == second.trace
    assert first.verdict == second.verdict
    other = run_scenario(honest_config.with_seed(99))
    assert other.verdict.sent_dibits != first.verdict.sent_dibits


def test_displaced_device_fails_timing(honest_config: ScenarioConfig) -> None:
    displaced = replace(
        honest_config,
        device_behavior=DeviceBehavior(kind="displaced", actual_position=(13_000.0, 0.0)),
    )
    verdict = run_scenario(displaced).verdict
    assert not verdict.accept
    assert "timing" in verdict.reasons
    assert verdict.max_residual == pytest.approx(2 * 1_000.0 / SPEED, abs=1e-12)
    assert max(abs(r) for r in verdict.residuals["B"]) < 1e-12


def test_displacement_sweep_keeps_order(honest_config: ScenarioConfig) -> None:
    results = sweep_displacement(honest_config, [0.0, 100.0, -1_000.0])
    assert [offset for offset, _ in results] == [0.0, 100.0, -1_000.0]
    accepted = [verdict.accept for _, verdict in results]
    assert accepted == [True, True, False]
    assert results[2][1].max_residual == pytest.approx(2_000.0 / SPEED, abs=1e-12)


@pytest.mark.parametrize(
    ("offset", "accept"), [(149.0, True), (-149.0, True), (151.0, False), (-151.0, False)]
)
def test_displacement_limit_is_half_the_tolerance_in_light_travel(
    honest_config: ScenarioConfig, offset: float, accept: bool
) -> None:
    # residual 2|delta|/c crosses the 1 us tolerance at |delta| = c * tol / 2 ~ 149.9 m
    [(_, verdict)] = sweep_displacement(honest_config, [offset])
    assert verdict.accept is accept
    assert ("timing" in verdict.reasons) is not accept
    assert verdict.max_residual == pytest.approx(2 * abs(offset) / SPEED, abs=1e-12)


def test_cloner_fails_error_rate(line_geometry: Geometry) -> None:
    config = ScenarioConfig(
        geometry=line_geometry,
        pairs=400,
        challenge_bits=200,
        device_behavior=DeviceBehavior(kind="cloner", clone_fidelity=0.7),
        seed=5,
    )
    verdict = run_scenario(config).verdict
    assert not verdict.accept
    assert verdict.reasons == ("error-rate",)
    assert 0.15 < verdict.dibit_error_rate < 0.5


def test_cloner_is_usually_rejected_at_short_challenges(line_geometry: Geometry) -> None:
    """100 challenge bits reject an FClone = 0.7 device in roughly 99 % of runs, not 99.9 %.

    The midpoint threshold lets P(Bin(50, 0.3) <= 7) ~ 0.7 % of cloners through; the
    99.9 % rate needs the longer challenges of the slow soundness run.
    """

    base = ScenarioConfig(
        geometry=line_geometry,
        pairs=102,
        challenge_bits=100,
        device_behavior=DeviceBehavior(kind="cloner", clone_fidelity=0.7),
    )
    rejected = sum(not run_scenario(base.with_seed(seed)).verdict.accept for seed in range(200))
    assert rejected >= 194


# Phase damping at p = 1 - sqrt(0.8) leaves a Bell pair at fidelity 0.9.
NOISY_PAIRS = ChannelSpec(family="phaseDamping", p=1.0 - math.sqrt(0.8))


def _error_rates(base: ScenarioConfig, seeds: range) -> Tuple[List[float], List[float]]:
    honest = replace(base, decoherence_channel=NOISY_PAIRS)
    cloner = replace(base, device_behavior=DeviceBehavior(kind="cloner", clone_fidelity=0.7))
    honest_rates = [run_scenario(honest.with_seed(s)).verdict.dibit_error_rate for s in seeds]
    cloner_rates = [run_scenario(cloner.with_seed(s)).verdict.dibit_error_rate for s in seeds]
    return honest_rates, cloner_rates


def test_honest_and_cloner_error_rates_match_their_fidelities(line_geometry: Geometry) -> None:
    base = ScenarioConfig(geometry=line_geometry, pairs=200, challenge_bits=100)
    assert replace(base, decoherence_channel=NOISY_PAIRS).honest_fidelity() == pytest.approx(0.9)
    honest_rates, cloner_rates = _error_rates(base, range(100))
    assert sum(honest_rates) / 100 == pytest.approx(0.1, abs=0.02)
    assert sum(cloner_rates) / 100 == pytest.approx(0.3, abs=0.03)
    assert sum(c > h for h, c in zip(honest_rates, cloner_rates)) >= 90


@pytest.mark.slow
def test_error_rates_separate_by_four_standard_deviations(line_geometry: Geometry) -> None:
    # At 50 dibits the gap of 0.2 is only ~2.6 sigma; 400 dibits give > 4 sigma in > 99 % of runs.
    dibits = 400
    base = ScenarioConfig(geometry=line_geometry, pairs=4 * dibits, challenge_bits=2 * dibits)
    sigma = math.sqrt((0.1 * 0.9 + 0.3 * 0.7) / dibits)
    honest_rates, cloner_rates = _error_rates(base, range(1_000))
    separated = sum(c - h > 4 * sigma for h, c in zip(honest_rates, cloner_rates))
    assert separated >= 990


def test_two_dimensional_scenario(plane_geometry: Geometry) -> None:
    config = ScenarioConfig(geometry=plane_geometry, pairs=24, challenge_bits=16, seed=2)
    world = ProtocolWorld.setup(config)
    verdict = world.run_all()
    assert verdict.accept
    assert verdict.instances == 4
    assert verdict.successful_instances == 4
    assert [c.partner for c in world.challenges][:4] == ["B", "D", "B", "D"]
    assert set(verdict.round_trip_times) == {"A", "B", "D"}


def test_storage_decoherence_lowers_decode_fidelity(honest_config: ScenarioConfig) -> None:
    config = replace(honest_config, storage_rates={"C": 2_000.0, "A": 500.0})
    world = ProtocolWorld.setup(config)
    world.run_all()
    fidelities = [c.decode_fidelity for c in world.challenges]
    assert all(f is not None and 0.25 <= f < 1.0 for f in fidelities)
    assert fidelities[-1] < fidelities[0]


def test_baseline_channel_sets_threshold(line_geometry: Geometry) -> None:
    config = ScenarioConfig(
        geometry=line_geometry,
        pairs=40,
        challenge_bits=32,
        decoherence_channel=ChannelSpec(family="phaseDamping", p=0.1),
    )
    assert config.honest_fidelity() == pytest.approx(0.905)
    assert config.effective_error_threshold() == pytest.approx((0.095 + 0.3) / 2)
    assert replace(config, error_rate_threshold=0.2).effective_error_threshold() == 0.2


def test_steps_must_run_in_order(honest_config: ScenarioConfig) -> None:
    with pytest.raises(ProtocolOrderError):
        ProtocolWorld(honest_config).entanglement_swap()
    world = ProtocolWorld.setup(honest_config)
    assert world.step == Step.SETUP
    with pytest.raises(ProtocolOrderError):
        world.verify()
    world.entanglement_swap()
    with pytest.raises(ProtocolOrderError):
        world.entanglement_swap()
    with pytest.raises(ProtocolOrderError):
        world.generate_challenge()
    world.inform_partner().generate_challenge().teleport_challenge().decode_at_device()
    assert world.verify().accept
    assert world.step == Step.VERIFIED


def test_registries_after_swap(honest_config: ScenarioConfig) -> None:
    world = ProtocolWorld.setup(honest_config).entanglement_swap()
    omega = world.registry("Omega_AC")
    gamma = world.registry("Gamma_BC")
    assert len(omega) == honest_config.pairs
    assert omega.consumed_count == honest_config.pairs // 2
    assert len(gamma) == honest_config.pairs // 2
    assert world.registry("Lambda_AB").consumed_count == honest_config.pairs // 2
    for record in gamma.pairs:
        assert {e.station for e in record.endpoints} == {"B", "C"}
    with pytest.raises(ProtocolCorruptionError):
        world.registry("Lambda_AX")


def test_swap_runs_out_of_pairs(honest_config: ScenarioConfig) -> None:
    world = ProtocolWorld.setup(honest_config)
    for record in world.registry("Omega_AC").pairs:
        record.consumed = True
    with pytest.raises(ResourceError):
        world.entanglement_swap()


def test_setup_digest_is_stable(honest_config: ScenarioConfig) -> None:
    first = ProtocolWorld.setup(honest_config).digest()
    assert first == ProtocolWorld.setup(honest_config).digest()
    assert first != ProtocolWorld.setup(honest_config.with_seed(4)).digest()
    assert len(first) == 64


def test_views_respect_channel_security(honest_config: ScenarioConfig) -> None:
    world = ProtocolWorld.setup(honest_config)
    world.run_all()
    device = world.view("C")
    assert "mapping" not in device
    assert {item["kind"] for item in device["received"]} == {"teleport"}
    assert device["qubits"] == sorted(
        set(range(honest_config.pairs))
        - {label for c in world.challenges for label in c.device_labels}
    )
    kinds = {m["payload"]["kind"] for m in world.view("eavesdropper")["messages"]}
    assert kinds == {"teleport", "reply"}
    partner = world.view("B")
    assert set(partner) == {"mapping", "frames", "challenge"}
    assert world.view("A")["challenge"] == [c.dibit for c in world.challenges]
    with pytest.raises(ProtocolCorruptionError):
        world.view("Z")


def test_registry_rejects_double_consumption() -> None:
    registry = PairRegistry(name="test")
    registry.add(PairRecord(label=0, endpoints=(Endpoint("A", 0), Endpoint("C", 0))))
    registry.consume(0)
    with pytest.raises(ProtocolCorruptionError):
        registry.consume(0)
    with pytest.raises(ProtocolCorruptionError):
        registry.get(1)


def test_trace_round_trip(honest_config: ScenarioConfig) -> None:
    result = run_scenario(honest_config)
    buffer = io.StringIO()
    write_trace(result.trace, buffer)
    buffer.seek(0)
    assert read_trace(buffer) == result.trace
    assert [event.seq for event in result.trace] != []
    times = [event.time_s for event in result.trace]
    assert times == sorted(times)
    with pytest.raises(ConfigurationError):
        read_trace(io.StringIO("{not json}\n"))


def test_geometry_validation() -> None:
    with pytest.raises(ConfigurationError):
        Geometry(stations={"A": (0.0, 0.0), "B": (10.0, 0.0)}, device=(5.0, 3.0))
    with pytest.raises(ConfigurationError):
        Geometry(stations={"B": (0.0, 0.0), "D": (10.0, 0.0)}, device=(5.0, 0.0))
    with pytest.raises(ConfigurationError):
        Geometry(
            stations={"A": (0.0, 0.0), "B": (10.0, 0.0)}, device=(5.0, 0.0), dimension=2
        )
    geometry = Geometry.from_payload(
        {"stations": {"A": 0, "B": [30000]}, "device": 12000, "c": SPEED}
    )
    assert geometry.tau("B") == pytest.approx(18_000.0 / SPEED)
    assert geometry.partners == ("B",)


@pytest.mark.parametrize(
    "changes",
    [
        {"pairs": 41},
        {"challenge_bits": 31},
        {"challenge_bits": 40},
        {"decoherence_channel": ChannelSpec(family="bitFlip", p=0.1)},
        {"storage_rates": {"X": 1.0}},
        {"storage_rates": {"A": -1.0}},
        {"timing_tolerance": 0.0},
        {"error_rate_threshold": 1.5},
    ],
)
def test_scenario_validation(honest_config: ScenarioConfig, changes: dict) -> None:
    with pytest.raises(ConfigurationError):
        replace(honest_config, **changes)


def test_scenario_payload() -> None:
    payload = {
        "geometry": {"stations": {"A": [0, 0], "B": [30000, 0]}, "device": [12000, 0]},
        "L": 40,
        "K": 32,
        "deviceBehavior": {"kind": "cloner", "FClone": 0.7},
        "storageRates": {"C": 1.5},
        "seed": 4,
    }
    config = ScenarioConfig.from_payload(payload)
    assert config.device_behavior.clone_fidelity == 0.7
    assert config.storage_rate("C") == 1.5
    assert config.storage_rate("A") == 0.0
    assert config.to_dict()["K"] == 32
    for broken in ({**payload, "extra": 1}, {**payload, "L": True}, {**payload, "K": "32"}):
        with pytest.raises(ConfigurationError):
            ScenarioConfig.from_payload(broken)
    missing = dict(payload)
    del missing["L"]
    with pytest.raises(ConfigurationError) as excinfo:
        ScenarioConfig.from_payload(missing)
    assert excinfo.value.field == "L"


def test_verdict_serialisation(honest_config: ScenarioConfig) -> None:
    data = run_scenario(honest_config).verdict.to_dict()
    assert data["accept"] is True
    assert {"maxResidual", "dibitErrorRate", "roundTripTimes", "sentDibits"} <= set(data)


@pytest.mark.slow
def test_honest_completeness_over_many_runs(line_geometry: Geometry) -> None:
    base = ScenarioConfig(geometry=line_geometry, pairs=200, challenge_bits=100)
    for seed in range(1_000):
        verdict = run_scenario(base.with_seed(seed)).verdict
        assert verdict.accept, seed
        assert verdict.max_residual < 1e-12


@pytest.mark.slow
def test_displaced_soundness_over_many_runs(line_geometry: Geometry) -> None:
    base = ScenarioConfig(
        geometry=line_geometry,
        pairs=200,
        challenge_bits=100,
        device_behavior=DeviceBehavior(kind="displaced", actual_position=(13_000.0, 0.0)),
    )
    for seed in range(1_000):
        verdict = run_scenario(base.with_seed(seed)).verdict
        assert "timing" in verdict.reasons
        assert verdict.max_residual == pytest.approx(2_000.0 / SPEED, abs=1e-12)


@pytest.mark.slow
def test_cloner_soundness_over_many_runs(line_geometry: Geometry) -> None:
    base = ScenarioConfig(
        geometry=line_geometry,
        pairs=800,
        challenge_bits=400,
        device_behavior=DeviceBehavior(kind="cloner", clone_fidelity=0.7),
    )
    runs = 10_000
    rejected = sum(
        "error-rate" in run_scenario(base.with_seed(seed)).verdict.reasons for seed in range(runs)
    )
    assert rejected >= 0.999 * runs
