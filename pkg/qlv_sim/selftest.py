"""Invariant suite behind ``qlv-sim selftest``."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import (
    VerificationModel,
    at_least_k_of_m,
    cloning_pass_probability,
    instance_probability,
)
from .config import Settings, get_settings
from .errors import QlvError
from .protocol.frames import frame_mismatches
from .protocol.scenario import run_scenario
from .protocol.types import Geometry, ScenarioConfig
from .quantum.channels import (
    FAMILIES,
    ChannelSpec,
    apply_per_qubit,
    closed_form_general_z,
    evolve_cat,
    kraus_for,
    scalar_fidelity,
)
from .quantum.linalg import SIGMA_O, dagger, kron, min_eigenvalue, trace_product
from .quantum.random_noise import (
    RandomChannelSpec,
    RngStream,
    mean_fidelity_random_channel,
    sample_random_kraus,
)
from .quantum.states import bell_state, cat_density, encode_dibit, ghz_state

logger = logging.getLogger(__name__)

GRID = (0.0, 0.1, 0.25, 0.5, 0.9, 1.0)
MAX_QUBITS = 6


class CheckFailure(QlvError):
    """Raised by a selftest group whose invariant does not hold."""


def _expect(condition: bool, message: str) -> None:
    if not condition:
        raise CheckFailure(message)


def _catalog_specs(p: float) -> List[ChannelSpec]:
    specs = [
        ChannelSpec(family=family, p=p)  # type: ignore[arg-type]
        for family in FAMILIES
        if family not in ("generalZ", "randomNoise", "combinedDampingRandom")
    ]
    general = ChannelSpec(family="generalZ", gamma1=1.0, gamma2=0.7, mu=0.2, omega=0.3)
    specs.append(general.at_p(min(p, 0.99)))
    unitary = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    specs.append(
        ChannelSpec(
            family="combinedDampingRandom", p=p, epsilon1=0.3, epsilon3=0.1, epsilon4=0.2,
            u3=SIGMA_O, u4=unitary,
        )
    )
    return specs


def check_linalg(settings: Settings) -> None:
    rng = RngStream(7).generator()
    a, b, c = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3))
    _expect(np.allclose(kron(a + b, c), kron(a, c) + kron(b, c)), "kron is not bilinear")
    _expect(
        abs(trace_product(a, b) - trace_product(b, a)) < 1e-12,
        "trace product is not symmetric",
    )
    hermitian = a + dagger(a)
    analytic = float(np.min(np.linalg.eigvalsh(hermitian)))
    _expect(
        abs(min_eigenvalue(hermitian, settings=settings) - analytic) < 1e-10,
        "eigenvalue mismatch",
    )


def check_states(settings: Settings) -> None:
    bells = np.array([bell_state(i).amplitudes for i in range(4)])
    _expect(
        np.allclose(bells.conj() @ bells.T, np.eye(4), atol=1e-12),
        "Bell basis not orthonormal",
    )
    ghz = np.array([ghz_state(3, i).amplitudes for i in range(8)])
    _expect(np.allclose(ghz.conj() @ ghz.T, np.eye(8), atol=1e-12), "GHZ basis not orthonormal")
    for dibit in range(4):
        encoded = encode_dibit(bell_state(0), dibit)
        _expect(
            abs(abs(encoded.overlap(bell_state(dibit))) - 1) < 1e-12,
            f"dibit {dibit} misencoded",
        )


def check_completeness(settings: Settings) -> None:
    for p in GRID:
        for spec in _catalog_specs(p):
            error = kraus_for(spec).completeness_error()
            _expect(error <= 1e-10, f"{spec.family} at p={p} violates completeness ({error:.2e})")


def check_closed_forms(settings: Settings) -> None:
    for family in ("depolarization", "amplitudeDamping", "phaseDamping"):
        for num_qubits in range(1, MAX_QUBITS + 1):
            for p in GRID:
                spec = ChannelSpec(family=family, p=p)  # type: ignore[arg-type]
                evolve_cat(spec, num_qubits, cross_check=True, settings=settings)
                if num_qubits >= 2:
                    exact = scalar_fidelity(family, num_qubits, p)
                    closed = evolve_cat(spec, num_qubits, validate=False, settings=settings)
                    value = trace_product(cat_density(num_qubits).matrix, closed.matrix).real
                    _expect(abs(value - exact) < 1e-10, f"{family} scalar fidelity mismatch")


def check_general_z_reductions(settings: Settings) -> None:
    for gamma in (0.2, 1.0, 3.0):
        for t in (0.0, 0.1, 0.5, 1.0, 2.0):
            p = -math.expm1(-gamma * t)
            for num_qubits in (2, 3, 4):
                damped = closed_form_general_z(
                    num_qubits, gamma, gamma / 2, 1.0, 0.0, t, settings=settings
                )
                reference = evolve_cat(ChannelSpec(family="amplitudeDamping", p=p), num_qubits)
                _expect(
                    np.allclose(damped.density.matrix, reference.matrix, atol=1e-10),
                    "generalZ does not reduce to amplitude damping",
                )
                dephased = closed_form_general_z(
                    num_qubits, 0.0, gamma, 0.0, 0.0, t, settings=settings
                )
                reference = evolve_cat(ChannelSpec(family="phaseDamping", p=p), num_qubits)
                _expect(
                    np.allclose(dephased.density.matrix, reference.matrix, atol=1e-10),
                    "generalZ does not reduce to phase damping",
                )


def check_physicality(settings: Settings) -> None:
    for p in GRID:
        for spec in _catalog_specs(p):
            for num_qubits in (1, 2, 3):
                rho = apply_per_qubit(cat_density(num_qubits), kraus_for(spec), validate=False)
                _expect(
                    abs(rho.trace() - 1) <= settings.tol_trace,
                    f"{spec.family} output trace drifted",
                )
                _expect(
                    rho.min_eigenvalue(settings=settings) >= settings.tol_psd,
                    f"{spec.family} output is not positive semidefinite",
                )


def check_anchors(settings: Settings) -> None:
    _expect(abs(scalar_fidelity("phaseDamping", 2, 0.1) - 0.905) < 1e-12, "phase damping anchor")
    _expect(
        abs(scalar_fidelity("depolarization", 2, 0.1) - 0.8575) < 1e-12,
        "depolarization anchor",
    )
    _expect(abs(at_least_k_of_m(2, 3, 0.9) - 0.972) < 1e-12, "2-of-3 anchor")
    _expect(
        instance_probability(VerificationModel(3, "bellStates", 0.9)) == 0.9**2,
        "Bell instance anchor",
    )
    _expect(-15.6 <= cloning_pass_probability(0.7, 100).log10 <= -15.4, "cloning anchor")


def check_random_noise(settings: Settings) -> None:
    spec = RandomChannelSpec(p=0.4, trials=50)
    for trial in range(200):
        error = sample_random_kraus(spec, RngStream(11, trial)).completeness_error()
        _expect(error <= 1e-12, f"random Kraus sample {trial} is not trace preserving")
    exact = mean_fidelity_random_channel(2, RandomChannelSpec(p=0.0, trials=10), settings=settings)
    _expect(exact.mean == 1.0 and exact.stderr == 0.0, "random channel at p=0 is not the identity")


def check_pauli_frames(settings: Settings) -> None:
    mismatches = frame_mismatches()
    _expect(not mismatches, f"frame composition disagrees with state vectors at {mismatches[:3]}")
    geometry = Geometry(stations={"A": (0.0, 0.0), "B": (30_000.0, 0.0)}, device=(12_000.0, 0.0))
    for seed in range(5):
        config = ScenarioConfig(geometry=geometry, pairs=40, challenge_bits=32, seed=seed)
        verdict = run_scenario(config).verdict
        _expect(verdict.accept, f"honest noiseless scenario rejected for seed {seed}")
        _expect(verdict.decoded_dibits == verdict.sent_dibits, "noiseless decode altered dibits")


GROUPS: Tuple[Tuple[str, Callable[[Settings], None]], ...] = (
    ("linalg", check_linalg),
    ("states", check_states),
    ("completeness", check_completeness),
    ("closed-forms", check_closed_forms),
    ("general-z-reductions", check_general_z_reductions),
    ("physicality", check_physicality),
    ("anchors", check_anchors),
    ("random-noise", check_random_noise),
    ("pauli-frames", check_pauli_frames),
)


@dataclass(frozen=True)
class CheckResult:
    group: str
    passed: bool
    seconds: float
    detail: str = ""


@dataclass(frozen=True)
class SelftestReport:
    results: Tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def lines(self) -> List[str]:
        lines = []
        for result in self.results:
            status = "PASS" if result.passed else "FAIL"
            line = f"{status}  {result.group:<22} {result.seconds:7.2f}s  {result.detail}"
            lines.append(line.rstrip())
        return lines


def run_selftest(
    groups: Optional[Sequence[Tuple[str, Callable[[Settings], None]]]] = None,
    *,
    settings: Optional[Settings] = None,
) -> SelftestReport:
    active = settings or get_settings()
    results = []
    for name, check in groups or GROUPS:
        started = time.perf_counter()
        try:
            check(active)
        except (QlvError, ArithmeticError, ValueError) as exc:
            logger.warning("selftest group %s failed: %s", name, exc)
            results.append(CheckResult(name, False, time.perf_counter() - started, str(exc)))
        else:
            results.append(CheckResult(name, True, time.perf_counter() - started))
    return SelftestReport(results=tuple(results))
