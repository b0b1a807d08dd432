from __future__ import annotations

import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qlv_sim.errors import ConfigurationError, ContractError, ShapeError, ValidationError
from qlv_sim.quantum.channels import (
    ChannelSpec,
    KrausSet,
    apply_per_qubit,
    cat_fidelity,
    channel_time,
    closed_form_amplitude_damped,
    closed_form_depolarized,
    closed_form_general_z,
    closed_form_phase_damped,
    decoherence_parameter,
    evolve_cat,
    fidelity,
    kraus_for,
    scalar_fidelity,
    uhlmann_fidelity,
)
from qlv_sim.quantum.linalg import SIGMA_O, SIGMA_X, SIGMA_Z, DensityOperator
from qlv_sim.quantum.states import cat_density

GRID = tuple(float(p) for p in np.linspace(0.0, 1.0, 21))
CLOSED_FORMS = {
    "depolarization": closed_form_depolarized,
    "amplitudeDamping": closed_form_amplitude_damped,
    "phaseDamping": closed_form_phase_damped,
}
FIXED_FAMILIES = (
    "depolarization", "amplitudeDamping", "phaseDamping", "bitFlip", "phaseFlip", "bitPhaseFlip",
)


@pytest.mark.parametrize("family", sorted(CLOSED_FORMS))
@pytest.mark.parametrize("num_qubits", range(1, 9))
def test_closed_forms_match_kraus_application(family: str, num_qubits: int) -> None:
    reference = cat_density(num_qubits)
    for p in GRID:
        kraus = kraus_for(ChannelSpec(family=family, p=p))  # type: ignore[arg-type]
        via_kraus = apply_per_qubit(reference, kraus, validate=False)
        closed = CLOSED_FORMS[family](num_qubits, p, validate=False)
        assert_allclose(closed.matrix, via_kraus.matrix, atol=1e-10, rtol=0)


@pytest.mark.parametrize("family", FIXED_FAMILIES)
def test_product_and_sequential_paths_agree(family: str) -> None:
    kraus = kraus_for(ChannelSpec(family=family, p=0.3))  # type: ignore[arg-type]
    rho = cat_density(4)
    product = apply_per_qubit(rho, kraus, method="product")
    sequential = apply_per_qubit(rho, kraus, method="sequential")
    assert_allclose(product.matrix, sequential.matrix, atol=1e-12)


@pytest.mark.parametrize("family", FIXED_FAMILIES)
def test_catalog_kraus_sets_are_trace_preserving(family: str) -> None:
    for p in GRID:
        kraus = kraus_for(ChannelSpec(family=family, p=p))  # type: ignore[arg-type]
        assert kraus.completeness_error() <= 1e-10
        for num_qubits in (1, 2, 3):
            out = apply_per_qubit(cat_density(num_qubits), kraus, validate=False)
            assert abs(out.trace() - 1) <= 1e-10
            assert out.min_eigenvalue() >= -1e-8


def test_kraus_set_rejects_incomplete_operators() -> None:
    with pytest.raises(ValidationError):
        KrausSet.from_operators([0.5 * SIGMA_O])
    with pytest.raises(ShapeError):
        KrausSet.from_operators([np.eye(4)])
    with pytest.raises(ValidationError):
        KrausSet.from_operators([0.5 * SIGMA_O] * 5)


def test_flip_channels_follow_weight_convention() -> None:
    full_flip = kraus_for(ChannelSpec(family="bitFlip", p=0.0))
    assert_allclose(full_flip.apply(np.diag([1.0, 0.0])), np.diag([0.0, 1.0]), atol=1e-12)
    identity = kraus_for(ChannelSpec(family="phaseFlip", p=1.0))
    assert_allclose(identity.apply(np.full((2, 2), 0.5)), np.full((2, 2), 0.5), atol=1e-12)


def test_scalar_fidelity_anchors() -> None:
    assert scalar_fidelity("phaseDamping", 2, 0.1) == pytest.approx(0.905, abs=1e-12)
    assert scalar_fidelity("phaseDamping", 6, 0.1) == pytest.approx(0.7657, abs=1e-4)
    assert scalar_fidelity("depolarization", 2, 0.1) == pytest.approx(0.8575, abs=1e-12)
    assert scalar_fidelity("amplitudeDamping", 2, 0.07) == pytest.approx(0.9325, abs=1e-4)


def test_amplitude_damping_degrades_faster_with_more_qubits() -> None:
    for p in np.linspace(0.005, 0.5, 100):
        assert scalar_fidelity("amplitudeDamping", 3, p) < scalar_fidelity("amplitudeDamping", 2, p)


@pytest.mark.parametrize("family", sorted(CLOSED_FORMS))
@pytest.mark.parametrize("num_qubits", [2, 3, 5])
def test_cat_fidelity_matches_scalar_form(family: str, num_qubits: int) -> None:
    for p in (0.0, 0.1, 0.37, 1.0):
        spec = ChannelSpec(family=family, p=p)  # type: ignore[arg-type]
        assert cat_fidelity(spec, num_qubits, cross_check=True) == pytest.approx(
            scalar_fidelity(family, num_qubits, p), abs=1e-10
        )


def test_fidelity_bounds_and_contract() -> None:
    assert cat_fidelity(ChannelSpec(family="phaseDamping", p=0.0), 3) == pytest.approx(1.0)
    mixed = DensityOperator.from_matrix(np.eye(4) / 4)
    with pytest.raises(ContractError):
        fidelity(mixed, cat_density(2))
    with pytest.raises(ShapeError):
        fidelity(cat_density(2), cat_density(3))


def test_uhlmann_fidelity_squares_to_recovery_probability() -> None:
    reference = cat_density(2)
    evolved = evolve_cat(ChannelSpec(family="depolarization", p=0.2), 2)
    assert uhlmann_fidelity(reference, evolved) ** 2 == pytest.approx(
        fidelity(reference, evolved), abs=1e-6
    )


def test_decoherence_parameter_round_trip() -> None:
    assert decoherence_parameter(2.0, 0.5) == pytest.approx(1 - math.exp(-1.0))
    assert channel_time(decoherence_parameter(2.0, 0.5), 2.0) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        channel_time(1.0, 2.0)
    spec = ChannelSpec.at_time("phaseDamping", 1.0, 0.1)
    assert spec.p == pytest.approx(1 - math.exp(-0.1))
    assert spec.t == 0.1


@pytest.mark.parametrize("gamma", [0.2, 1.0, 3.0])
@pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 1.0, 2.0])
def test_general_z_reduces_to_damping_channels(gamma: float, t: float) -> None:
    p = decoherence_parameter(gamma, t)
    for num_qubits in (2, 3, 4):
        damped = closed_form_general_z(num_qubits, gamma, gamma / 2, 1.0, 0.0, t)
        assert damped.completely_positive
        assert_allclose(
            damped.density.matrix,
            closed_form_amplitude_damped(num_qubits, p).matrix,
            atol=1e-10,
        )
        dephased = closed_form_general_z(num_qubits, 0.0, gamma, 0.0, 0.0, t)
        assert_allclose(
            dephased.density.matrix, closed_form_phase_damped(num_qubits, p).matrix, atol=1e-10
        )


def test_general_z_kraus_matches_closed_form() -> None:
    spec = ChannelSpec(family="generalZ", gamma1=1.0, gamma2=0.8, mu=0.3, omega=0.5, t=0.4)
    kraus = kraus_for(spec)
    assert kraus.completeness_error() <= 1e-10
    via_kraus = apply_per_qubit(cat_density(3), kraus)
    assert_allclose(evolve_cat(spec, 3).matrix, via_kraus.matrix, atol=1e-10)


def test_general_z_flags_non_completely_positive_parameters(
    caplog: pytest.LogCaptureFixture,
) -> None:
    with caplog.at_level(logging.WARNING):
        result = closed_form_general_z(2, 1.0, 0.0, 1.0, 0.0, 1.0)
    assert not result.completely_positive
    assert result.min_eigenvalue < -1e-8
    assert "not completely positive" in caplog.text
    with pytest.raises(ValidationError):
        kraus_for(ChannelSpec(family="generalZ", gamma1=1.0, gamma2=0.0, mu=1.0, t=1.0))


def test_general_z_at_p_maps_to_channel_time() -> None:
    spec = ChannelSpec(family="generalZ", gamma1=2.0, gamma2=1.0, mu=1.0)
    assert spec.at_p(0.5).t == pytest.approx(math.log(2) / 2)
    assert math.isinf(spec.at_p(1.0).t)
    assert cat_fidelity(spec.at_p(1.0), 2) == pytest.approx(0.5)


def test_combined_channel_kraus() -> None:
    spec = ChannelSpec(
        family="combinedDampingRandom", p=0.2, epsilon1=0.3, epsilon3=0.1, epsilon4=0.2,
        u3=SIGMA_O, u4=SIGMA_X,
    )
    kraus = kraus_for(spec)
    assert len(kraus) == 4
    assert kraus.completeness_error() <= 1e-10
    assert not spec.is_stochastic
    sampled = ChannelSpec.combined_time_dependent(0.2, 1.0, 0.1, 0.05)
    assert sampled.is_stochastic
    assert sampled.epsilon1 == pytest.approx(sampled.epsilon3 + 0.05)
    with pytest.raises(ValidationError):
        ChannelSpec(family="combinedDampingRandom", epsilon1=0.5, epsilon3=0.1, epsilon4=0.1)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"family": "unknown"},
        {"family": "depolarization", "p": 1.5},
        {"family": "generalZ", "mu": 2.0},
        {"family": "phaseDamping", "t": -1.0},
        {"family": "phaseDamping", "trials": 0},
    ],
)
def test_channel_spec_validation(kwargs: dict) -> None:
    with pytest.raises(ValidationError):
        ChannelSpec(**kwargs)


def test_channel_spec_payload() -> None:
    spec = ChannelSpec.from_payload(
        {"family": "combinedDampingRandom", "p": 0.1, "epsilon1": 0.2, "epsilon3": 0.1,
         "epsilon4": 0.1, "u3": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]],
         "u4": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]}
    )
    assert_allclose(spec.u4, SIGMA_X)
    assert spec.to_dict()["epsilon3"] == 0.1
    with pytest.raises(ConfigurationError) as excinfo:
        ChannelSpec.from_payload({"family": "phaseDamping", "rate": 1.0})
    assert excinfo.value.field == "rate"
    with pytest.raises(ConfigurationError):
        ChannelSpec.from_payload({"family": "phaseDamping", "p": 3.0})


def test_stochastic_specs_are_not_evolved_directly() -> None:
    with pytest.raises(ValidationError):
        evolve_cat(ChannelSpec(family="randomNoise", p=0.1), 2)


def test_superoperator_applies_channel() -> None:
    kraus = kraus_for(ChannelSpec(family="amplitudeDamping", p=0.4))
    rho = np.array([[0.3, 0.2], [0.2, 0.7]], dtype=complex)
    lifted = np.einsum("ijab,ab->ij", kraus.superoperator(), rho)
    assert_allclose(lifted, kraus.apply(rho), atol=1e-12)
    assert_allclose(kraus.apply(np.diag([0.0, 1.0])), np.diag([0.4, 0.6]), atol=1e-12)
    assert_allclose(kraus_for(ChannelSpec(family="phaseFlip", p=0.0)).apply(SIGMA_Z), SIGMA_Z)


@pytest.mark.parametrize("family", ["depolarization", "amplitudeDamping", "phaseDamping"])
@pytest.mark.parametrize("num_qubits", [2, 3, 4])
@pytest.mark.parametrize("method", ["product", "sequential"])
def test_damping_fidelity_never_increases_in_p(family: str, num_qubits: int, method: str) -> None:
    reference = cat_density(num_qubits)
    values = []
    for p in np.linspace(0.0, 0.5, 101):
        spec = ChannelSpec(family=family, p=float(p))  # type: ignore[arg-type]
        kraus = kraus_for(spec)
        evolved = apply_per_qubit(reference, kraus, method=method)  # type: ignore[arg-type]
        values.append(fidelity(reference, evolved))
    steps = np.diff(values)
    assert np.all(steps <= 1e-12), f"{family} N={num_qubits} rises by {steps.max():.3e}"
    assert values[0] == pytest.approx(1.0, abs=1e-12)
    assert values[-1] < values[0]


def test_amplitude_damping_recovers_towards_full_decay() -> None:
    # Past the sweep range |0...0> repopulates: F_AD(3, p) climbs back to 1/2 at p = 1.
    assert scalar_fidelity("amplitudeDamping", 3, 0.9) < scalar_fidelity("amplitudeDamping", 3, 1.0)
    assert scalar_fidelity("amplitudeDamping", 3, 1.0) == pytest.approx(0.5)
