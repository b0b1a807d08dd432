"""Density operators, basis states and noise channels."""

from .channels import (
    ChannelSpec,
    GeneralZEvolution,
    KrausSet,
    apply_per_qubit,
    cat_fidelity,
    closed_form_amplitude_damped,
    closed_form_depolarized,
    closed_form_general_z,
    closed_form_phase_damped,
    decoherence_parameter,
    fidelity,
    kraus_for,
    scalar_fidelity,
    uhlmann_fidelity,
)
from .linalg import DensityOperator, dagger, kron, min_eigenvalue, trace_product
from .random_noise import (
    RandomChannelSpec,
    RngStream,
    mean_fidelity_combined_channel,
    mean_fidelity_random_channel,
    sample_random_kraus,
    sample_unitary2,
)
from .states import BasisLabel, PureState, bell_state, cat_density, encode_dibit, ghz_state

__all__ = [
    "BasisLabel",
    "ChannelSpec",
    "DensityOperator",
    "GeneralZEvolution",
    "KrausSet",
    "PureState",
    "RandomChannelSpec",
    "RngStream",
    "apply_per_qubit",
    "bell_state",
    "cat_density",
    "cat_fidelity",
    "closed_form_amplitude_damped",
    "closed_form_depolarized",
    "closed_form_general_z",
    "closed_form_phase_damped",
    "dagger",
    "decoherence_parameter",
    "encode_dibit",
    "fidelity",
    "ghz_state",
    "kraus_for",
    "kron",
    "mean_fidelity_combined_channel",
    "mean_fidelity_random_channel",
    "min_eigenvalue",
    "sample_random_kraus",
    "sample_unitary2",
    "scalar_fidelity",
    "trace_product",
    "uhlmann_fidelity",
]
