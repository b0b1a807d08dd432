"""Deterministic single-qubit channel zoo and its action on N-qubit states.

Every catalog family has a Kraus set (:func:`kraus_for`) that :func:`apply_per_qubit`
lifts to N qubits, each qubit evolving identically and independently. The damping
families also have closed forms for an evolved cat state, used as cross-check oracles.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, MutableMapping, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import scipy.linalg
from typing_extensions import Literal, get_args

from ..config import Settings, get_settings
from ..errors import ConfigurationError, ContractError, ShapeError, ValidationError
from .linalg import (
    SIGMA_O,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ComplexMatrix,
    DensityOperator,
    as_matrix,
    dagger,
    kron_all,
    trace_product,
)
from .states import cat_density, cat_expansion

logger = logging.getLogger(__name__)

Family = Literal[
    "depolarization",
    "amplitudeDamping",
    "phaseDamping",
    "bitFlip",
    "phaseFlip",
    "bitPhaseFlip",
    "generalZ",
    "randomNoise",
    "combinedDampingRandom",
]
FAMILIES: Tuple[str, ...] = get_args(Family)
DAMPING_FAMILIES: Tuple[str, ...] = ("depolarization", "amplitudeDamping", "phaseDamping")
FLIP_AXES: Dict[str, ComplexMatrix] = {
    "bitFlip": SIGMA_X,
    "bitPhaseFlip": SIGMA_Y,
    "phaseFlip": SIGMA_Z,
}
COMPLETENESS_TOLERANCE = 1e-10
EPSILON_TOLERANCE = 1e-12


def decoherence_parameter(gamma: float, t: float) -> float:
    """``p = 1 - exp(-gamma t)``."""

    if gamma < 0 or t < 0:
        raise ValidationError("decoherence rate and time must be non-negative")
    return -math.expm1(-gamma * t)


def channel_time(p: float, gamma: float) -> float:
    """Inverse of :func:`decoherence_parameter` for a positive rate."""

    if gamma <= 0:
        raise ValidationError("converting p to time needs a positive rate")
    if not 0.0 <= p < 1.0:
        raise ValidationError(f"p={p} has no finite channel time")
    return -math.log1p(-p) / gamma


@dataclass(frozen=True)
class KrausSet:
    """Ordered single-qubit Kraus operators satisfying ``sum K^dagger K = I``."""

    operators: Tuple[ComplexMatrix, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.operators) <= 4:
            raise ValidationError(
                f"single-qubit channels take 1 to 4 Kraus operators, got {len(self.operators)}"
            )
        for operator in self.operators:
            if operator.shape != (2, 2):
                raise ShapeError(f"Kraus operators must be 2x2, got {operator.shape}")
        error = self.completeness_error()
        if error > COMPLETENESS_TOLERANCE:
            raise ValidationError(f"Kraus set is not trace preserving (error {error:.3e})")

    @classmethod
    def from_operators(cls, operators: Sequence[npt.ArrayLike]) -> "KrausSet":
        frozen = []
        for operator in operators:
            matrix = as_matrix(operator).copy()
            matrix.setflags(write=False)
            frozen.append(matrix)
        return cls(operators=tuple(frozen))

    def __len__(self) -> int:
        return len(self.operators)

    def completeness_error(self) -> float:
        total = sum(dagger(operator) @ operator for operator in self.operators)
        return float(np.max(np.abs(total - SIGMA_O)))

    def superoperator(self) -> npt.NDArray[np.complex128]:
        """Tensor ``S[i, j, a, b] = sum_k K[i, a] conj(K[j, b])``."""

        stacked = np.stack(self.operators)
        return np.einsum("kia,kjb->ijab", stacked, stacked.conj())

    def apply(self, rho: npt.ArrayLike) -> ComplexMatrix:
        matrix = as_matrix(rho)
        return sum(operator @ matrix @ dagger(operator) for operator in self.operators)


IDENTITY_CHANNEL = KrausSet.from_operators([SIGMA_O])


@dataclass(frozen=True)
class ChannelSpec:
    """A named channel family with its parameters.

    ``p`` is the primary parameter. ``generalZ`` is driven by ``gamma1``, ``gamma2``,
    ``mu``, ``omega`` and the channel time ``t``; the combined channel mixes amplitude
    damping with unitaries ``u3``, ``u4`` weighted by ``epsilon3``, ``epsilon4``.
    Missing unitaries are sampled per trial by the random-noise module.
    """

    family: Family
    p: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    mu: float = 0.0
    omega: float = 0.0
    t: Optional[float] = None
    epsilon1: float = 0.0
    epsilon3: float = 0.0
    epsilon4: float = 0.0
    u3: Optional[ComplexMatrix] = field(default=None, compare=False)
    u4: Optional[ComplexMatrix] = field(default=None, compare=False)
    trials: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown channel family '{self.family}'", field="family")
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"decoherence parameter p={self.p} outside [0, 1]", field="p")
        if self.family == "generalZ":
            for name in ("gamma1", "gamma2"):
                if getattr(self, name) < 0:
                    raise ValidationError(f"generalZ rate {name} must be non-negative", field=name)
            if abs(self.mu) > 1:
                raise ValidationError(f"generalZ requires |mu| <= 1, got {self.mu}", field="mu")
        if self.t is not None and self.t < 0:
            raise ValidationError("channel time t must be non-negative", field="t")
        if self.family == "combinedDampingRandom":
            for name in ("epsilon1", "epsilon3", "epsilon4"):
                value = getattr(self, name)
                if not 0.0 <= value <= 1.0:
                    raise ValidationError(f"{name}={value} outside [0, 1]", field=name)
            if abs(self.epsilon1 - (self.epsilon3 + self.epsilon4)) > EPSILON_TOLERANCE:
                raise ValidationError(
                    "combined channels require epsilon1 = epsilon3 + epsilon4", field="epsilon1"
                )
        if self.trials < 1:
            raise ValidationError("trials must be at least 1", field="trials")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer", field="seed")

    @classmethod
    def at_time(cls, family: Family, gamma: float, t: float, **params: Any) -> "ChannelSpec":
        """Build a spec whose ``p`` follows ``1 - exp(-gamma t)``."""

        return cls(family=family, p=decoherence_parameter(gamma, t), t=t, **params)

    @classmethod
    def combined_time_dependent(
        cls,
        p: float,
        gamma: float,
        t: float,
        epsilon4: float,
        u4: Optional[npt.ArrayLike] = None,
    ) -> "ChannelSpec":
        """Combined channel with ``U3 = I`` and ``epsilon3 = 1 - exp(-gamma t)``."""

        epsilon3 = decoherence_parameter(gamma, t)
        return cls(
            family="combinedDampingRandom",
            p=p,
            t=t,
            epsilon1=epsilon3 + epsilon4,
            epsilon3=epsilon3,
            epsilon4=epsilon4,
            u3=SIGMA_O,
            u4=None if u4 is None else as_matrix(u4),
        )

    @property
    def is_stochastic(self) -> bool:
        """True when evaluating the channel needs sampled unitaries."""

        if self.family == "randomNoise":
            return True
        return self.family == "combinedDampingRandom" and (self.u3 is None or self.u4 is None)

    def reference_rate(self) -> float:
        rate = self.gamma1 if self.gamma1 > 0 else self.gamma2
        if rate <= 0:
            raise ValidationError("generalZ needs gamma1 or gamma2 positive to map p to time")
        return rate

    def at_p(self, p: float) -> "ChannelSpec":
        """Copy of this spec at decoherence parameter ``p``.

        For ``generalZ`` the channel time is chosen so that ``exp(-rate t) = 1 - p`` with
        ``rate`` the first positive of ``gamma1``, ``gamma2``.
        """

        if self.family == "generalZ":
            if p >= 1.0:
                return replace(self, p=p, t=math.inf)
            return replace(self, p=p, t=channel_time(p, self.reference_rate()))
        return replace(self, p=p)

    def family_params(self) -> str:
        """Compact ``key=value`` description of the non-``p`` parameters."""

        if self.family == "generalZ":
            names: Tuple[str, ...] = ("gamma1", "gamma2", "mu", "omega")
        elif self.family == "combinedDampingRandom":
            names = ("epsilon1", "epsilon3", "epsilon4")
        else:
            names = ()
        return ";".join(f"{name}={getattr(self, name)!r}" for name in names)

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "ChannelSpec":
        allowed = {
            "family", "p", "gamma1", "gamma2", "mu", "omega", "t",
            "epsilon1", "epsilon3", "epsilon4", "u3", "u4", "trials", "seed",
        }
        for key in payload:
            if key not in allowed:
                raise ConfigurationError(f"unknown channel key '{key}'", field=key)
        if "family" not in payload:
            raise ConfigurationError("channel requires a 'family'", field="family")
        require_numbers(payload, _NUMERIC_KEYS)
        values: Dict[str, Any] = dict(payload)
        for name in ("u3", "u4"):
            if values.get(name) is not None:
                values[name] = _matrix_from_payload(values[name], name)
        try:
            return cls(**values)
        except (TypeError, ValidationError) as exc:
            raise ConfigurationError(
                f"invalid channel: {exc}", field=getattr(exc, "field", None) or "family", cause=exc
            )

    def to_dict(self) -> MutableMapping[str, object]:
        data: MutableMapping[str, object] = {"family": self.family, "p": self.p}
        for name in ("gamma1", "gamma2", "mu", "omega", "epsilon1", "epsilon3", "epsilon4"):
            if getattr(self, name):
                data[name] = getattr(self, name)
        if self.t is not None:
            data["t"] = self.t
        if self.is_stochastic:
            data["trials"] = self.trials
            data["seed"] = self.seed
        return data


_NUMERIC_KEYS: Tuple[str, ...] = (
    "p", "gamma1", "gamma2", "mu", "omega", "t", "epsilon1", "epsilon3", "epsilon4",
)
_INTEGER_KEYS: Tuple[str, ...] = ("trials", "seed")


def require_numbers(
    payload: Mapping[str, Any],
    real_keys: Sequence[str],
    integer_keys: Sequence[str] = _INTEGER_KEYS,
) -> None:
    """Reject JSON values of the wrong type before they reach the dataclass checks."""

    for key in real_keys:
        value = payload.get(key)
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigurationError(f"{key} must be a number, got {value!r}", field=key)
    for key in integer_keys:
        value = payload.get(key)
        if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigurationError(f"{key} must be an integer, got {value!r}", field=key)


def _matrix_from_payload(value: Any, name: str) -> ComplexMatrix:
    """Matrices in JSON are ``[[[re, im], ...], ...]`` nested lists."""

    try:
        array = np.asarray(value, dtype=np.float64)
        return as_matrix(array[..., 0] + 1j * array[..., 1])
    except (ValueError, IndexError, ValidationError) as exc:
        raise ConfigurationError(f"{name} is not a [[[re, im]]] matrix", field=name, cause=exc)


def _amplitude_damping_pair(p: float) -> Tuple[ComplexMatrix, ComplexMatrix]:
    return (
        np.array([[1, 0], [0, math.sqrt(1 - p)]], dtype=np.complex128),
        np.array([[0, math.sqrt(p)], [0, 0]], dtype=np.complex128),
    )


def kraus_for(spec: ChannelSpec) -> KrausSet:
    """Kraus set of a catalog family at the spec's parameters."""

    p = spec.p
    family = spec.family
    if family == "depolarization":
        weight = math.sqrt(p / 4)
        return KrausSet.from_operators(
            [
                math.sqrt(1 - 3 * p / 4) * SIGMA_O,
                weight * SIGMA_X,
                weight * SIGMA_Y,
                weight * SIGMA_Z,
            ]
        )
    if family == "amplitudeDamping":
        return KrausSet.from_operators(_amplitude_damping_pair(p))
    if family == "phaseDamping":
        return KrausSet.from_operators(
            [
                math.sqrt(1 - p) * SIGMA_O,
                np.diag([math.sqrt(p), 0.0]),
                np.diag([0.0, math.sqrt(p)]),
            ]
        )
    if family in FLIP_AXES:
        return KrausSet.from_operators(
            [math.sqrt(p) * SIGMA_O, math.sqrt(1 - p) * FLIP_AXES[family]]
        )
    if family == "generalZ":
        return _general_z_kraus(spec)
    if family == "combinedDampingRandom":
        if spec.u3 is None or spec.u4 is None:
            raise ValidationError("combined channel needs both u3 and u4 to build a Kraus set")
        scale = math.sqrt(1 - spec.epsilon1)
        first, second = _amplitude_damping_pair(p)
        return KrausSet.from_operators(
            [
                scale * first,
                scale * second,
                math.sqrt(spec.epsilon3) * spec.u3,
                math.sqrt(spec.epsilon4) * spec.u4,
            ]
        )
    raise ValidationError(f"'{family}' channels are sampled, not built from a fixed Kraus set")


def _general_z_weights(spec: ChannelSpec) -> Tuple[float, float, complex]:
    t = spec.t if spec.t is not None else 0.0
    if math.isinf(t):
        if spec.gamma2 == 0 and spec.omega != 0:
            raise ValidationError("an infinite channel time needs gamma2 > 0 when omega != 0")
        decay = 0.0 if spec.gamma1 > 0 else 1.0
        coherence = 0j if spec.gamma2 > 0 else 1 + 0j
    else:
        decay = math.exp(-spec.gamma1 * t)
        coherence = complex(np.exp(-(spec.gamma2 + 1j * spec.omega) * t))
    return decay + spec.mu * (1 - decay), decay - spec.mu * (1 - decay), coherence


def _general_z_kraus(spec: ChannelSpec) -> KrausSet:
    """Kraus operators of the sigma_z-covariant qubit map, via its Choi matrix."""

    upper, lower, coherence = _general_z_weights(spec)
    images = {
        (0, 0): (SIGMA_O + upper * SIGMA_Z) / 2,
        (1, 1): (SIGMA_O - lower * SIGMA_Z) / 2,
        (0, 1): coherence * (SIGMA_X + 1j * SIGMA_Y) / 2,
        (1, 0): np.conj(coherence) * (SIGMA_X - 1j * SIGMA_Y) / 2,
    }
    choi = np.zeros((4, 4), dtype=np.complex128)
    for (row, col), image in images.items():
        unit = np.zeros((2, 2), dtype=np.complex128)
        unit[row, col] = 1.0
        choi += np.kron(unit, image)
    eigenvalues, eigenvectors = scipy.linalg.eigh(choi)
    if eigenvalues[0] < get_settings().tol_psd:
        raise ValidationError(
            "generalZ parameters are not completely positive "
            f"(Choi eigenvalue {eigenvalues[0]:.3e})"
        )
    operators = [
        math.sqrt(value) * eigenvectors[:, index].reshape(2, 2).T
        for index, value in enumerate(eigenvalues)
        if value > 1e-14
    ]
    return KrausSet.from_operators(operators[-4:] or [SIGMA_O])


def _apply_product(
    rho: npt.NDArray[np.complex128], kraus: KrausSet, num_qubits: int, settings: Settings
) -> npt.NDArray[np.complex128]:
    out = np.zeros_like(rho)
    for combination in itertools.product(kraus.operators, repeat=num_qubits):
        lifted = kron_all(combination, settings=settings)
        out += lifted @ rho @ lifted.conj().T
    return out


def _apply_sequential(
    rho: npt.NDArray[np.complex128], kraus: KrausSet, num_qubits: int
) -> npt.NDArray[np.complex128]:
    superop = kraus.superoperator()
    tensor = rho.reshape((2,) * (2 * num_qubits))
    for qubit in range(num_qubits):
        moved = np.tensordot(superop, tensor, axes=([2, 3], [qubit, num_qubits + qubit]))
        tensor = np.moveaxis(moved, [0, 1], [qubit, num_qubits + qubit])
    return np.ascontiguousarray(tensor).reshape(rho.shape)


def apply_per_qubit(
    rho: DensityOperator,
    kraus: KrausSet,
    *,
    method: Literal["auto", "product", "sequential"] = "auto",
    validate: bool = True,
    settings: Optional[Settings] = None,
) -> DensityOperator:
    """Apply ``kraus`` to every qubit of ``rho`` independently.

    ``product`` enumerates all ``M**N`` tensor-product Kraus operators; ``sequential``
    lifts the channel onto one qubit at a time. ``auto`` picks ``product`` while
    ``M**N`` stays within ``settings.product_kraus_limit`` and N is at most six.
    """

    active = settings or get_settings()
    num_qubits = rho.num_qubits
    if method == "auto":
        small = len(kraus) ** num_qubits <= active.product_kraus_limit and num_qubits <= 6
        method = "product" if small else "sequential"
    logger.debug("applying %d-operator channel to %d qubits (%s)", len(kraus), num_qubits, method)
    matrix = np.array(rho.matrix)
    if method == "product":
        evolved = _apply_product(matrix, kraus, num_qubits, active)
    elif method == "sequential":
        evolved = _apply_sequential(matrix, kraus, num_qubits)
    else:
        raise ValidationError(f"unknown application method '{method}'")
    return DensityOperator.from_matrix(evolved, validate=validate, settings=active)


def closed_form_depolarized(
    num_qubits: int, p: float, *, validate: bool = True, settings: Optional[Settings] = None
) -> DensityOperator:
    survival = 1.0 - p
    matrix = cat_expansion(
        num_qubits,
        upper=survival,
        lower=survival,
        coherence=survival**num_qubits,
        settings=settings,
    )
    return DensityOperator.from_matrix(matrix, validate=validate, settings=settings)


def closed_form_amplitude_damped(
    num_qubits: int, p: float, *, validate: bool = True, settings: Optional[Settings] = None
) -> DensityOperator:
    survival = 1.0 - p
    matrix = cat_expansion(
        num_qubits,
        upper=1.0,
        lower=2.0 * survival - 1.0,
        coherence=survival ** (num_qubits / 2),
        settings=settings,
    )
    return DensityOperator.from_matrix(matrix, validate=validate, settings=settings)


def closed_form_phase_damped(
    num_qubits: int, p: float, *, validate: bool = True, settings: Optional[Settings] = None
) -> DensityOperator:
    matrix = cat_expansion(num_qubits, coherence=(1.0 - p) ** num_qubits, settings=settings)
    return DensityOperator.from_matrix(matrix, validate=validate, settings=settings)


@dataclass(frozen=True)
class GeneralZEvolution:
    """Evolved cat state under the sigma_z-covariant model plus its CP flag."""

    density: DensityOperator
    completely_positive: bool
    min_eigenvalue: float


def closed_form_general_z(
    num_qubits: int,
    gamma1: float,
    gamma2: float,
    mu: float,
    omega: float,
    t: float,
    *,
    settings: Optional[Settings] = None,
) -> GeneralZEvolution:
    """Evolve the cat state under the four-parameter sigma_z-covariant model.

    Parameter sets that break complete positivity are returned with
    ``completely_positive=False`` instead of being rejected.
    """

    active = settings or get_settings()
    spec = ChannelSpec(family="generalZ", gamma1=gamma1, gamma2=gamma2, mu=mu, omega=omega, t=t)
    upper, lower, single = _general_z_weights(spec)
    coherence = single**num_qubits
    matrix = cat_expansion(
        num_qubits, upper=upper, lower=lower, coherence=coherence, settings=active
    )
    density = DensityOperator.from_matrix(matrix, validate=False, settings=active)
    lowest = density.min_eigenvalue(settings=active)
    positive = lowest >= active.tol_psd
    if not positive:
        logger.warning(
            "generalZ parameters (gamma1=%s, gamma2=%s, mu=%s, omega=%s, t=%s) are not "
            "completely positive: min eigenvalue %.3e",
            gamma1, gamma2, mu, omega, t, lowest,
        )
    return GeneralZEvolution(density=density, completely_positive=positive, min_eigenvalue=lowest)


def fidelity(
    reference: DensityOperator,
    evolved: DensityOperator,
    *,
    settings: Optional[Settings] = None,
) -> float:
    """Recovery probability ``Tr(rho_ref rho_out)`` for a pure reference state."""

    active = settings or get_settings()
    if reference.dimension != evolved.dimension:
        raise ShapeError(
            f"fidelity operands differ: {reference.dimension} vs {evolved.dimension}"
        )
    purity = reference.purity()
    if purity < 1.0 - active.tol_purity:
        raise ContractError(f"fidelity needs a pure reference state (purity {purity:.12f})")
    value = trace_product(reference.matrix, evolved.matrix).real
    if value < -1e-10 or value > 1 + 1e-10:
        logger.warning("fidelity %.15f outside [0, 1] beyond rounding noise", value)
    return min(max(value, 0.0), 1.0)


def uhlmann_fidelity(reference: DensityOperator, evolved: DensityOperator) -> float:
    """Conventional fidelity ``Tr sqrt(sqrt(rho) sigma sqrt(rho))``."""

    if reference.dimension != evolved.dimension:
        raise ShapeError("fidelity operands differ in dimension")
    root = scipy.linalg.sqrtm(reference.matrix)
    inner = scipy.linalg.sqrtm(root @ evolved.matrix @ root)
    return float(min(max(np.trace(inner).real, 0.0), 1.0))


def scalar_fidelity(family: str, num_qubits: int, p: float) -> float:
    """Closed scalar fidelity of the cat state under a damping family."""

    survival = 1.0 - p
    if family == "depolarization":
        return (
            ((1 + survival) ** num_qubits + (1 - survival) ** num_qubits) / 2 ** (num_qubits + 1)
            + survival**num_qubits / 2
        )
    if family == "phaseDamping":
        return (1 + survival**num_qubits) / 2
    if family == "amplitudeDamping":
        return (1 + p**num_qubits + survival**num_qubits + 2 * survival ** (num_qubits / 2)) / 4
    raise ValidationError(f"no closed scalar fidelity for '{family}'")


_CLOSED_FORMS = {
    "depolarization": closed_form_depolarized,
    "amplitudeDamping": closed_form_amplitude_damped,
    "phaseDamping": closed_form_phase_damped,
}


def evolve_cat(
    spec: ChannelSpec,
    num_qubits: int,
    *,
    cross_check: bool = False,
    validate: bool = True,
    settings: Optional[Settings] = None,
) -> DensityOperator:
    """Cat state after ``spec`` acts on each qubit.

    Damping families use their closed forms (optionally cross-checked against the Kraus
    path); ``generalZ`` uses its closed form; the rest go through :func:`apply_per_qubit`.
    """

    if spec.is_stochastic:
        raise ValidationError(f"'{spec.family}' needs sampled unitaries; use random_noise")
    if spec.family in _CLOSED_FORMS:
        closed = _CLOSED_FORMS[spec.family](
            num_qubits, spec.p, validate=validate, settings=settings
        )
        if cross_check:
            via_kraus = apply_per_qubit(
                cat_density(num_qubits, settings=settings), kraus_for(spec), settings=settings
            )
            gap = float(np.max(np.abs(closed.matrix - via_kraus.matrix)))
            if gap > 1e-10:
                raise ValidationError(
                    f"closed form and Kraus path disagree for {spec.family} (gap {gap:.3e})"
                )
        return closed
    if spec.family == "generalZ":
        return closed_form_general_z(
            num_qubits,
            spec.gamma1,
            spec.gamma2,
            spec.mu,
            spec.omega,
            spec.t if spec.t is not None else 0.0,
            settings=settings,
        ).density
    return apply_per_qubit(
        cat_density(num_qubits, settings=settings),
        kraus_for(spec),
        validate=validate,
        settings=settings,
    )


def cat_fidelity(
    spec: ChannelSpec,
    num_qubits: int,
    *,
    cross_check: bool = False,
    validate: bool = True,
    settings: Optional[Settings] = None,
) -> float:
    reference = cat_density(num_qubits, settings=settings)
    evolved = evolve_cat(
        spec, num_qubits, cross_check=cross_check, validate=validate, settings=settings
    )
    return fidelity(reference, evolved, settings=settings)
