"""Random noise channels: Haar-sampled unitaries mixed with the identity.

Each trial draws its own channel from a dedicated counter-based stream keyed by
``(seed, trial index)``, so averages are reproducible regardless of how trials are
scheduled across workers. The key omits ``p``, so every point of a curve sees
the same unitaries and only the weights change.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, ClassVar, Mapping, MutableMapping, NamedTuple, Optional, Union

import numpy as np
import numpy.typing as npt
from scipy.stats import unitary_group
from typing_extensions import Literal

from ..config import Settings, get_settings
from ..errors import ConfigurationError, DomainError, ValidationError
from .channels import (
    ChannelSpec,
    KrausSet,
    require_numbers,
    apply_per_qubit,
    fidelity,
    kraus_for,
)
from .linalg import SIGMA_O, ComplexMatrix, DensityOperator
from .states import cat_density

logger = logging.getLogger(__name__)

WeightMode = Literal["uniformSplit", "randomSimplex"]
RANDOM_KRAUS_OPERATORS = 4
DEFAULT_TRIALS = 10_000
_UINT64 = 2**64


@dataclass(frozen=True)
class RngStream:
    """One independent, reproducible random stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < _UINT64 or not 0 <= self.stream_id < _UINT64:
            raise ValidationError("seed and stream id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(sequence))


RandomSource = Union[RngStream, np.random.Generator]


def _as_generator(rng: RandomSource) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


@dataclass(frozen=True)
class RandomChannelSpec:
    """Identity with weight ``1 - p`` plus three Haar unitaries sharing weight ``p``."""

    p: float = 0.0
    weight_mode: WeightMode = "uniformSplit"
    seed: int = 0
    trials: int = DEFAULT_TRIALS
    num_operators: int = RANDOM_KRAUS_OPERATORS

    family: ClassVar[str] = "randomNoise"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"decoherence parameter p={self.p} outside [0, 1]", field="p")
        if self.num_operators != RANDOM_KRAUS_OPERATORS:
            raise ValidationError(
                "random noise channels use exactly four Kraus operators", field="numOperators"
            )
        if self.weight_mode not in ("uniformSplit", "randomSimplex"):
            raise ValidationError(f"unknown weight mode '{self.weight_mode}'", field="weightMode")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1", field="trials")
        if not 0 <= self.seed < _UINT64:
            raise ValidationError("seed must be an unsigned 64-bit integer", field="seed")

    @property
    def is_stochastic(self) -> bool:
        return True

    def at_p(self, p: float) -> "RandomChannelSpec":
        return replace(self, p=p)

    def family_params(self) -> str:
        return f"weightMode={self.weight_mode};trials={self.trials};seed={self.seed}"

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "RandomChannelSpec":
        keys = {"family": None, "p": "p", "weightMode": "weight_mode", "seed": "seed",
                "trials": "trials", "numOperators": "num_operators"}
        require_numbers(payload, ("p",), ("seed", "trials", "numOperators"))
        values = {}
        for key, value in payload.items():
            if key not in keys:
                raise ConfigurationError(f"unknown random channel key '{key}'", field=key)
            target = keys[key]
            if target is not None:
                values[target] = value
        try:
            return cls(**values)
        except (TypeError, ValidationError) as exc:
            raise ConfigurationError(
                f"invalid random channel: {exc}",
                field=getattr(exc, "field", None) or "family",
                cause=exc,
            )

    def to_dict(self) -> MutableMapping[str, object]:
        return {
            "family": self.family,
            "p": self.p,
            "weightMode": self.weight_mode,
            "seed": self.seed,
            "trials": self.trials,
        }


def sample_unitary2(rng: RandomSource) -> ComplexMatrix:
    """Haar-distributed 2x2 unitary."""

    return np.asarray(unitary_group.rvs(2, random_state=_as_generator(rng)), dtype=np.complex128)


def sample_random_kraus(spec: RandomChannelSpec, rng: RandomSource) -> KrausSet:
    generator = _as_generator(rng)
    unitaries = unitary_group.rvs(2, size=spec.num_operators - 1, random_state=generator)
    if spec.weight_mode == "uniformSplit":
        weights = np.full(spec.num_operators - 1, spec.p / (spec.num_operators - 1))
    else:
        weights = generator.dirichlet(np.ones(spec.num_operators - 1)) * spec.p
    operators = [math.sqrt(1.0 - spec.p) * SIGMA_O]
    operators.extend(math.sqrt(weight) * unitary for weight, unitary in zip(weights, unitaries))
    return KrausSet.from_operators(operators)


class FidelityEstimate(NamedTuple):
    mean: float
    stderr: float


def summarize(samples: npt.ArrayLike) -> FidelityEstimate:
    values = np.asarray(samples, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("cannot summarise an empty sample")
    if values.size == 1:
        return FidelityEstimate(float(values[0]), 0.0)
    return FidelityEstimate(
        float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))
    )


def fidelity_samples(
    reference: DensityOperator,
    spec: RandomChannelSpec,
    *,
    settings: Optional[Settings] = None,
) -> npt.NDArray[np.float64]:
    """Per-trial fidelities of ``reference`` under freshly sampled random channels."""

    active = settings or get_settings()
    samples = np.empty(spec.trials, dtype=np.float64)
    for trial in range(spec.trials):
        kraus = sample_random_kraus(spec, RngStream(spec.seed, trial))
        evolved = apply_per_qubit(
            reference, kraus, method="sequential", validate=False, settings=active
        )
        samples[trial] = fidelity(reference, evolved, settings=active)
    return samples


def mean_fidelity_random_channel(
    num_qubits: int,
    spec: RandomChannelSpec,
    *,
    settings: Optional[Settings] = None,
) -> FidelityEstimate:
    if num_qubits < 2:
        raise DomainError(f"random channel averages need at least two qubits, got {num_qubits}")
    if spec.p == 0.0:
        return FidelityEstimate(1.0, 0.0)
    reference = cat_density(num_qubits, settings=settings)
    estimate = summarize(fidelity_samples(reference, spec, settings=settings))
    logger.debug(
        "random channel N=%d p=%s: mean %.6f +- %.6f over %d trials",
        num_qubits, spec.p, estimate.mean, estimate.stderr, spec.trials,
    )
    return estimate


def mean_fidelity_combined_channel(
    num_qubits: int,
    spec: ChannelSpec,
    *,
    settings: Optional[Settings] = None,
) -> FidelityEstimate:
    """Average over trials of the combined channel, sampling whichever unitary is missing."""

    if spec.family != "combinedDampingRandom":
        raise ValidationError(f"expected a combined channel, got '{spec.family}'")
    if num_qubits < 2:
        raise DomainError(f"combined channel averages need at least two qubits, got {num_qubits}")
    active = settings or get_settings()
    reference = cat_density(num_qubits, settings=active)
    samples = np.empty(spec.trials, dtype=np.float64)
    for trial in range(spec.trials):
        generator = RngStream(spec.seed, trial).generator()
        u3 = spec.u3 if spec.u3 is not None else sample_unitary2(generator)
        u4 = spec.u4 if spec.u4 is not None else sample_unitary2(generator)
        kraus = kraus_for(replace(spec, u3=u3, u4=u4))
        evolved = apply_per_qubit(
            reference, kraus, method="sequential", validate=False, settings=active
        )
        samples[trial] = fidelity(reference, evolved, settings=active)
    return summarize(samples)
