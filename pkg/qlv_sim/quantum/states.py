"""Bell and GHZ basis states, the cat-state density operator and dibit encodings."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
from typing_extensions import Literal

from ..config import Settings, get_settings
from ..errors import ContractError, DomainError, SizeLimitError, ValidationError
from .linalg import (
    SIGMA_O,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ComplexMatrix,
    DensityOperator,
    kron_all,
)

NORM_TOLERANCE = 1e-12
_INV_SQRT2 = 1.0 / np.sqrt(2.0)

# Local Pauli applied to the first qubit of the reference pair for dibits 00, 01, 10, 11.
DIBIT_PAULIS: Tuple[ComplexMatrix, ...] = (
    SIGMA_O,
    SIGMA_Z,
    SIGMA_X,
    SIGMA_X @ SIGMA_Z,
)

Family = Literal["bell", "ghz"]


@dataclass(frozen=True)
class PureState:
    """Normalised state vector over ``num_qubits`` qubits."""

    num_qubits: int
    amplitudes: npt.NDArray[np.complex128]

    def __post_init__(self) -> None:
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise ValidationError(
                f"expected {2 ** self.num_qubits} amplitudes, got {self.amplitudes.shape}"
            )
        norm = float(np.linalg.norm(self.amplitudes))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValidationError(f"state norm is {norm:.15f}, expected 1")

    @classmethod
    def from_amplitudes(cls, values: npt.ArrayLike) -> "PureState":
        amplitudes = np.array(values, dtype=np.complex128)
        amplitudes.setflags(write=False)
        num_qubits = max(int(amplitudes.size).bit_length() - 1, 0)
        return cls(num_qubits=num_qubits, amplitudes=amplitudes)

    def overlap(self, other: "PureState") -> complex:
        """Return ``<self|other>``."""

        if other.num_qubits != self.num_qubits:
            raise ValidationError("states act on different numbers of qubits")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self, *, settings: Optional[Settings] = None) -> DensityOperator:
        return DensityOperator.from_matrix(
            np.outer(self.amplitudes, self.amplitudes.conj()), settings=settings
        )


@dataclass(frozen=True)
class BasisLabel:
    """Selects one orthogonal Bell or GHZ basis state and its public message bits."""

    family: Family
    num_qubits: int
    index: int

    def __post_init__(self) -> None:
        if self.family == "bell":
            if self.num_qubits != 2:
                raise DomainError("Bell labels always describe two qubits")
        elif self.family == "ghz":
            if self.num_qubits < 2:
                raise DomainError("GHZ labels need at least two qubits")
        else:
            raise DomainError(f"unknown basis family '{self.family}'")
        if not 0 <= self.index < 2**self.num_qubits:
            raise DomainError(
                f"index {self.index} outside [0, {2 ** self.num_qubits}) for {self.family}"
            )

    def state(self) -> PureState:
        if self.family == "bell":
            return bell_state(self.index)
        return ghz_state(self.num_qubits, self.index)

    def message_bits(self) -> Tuple[int, ...]:
        """The public message carried by this basis state, most significant bit first."""

        width = self.num_qubits
        return tuple((self.index >> shift) & 1 for shift in range(width - 1, -1, -1))

    @classmethod
    def from_message_bits(cls, family: Family, bits: Tuple[int, ...]) -> "BasisLabel":
        index = 0
        for bit in bits:
            if bit not in (0, 1):
                raise DomainError(f"message bit {bit!r} is not 0 or 1")
            index = (index << 1) | bit
        return cls(family=family, num_qubits=len(bits), index=index)


def _basis_pair(num_qubits: int, leading: int, sign: int) -> PureState:
    """(|leading> +- |complement>)/sqrt2."""

    partner = leading ^ (2**num_qubits - 1)
    amplitudes = np.zeros(2**num_qubits, dtype=np.complex128)
    amplitudes[leading] = _INV_SQRT2
    amplitudes[partner] = -_INV_SQRT2 if sign else _INV_SQRT2
    amplitudes.setflags(write=False)
    return PureState(num_qubits=num_qubits, amplitudes=amplitudes)


def bell_state(index: int) -> PureState:
    """(|00> +- |11>)/sqrt2 for indices 0, 1 and (|10> +- |01>)/sqrt2 for 2, 3."""

    if not 0 <= index < 4:
        raise DomainError(f"Bell index {index} outside [0, 4)")
    leading = 0b00 if index < 2 else 0b10
    return _basis_pair(2, leading, index & 1)


def ghz_state(num_qubits: int, index: int, *, settings: Optional[Settings] = None) -> PureState:
    """GHZ basis state; index bits are (sign, N-1 pattern bits), index 0 is the cat state."""

    if num_qubits < 2:
        raise DomainError(f"GHZ states need at least two qubits, got {num_qubits}")
    _require_size(num_qubits, settings)
    if not 0 <= index < 2**num_qubits:
        raise DomainError(f"GHZ index {index} outside [0, {2 ** num_qubits})")
    sign = index >> (num_qubits - 1)
    pattern = index & (2 ** (num_qubits - 1) - 1)
    return _basis_pair(num_qubits, pattern, sign)


def _require_size(num_qubits: int, settings: Optional[Settings]) -> None:
    limit = (settings or get_settings()).max_qubits
    if num_qubits > limit:
        raise SizeLimitError(f"{num_qubits} qubits exceeds the configured maximum of {limit}")


def cat_expansion(
    num_qubits: int,
    *,
    upper: float = 1.0,
    lower: float = 1.0,
    coherence: complex = 1.0,
    settings: Optional[Settings] = None,
) -> ComplexMatrix:
    """Evaluate the four-term Pauli expansion of an evolved cat state.

    Returns ``2**-(N+1) [(so + upper sz)^N + (so - lower sz)^N
    + coherence (sx + i sy)^N + conj(coherence) (sx - i sy)^N]``. With every weight
    equal to one this is the undisturbed cat state; the damping channels only rescale
    the weights.
    """

    if num_qubits < 1:
        raise DomainError(f"cat states need at least one qubit, got {num_qubits}")
    _require_size(num_qubits, settings)
    terms = (
        (1.0, SIGMA_O + upper * SIGMA_Z),
        (1.0, SIGMA_O - lower * SIGMA_Z),
        (coherence, SIGMA_X + 1j * SIGMA_Y),
        (np.conj(coherence), SIGMA_X - 1j * SIGMA_Y),
    )
    total = np.zeros((2**num_qubits, 2**num_qubits), dtype=np.complex128)
    for weight, factor in terms:
        total += weight * kron_all([factor] * num_qubits, settings=settings)
    return total / 2 ** (num_qubits + 1)


def cat_density(num_qubits: int, *, settings: Optional[Settings] = None) -> DensityOperator:
    """Density operator of the N-qubit cat state under the active limits."""

    active = settings or get_settings()
    _require_size(num_qubits, active)
    return _cat_density(num_qubits, active)


@lru_cache(maxsize=32)
def _cat_density(num_qubits: int, settings: Settings) -> DensityOperator:
    matrix = cat_expansion(num_qubits, settings=settings)
    return DensityOperator.from_matrix(matrix, settings=settings)


@lru_cache(maxsize=1)
def _bell_basis() -> Tuple[PureState, ...]:
    return tuple(bell_state(index) for index in range(4))


def encode_dibit(pair: PureState, dibit: Union[int, Tuple[int, int]]) -> PureState:
    """Apply the public local Pauli for ``dibit`` to the first qubit of the reference pair."""

    value = _dibit_value(dibit)
    reference = _bell_basis()[0]
    if pair.num_qubits != 2 or abs(abs(reference.overlap(pair)) - 1.0) > 1e-10:
        raise ContractError("dibits are encoded into the shared (|00> + |11>)/sqrt2 pair")
    operator = np.kron(DIBIT_PAULIS[value], SIGMA_O)
    return PureState.from_amplitudes(operator @ pair.amplitudes)


def _dibit_value(dibit: Union[int, Tuple[int, int]]) -> int:
    if isinstance(dibit, tuple):
        if len(dibit) != 2 or any(bit not in (0, 1) for bit in dibit):
            raise DomainError(f"dibit {dibit!r} must be two bits")
        return (dibit[0] << 1) | dibit[1]
    if not 0 <= int(dibit) < 4:
        raise DomainError(f"dibit {dibit!r} outside [0, 4)")
    return int(dibit)


def bell_measurement_probabilities(rho: DensityOperator) -> npt.NDArray[np.float64]:
    """Outcome probabilities of an ideal Bell-state measurement on a two-qubit state."""

    if rho.num_qubits != 2:
        raise ValidationError("Bell-state measurement needs a two-qubit state")
    probabilities = np.array(
        [
            np.real(np.vdot(basis.amplitudes, rho.matrix @ basis.amplitudes))
            for basis in _bell_basis()
        ]
    )
    return np.clip(probabilities, 0.0, 1.0)


def decode_bell(state: PureState) -> int:
    """Most likely Bell index of ``state`` (deterministic for Bell basis inputs)."""

    if state.num_qubits != 2:
        raise ValidationError("Bell decoding needs a two-qubit state")
    weights = [abs(basis.overlap(state)) ** 2 for basis in _bell_basis()]
    return int(np.argmax(weights))
