"""Pauli-frame bookkeeping for Bell pairs.

A Bell index ``b = 2x + z`` names the pair ``(X^x Z^z (x) I)|Phi+>``. Up to a global
phase, Pauli frames compose by XOR, so swapping and teleportation reduce to index
arithmetic; :func:`bell_swap_table` confirms the rule on explicit state vectors.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from ..errors import DomainError, ValidationError
from ..quantum.linalg import ComplexMatrix
from ..quantum.states import DIBIT_PAULIS, bell_state

FrameKey = Tuple[int, int, int]


def _check(index: int) -> int:
    if not 0 <= index < 4:
        raise DomainError(f"Bell index {index} outside [0, 4)")
    return index


def compose(*frames: int) -> int:
    """Combine Pauli frames (and BSM outcomes) into one frame."""

    result = 0
    for frame in frames:
        result ^= _check(frame)
    return result


def pauli_for_index(index: int) -> ComplexMatrix:
    return DIBIT_PAULIS[_check(index)]


def dibit_bits(index: int) -> Tuple[int, int]:
    value = _check(index)
    return value >> 1, value & 1


def bit_errors(sent: int, decoded: int) -> int:
    return bin(_check(sent) ^ _check(decoded)).count("1")


def swapped_index(first: int, second: int, outcome: int) -> int:
    """Index left on the outer qubits after a BSM with ``outcome`` on the inner ones."""

    return compose(first, second, outcome)


def _swap_result(first: int, second: int, outcome: int) -> int:
    # qubit order (A1, C, A2, B); the BSM acts on (A1, A2) and leaves (C, B).
    joint = np.kron(bell_state(first).amplitudes, bell_state(second).amplitudes)
    tensor = joint.reshape(2, 2, 2, 2)
    projector = bell_state(outcome).amplitudes.reshape(2, 2).conj()
    remaining = np.einsum("ac,abcd->bd", projector, tensor).reshape(4)
    norm = np.linalg.norm(remaining)
    if not np.isclose(norm, 0.5, atol=1e-12):
        raise ValidationError(
            f"BSM outcome {outcome} has probability {norm ** 2:.6f}, expected 1/4"
        )
    remaining = remaining / norm
    overlaps = [abs(np.vdot(bell_state(index).amplitudes, remaining)) for index in range(4)]
    best = int(np.argmax(overlaps))
    if abs(overlaps[best] - 1.0) > 1e-10:
        raise ValidationError("swapped state is not a Bell basis state")
    return best


@lru_cache(maxsize=1)
def bell_swap_table() -> Dict[FrameKey, int]:
    """Outcome of entanglement swapping for every (first, second, outcome) triple."""

    return {
        (first, second, outcome): _swap_result(first, second, outcome)
        for first in range(4)
        for second in range(4)
        for outcome in range(4)
    }


def frame_mismatches() -> Tuple[FrameKey, ...]:
    """Triples where XOR composition disagrees with the state-vector calculation."""

    return tuple(
        key for key, index in sorted(bell_swap_table().items()) if index != swapped_index(*key)
    )


def corrected_dibit(measured: int, *announced: int) -> int:
    """Dibit recovered by undoing the announced frames from a measured Bell index."""

    return compose(measured, *announced)
