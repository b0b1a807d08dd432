"""Dense complex linear algebra: the substrate for all density-operator math."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Optional

import numpy as np
import numpy.typing as npt
import scipy.linalg
from typing_extensions import TypeAlias

from ..config import Settings, get_settings
from ..errors import ShapeError, SizeLimitError, ValidationError

ComplexMatrix: TypeAlias = npt.NDArray[np.complex128]


def _frozen(values: npt.ArrayLike) -> ComplexMatrix:
    matrix = np.array(values, dtype=np.complex128)
    matrix.setflags(write=False)
    return matrix


SIGMA_O = _frozen([[1, 0], [0, 1]])
SIGMA_X = _frozen([[0, 1], [1, 0]])
SIGMA_Y = _frozen([[0, -1j], [1j, 0]])
SIGMA_Z = _frozen([[1, 0], [0, -1]])


def as_matrix(values: npt.ArrayLike) -> ComplexMatrix:
    """Coerce ``values`` into a finite two-dimensional complex matrix."""

    matrix = np.asarray(values, dtype=np.complex128)
    if matrix.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {matrix.ndim} dimension(s)")
    rows, cols = matrix.shape
    if rows < 1 or cols < 1:
        raise ShapeError("matrix must have at least one row and one column")
    if not np.all(np.isfinite(matrix)):
        raise ValidationError("matrix entries must be finite")
    return matrix


def _require_square(matrix: ComplexMatrix, name: str) -> int:
    rows, cols = matrix.shape
    if rows != cols:
        raise ShapeError(f"{name} must be square, got {rows}x{cols}")
    return int(rows)


def qubits_for_dimension(dimension: int) -> int:
    """Return ``N`` for a ``2**N`` dimension."""

    if dimension < 1 or dimension & (dimension - 1):
        raise ShapeError(f"dimension {dimension} is not a power of two")
    return dimension.bit_length() - 1


def kron(
    a: npt.ArrayLike, b: npt.ArrayLike, *, settings: Optional[Settings] = None
) -> ComplexMatrix:
    left = as_matrix(a)
    right = as_matrix(b)
    limit = 2 ** (settings or get_settings()).max_qubits
    rows = left.shape[0] * right.shape[0]
    cols = left.shape[1] * right.shape[1]
    if max(rows, cols) > limit:
        raise SizeLimitError(
            f"Kronecker product of dimension {rows}x{cols} exceeds the {limit} limit"
        )
    return np.kron(left, right)


def kron_all(
    matrices: Iterable[npt.ArrayLike], *, settings: Optional[Settings] = None
) -> ComplexMatrix:
    """Fold :func:`kron` left to right over ``matrices``."""

    items = [as_matrix(matrix) for matrix in matrices]
    if not items:
        raise ValidationError("kron_all needs at least one matrix")
    return reduce(lambda acc, item: kron(acc, item, settings=settings), items)


def dagger(a: npt.ArrayLike) -> ComplexMatrix:
    return np.conj(as_matrix(a)).T.copy()


def trace_product(a: npt.ArrayLike, b: npt.ArrayLike) -> complex:
    """Return ``Tr(a @ b)`` without forming the product."""

    left = as_matrix(a)
    right = as_matrix(b)
    _require_square(left, "a")
    _require_square(right, "b")
    if left.shape != right.shape:
        raise ShapeError(f"trace_product operands differ: {left.shape} vs {right.shape}")
    return complex(np.einsum("ij,ji->", left, right))


def hermiticity_error(a: npt.ArrayLike) -> float:
    matrix = as_matrix(a)
    _require_square(matrix, "matrix")
    return float(np.max(np.abs(matrix - matrix.conj().T)))


def is_hermitian(a: npt.ArrayLike, *, settings: Optional[Settings] = None) -> bool:
    return hermiticity_error(a) <= (settings or get_settings()).tol_herm


def min_eigenvalue(a: npt.ArrayLike, *, settings: Optional[Settings] = None) -> float:
    """Smallest eigenvalue of a Hermitian matrix."""

    matrix = as_matrix(a)
    _require_square(matrix, "matrix")
    active = settings or get_settings()
    error = hermiticity_error(matrix)
    if error > active.tol_herm:
        raise ValidationError(
            f"matrix is not Hermitian (max |M - M^dagger| = {error:.3e})"
        )
    symmetric = (matrix + matrix.conj().T) / 2
    lowest = scipy.linalg.eigvalsh(symmetric, subset_by_index=[0, 0])
    return float(lowest[0])


@dataclass(frozen=True)
class DensityOperator:
    """A (possibly mixed) N-qubit state as a ``2**N x 2**N`` matrix."""

    num_qubits: int
    matrix: ComplexMatrix

    @classmethod
    def from_matrix(
        cls,
        values: npt.ArrayLike,
        *,
        validate: bool = True,
        settings: Optional[Settings] = None,
    ) -> "DensityOperator":
        matrix = as_matrix(values)
        dimension = _require_square(matrix, "density operator")
        num_qubits = qubits_for_dimension(dimension)
        active = settings or get_settings()
        if num_qubits > active.max_qubits:
            raise SizeLimitError(
                f"{num_qubits} qubits exceeds the configured maximum of {active.max_qubits}"
            )
        frozen = matrix.copy()
        frozen.setflags(write=False)
        operator = cls(num_qubits=num_qubits, matrix=frozen)
        if validate:
            operator.check(settings=active)
        return operator

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[0])

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return trace_product(self.matrix, self.matrix).real

    def min_eigenvalue(self, *, settings: Optional[Settings] = None) -> float:
        return min_eigenvalue(self.matrix, settings=settings)

    def is_physical(self, *, settings: Optional[Settings] = None) -> bool:
        try:
            self.check(settings=settings)
        except ValidationError:
            return False
        return True

    def check(self, *, settings: Optional[Settings] = None) -> None:
        """Raise :class:`ValidationError` unless Hermitian, unit trace and PSD."""

        active = settings or get_settings()
        error = hermiticity_error(self.matrix)
        if error > active.tol_herm:
            raise ValidationError(f"density operator is not Hermitian (error {error:.3e})")
        trace = self.trace()
        if abs(trace - 1) > active.tol_trace:
            raise ValidationError(f"density operator trace is {trace.real:.12f}, expected 1")
        lowest = self.min_eigenvalue(settings=active)
        if lowest < active.tol_psd:
            raise ValidationError(
                f"density operator is not positive semidefinite (min eigenvalue {lowest:.3e})"
            )
