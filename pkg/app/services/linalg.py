"""Dense complex linear algebra shared by the certification modules.

Values are immutable once constructed: arrays are copied on the way in and
marked read-only, so kets, operators and Schmidt forms can be shared freely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, List, Sequence, Tuple, TypeVar

import numpy as np
import numpy.typing as npt
import scipy.linalg

from app.services.errors import (
    DimensionMismatchError,
    InvalidStateError,
    NonUnitNormError,
    NotHermitianError,
)

TOL_NORM = 1e-10
TOL_HERM = 1e-10
TOL_TRACE = 1e-10
TOL_PROJ = 1e-9
TOL_ORTHO = 1e-9
TOL_RECON = 1e-9
TOL_PSD = 1e-9
TOL_STAB = 1e-9
TOL_CPTP = 1e-9

# Singular values at or below this are treated as exact zeros of the Schmidt spectrum.
_ZERO_SINGULAR = 1e-12
# Schmidt coefficients closer than this share a degenerate block.
_DEGENERATE_GAP = 1e-10
# Residual norm a projected standard vector needs to enter a canonical basis.
_SPAN_THRESHOLD = 1e-3
_PHASE_THRESHOLD = 1e-10

ComplexArray = npt.NDArray[np.complex128]
RealArray = npt.NDArray[np.float64]
Dims = Tuple[int, ...]


def _as_dims(dims: Iterable[int]) -> Dims:
    normalised = tuple(int(dim) for dim in dims)
    if not normalised or any(dim < 1 for dim in normalised):
        raise DimensionMismatchError(message=f"Tensor-factor dimensions must be positive, got {normalised}.")
    return normalised


def _frozen(values: npt.ArrayLike, shape: Tuple[int, ...]) -> ComplexArray:
    array = np.array(values, dtype=np.complex128).reshape(shape)
    array.setflags(write=False)
    return array


def outer(vector: npt.ArrayLike) -> ComplexArray:
    """Return the rank-one operator |v><v| for a column vector."""

    column = np.asarray(vector, dtype=np.complex128).reshape(-1)
    return np.outer(column, column.conj())


@dataclass(frozen=True, eq=False)
class Ket:
    """Normalised state vector with its tensor-factor dimensions."""

    amplitudes: ComplexArray
    dims: Dims

    def __post_init__(self) -> None:
        dims = _as_dims(self.dims)
        size = math.prod(dims)
        flat = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if flat.size != size:
            raise DimensionMismatchError(
                message=f"Ket has {flat.size} amplitudes but dims {dims} describe {size}."
            )
        norm = float(np.linalg.norm(flat))
        if abs(norm - 1.0) > TOL_NORM:
            raise NonUnitNormError(message=f"Ket norm {norm!r} deviates from 1 by more than {TOL_NORM}.")
        object.__setattr__(self, "amplitudes", _frozen(flat, (size,)))
        object.__setattr__(self, "dims", dims)

    @classmethod
    def normalized(cls, amplitudes: npt.ArrayLike, dims: Iterable[int]) -> "Ket":
        flat = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        norm = float(np.linalg.norm(flat))
        if norm == 0.0:
            raise NonUnitNormError(message="Cannot normalise the zero vector.")
        return cls(flat / norm, tuple(dims))

    @classmethod
    def basis(cls, index: int, dims: Iterable[int]) -> "Ket":
        dims = _as_dims(dims)
        amplitudes = np.zeros(math.prod(dims), dtype=np.complex128)
        amplitudes[index] = 1.0
        return cls(amplitudes, dims)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_parties(self) -> int:
        return len(self.dims)

    def inner(self, other: "Ket") -> complex:
        """Return <self|other>."""

        if self.dim != other.dim:
            raise DimensionMismatchError(message=f"Cannot take inner product of dims {self.dims} and {other.dims}.")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def same_ray(self, other: "Ket", tol: float = TOL_RECON) -> bool:
        """Compare two kets up to a global phase."""

        return abs(self.inner(other)) >= 1.0 - tol

    def projector(self) -> "Operator":
        return Operator(outer(self.amplitudes), self.dims)


@dataclass(frozen=True, eq=False)
class Operator:
    """Square matrix acting on a tensor product of the given factor dimensions."""

    entries: ComplexArray
    dims: Dims

    def __post_init__(self) -> None:
        dims = _as_dims(self.dims)
        side = math.prod(dims)
        matrix = np.asarray(self.entries, dtype=np.complex128)
        if matrix.shape != (side, side):
            raise DimensionMismatchError(
                message=f"Operator of shape {matrix.shape} does not act on dims {dims} (side {side})."
            )
        object.__setattr__(self, "entries", _frozen(matrix, (side, side)))
        object.__setattr__(self, "dims", dims)

    @classmethod
    def identity(cls, dims: Iterable[int]) -> "Operator":
        dims = _as_dims(dims)
        return cls(np.eye(math.prod(dims), dtype=np.complex128), dims)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def _check_compatible(self, other: "Operator") -> None:
        if self.dims != other.dims:
            raise DimensionMismatchError(message=f"Operator dims {self.dims} and {other.dims} differ.")

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_compatible(other)
        return Operator(self.entries @ other.entries, self.dims)

    def __add__(self, other: "Operator") -> "Operator":
        self._check_compatible(other)
        return Operator(self.entries + other.entries, self.dims)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_compatible(other)
        return Operator(self.entries - other.entries, self.dims)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.entries * scalar, self.dims)

    __rmul__ = __mul__

    def adjoint(self) -> "Operator":
        return Operator(self.entries.conj().T, self.dims)

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def apply(self, ket: Ket) -> ComplexArray:
        """Return the (generally unnormalised) vector self|ket>."""

        if ket.dim != self.dim:
            raise DimensionMismatchError(message=f"Operator dims {self.dims} cannot act on ket dims {ket.dims}.")
        return self.entries @ ket.amplitudes

    def expectation(self, ket: Ket) -> complex:
        return complex(np.vdot(ket.amplitudes, self.apply(ket)))

    def distance(self, other: "Operator") -> float:
        """Frobenius norm of the difference."""

        self._check_compatible(other)
        return float(np.linalg.norm(self.entries - other.entries))

    def hermiticity_residual(self) -> float:
        return float(np.linalg.norm(self.entries - self.entries.conj().T))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated quantum state: Hermitian, positive semidefinite, unit trace."""

    op: Operator

    def __post_init__(self) -> None:
        if self.op.hermiticity_residual() > TOL_HERM:
            raise NotHermitianError(
                message=f"Density matrix deviates from Hermitian by {self.op.hermiticity_residual():.3e}."
            )
        symmetric = 0.5 * (self.op.entries + self.op.entries.conj().T)
        trace = float(np.trace(symmetric).real)
        if abs(trace - 1.0) > TOL_TRACE:
            raise InvalidStateError(message=f"Density matrix trace {trace!r} deviates from 1.")
        smallest = float(scipy.linalg.eigvalsh(symmetric)[0])
        if smallest < -TOL_PSD:
            raise InvalidStateError(message=f"Density matrix has negative eigenvalue {smallest:.3e}.")
        object.__setattr__(self, "op", Operator(symmetric, self.op.dims))

    @classmethod
    def from_matrix(cls, matrix: npt.ArrayLike, dims: Iterable[int]) -> "DensityMatrix":
        return cls(Operator(np.asarray(matrix, dtype=np.complex128), tuple(dims)))

    @classmethod
    def from_ket(cls, ket: Ket) -> "DensityMatrix":
        return cls(ket.projector())

    @classmethod
    def maximally_mixed(cls, dims: Iterable[int]) -> "DensityMatrix":
        dims = _as_dims(dims)
        side = math.prod(dims)
        return cls(Operator(np.eye(side, dtype=np.complex128) / side, dims))

    @property
    def dims(self) -> Dims:
        return self.op.dims

    @property
    def matrix(self) -> ComplexArray:
        return self.op.entries

    def mix(self, other: "DensityMatrix", weight: float) -> "DensityMatrix":
        """Return (1 - weight) * self + weight * other."""

        if self.dims != other.dims:
            raise DimensionMismatchError(message=f"Cannot mix states on dims {self.dims} and {other.dims}.")
        return DensityMatrix.from_matrix((1.0 - weight) * self.matrix + weight * other.matrix, self.dims)

    def fidelity_sq(self, ket: Ket) -> float:
        """Return tr(rho |psi><psi|), reported as fidelity-squared."""

        if ket.dims != self.dims:
            raise DimensionMismatchError(message=f"State dims {self.dims} and target dims {ket.dims} differ.")
        return float(self.op.expectation(ket).real)


TensorItem = TypeVar("TensorItem", Ket, Operator)


def tensor(a: TensorItem, b: TensorItem) -> TensorItem:
    """Kronecker product; factor dimensions are concatenated."""

    if isinstance(a, Ket) and isinstance(b, Ket):
        return Ket(np.kron(a.amplitudes, b.amplitudes), a.dims + b.dims)
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(np.kron(a.entries, b.entries), a.dims + b.dims)
    raise TypeError(f"tensor expects two Kets or two Operators, got {type(a).__name__} and {type(b).__name__}")


def tensor_all(items: Sequence[TensorItem]) -> TensorItem:
    return reduce(tensor, items)


def eig_hermitian(h: Operator) -> Tuple[RealArray, ComplexArray]:
    """Eigenvalues in descending order with the matching orthonormal eigenvectors (columns)."""

    residual = h.hermiticity_residual()
    if residual > TOL_HERM:
        raise NotHermitianError(message=f"Operator deviates from Hermitian by {residual:.3e}.")
    values, vectors = scipy.linalg.eigh(0.5 * (h.entries + h.entries.conj().T))
    return values[::-1].copy(), vectors[:, ::-1].copy()


def is_projector(p: Operator) -> bool:
    idempotence = float(np.linalg.norm(p.entries @ p.entries - p.entries))
    return idempotence <= TOL_PROJ and p.hermiticity_residual() <= TOL_HERM


def projector_rank(p: Operator) -> int:
    """Number of eigenvalues at or above one half."""

    values, _ = eig_hermitian(p)
    return int(np.count_nonzero(values >= 0.5))


def min_eigenvalue(h: Operator) -> float:
    values, _ = eig_hermitian(h)
    return float(values[-1])


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def inverse_permutation(order: Sequence[int]) -> List[int]:
    return [int(index) for index in np.argsort(order)]


def permute_factors(item: TensorItem, order: Sequence[int]) -> TensorItem:
    """Reorder tensor factors so that new factor k is old factor ``order[k]``."""

    n = len(item.dims)
    if sorted(order) != list(range(n)):
        raise DimensionMismatchError(message=f"{list(order)} is not a permutation of {n} factors.")
    new_dims = tuple(item.dims[index] for index in order)
    if isinstance(item, Ket):
        reordered = item.amplitudes.reshape(item.dims).transpose(order)
        return Ket(reordered.reshape(-1), new_dims)
    axes = list(order) + [n + index for index in order]
    reordered = item.entries.reshape(item.dims + item.dims).transpose(axes)
    side = item.dim
    return Operator(reordered.reshape(side, side), new_dims)


def contract_first_factor(matrix: ComplexArray, dims: Dims, vector: ComplexArray) -> ComplexArray:
    """Return <v|_1 M |v>_1, an unnormalised operator on the remaining factors."""

    first = dims[0]
    rest = math.prod(dims[1:])
    blocks = matrix.reshape(first, rest, first, rest)
    return np.einsum("a,arbs,b->rs", vector.conj(), blocks, vector)


@dataclass(frozen=True, eq=False)
class SchmidtForm:
    """Schmidt coefficients with completed local orthonormal bases (columns).

    ``coefficients`` holds d = min(dim_a, dim_b) values, zero-padded; the first
    d columns of each basis pair up as the Schmidt vectors, the remaining
    columns complete the larger factor.
    """

    coefficients: RealArray
    basis_a: ComplexArray
    basis_b: ComplexArray
    dims_a: Dims
    dims_b: Dims

    def __post_init__(self) -> None:
        dims_a = _as_dims(self.dims_a)
        dims_b = _as_dims(self.dims_b)
        dim_a, dim_b = math.prod(dims_a), math.prod(dims_b)
        coefficients = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        if coefficients.size != min(dim_a, dim_b):
            raise DimensionMismatchError(
                message=f"Expected {min(dim_a, dim_b)} Schmidt coefficients, got {coefficients.size}."
            )
        if abs(float(coefficients.sum()) - 1.0) > TOL_NORM:
            raise NonUnitNormError(message="Schmidt coefficients do not sum to 1.")
        if np.any(np.diff(coefficients) > 0) or np.any(coefficients < 0):
            raise InvalidStateError(message="Schmidt coefficients must be nonnegative and descending.")
        for name, basis, side in (("basis_a", self.basis_a, dim_a), ("basis_b", self.basis_b, dim_b)):
            matrix = np.asarray(basis, dtype=np.complex128)
            if matrix.shape != (side, side):
                raise DimensionMismatchError(message=f"{name} must be {side}x{side}, got {matrix.shape}.")
            if np.linalg.norm(matrix.conj().T @ matrix - np.eye(side)) > TOL_ORTHO:
                raise InvalidStateError(message=f"{name} is not orthonormal.")
            object.__setattr__(self, name, _frozen(matrix, (side, side)))
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "dims_a", dims_a)
        object.__setattr__(self, "dims_b", dims_b)

    @property
    def d(self) -> int:
        return self.coefficients.size

    @property
    def dim_a(self) -> int:
        return self.basis_a.shape[0]

    @property
    def dim_b(self) -> int:
        return self.basis_b.shape[0]

    @property
    def dims(self) -> Dims:
        return self.dims_a + self.dims_b

    @property
    def schmidt_rank(self) -> int:
        return int(np.count_nonzero(self.coefficients > 0.0))

    def ket_a(self, index: int) -> Ket:
        return Ket(self.basis_a[:, index], self.dims_a)

    def ket_b(self, index: int) -> Ket:
        return Ket(self.basis_b[:, index], self.dims_b)

    def reconstruct(self) -> Ket:
        d = self.d
        weights = np.sqrt(self.coefficients)
        amplitudes = (self.basis_a[:, :d] * weights) @ self.basis_b[:, :d].T
        return Ket(amplitudes.reshape(-1), self.dims)


def _fix_phase(vector: ComplexArray) -> ComplexArray:
    leading = vector[np.flatnonzero(np.abs(vector) > _PHASE_THRESHOLD)[0]]
    return vector * (abs(leading) / leading)


def _leading_index(vector: ComplexArray) -> int:
    return int(np.flatnonzero(np.abs(vector) > _PHASE_THRESHOLD)[0])


def _orthogonalise(candidate: ComplexArray, found: Sequence[ComplexArray]) -> ComplexArray:
    # two passes of classical Gram-Schmidt
    for _ in range(2):
        for vector in found:
            candidate = candidate - np.vdot(vector, candidate) * vector
    return candidate


def _canonical_span(columns: ComplexArray) -> ComplexArray:
    """Deterministic orthonormal basis of span(columns) from projected standard vectors."""

    dim, count = columns.shape
    projector = columns @ columns.conj().T
    found: List[ComplexArray] = []
    for k in range(dim):
        candidate = _orthogonalise(projector[:, k].copy(), found)
        norm = float(np.linalg.norm(candidate))
        if norm > _SPAN_THRESHOLD:
            found.append(_fix_phase(candidate / norm))
            if len(found) == count:
                break
    found.sort(key=_leading_index)
    return np.column_stack(found)


def complete_basis(columns: ComplexArray, dim: int) -> ComplexArray:
    """Extend orthonormal columns to a full basis with Gram-Schmidt over e_0, e_1, ..."""

    found: List[ComplexArray] = [columns[:, index] for index in range(columns.shape[1])]
    for k in range(dim):
        if len(found) == dim:
            break
        candidate = np.zeros(dim, dtype=np.complex128)
        candidate[k] = 1.0
        candidate = _orthogonalise(candidate, found)
        norm = float(np.linalg.norm(candidate))
        if norm > _SPAN_THRESHOLD:
            found.append(_fix_phase(candidate / norm))
    return np.column_stack(found)


def _degenerate_blocks(singular_values: RealArray) -> List[Tuple[int, int]]:
    squares = singular_values ** 2
    blocks: List[Tuple[int, int]] = []
    start = 0
    nonzero = int(np.count_nonzero(singular_values > _ZERO_SINGULAR))
    for index in range(1, nonzero + 1):
        if index == nonzero or squares[index - 1] - squares[index] > _DEGENERATE_GAP:
            blocks.append((start, index))
            start = index
    return blocks


def schmidt_decompose(psi: Ket, cut: int = 1) -> SchmidtForm:
    """Schmidt form of ``psi`` across the split ``dims[:cut] | dims[cut:]``."""

    if abs(float(np.linalg.norm(psi.amplitudes)) - 1.0) > TOL_NORM:
        raise NonUnitNormError(message="Cannot Schmidt-decompose a non-normalised ket.")
    if not 0 < cut < psi.n_parties:
        raise DimensionMismatchError(message=f"Cut {cut} does not split dims {psi.dims} into two nonempty groups.")
    dims_a, dims_b = psi.dims[:cut], psi.dims[cut:]
    dim_a, dim_b = math.prod(dims_a), math.prod(dims_b)
    u, s, vh = scipy.linalg.svd(psi.amplitudes.reshape(dim_a, dim_b))

    left: List[ComplexArray] = []
    right: List[ComplexArray] = []
    weights: List[float] = []
    for start, stop in _degenerate_blocks(s):
        block_u = u[:, start:stop]
        canonical = _canonical_span(block_u)
        rotation = block_u.conj().T @ canonical
        left.append(canonical)
        right.append((rotation.conj().T @ vh[start:stop, :]).T)
        weights.extend([float(np.mean(s[start:stop] ** 2))] * (stop - start))

    empty_a = np.zeros((dim_a, 0), dtype=np.complex128)
    empty_b = np.zeros((dim_b, 0), dtype=np.complex128)
    basis_a = complete_basis(np.hstack(left) if left else empty_a, dim_a)
    basis_b = complete_basis(np.hstack(right) if right else empty_b, dim_b)

    coefficients = np.zeros(min(dim_a, dim_b), dtype=np.float64)
    coefficients[: len(weights)] = weights
    coefficients /= coefficients.sum()
    return SchmidtForm(coefficients, basis_a, basis_b, dims_a, dims_b)

