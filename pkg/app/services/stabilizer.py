"""Separable stabilizer pair (P, Q) of a bipartite pure state.

P = sum_j |j><j| x |j><j| over the Schmidt bases, and
Q = sum_a |a><a| x |psi_a><psi_a| over a basis conjugate to the A-side Schmidt
basis; both are separable projectors of rank d with PQ = QP = |psi><psi|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import structlog

from app.schemas.reports import VerificationReport
from app.services.errors import DimensionMismatchError, InvalidParametersError, NotUnbiasedBasisError
from app.services.linalg import (
    TOL_ORTHO,
    TOL_PSD,
    TOL_STAB,
    ComplexArray,
    Ket,
    Operator,
    RealArray,
    SchmidtForm,
    commutator,
    eig_hermitian,
    min_eigenvalue,
    outer,
    projector_rank,
    schmidt_decompose,
)

logger = structlog.get_logger(__name__)

# One local vector per party; the term stands for the product of their rank-one projectors.
LocalTerm = Tuple[ComplexArray, ...]


@dataclass(frozen=True, eq=False)
class ConjugateBasis:
    """Phase table phi[j, a] of a basis unbiased with respect to the computational one."""

    phases: RealArray

    def __post_init__(self) -> None:
        phases = np.array(self.phases, dtype=np.float64)
        if phases.ndim != 2 or phases.shape[0] != phases.shape[1] or phases.shape[0] < 1:
            raise NotUnbiasedBasisError(message=f"Phase table must be a non-empty square matrix, got {phases.shape}.")
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)
        matrix = self.matrix
        deviation = float(np.linalg.norm(matrix.conj().T @ matrix - np.eye(self.dim)))
        if deviation > TOL_ORTHO:
            raise NotUnbiasedBasisError(
                message=f"Phase table does not define an orthonormal basis (deviation {deviation:.3e})."
            )

    @property
    def dim(self) -> int:
        return self.phases.shape[0]

    @property
    def matrix(self) -> ComplexArray:
        """Column a holds |a> in computational coordinates."""

        return np.exp(1j * self.phases) / math.sqrt(self.dim)


def fourier_conjugate_basis(d: int) -> ConjugateBasis:
    if d < 1:
        raise InvalidParametersError(message=f"Conjugate basis dimension must be positive, got {d}.")
    index = np.arange(d)
    return ConjugateBasis(2.0 * np.pi * np.outer(index, index) / d)


def group_fourier_conjugate_basis(factors: Sequence[int]) -> ConjugateBasis:
    """Fourier basis of the abelian group Z_{f1} x ... x Z_{fk} (mixed-radix labels)."""

    if not factors or any(int(factor) < 1 for factor in factors):
        raise InvalidParametersError(message=f"Group factors must be positive, got {list(factors)}.")
    d = math.prod(int(factor) for factor in factors)
    digits = np.unravel_index(np.arange(d), tuple(int(factor) for factor in factors))
    phases = np.zeros((d, d), dtype=np.float64)
    for digit, factor in zip(digits, factors):
        phases += 2.0 * np.pi * np.outer(digit, digit) / int(factor)
    return ConjugateBasis(phases)


def custom_conjugate_basis(phases: npt.ArrayLike) -> ConjugateBasis:
    return ConjugateBasis(np.asarray(phases, dtype=np.float64))


def _check_conjugate_dim(schmidt: SchmidtForm, conj: ConjugateBasis) -> None:
    if conj.dim != schmidt.d:
        raise DimensionMismatchError(
            message=f"Conjugate basis has dimension {conj.dim} but the Schmidt form has {schmidt.d} terms."
        )


def build_psi_alpha(schmidt: SchmidtForm, conj: ConjugateBasis) -> List[Ket]:
    """|psi_a> = sum_j sqrt(lambda_j) exp(-i phi(j, a)) |j>, in B-side Schmidt coordinates."""

    _check_conjugate_dim(schmidt, conj)
    weights = np.sqrt(schmidt.coefficients)[:, np.newaxis] * np.exp(-1j * conj.phases)
    return [Ket(weights[:, alpha], (schmidt.d,)) for alpha in range(conj.dim)]


def conjugate_vectors(schmidt: SchmidtForm, conj: ConjugateBasis) -> ComplexArray:
    """The conjugate basis of A in ambient coordinates (columns)."""

    _check_conjugate_dim(schmidt, conj)
    return schmidt.basis_a[:, : schmidt.d] @ conj.matrix


def extended_conjugate_basis(schmidt: SchmidtForm, conj: ConjugateBasis) -> ComplexArray:
    """Full measurement basis of A: the conjugate vectors, then the Schmidt vectors beyond d."""

    return np.hstack([conjugate_vectors(schmidt, conj), schmidt.basis_a[:, schmidt.d :]])


def psi_alpha_vectors(schmidt: SchmidtForm, conj: ConjugateBasis) -> ComplexArray:
    """The |psi_a> of Bob in ambient coordinates (columns)."""

    coordinates = np.column_stack([ket.amplitudes for ket in build_psi_alpha(schmidt, conj)])
    return schmidt.basis_b[:, : schmidt.d] @ coordinates


def _sum_of_products(left: ComplexArray, right: ComplexArray) -> ComplexArray:
    products = np.column_stack([np.kron(left[:, k], right[:, k]) for k in range(left.shape[1])])
    return products @ products.conj().T


def build_P(schmidt: SchmidtForm) -> Operator:
    d = schmidt.d
    return Operator(_sum_of_products(schmidt.basis_a[:, :d], schmidt.basis_b[:, :d]), schmidt.dims)


def build_Q(schmidt: SchmidtForm, conj: ConjugateBasis) -> Operator:
    entries = _sum_of_products(conjugate_vectors(schmidt, conj), psi_alpha_vectors(schmidt, conj))
    return Operator(entries, schmidt.dims)


@dataclass(frozen=True, eq=False)
class BipartiteStabilizer:
    """Target state with its stabilizer pair and the local data that realizes it."""

    target: Ket
    schmidt: SchmidtForm
    conj: ConjugateBasis
    P: Operator
    Q: Operator
    psi_alpha: Tuple[Ket, ...]
    p_terms: Tuple[LocalTerm, ...]
    q_terms: Tuple[LocalTerm, ...]

    @property
    def d(self) -> int:
        return self.schmidt.d

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.target.dims

    @property
    def target_projector(self) -> Operator:
        return self.target.projector()


def build_stabilizer(psi: Ket, conj: Optional[ConjugateBasis] = None, cut: int = 1) -> BipartiteStabilizer:
    """Construct (P, Q) for ``psi`` across ``dims[:cut] | dims[cut:]``; Fourier basis by default."""

    schmidt = schmidt_decompose(psi, cut)
    conj = conj or fourier_conjugate_basis(schmidt.d)
    _check_conjugate_dim(schmidt, conj)
    d = schmidt.d
    alphas = conjugate_vectors(schmidt, conj)
    bobs = psi_alpha_vectors(schmidt, conj)
    stabilizer = BipartiteStabilizer(
        target=psi,
        schmidt=schmidt,
        conj=conj,
        P=build_P(schmidt),
        Q=build_Q(schmidt, conj),
        psi_alpha=tuple(build_psi_alpha(schmidt, conj)),
        p_terms=tuple((schmidt.basis_a[:, j], schmidt.basis_b[:, j]) for j in range(d)),
        q_terms=tuple((alphas[:, alpha], bobs[:, alpha]) for alpha in range(d)),
    )
    logger.debug("stabilizer_built", dims=list(psi.dims), cut=cut, d=d, schmidt_rank=schmidt.schmidt_rank)
    return stabilizer


def reconstruct_from_terms(terms: Sequence[LocalTerm], dims: Tuple[int, ...]) -> Operator:
    """Sum over terms of the tensor product of local rank-one projectors."""

    side = math.prod(dims)
    entries = np.zeros((side, side), dtype=np.complex128)
    for term in terms:
        product = term[0]
        for vector in term[1:]:
            product = np.kron(product, vector)
        entries += outer(product)
    return Operator(entries, dims)


def operator_inequality_gap(stab: BipartiteStabilizer) -> float:
    """Smallest eigenvalue of (1 - P) + (1 - Q) - (1 - psi); nonnegative when the inequality holds."""

    identity = Operator.identity(stab.dims)
    gap = (identity - stab.P) + (identity - stab.Q) - (identity - stab.target_projector)
    return min_eigenvalue(gap)


def verify_stabilizer(stab: BipartiteStabilizer) -> VerificationReport:
    psi = stab.target.amplitudes
    psi_projector = stab.target_projector
    P, Q = stab.P, stab.Q
    PQP = P @ Q @ P
    pqp_values, _ = eig_hermitian(PQP)

    residuals: Dict[str, float] = {
        "P_psi_minus_psi": float(np.linalg.norm(P.entries @ psi - psi)),
        "Q_psi_minus_psi": float(np.linalg.norm(Q.entries @ psi - psi)),
        "PQ_minus_psi": (P @ Q).distance(psi_projector),
        "QP_minus_psi": (Q @ P).distance(psi_projector),
        "commutator": float(np.linalg.norm(commutator(P, Q).entries)),
        "PQP_minus_psi": PQP.distance(psi_projector),
        "PQP_second_eigenvalue": float(abs(pqp_values[1])) if pqp_values.size > 1 else 0.0,
        "P_idempotence": (P @ P).distance(P),
        "Q_idempotence": (Q @ Q).distance(Q),
        "P_separable_reconstruction": reconstruct_from_terms(stab.p_terms, stab.dims).distance(P),
        "Q_separable_reconstruction": reconstruct_from_terms(stab.q_terms, stab.dims).distance(Q),
        "inequality_min_eigenvalue": operator_inequality_gap(stab),
    }
    ranks = {"P_rank": projector_rank(P), "Q_rank": projector_rank(Q)}
    checks = {
        name: value <= TOL_STAB for name, value in residuals.items() if name != "inequality_min_eigenvalue"
    }
    checks["inequality_min_eigenvalue"] = residuals["inequality_min_eigenvalue"] >= -TOL_PSD
    for name, rank in ranks.items():
        residuals[name] = float(rank)
        checks[name] = rank == stab.d
    report = VerificationReport.from_checks(residuals, checks)
    logger.debug("stabilizer_verified", passed=report.passed, failed=[k for k, ok in checks.items() if not ok])
    return report


@dataclass(frozen=True, eq=False)
class RescaledEffects:
    coefficients: Tuple[float, ...]
    effects: Tuple[Operator, ...]


def rescale_bob_effects(psi_alpha: Sequence[Ket]) -> RescaledEffects:
    """Uniformly rescale Bob's projectors so that their sum has operator norm one."""

    if not psi_alpha:
        raise InvalidParametersError(message="Cannot rescale an empty list of effects.")
    projectors = [ket.projector() for ket in psi_alpha]
    total = projectors[0]
    for projector in projectors[1:]:
        total = total + projector
    largest = float(eig_hermitian(total)[0][0])
    scale = 1.0 / largest
    return RescaledEffects(
        coefficients=tuple(scale for _ in psi_alpha),
        effects=tuple(scale * projector for projector in projectors),
    )


def bell_pauli_projectors() -> Tuple[Operator, Operator]:
    """Pauli stabilizer projectors (1 + XX)/2 and (1 + ZZ)/2 of the Bell state |phi+>."""

    pauli_x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    pauli_z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
    identity = np.eye(4, dtype=np.complex128)
    return (
        Operator((identity + np.kron(pauli_x, pauli_x)) / 2, (2, 2)),
        Operator((identity + np.kron(pauli_z, pauli_z)) / 2, (2, 2)),
    )
