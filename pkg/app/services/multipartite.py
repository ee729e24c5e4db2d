"""Recursive family of 2^(n-1) fully separable projectors for an n-party state.

The first party is split from the rest with the bipartite pair (P, Q). Each
rank-one projector on the rest that appears in P (the B-side Schmidt vectors)
or in Q (the vectors psi_a) is replaced by the family of that conditional
state, one level down. Leaves are indexed by binary words of length n - 1;
bit k selects the P branch (0) or the Q branch (1) at the k-th cut.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog

from app.config import get_settings
from app.schemas.reports import VerificationReport
from app.services.errors import (
    DimensionCapError,
    DimensionMismatchError,
    InvalidOrderError,
    InvalidParametersError,
)
from app.services.linalg import (
    TOL_PROJ,
    TOL_PSD,
    TOL_STAB,
    ComplexArray,
    DensityMatrix,
    Dims,
    Ket,
    Operator,
    commutator,
    inverse_permutation,
    min_eigenvalue,
    outer,
    permute_factors,
)
from app.services.stabilizer import (
    ConjugateBasis,
    LocalTerm,
    build_stabilizer,
    reconstruct_from_terms,
)

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, order=True)
class BinaryWord:
    bits: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        bits = tuple(int(bit) for bit in self.bits)
        if any(bit not in (0, 1) for bit in bits):
            raise InvalidParametersError(message=f"Binary word has non-binary entries {bits}.")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def parse(cls, text: str) -> "BinaryWord":
        if any(char not in "01" for char in text):
            raise InvalidParametersError(message=f"'{text}' is not a binary word.")
        return cls(tuple(int(char) for char in text))

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(str(bit) for bit in self.bits)

    def child(self, bit: int) -> "BinaryWord":
        return BinaryWord(self.bits + (bit,))


def words_of_length(length: int) -> List[BinaryWord]:
    """All words of the given length in lexicographic order."""

    return [BinaryWord(tuple((index >> (length - 1 - k)) & 1 for k in range(length))) for index in range(2**length)]


@dataclass(frozen=True, eq=False)
class StabilizerFamily:
    target: Ket
    order: Tuple[int, ...]
    projectors: Mapping[BinaryWord, Operator]
    tree: Mapping[BinaryWord, Operator]
    terms: Mapping[BinaryWord, Tuple[LocalTerm, ...]] = field(default_factory=dict)
    # outcome path of each term: the local basis index chosen at every cut
    paths: Mapping[BinaryWord, Tuple[Tuple[int, ...], ...]] = field(default_factory=dict)

    @property
    def n_parties(self) -> int:
        return self.target.n_parties

    @property
    def dims(self) -> Dims:
        return self.target.dims

    def leaves(self) -> Iterator[Tuple[BinaryWord, Operator]]:
        """Leaf projectors in lexicographic word order."""

        for word in sorted(self.projectors):
            yield word, self.projectors[word]

    def node(self, word: BinaryWord) -> Operator:
        if word in self.projectors:
            return self.projectors[word]
        return self.tree[word]


@dataclass
class _Subfamily:
    leaves: Dict[str, ComplexArray]
    nodes: Dict[str, ComplexArray]
    terms: Dict[str, List[LocalTerm]]
    paths: Dict[str, List[Tuple[int, ...]]]


def _single_party(vector: ComplexArray) -> _Subfamily:
    return _Subfamily(leaves={"": outer(vector)}, nodes={}, terms={"": [(vector,)]}, paths={"": [()]})


def _attach(
    branch: str,
    local: ComplexArray,
    children: Sequence[_Subfamily],
    into: _Subfamily,
) -> None:
    """Merge sum_k |local_k><local_k| x child_k(w) into ``into`` under the prefix ``branch``."""

    for kind in ("leaves", "nodes"):
        for word in getattr(children[0], kind):
            total = sum(
                np.kron(outer(local[:, k]), getattr(child, kind)[word]) for k, child in enumerate(children)
            )
            getattr(into, kind)[branch + word] = total
    for word in children[0].terms:
        into.terms[branch + word] = [
            (local[:, k],) + term for k, child in enumerate(children) for term in child.terms[word]
        ]
        into.paths[branch + word] = [(k,) + path for k, child in enumerate(children) for path in child.paths[word]]


def _build_recursive(psi: Ket, level: int, bases: Sequence[Optional[ConjugateBasis]]) -> _Subfamily:
    if psi.n_parties == 1:
        return _single_party(psi.amplitudes)
    conj = bases[level] if level < len(bases) else None
    stab = build_stabilizer(psi, conj, cut=1)
    rest = stab.schmidt.dims_b

    family = _Subfamily(leaves={}, nodes={"": stab.target_projector.entries}, terms={}, paths={})
    for branch, terms in (("0", stab.p_terms), ("1", stab.q_terms)):
        children = [_build_recursive(Ket(bob, rest), level + 1, bases) for _, bob in terms]
        _attach(branch, np.column_stack([alice for alice, _ in terms]), children, family)
    return family


def _validate_order(order: Optional[Sequence[int]], n: int) -> Tuple[int, ...]:
    if order is None:
        return tuple(range(n))
    normalised = tuple(int(index) for index in order)
    if sorted(normalised) != list(range(n)):
        raise InvalidOrderError(message=f"Party order {list(normalised)} is not a permutation of {n} parties.")
    return normalised


def build_family(
    psi: Ket,
    order: Optional[Sequence[int]] = None,
    bases: Optional[Sequence[Optional[ConjugateBasis]]] = None,
    dim_cap: Optional[int] = None,
) -> StabilizerFamily:
    """Build the projector family of ``psi``.

    ``order`` lists the parties in the order the cuts peel them off; ``bases``
    optionally fixes the conjugate basis per recursion level (Fourier where
    missing). All returned operators act on the original party order.
    """

    n = psi.n_parties
    if n < 2:
        raise DimensionMismatchError(message=f"A stabilizer family needs at least two parties, got {n}.")
    cap = dim_cap if dim_cap is not None else get_settings().dim_cap
    if psi.dim > cap:
        raise DimensionCapError(message=f"Total dimension {psi.dim} exceeds the cap of {cap}.")
    order = _validate_order(order, n)
    restore = inverse_permutation(order)

    built = _build_recursive(permute_factors(psi, order), 0, list(bases or ()))
    permuted_dims = tuple(psi.dims[index] for index in order)

    def _restore(entries: ComplexArray) -> Operator:
        return permute_factors(Operator(entries, permuted_dims), restore)

    def _reorder(term: LocalTerm) -> LocalTerm:
        return tuple(term[restore[party]] for party in range(n))

    family = StabilizerFamily(
        target=psi,
        order=order,
        projectors={BinaryWord.parse(word): _restore(entries) for word, entries in built.leaves.items()},
        tree={BinaryWord.parse(word): _restore(entries) for word, entries in built.nodes.items()},
        terms={BinaryWord.parse(word): tuple(_reorder(t) for t in terms) for word, terms in built.terms.items()},
        paths={BinaryWord.parse(word): tuple(paths) for word, paths in built.paths.items()},
    )
    logger.info(
        "family_built",
        parties=n,
        dims=list(psi.dims),
        order=list(order),
        leaves=len(family.projectors),
        nodes=len(family.tree),
    )
    return family


def lexicographic_product(fam: StabilizerFamily) -> Operator:
    product = Operator.identity(fam.dims)
    for _, projector in fam.leaves():
        product = product @ projector
    return product


def verify_family(fam: StabilizerFamily) -> VerificationReport:
    """Product identity, sibling relations, operator inequality and separable structure."""

    psi_projector = fam.target.projector()
    identity = Operator.identity(fam.dims)
    n_leaves = 2 ** (fam.n_parties - 1)

    node_product = 0.0
    sibling_commutator = 0.0
    for word in fam.tree:
        left, right = fam.node(word.child(0)), fam.node(word.child(1))
        node_product = max(node_product, (left @ right).distance(fam.tree[word]))
        sibling_commutator = max(sibling_commutator, float(np.linalg.norm(commutator(left, right).entries)))

    gap = psi_projector - identity
    idempotence = 0.0
    reconstruction = 0.0
    for word, projector in fam.leaves():
        gap = gap + (identity - projector)
        idempotence = max(idempotence, (projector @ projector).distance(projector))
        if word in fam.terms:
            reconstruction = max(reconstruction, reconstruct_from_terms(fam.terms[word], fam.dims).distance(projector))
        else:
            reconstruction = math.inf

    residuals = {
        "product_minus_psi": lexicographic_product(fam).distance(psi_projector),
        "node_product_residual": node_product,
        "sibling_commutator": sibling_commutator,
        "inequality_min_eigenvalue": min_eigenvalue(gap),
        "leaf_idempotence": idempotence,
        "separable_reconstruction": reconstruction,
        "leaf_count": float(len(fam.projectors)),
        "node_count": float(len(fam.tree)),
    }
    checks = {
        "product_minus_psi": residuals["product_minus_psi"] <= TOL_STAB,
        "node_product_residual": node_product <= TOL_STAB,
        "sibling_commutator": sibling_commutator <= TOL_STAB,
        "inequality_min_eigenvalue": residuals["inequality_min_eigenvalue"] >= -TOL_PSD,
        "leaf_idempotence": idempotence <= TOL_PROJ,
        "separable_reconstruction": reconstruction <= TOL_STAB,
        "leaf_count": set(fam.projectors) == set(words_of_length(fam.n_parties - 1)),
        "node_count": len(fam.tree) == n_leaves - 1,
    }
    report = VerificationReport.from_checks(residuals, checks)
    logger.debug("family_verified", passed=report.passed, failed=[k for k, ok in checks.items() if not ok])
    return report


def fidelity_bound_multipartite(rho: DensityMatrix, fam: StabilizerFamily) -> float:
    """sum_u tr(rho P^(u)) - (2^(n-1) - 1); never exceeds tr(rho psi)."""

    if rho.dims != fam.dims:
        raise DimensionMismatchError(message=f"State dims {rho.dims} and family dims {fam.dims} differ.")
    total = sum(float(np.real(np.einsum("ij,ji->", rho.matrix, projector.entries))) for _, projector in fam.leaves())
    return total - (len(fam.projectors) - 1)


def measurement_count(n: int, d: int) -> List[int]:
    """Complete projective measurements each party needs across the family.

    Party 1 uses 2, party k (1 < k < n) uses 2(2d)^(k-1), and the last party
    (2d)^(n-1) binary measurements.
    """

    if n < 2 or d < 2:
        raise InvalidParametersError(message=f"measurement_count needs n >= 2 and d >= 2, got n={n}, d={d}.")
    counts = [2]
    counts.extend(2 * (2 * d) ** (k - 1) for k in range(2, n))
    counts.append((2 * d) ** (n - 1))
    return counts
