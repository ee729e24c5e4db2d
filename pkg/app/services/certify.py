"""LOCC test simulation, exact pass probabilities and Hoeffding certificates.

Every protocol is first reduced to its exact outcome distribution by
conditional Born rules; sampling draws outcome labels from that distribution,
so the exact and sampled paths share one model of the measurement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import structlog

from app.schemas.reports import EstimateReport
from app.services.errors import DimensionMismatchError, InvalidParametersError
from app.services.linalg import (
    ComplexArray,
    DensityMatrix,
    Dims,
    Operator,
    RealArray,
    contract_first_factor,
    permute_factors,
)
from app.services.multipartite import BinaryWord, StabilizerFamily, fidelity_bound_multipartite
from app.services.stabilizer import BipartiteStabilizer, extended_conjugate_basis, psi_alpha_vectors, rescale_bob_effects

logger = structlog.get_logger(__name__)

# Lumped outcome of the completing basis vectors at a cascade level; always a rejection.
OTHER = -1

CertifyTarget = Union[BipartiteStabilizer, StabilizerFamily]


@dataclass(frozen=True)
class ProtocolOutcome:
    """One run of a test: the measured labels in protocol order and the verdict."""

    test: str
    outcomes: Tuple[int, ...]
    accepted: bool

    @property
    def alice_outcome(self) -> int:
        return self.outcomes[0]

    @property
    def bob_outcome(self) -> int:
        return self.outcomes[-1]


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Exact joint distribution over the outcome labels of one test."""

    test: str
    labels: Tuple[Tuple[int, ...], ...]
    probabilities: RealArray
    accepted: Tuple[bool, ...]

    def __post_init__(self) -> None:
        raw = np.clip(np.asarray(self.probabilities, dtype=np.float64), 0.0, None)
        total = float(raw.sum())
        if total <= 0.0:
            raise InvalidParametersError(message=f"Outcome distribution of test {self.test} has no mass.")
        probabilities = raw / total
        probabilities.setflags(write=False)
        object.__setattr__(self, "probabilities", probabilities)

    @property
    def acceptance_probability(self) -> float:
        mask = np.asarray(self.accepted, dtype=bool)
        return float(np.clip(self.probabilities[mask].sum(), 0.0, 1.0))

    def _draw(self, rng: np.random.Generator, shots: int) -> np.ndarray:
        return rng.choice(len(self.labels), size=shots, p=self.probabilities)

    def sample(self, rng: np.random.Generator, shots: int = 1) -> List[ProtocolOutcome]:
        return [
            ProtocolOutcome(test=self.test, outcomes=self.labels[index], accepted=self.accepted[index])
            for index in self._draw(rng, shots)
        ]

    def count_accepts(self, rng: np.random.Generator, shots: int) -> int:
        mask = np.asarray(self.accepted, dtype=bool)
        return int(np.count_nonzero(mask[self._draw(rng, shots)]))


def _check_dims(rho: DensityMatrix, dims: Dims) -> None:
    if rho.dims != dims:
        raise DimensionMismatchError(message=f"State dims {rho.dims} and target dims {dims} differ.")


def pass_probability(rho: DensityMatrix, proj: Operator) -> float:
    _check_dims(rho, proj.dims)
    value = float(np.real(np.einsum("ij,ji->", rho.matrix, proj.entries)))
    return float(np.clip(value, 0.0, 1.0))


def fidelity_lower_bound(rho: DensityMatrix, stab: BipartiteStabilizer) -> float:
    """tr(rho P) + tr(rho Q) - 1, never above tr(rho psi)."""

    return pass_probability(rho, stab.P) + pass_probability(rho, stab.Q) - 1.0


def p_test_distribution(rho: DensityMatrix, stab: BipartiteStabilizer) -> OutcomeDistribution:
    """Both parties measure their full Schmidt basis and accept on equal indices below d."""

    _check_dims(rho, stab.dims)
    schmidt = stab.schmidt
    rotation = np.kron(schmidt.basis_a, schmidt.basis_b)
    probabilities = np.real(np.einsum("ki,kl,li->i", rotation.conj(), rho.matrix, rotation))
    labels = tuple((j_a, j_b) for j_a in range(schmidt.dim_a) for j_b in range(schmidt.dim_b))
    accepted = tuple(j_a == j_b and j_a < schmidt.d for j_a, j_b in labels)
    return OutcomeDistribution("P", labels, probabilities, accepted)


def q_test_distribution(
    rho: DensityMatrix, stab: BipartiteStabilizer, rescaled: bool = False
) -> OutcomeDistribution:
    """Alice measures the conjugate basis; Bob tests |psi_a> (or c |psi_a><psi_a|) on her outcome."""

    _check_dims(rho, stab.dims)
    schmidt = stab.schmidt
    split = (schmidt.dim_a, schmidt.dim_b)
    alice = extended_conjugate_basis(schmidt, stab.conj)
    bobs = psi_alpha_vectors(schmidt, stab.conj)
    scale = rescale_bob_effects(stab.psi_alpha).coefficients if rescaled else (1.0,) * schmidt.d

    labels: List[Tuple[int, int]] = []
    probabilities: List[float] = []
    accepted: List[bool] = []
    for alpha in range(schmidt.dim_a):
        conditional = contract_first_factor(rho.matrix, split, alice[:, alpha])
        mass = float(np.real(np.trace(conditional)))
        hit = 0.0
        if alpha < schmidt.d:
            vector = bobs[:, alpha]
            hit = scale[alpha] * float(np.real(np.vdot(vector, conditional @ vector)))
            labels.append((alpha, 1))
            probabilities.append(hit)
            accepted.append(True)
        labels.append((alpha, 0))
        probabilities.append(mass - hit)
        accepted.append(False)
    return OutcomeDistribution("Q-rescaled" if rescaled else "Q", tuple(labels), np.array(probabilities), tuple(accepted))


def cascade_distribution(
    rho: DensityMatrix, fam: StabilizerFamily, word: Union[BinaryWord, str]
) -> OutcomeDistribution:
    """Sequential one-way protocol for the leaf projector of ``word``.

    Parties measure in the family's cut order. Each party projects onto one of
    the local vectors allowed by the outcomes so far (or the lumped ``OTHER``
    outcome) and the last party makes a binary test on its conditional vector.
    """

    word = BinaryWord.parse(word) if isinstance(word, str) else word
    _check_dims(rho, fam.dims)
    order = fam.order
    built = permute_factors(rho.op, order)
    dims = built.dims
    last = len(dims) - 1

    # prefix of outcomes -> {next outcome: local vector of the next party}
    branches: Dict[Tuple[int, ...], Dict[int, ComplexArray]] = {}
    finals: Dict[Tuple[int, ...], ComplexArray] = {}
    for path, term in zip(fam.paths[word], fam.terms[word]):
        for level in range(last):
            branches.setdefault(path[:level], {})[path[level]] = term[order[level]]
        finals[path] = term[order[last]]

    labels: List[Tuple[int, ...]] = []
    probabilities: List[float] = []
    accepted: List[bool] = []

    def emit(label: Tuple[int, ...], probability: float, ok: bool) -> None:
        labels.append(label)
        probabilities.append(probability)
        accepted.append(ok)

    def descend(prefix: Tuple[int, ...], sigma: ComplexArray, level: int) -> None:
        mass = float(np.real(np.trace(sigma)))
        if level == last:
            vector = finals[prefix]
            hit = float(np.real(np.vdot(vector, sigma @ vector)))
            emit(prefix + (1,), hit, True)
            emit(prefix + (0,), mass - hit, False)
            return
        kept = 0.0
        for outcome, vector in sorted(branches[prefix].items()):
            conditional = contract_first_factor(sigma, dims[level:], vector)
            kept += float(np.real(np.trace(conditional)))
            descend(prefix + (outcome,), conditional, level + 1)
        emit(prefix + (OTHER,), mass - kept, False)

    descend((), built.entries, 0)
    return OutcomeDistribution(str(word), tuple(labels), np.array(probabilities), tuple(accepted))


def simulate_P_test(rho: DensityMatrix, stab: BipartiteStabilizer, rng: np.random.Generator) -> ProtocolOutcome:
    return p_test_distribution(rho, stab).sample(rng)[0]


def simulate_Q_test(
    rho: DensityMatrix, stab: BipartiteStabilizer, rng: np.random.Generator, rescaled: bool = False
) -> ProtocolOutcome:
    return q_test_distribution(rho, stab, rescaled).sample(rng)[0]


def simulate_cascade_test(
    rho: DensityMatrix, fam: StabilizerFamily, word: Union[BinaryWord, str], rng: np.random.Generator
) -> ProtocolOutcome:
    return cascade_distribution(rho, fam, word).sample(rng)[0]


def protocol_distributions(rho: DensityMatrix, target: CertifyTarget) -> Dict[str, OutcomeDistribution]:
    """Exact distributions of every test whose pass rates enter the certificate."""

    if isinstance(target, BipartiteStabilizer):
        return {"P": p_test_distribution(rho, target), "Q": q_test_distribution(rho, target)}
    return {str(word): cascade_distribution(rho, target, word) for word, _ in target.leaves()}


def hoeffding_sample_size(epsilon: float, delta: float, n_estimates: int = 1) -> int:
    """Samples per estimate so that all ``n_estimates`` are epsilon-accurate with probability 1 - delta."""

    _check_accuracy(epsilon, delta)
    if n_estimates < 1:
        raise InvalidParametersError(message=f"Need at least one estimate, got {n_estimates}.")
    return math.ceil(math.log(2.0 * n_estimates / delta) / (2.0 * epsilon**2))


def hoeffding_failure_probability(n: int, epsilon: float) -> float:
    """2 exp(-2 n epsilon^2): chance that a mean of n samples in [0, 1] misses by more than epsilon."""

    return 2.0 * math.exp(-2.0 * n * epsilon**2)


def _check_accuracy(epsilon: float, delta: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise InvalidParametersError(message=f"epsilon must lie in (0, 1), got {epsilon}.")
    if not 0.0 < delta < 1.0:
        raise InvalidParametersError(message=f"delta must lie in (0, 1), got {delta}.")


def certify(
    rho: DensityMatrix,
    target: CertifyTarget,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
    samples: Optional[int] = None,
    rescaled: bool = False,
) -> EstimateReport:
    """Sampled fidelity certificate for ``rho`` against a stabilizer pair or family.

    Each test gets its own substream of ``rng``. With ``samples`` set, epsilon
    is recomputed so that the Hoeffding guarantee still holds at ``delta``.
    """

    _check_accuracy(epsilon, delta)
    if rescaled and not isinstance(target, BipartiteStabilizer):
        raise InvalidParametersError(message="Rescaled Q-test effects are only defined for a stabilizer pair.")
    distributions = protocol_distributions(rho, target)
    n_tests = len(distributions)
    if samples is None:
        samples = hoeffding_sample_size(epsilon, delta, n_tests)
    elif samples < 1:
        raise InvalidParametersError(message=f"samples must be positive, got {samples}.")
    else:
        epsilon = math.sqrt(math.log(2.0 * n_tests / delta) / (2.0 * samples)) * (1.0 + 1e-12)

    streams = rng.spawn(n_tests)
    pass_rates = {
        name: dist.count_accepts(stream, samples) / samples
        for (name, dist), stream in zip(distributions.items(), streams)
    }
    plug_in = sum(pass_rates.values()) - (n_tests - 1)
    exact = {name: dist.acceptance_probability for name, dist in distributions.items()}

    if isinstance(target, BipartiteStabilizer):
        exact_bound = fidelity_lower_bound(rho, target)
    else:
        exact_bound = fidelity_bound_multipartite(rho, target)

    rescaled_rate: Optional[float] = None
    if rescaled and isinstance(target, BipartiteStabilizer):
        (extra,) = rng.spawn(1)
        rescaled_rate = q_test_distribution(rho, target, rescaled=True).count_accepts(extra, samples) / samples

    report = EstimateReport(
        pass_rates=pass_rates,
        samples_per_test=samples,
        n_tests=n_tests,
        epsilon=epsilon,
        delta=delta,
        fidelity_lower_bound=plug_in,
        confidence_adjusted_bound=plug_in - n_tests * epsilon,
        exact_pass_probabilities=exact,
        exact_bound=exact_bound,
        exact_fidelity_sq=rho.fidelity_sq(target.target),
        rescaled_q_acceptance=rescaled_rate,
    )
    logger.info(
        "certify_completed",
        n_tests=n_tests,
        samples_per_test=samples,
        fidelity_lower_bound=plug_in,
        confidence_adjusted_bound=report.confidence_adjusted_bound,
    )
    return report


def exact_pass_probabilities(rho: DensityMatrix, target: CertifyTarget) -> Mapping[str, float]:
    if isinstance(target, BipartiteStabilizer):
        return {"P": pass_probability(rho, target.P), "Q": pass_probability(rho, target.Q)}
    return {str(word): pass_probability(rho, projector) for word, projector in target.leaves()}

