"""Kraus channels and ensemble-fidelity bounds on entanglement fidelity.

For a bipartite target with Schmidt data (lambda_j, |j>) and conjugate-basis
states |psi_a>, the entanglement fidelity of a channel T on the second factor
is bounded below by

    sum_j lambda_j F(|j>; T)^2 + (1/d) sum_a F(|psi_a>; T)^2 - 1,

which needs only pure-state inputs on the second factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Tuple, Union

import numpy as np
import numpy.typing as npt
import scipy.linalg
import structlog

from app.schemas.reports import ChannelBoundReport, SampledChannelEstimate
from app.services.certify import hoeffding_sample_size, pass_probability
from app.services.errors import (
    BoundViolationError,
    DimensionMismatchError,
    InvalidParametersError,
    NotCPTPError,
    UnsupportedDimensionError,
)
from app.services.linalg import (
    TOL_CPTP,
    TOL_STAB,
    ComplexArray,
    DensityMatrix,
    Ket,
)
from app.services.stabilizer import BipartiteStabilizer, psi_alpha_vectors

logger = structlog.get_logger(__name__)

BUILTIN_NOISE = ("depolarizing", "dephasing", "amplitude-damping", "bit-flip", "identity")

ProbeState = Union[Ket, npt.ArrayLike]


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """CPTP map rho -> sum_k K_k rho K_k^dagger."""

    kraus: Tuple[ComplexArray, ...]

    def __post_init__(self) -> None:
        operators = tuple(np.array(k, dtype=np.complex128) for k in self.kraus)
        if not operators:
            raise NotCPTPError(message="A channel needs at least one Kraus operator.")
        shape = operators[0].shape
        if len(shape) != 2 or any(k.shape != shape for k in operators):
            raise DimensionMismatchError(message="Kraus operators must be matrices of one common shape.")
        completeness = sum(k.conj().T @ k for k in operators)
        deviation = float(np.linalg.norm(completeness - np.eye(shape[1])))
        if deviation > TOL_CPTP:
            raise NotCPTPError(message=f"Kraus operators are not trace preserving (deviation {deviation:.3e}).")
        for k in operators:
            k.setflags(write=False)
        object.__setattr__(self, "kraus", operators)

    @classmethod
    def identity(cls, d: int) -> "KrausChannel":
        return cls((np.eye(d, dtype=np.complex128),))

    @classmethod
    def from_arrays(cls, kraus: Iterable[npt.ArrayLike]) -> "KrausChannel":
        return cls(tuple(np.asarray(k, dtype=np.complex128) for k in kraus))

    @property
    def dim_in(self) -> int:
        return self.kraus[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.kraus[0].shape[0]

    def apply(self, matrix: npt.ArrayLike) -> ComplexArray:
        matrix = np.asarray(matrix, dtype=np.complex128)
        return sum(k @ matrix @ k.conj().T for k in self.kraus)

    def apply_dual(self, observable: npt.ArrayLike) -> ComplexArray:
        """Heisenberg-picture map X -> sum_k K_k^dagger X K_k."""

        observable = np.asarray(observable, dtype=np.complex128)
        return sum(k.conj().T @ observable @ k for k in self.kraus)


def _lift(kraus: ComplexArray, left: int, right: int) -> ComplexArray:
    return np.kron(np.kron(np.eye(left), kraus), np.eye(right))


def apply_channel(chan: KrausChannel, rho: DensityMatrix, on_factor: int) -> DensityMatrix:
    """Apply ``chan`` to one tensor factor of ``rho``."""

    dims = rho.dims
    if not 0 <= on_factor < len(dims):
        raise DimensionMismatchError(message=f"Factor {on_factor} out of range for dims {dims}.")
    if dims[on_factor] != chan.dim_in:
        raise DimensionMismatchError(
            message=f"Channel input dimension {chan.dim_in} does not match factor {on_factor} of dims {dims}."
        )
    left, right = math.prod(dims[:on_factor]), math.prod(dims[on_factor + 1 :])
    output = sum(
        lifted @ rho.matrix @ lifted.conj().T for lifted in (_lift(k, left, right) for k in chan.kraus)
    )
    new_dims = dims[:on_factor] + (chan.dim_out,) + dims[on_factor + 1 :]
    return DensityMatrix.from_matrix(output, new_dims)


def _probe_vector(phi: ProbeState) -> ComplexArray:
    if isinstance(phi, Ket):
        return phi.amplitudes
    return np.asarray(phi, dtype=np.complex128).reshape(-1)


def _check_square_channel(chan: KrausChannel, dim: int) -> None:
    if chan.dim_in != dim or chan.dim_out != dim:
        raise DimensionMismatchError(
            message=f"Channel maps dimension {chan.dim_in} to {chan.dim_out}; expected {dim} to {dim}."
        )


def state_fidelity_through(chan: KrausChannel, phi: ProbeState) -> float:
    """<phi| T(|phi><phi|) |phi> = sum_k |<phi|K_k|phi>|^2."""

    vector = _probe_vector(phi)
    _check_square_channel(chan, vector.size)
    value = sum(abs(np.vdot(vector, k @ vector)) ** 2 for k in chan.kraus)
    return float(np.clip(value, 0.0, 1.0))


def _split_dims(psi: Ket, cut: int) -> Tuple[int, int]:
    if not 0 < cut < psi.n_parties:
        raise DimensionMismatchError(message=f"Cut {cut} does not split dims {psi.dims}.")
    return math.prod(psi.dims[:cut]), math.prod(psi.dims[cut:])


def entanglement_fidelity(chan: KrausChannel, psi: Ket, cut: int = 1) -> float:
    """tr psi (id x T)(psi) with T acting on every factor after ``cut``."""

    dim_a, dim_b = _split_dims(psi, cut)
    _check_square_channel(chan, dim_b)
    value = sum(abs(np.vdot(psi.amplitudes, _lift(k, dim_a, 1) @ psi.amplitudes)) ** 2 for k in chan.kraus)
    return float(np.clip(value, 0.0, 1.0))


def channel_output(chan: KrausChannel, psi: Ket, cut: int = 1) -> DensityMatrix:
    """(id x T)(|psi><psi|) with T on the combined factors after ``cut``."""

    dim_a, dim_b = _split_dims(psi, cut)
    _check_square_channel(chan, dim_b)
    state = np.outer(psi.amplitudes, psi.amplitudes.conj())
    output = sum(lifted @ state @ lifted.conj().T for lifted in (_lift(k, dim_a, 1) for k in chan.kraus))
    return DensityMatrix.from_matrix(output, psi.dims)


def _probe_fidelities(chan: KrausChannel, stab: BipartiteStabilizer) -> Tuple[np.ndarray, np.ndarray]:
    schmidt = stab.schmidt
    _check_square_channel(chan, schmidt.dim_b)
    schmidt_probes = np.array([state_fidelity_through(chan, schmidt.basis_b[:, j]) for j in range(schmidt.d)])
    bobs = psi_alpha_vectors(schmidt, stab.conj)
    conj_probes = np.array([state_fidelity_through(chan, bobs[:, alpha]) for alpha in range(schmidt.d)])
    return schmidt_probes, conj_probes


def corollary_trace_terms(chan: KrausChannel, stab: BipartiteStabilizer) -> Tuple[float, float]:
    """The two ensemble terms: Schmidt-weighted and uniform over the conjugate states."""

    schmidt_probes, conj_probes = _probe_fidelities(chan, stab)
    return float(stab.schmidt.coefficients @ schmidt_probes), float(conj_probes.mean())


def corollary_bound_exact(chan: KrausChannel, stab: BipartiteStabilizer) -> ChannelBoundReport:
    term_schmidt, term_conj = corollary_trace_terms(chan, stab)
    bound = term_schmidt + term_conj - 1.0
    cut = len(stab.schmidt.dims_a)
    ent_fidelity = entanglement_fidelity(chan, stab.target, cut)
    rho = channel_output(chan, stab.target, cut)
    if bound > ent_fidelity + TOL_STAB:
        raise BoundViolationError(
            message=f"Ensemble bound {bound!r} exceeds the entanglement fidelity {ent_fidelity!r}."
        )
    report = ChannelBoundReport(
        ent_fidelity_sq=ent_fidelity,
        ensemble_term_schmidt=term_schmidt,
        ensemble_term_conj=term_conj,
        bound=bound,
        trace_rho_p=pass_probability(rho, stab.P),
        trace_rho_q=pass_probability(rho, stab.Q),
    )
    logger.debug("channel_bound_exact", bound=bound, ent_fidelity_sq=ent_fidelity)
    return report


def corollary_bound_sampled(
    chan: KrausChannel,
    stab: BipartiteStabilizer,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
) -> ChannelBoundReport:
    """Estimate both ensemble terms from n Bernoulli probe trials each.

    n = ceil(ln(4/delta) / (2 epsilon^2)) does not depend on the dimension;
    the adjusted bound holds with probability at least 1 - delta.
    """

    n = hoeffding_sample_size(epsilon, delta, 2)
    schmidt_probes, conj_probes = _probe_fidelities(chan, stab)
    d = stab.schmidt.d
    schmidt_stream, conj_stream = rng.spawn(2)

    drawn = schmidt_stream.choice(d, size=n, p=stab.schmidt.coefficients)
    mean_schmidt = float(np.mean(schmidt_stream.random(n) < schmidt_probes[drawn]))
    drawn = conj_stream.integers(d, size=n)
    mean_conj = float(np.mean(conj_stream.random(n) < conj_probes[drawn]))

    sampled = SampledChannelEstimate(
        samples_per_term=n,
        epsilon=epsilon,
        delta=delta,
        mean_schmidt=mean_schmidt,
        mean_conj=mean_conj,
        adjusted_bound=mean_schmidt + mean_conj - 2.0 * epsilon - 1.0,
    )
    logger.info("channel_bound_sampled", samples_per_term=n, adjusted_bound=sampled.adjusted_bound)
    return corollary_bound_exact(chan, stab).model_copy(update={"sampled": sampled})


def _weyl_shift(d: int) -> ComplexArray:
    return np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)


def _weyl_clock(d: int) -> ComplexArray:
    return np.diag(np.exp(2j * np.pi * np.arange(d) / d))


def builtin_noise(name: str, d: int, p: float) -> KrausChannel:
    """Standard noise models on a d-level system; Kraus operators of zero weight are dropped."""

    if not 0.0 <= p <= 1.0:
        raise InvalidParametersError(message=f"Noise strength must lie in [0, 1], got {p}.")
    if d < 2:
        raise UnsupportedDimensionError(message=f"Noise models need d >= 2, got {d}.")
    identity = np.eye(d, dtype=np.complex128)
    weighted: List[Tuple[float, ComplexArray]]
    if name == "identity":
        weighted = [(1.0, identity)]
    elif name == "depolarizing":
        shift, clock = _weyl_shift(d), _weyl_clock(d)
        weighted = [(1.0 - p + p / d**2, identity)]
        weighted += [
            (p / d**2, np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b))
            for a in range(d)
            for b in range(d)
            if (a, b) != (0, 0)
        ]
    elif name == "dephasing":
        clock = _weyl_clock(d)
        weighted = [(1.0 - p + p / d, identity)]
        weighted += [(p / d, np.linalg.matrix_power(clock, k)) for k in range(1, d)]
    elif name == "bit-flip":
        weighted = [(1.0 - p, identity), (p, _weyl_shift(d))]
    elif name == "amplitude-damping":
        if d != 2:
            raise UnsupportedDimensionError(message=f"Amplitude damping is defined for d = 2 only, got {d}.")
        decay = np.array([[0.0, math.sqrt(p)], [0.0, 0.0]], dtype=np.complex128)
        keep = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - p)]], dtype=np.complex128)
        return KrausChannel(tuple(k for k in (keep, decay) if np.any(k)))
    else:
        raise InvalidParametersError(message=f"Unknown noise model '{name}'; expected one of {BUILTIN_NOISE}.")
    return KrausChannel(tuple(math.sqrt(weight) * k for weight, k in weighted if weight > 0.0))


def random_kraus_channel(d: int, n_kraus: int, rng: np.random.Generator) -> KrausChannel:
    """Channel from a random isometry C^d -> C^(n_kraus d), cut into n_kraus blocks."""

    if d < 1 or n_kraus < 1:
        raise InvalidParametersError(message=f"Need d >= 1 and n_kraus >= 1, got d={d}, n_kraus={n_kraus}.")
    gaussian = rng.standard_normal((n_kraus * d, d)) + 1j * rng.standard_normal((n_kraus * d, d))
    isometry, _ = scipy.linalg.qr(gaussian, mode="economic")
    return KrausChannel(tuple(isometry[k * d : (k + 1) * d, :] for k in range(n_kraus)))
