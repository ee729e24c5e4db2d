"""Named target states and random fixtures."""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from app.schemas.experiment import TargetSpec
from app.services.errors import InvalidParametersError
from app.services.linalg import DensityMatrix, Ket


def bell() -> Ket:
    """|phi+> = (|00> + |11>) / sqrt(2)."""

    return Ket(np.array([1.0, 0.0, 0.0, 1.0]) / math.sqrt(2.0), (2, 2))


def ghz(n: int = 3, d: int = 2) -> Ket:
    if n < 2 or d < 2:
        raise InvalidParametersError(message=f"ghz needs n >= 2 and d >= 2, got n={n}, d={d}.")
    dims = (d,) * n
    amplitudes = np.zeros(d**n, dtype=np.complex128)
    for k in range(d):
        amplitudes[np.ravel_multi_index((k,) * n, dims)] = 1.0
    return Ket.normalized(amplitudes, dims)


def w(n: int = 3) -> Ket:
    if n < 2:
        raise InvalidParametersError(message=f"w needs n >= 2, got {n}.")
    amplitudes = np.zeros(2**n, dtype=np.complex128)
    for party in range(n):
        amplitudes[1 << (n - 1 - party)] = 1.0
    return Ket.normalized(amplitudes, (2,) * n)


def maximally_entangled(d: int = 2) -> Ket:
    return ghz(2, d)


def random_state(dims: Sequence[int], rng: np.random.Generator) -> Ket:
    """Haar-random pure state from a normalised complex Gaussian vector."""

    size = math.prod(dims)
    vector = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    return Ket.normalized(vector, tuple(dims))


def random_density_matrix(dims: Sequence[int], rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    """Ginibre-distributed mixed state of the given rank (full rank by default)."""

    size = math.prod(dims)
    rank = rank or size
    ginibre = rng.standard_normal((size, rank)) + 1j * rng.standard_normal((size, rank))
    matrix = ginibre @ ginibre.conj().T
    return DensityMatrix.from_matrix(matrix / np.trace(matrix).real, tuple(dims))


def white_noise_mixture(psi: Ket, q: float) -> DensityMatrix:
    """(1 - q) |psi><psi| + q 1/D."""

    if not 0.0 <= q <= 1.0:
        raise InvalidParametersError(message=f"Noise weight must lie in [0, 1], got {q}.")
    return DensityMatrix.from_ket(psi).mix(DensityMatrix.maximally_mixed(psi.dims), q)


def state_from_target(target: TargetSpec, dims: Sequence[int], seed: Optional[int] = None) -> Ket:
    """Materialise a config target; ``seed`` is used by the random generator when the target has none."""

    dims = tuple(dims)
    if target.amplitudes is not None:
        return Ket.normalized([complex(re, im) for re, im in target.amplitudes], dims)
    if target.generator == "bell":
        return bell()
    if target.generator == "ghz":
        return ghz(len(dims), dims[0])
    if target.generator == "w":
        return w(len(dims))
    if target.generator == "maximally-entangled":
        return maximally_entangled(dims[0])
    stream_seed = target.seed if target.seed is not None else seed
    if stream_seed is None:
        raise InvalidParametersError(message="The random generator needs a seed.")
    return random_state(dims, np.random.default_rng(stream_seed))
