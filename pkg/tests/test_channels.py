import numpy as np
import pytest

from app.services.certify import hoeffding_sample_size
from app.services.channels import (
    KrausChannel,
    apply_channel,
    builtin_noise,
    channel_output,
    corollary_bound_exact,
    corollary_bound_sampled,
    corollary_trace_terms,
    entanglement_fidelity,
    random_kraus_channel,
    state_fidelity_through,
)
from app.services.errors import (
    DimensionMismatchError,
    InvalidParametersError,
    NotCPTPError,
    UnsupportedDimensionError,
)
from app.services.linalg import DensityMatrix, Ket
from app.services.stabilizer import build_stabilizer
from app.services.states import bell, maximally_entangled, random_density_matrix, random_state, white_noise_mixture

PAULI_Z = np.diag([1.0, -1.0])


def test_kraus_channel_requires_trace_preservation():
    with pytest.raises(NotCPTPError):
        KrausChannel.from_arrays([0.5 * np.eye(2)])
    with pytest.raises(NotCPTPError):
        KrausChannel(())
    with pytest.raises(DimensionMismatchError):
        KrausChannel.from_arrays([np.eye(2), np.eye(3)])


def test_identity_channel_leaves_state_alone(rng):
    rho = random_density_matrix((2, 3), rng)
    np.testing.assert_allclose(apply_channel(KrausChannel.identity(3), rho, 1).matrix, rho.matrix, atol=1e-12)


def test_full_depolarizing_on_bell_gives_maximally_mixed():
    output = apply_channel(builtin_noise("depolarizing", 2, 1.0), DensityMatrix.from_ket(bell()), 1)
    np.testing.assert_allclose(output.matrix, np.eye(4) / 4, atol=1e-12)


def test_local_depolarizing_matches_white_noise():
    output = apply_channel(builtin_noise("depolarizing", 2, 0.2), DensityMatrix.from_ket(bell()), 1)
    np.testing.assert_allclose(output.matrix, white_noise_mixture(bell(), 0.2).matrix, atol=1e-12)


def test_dephasing_on_bell():
    p = 0.3
    psi = DensityMatrix.from_ket(bell()).matrix
    flipped = np.kron(PAULI_Z, np.eye(2))
    expected = (1 - p / 2) * psi + (p / 2) * flipped @ psi @ flipped
    output = apply_channel(builtin_noise("dephasing", 2, p), DensityMatrix.from_ket(bell()), 1)
    np.testing.assert_allclose(output.matrix, expected, atol=1e-12)


def test_apply_channel_checks_factor():
    rho = DensityMatrix.from_ket(bell())
    with pytest.raises(DimensionMismatchError):
        apply_channel(KrausChannel.identity(2), rho, 2)
    with pytest.raises(DimensionMismatchError):
        apply_channel(KrausChannel.identity(3), rho, 0)


def test_state_fidelity_through_depolarizing(rng):
    phi = random_state((2,), rng)
    assert state_fidelity_through(builtin_noise("depolarizing", 2, 0.3), phi) == pytest.approx(0.85)
    assert state_fidelity_through(builtin_noise("bit-flip", 2, 1.0), [1.0, 0.0]) == pytest.approx(0.0)


@pytest.mark.parametrize("d", [2, 3])
def test_entanglement_fidelity_of_depolarizing(d):
    p = 0.2
    value = entanglement_fidelity(builtin_noise("depolarizing", d, p), maximally_entangled(d))
    assert value == pytest.approx(1 - p + p / d**2)


def test_bell_depolarizing_bound():
    report = corollary_bound_exact(builtin_noise("depolarizing", 2, 0.1), build_stabilizer(bell()))
    assert report.ensemble_term_schmidt == pytest.approx(0.95, abs=1e-12)
    assert report.ensemble_term_conj == pytest.approx(0.95, abs=1e-12)
    assert report.bound == pytest.approx(0.9, abs=1e-12)
    assert report.ent_fidelity_sq == pytest.approx(0.925, abs=1e-12)
    assert report.trace_rho_p == pytest.approx(0.95, abs=1e-12)


def test_identity_channel_bound_is_one():
    report = corollary_bound_exact(KrausChannel.identity(3), build_stabilizer(maximally_entangled(3)))
    assert report.bound == pytest.approx(1.0)
    assert report.ent_fidelity_sq == pytest.approx(1.0)


def test_random_channels_respect_bound(rng):
    for _ in range(500):
        d = int(rng.integers(2, 5))
        chan = random_kraus_channel(d, int(rng.integers(1, 5)), rng)
        report = corollary_bound_exact(chan, build_stabilizer(random_state((d, d), rng)))
        assert report.bound <= report.ent_fidelity_sq + 1e-9


def test_trace_terms_match_probe_ensembles(rng):
    for _ in range(200):
        d = int(rng.integers(2, 5))
        chan = random_kraus_channel(d, int(rng.integers(1, 5)), rng)
        stab = build_stabilizer(random_state((d, d), rng))
        report = corollary_bound_exact(chan, stab)
        term_schmidt, term_conj = corollary_trace_terms(chan, stab)
        assert report.trace_rho_p == pytest.approx(term_schmidt, abs=1e-9)
        assert report.trace_rho_q == pytest.approx(term_conj, abs=1e-9)


def test_channel_output_is_a_state(rng):
    output = channel_output(random_kraus_channel(3, 2, rng), random_state((2, 3), rng))
    assert output.dims == (2, 3)
    assert np.trace(output.matrix).real == pytest.approx(1.0)


def test_dual_map_is_adjoint(rng):
    chan = random_kraus_channel(3, 3, rng)
    rho = random_density_matrix((3,), rng).matrix
    observable = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    observable = observable + observable.conj().T
    lhs = np.trace(chan.apply(rho) @ observable)
    rhs = np.trace(rho @ chan.apply_dual(observable))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_sampled_bound_for_identity(rng):
    report = corollary_bound_sampled(KrausChannel.identity(2), build_stabilizer(bell()), 0.05, 0.01, rng)
    assert report.sampled is not None
    assert report.sampled.samples_per_term == hoeffding_sample_size(0.05, 0.01, 2) == 1199
    assert report.sampled.mean_schmidt == 1.0
    assert report.sampled.mean_conj == 1.0
    assert report.sampled.adjusted_bound == pytest.approx(0.9)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_channel_sample_size_is_dimension_free(d, rng):
    report = corollary_bound_sampled(KrausChannel.identity(d), build_stabilizer(maximally_entangled(d)), 0.05, 0.01, rng)
    assert report.sampled.samples_per_term == 1199
    assert report.sampled.adjusted_bound == pytest.approx(0.9)


def test_sampled_bound_is_reproducible():
    chan = builtin_noise("depolarizing", 2, 0.1)
    stab = build_stabilizer(bell())
    first = corollary_bound_sampled(chan, stab, 0.05, 0.01, np.random.default_rng(3))
    second = corollary_bound_sampled(chan, stab, 0.05, 0.01, np.random.default_rng(3))
    assert first == second


def test_builtin_noise_models():
    assert len(builtin_noise("depolarizing", 2, 0.0).kraus) == 1
    plus = np.full((2, 2), 0.5)
    np.testing.assert_allclose(builtin_noise("dephasing", 2, 1.0).apply(plus), np.eye(2) / 2, atol=1e-12)
    np.testing.assert_allclose(builtin_noise("amplitude-damping", 2, 1.0).apply(np.diag([0.0, 1.0])), np.diag([1.0, 0.0]))
    excited = Ket.basis(1, (3,))
    assert state_fidelity_through(builtin_noise("bit-flip", 3, 0.25), excited) == pytest.approx(0.75)


def test_builtin_noise_errors():
    with pytest.raises(UnsupportedDimensionError):
        builtin_noise("amplitude-damping", 3, 0.1)
    with pytest.raises(UnsupportedDimensionError):
        builtin_noise("depolarizing", 1, 0.1)
    with pytest.raises(InvalidParametersError):
        builtin_noise("erasure", 2, 0.1)
    with pytest.raises(InvalidParametersError):
        builtin_noise("depolarizing", 2, 1.5)


@pytest.mark.slow
def test_sampled_bound_coverage():
    chan = builtin_noise("depolarizing", 2, 0.1)
    stab = build_stabilizer(bell())
    rng = np.random.default_rng(77)
    misses = sum(
        corollary_bound_sampled(chan, stab, 0.05, 0.01, stream).sampled.adjusted_bound > 0.925
        for stream in rng.spawn(200)
    )
    assert misses / 200 <= 0.02
