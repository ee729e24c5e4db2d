import math

import numpy as np
import pytest
import scipy.stats

from app.services.certify import (
    OTHER,
    cascade_distribution,
    certify,
    exact_pass_probabilities,
    fidelity_lower_bound,
    hoeffding_failure_probability,
    hoeffding_sample_size,
    p_test_distribution,
    pass_probability,
    protocol_distributions,
    q_test_distribution,
    simulate_cascade_test,
    simulate_P_test,
    simulate_Q_test,
)
from app.services.errors import DimensionMismatchError, InvalidParametersError
from app.services.linalg import DensityMatrix, Ket
from app.services.multipartite import build_family
from app.services.stabilizer import build_stabilizer
from app.services.states import bell, ghz, random_density_matrix, random_state, white_noise_mixture


@pytest.fixture
def bell_pair():
    return build_stabilizer(bell())


def test_pass_probability_on_bell(bell_pair):
    assert pass_probability(DensityMatrix.from_ket(bell()), bell_pair.P) == pytest.approx(1.0)
    assert pass_probability(DensityMatrix.maximally_mixed((2, 2)), bell_pair.P) == pytest.approx(0.5)
    assert pass_probability(white_noise_mixture(bell(), 0.2), bell_pair.Q) == pytest.approx(0.9)


def test_pass_probability_checks_dims(bell_pair):
    with pytest.raises(DimensionMismatchError):
        pass_probability(DensityMatrix.maximally_mixed((2, 3)), bell_pair.P)


def test_noisy_bell_bound(bell_pair):
    rho = white_noise_mixture(bell(), 0.2)
    assert fidelity_lower_bound(rho, bell_pair) == pytest.approx(0.8, abs=1e-12)
    assert rho.fidelity_sq(bell()) == pytest.approx(0.85, abs=1e-12)


def test_bound_goes_negative_for_orthogonal_product(bell_pair):
    rho = DensityMatrix.from_ket(Ket.basis(1, (2, 2)))
    assert fidelity_lower_bound(rho, bell_pair) == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("dims", [(2, 2), (3, 3), (2, 3), (3, 2)])
def test_bound_never_exceeds_fidelity(dims, rng):
    for _ in range(250):
        psi = random_state(dims, rng)
        rho = random_density_matrix(dims, rng, rank=rng.integers(1, 4))
        assert fidelity_lower_bound(rho, build_stabilizer(psi)) <= rho.fidelity_sq(psi) + 1e-9


@pytest.mark.parametrize("dims", [(2, 2), (3, 3), (2, 3), (3, 2), (2, 4)])
def test_distributions_match_exact_probabilities(dims, rng):
    for _ in range(10):
        stab = build_stabilizer(random_state(dims, rng))
        rho = random_density_matrix(dims, rng)
        exact = exact_pass_probabilities(rho, stab)
        assert p_test_distribution(rho, stab).acceptance_probability == pytest.approx(exact["P"], abs=1e-9)
        assert q_test_distribution(rho, stab).acceptance_probability == pytest.approx(exact["Q"], abs=1e-9)


@pytest.mark.parametrize("dims", [(2, 2, 2), (2, 3, 2), (3, 2, 2)])
def test_cascade_matches_leaf_projectors(dims, rng):
    for _ in range(17):
        fam = build_family(random_state(dims, rng))
        rho = random_density_matrix(dims, rng)
        exact = exact_pass_probabilities(rho, fam)
        for word, dist in protocol_distributions(rho, fam).items():
            assert dist.acceptance_probability == pytest.approx(exact[word], abs=1e-9)


def test_cascade_respects_party_order(rng):
    psi = random_state((2, 3, 2), rng)
    fam = build_family(psi, order=[1, 2, 0])
    rho = random_density_matrix((2, 3, 2), rng)
    exact = exact_pass_probabilities(rho, fam)
    for word, _ in fam.leaves():
        assert cascade_distribution(rho, fam, word).acceptance_probability == pytest.approx(exact[str(word)], abs=1e-9)


def test_cascade_lumps_completing_outcomes():
    fam = build_family(ghz(3))
    dist = cascade_distribution(DensityMatrix.maximally_mixed((2, 2, 2)), fam, "00")
    assert math.isclose(float(dist.probabilities.sum()), 1.0)
    assert all(not ok for label, ok in zip(dist.labels, dist.accepted) if OTHER in label)


def test_perfect_state_always_passes(bell_pair, rng):
    rho = DensityMatrix.from_ket(bell())
    for _ in range(50):
        p_outcome = simulate_P_test(rho, bell_pair, rng)
        assert p_outcome.accepted
        assert p_outcome.alice_outcome == p_outcome.bob_outcome
        assert simulate_Q_test(rho, bell_pair, rng).accepted


def test_orthogonal_product_never_passes_p(bell_pair, rng):
    rho = DensityMatrix.from_ket(Ket.basis(1, (2, 2)))
    assert not any(simulate_P_test(rho, bell_pair, rng).accepted for _ in range(50))


def test_family_target_passes_cascade(rng):
    fam = build_family(ghz(3))
    rho = DensityMatrix.from_ket(ghz(3))
    for word, _ in fam.leaves():
        assert simulate_cascade_test(rho, fam, word, rng).accepted


def test_rescaled_q_test():
    bell_rho = DensityMatrix.from_ket(bell())
    assert q_test_distribution(bell_rho, build_stabilizer(bell()), rescaled=True).acceptance_probability == pytest.approx(1.0)
    product = Ket.basis(0, (2, 2))
    dist = q_test_distribution(DensityMatrix.from_ket(product), build_stabilizer(product), rescaled=True)
    assert dist.test == "Q-rescaled"
    assert dist.acceptance_probability == pytest.approx(0.5)


def test_sampling_is_deterministic_per_seed(bell_pair):
    rho = white_noise_mixture(bell(), 0.3)
    first = p_test_distribution(rho, bell_pair).sample(np.random.default_rng(5), shots=40)
    second = p_test_distribution(rho, bell_pair).sample(np.random.default_rng(5), shots=40)
    assert first == second


def test_empirical_rate_matches_exact(bell_pair, rng):
    dist = p_test_distribution(DensityMatrix.maximally_mixed((2, 2)), bell_pair)
    accepts = dist.count_accepts(rng, 10_000)
    assert scipy.stats.binomtest(accepts, 10_000, 0.5).pvalue > 1e-4


def test_q_test_on_maximally_mixed_state(bell_pair, rng):
    rho = DensityMatrix.maximally_mixed((2, 2))
    accepts = sum(simulate_Q_test(rho, bell_pair, rng).accepted for _ in range(10_000))
    assert abs(accepts / 10_000 - 0.5) <= 3 * math.sqrt(0.25 / 10_000)


def test_pass_rates_converge_to_exact_probabilities(rng):
    psi = random_state((3, 3), rng)
    stab = build_stabilizer(psi)
    rho = white_noise_mixture(psi, 0.3)
    distributions = [p_test_distribution(rho, stab), q_test_distribution(rho, stab)]
    runs = rng.spawn(100)
    within = 0
    for stream in runs:
        within += all(
            abs(dist.count_accepts(stream, 100_000) / 100_000 - dist.acceptance_probability) <= 0.01
            for dist in distributions
        )
    assert within >= 99


def test_hoeffding_sample_size():
    assert hoeffding_sample_size(0.05, 0.01, 2) == 1199
    assert hoeffding_sample_size(0.05, 0.01) == math.ceil(math.log(200) / 0.005)
    assert hoeffding_failure_probability(1199, 0.05) <= 0.005


@pytest.mark.parametrize(("epsilon", "delta"), [(0.0, 0.01), (1.0, 0.01), (0.05, 0.0), (0.05, 1.0)])
def test_hoeffding_rejects_bad_accuracy(epsilon, delta):
    with pytest.raises(InvalidParametersError):
        hoeffding_sample_size(epsilon, delta)


def test_certify_perfect_pair(bell_pair, rng):
    report = certify(DensityMatrix.from_ket(bell()), bell_pair, 0.05, 0.01, rng)
    assert report.samples_per_test == 1199
    assert report.n_tests == 2
    assert report.pass_rates == {"P": 1.0, "Q": 1.0}
    assert report.fidelity_lower_bound == pytest.approx(1.0)
    assert report.confidence_adjusted_bound == pytest.approx(0.9)
    assert report.rescaled_q_acceptance is None


def test_certify_noisy_pair(bell_pair, rng):
    rho = white_noise_mixture(bell(), 0.2)
    report = certify(rho, bell_pair, 0.05, 0.01, rng, rescaled=True)
    assert report.exact_bound == pytest.approx(0.8)
    assert report.exact_fidelity_sq == pytest.approx(0.85)
    assert abs(report.fidelity_lower_bound - 0.8) < 0.1
    assert report.confidence_adjusted_bound < 0.85
    assert report.rescaled_q_acceptance is not None


def test_certify_sample_override_keeps_guarantee(bell_pair, rng):
    report = certify(DensityMatrix.from_ket(bell()), bell_pair, 0.05, 0.01, rng, samples=400)
    assert report.samples_per_test == 400
    assert report.samples_per_test >= hoeffding_sample_size(report.epsilon, 0.01, 2)
    with pytest.raises(InvalidParametersError):
        certify(DensityMatrix.from_ket(bell()), bell_pair, 0.05, 0.01, rng, samples=0)


def test_certify_family(rng):
    fam = build_family(ghz(3))
    report = certify(DensityMatrix.from_ket(ghz(3)), fam, 0.05, 0.01, rng)
    assert report.n_tests == 4
    assert set(report.pass_rates) == {"00", "01", "10", "11"}
    assert report.samples_per_test == hoeffding_sample_size(0.05, 0.01, 4)
    assert report.confidence_adjusted_bound == pytest.approx(0.8)


def test_certify_family_rejects_rescaled_effects(rng):
    fam = build_family(ghz(3))
    with pytest.raises(InvalidParametersError):
        certify(DensityMatrix.from_ket(ghz(3)), fam, 0.05, 0.01, rng, rescaled=True)


def test_certify_is_reproducible(bell_pair):
    rho = white_noise_mixture(bell(), 0.2)
    first = certify(rho, bell_pair, 0.05, 0.01, np.random.default_rng(9))
    second = certify(rho, bell_pair, 0.05, 0.01, np.random.default_rng(9))
    assert first == second


@pytest.mark.slow
def test_certificate_coverage(bell_pair):
    rho = white_noise_mixture(bell(), 0.2)
    fidelity = rho.fidelity_sq(bell())
    rng = np.random.default_rng(2024)
    misses = sum(
        certify(rho, bell_pair, 0.05, 0.01, stream).confidence_adjusted_bound > fidelity
        for stream in rng.spawn(200)
    )
    assert misses / 200 <= 0.02
