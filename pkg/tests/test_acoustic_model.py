import numpy as np
import pytest
from scipy.stats import norm

from seglex import errors
from seglex.acoustic_model import GmmHyper, GmmState
from seglex.corpus import SegmentSpan
from seglex.embed import EmbeddingCache


def unit_hyper(components=1, a=1.0):
    return GmmHyper(components, a, [0.0], 1.0, 1.0)


def random_state(rng, components=3, dim=4, items=12, sigma_sq=0.3):
    state = GmmState(GmmHyper(components, 1.5, rng.normal(size=dim), 0.8, sigma_sq))
    for _ in range(items):
        state.add(int(rng.integers(components)), rng.normal(size=dim))

    return state


def test_hyper_from_kappa():
    hyper = GmmHyper.from_kappa(10, 3, sigma_sq=0.005, kappa0=0.05)

    assert hyper.sigma0_sq == pytest.approx(0.1)
    assert hyper.dim == 3
    np.testing.assert_array_equal(hyper.mu0, np.zeros(3))


def test_hyper_rejects_bad_values():
    with pytest.raises(errors.ConfigError):
        GmmHyper(0, 1.0, [0.0], 1.0, 1.0)

    with pytest.raises(errors.ConfigError):
        GmmHyper(2, 1.0, [0.0], 1.0, 0.0)


def test_add_updates_statistics():
    state = GmmState(GmmHyper(2, 1.0, [0.0, 0.0], 1.0, 1.0))
    x = np.array([0.25, -1.5])

    state.add(1, x)
    assert state.counts.tolist() == [0, 1]
    np.testing.assert_array_equal(state.sums[1], x)

    state.add(1, x)
    np.testing.assert_array_equal(state.sums[1], 2 * x)
    assert len(state) == 2


def test_add_then_remove_restores_state():
    state = GmmState(GmmHyper(2, 1.0, [0.0, 0.0], 1.0, 1.0))
    state.add(0, [0.5, 0.25])
    counts, sums = state.counts.copy(), state.sums.copy()

    key = state.add(0, [0.125, -0.75])
    state.remove(0, [0.125, -0.75], key)

    np.testing.assert_array_equal(state.counts, counts)
    np.testing.assert_array_equal(state.sums, sums)


def test_remove_from_empty_component():
    state = GmmState(unit_hyper(components=2))

    with pytest.raises(errors.AcousticModelError):
        state.remove(1, [0.0])


def test_duplicate_key():
    state = GmmState(unit_hyper())
    state.add(0, [1.0], "a")

    with pytest.raises(errors.AcousticModelError):
        state.add(0, [2.0], "a")


def test_integrity_after_many_mutations(rng):
    state = GmmState(GmmHyper(4, 1.0, np.zeros(3), 1.0, 0.1))
    keys = []

    for _ in range(3000):
        if keys and rng.random() < 0.45:
            state.remove_item(keys.pop(int(rng.integers(len(keys)))))
        else:
            keys.append(state.add(int(rng.integers(4)), rng.normal(size=3)))

    state.check_integrity()
    assert len(state) == len(keys)
    assert state.recompute() < 1e-9


def test_prior_of_empty_model_is_uniform():
    state = GmmState(unit_hyper(components=4))

    np.testing.assert_allclose(state.log_prior_all(), np.log(0.25))


def test_prior_with_exclusion():
    state = GmmState(unit_hyper(components=2))
    state.add(0, [1.0], "i")
    state.add(0, [2.0])
    state.add(1, [3.0])

    assert state.log_prior_z(0, exclude="i") == pytest.approx(np.log(0.5))
    assert state.log_prior_z(1, exclude="i") == pytest.approx(np.log(0.5))


def test_prior_normalizes(rng):
    state = random_state(rng)
    key = next(iter(state.assignments))

    assert np.exp(state.log_prior_all()).sum() == pytest.approx(1.0)
    assert np.exp(state.log_prior_all(exclude=key)).sum() == pytest.approx(1.0)


def test_predictive_of_empty_component():
    state = GmmState(unit_hyper())

    assert state.log_post_predictive(0, [0.0]) == pytest.approx(-0.5 * np.log(4 * np.pi))


def test_predictive_after_one_observation():
    state = GmmState(unit_hyper())
    state.add(0, [1.0])

    mu_n, var_n = state.posterior_params()
    assert mu_n[0, 0] == pytest.approx(0.5)
    assert var_n[0] == pytest.approx(0.5)

    for x in (-1.0, 0.5, 2.0):
        assert state.log_post_predictive(0, [x]) == pytest.approx(norm.logpdf(x, 0.5, np.sqrt(1.5)))


def test_predictive_with_exclusion_matches_removal(rng):
    state = random_state(rng)
    key = next(iter(state.assignments))
    x = rng.normal(size=4)

    excluded = state.log_predictive_matrix(x, exclude=key)
    state.remove_item(key)

    np.testing.assert_allclose(excluded, state.log_predictive_matrix(x), atol=1e-12)


def test_marginal_with_single_component():
    state = GmmState(GmmHyper(1, 1.0, np.zeros(2), 1.0, 0.5))
    state.add(0, [0.3, 0.1])
    x = np.array([0.2, -0.4])

    assert state.log_marginal(x) == pytest.approx(state.log_post_predictive(0, x))


def test_marginal_of_symmetric_empty_model():
    state = GmmState(unit_hyper(components=2))

    assert state.log_marginal([0.7]) == pytest.approx(state.log_post_predictive(0, [0.7]))


def test_marginal_matches_direct_sum(rng):
    state = random_state(rng)
    hyper = state.hyper
    x = rng.normal(size=4)

    total = 0.0
    for k in range(hyper.components):
        members = [v for _, v in state.members(k)]
        n = len(members)
        total_k = np.sum(members, axis=0) if n else np.zeros(4)
        var_n = 1.0 / (1.0 / hyper.sigma0_sq + n / hyper.sigma_sq)
        mu_n = var_n * (hyper.mu0 / hyper.sigma0_sq + total_k / hyper.sigma_sq)
        weight = (n + hyper.a / hyper.components) / (len(state) + hyper.a)
        total += weight * np.prod(norm.pdf(x, mu_n, np.sqrt(var_n + hyper.sigma_sq)))

    assert state.log_marginal(x) == pytest.approx(np.log(total), abs=1e-10)
    assert state.log_marginal_batch(x[None, :])[0] == pytest.approx(np.log(total), abs=1e-10)


def test_log_joint_of_one_item():
    state = GmmState(unit_hyper(components=2))
    state.add(1, [1.0])

    assert state.log_joint() == pytest.approx(np.log(0.5) + norm.logpdf(1.0, 0.0, np.sqrt(2.0)))


def test_log_joint_follows_chain_rule(rng):
    state = GmmState(GmmHyper(3, 2.0, rng.normal(size=2), 0.5, 0.2))
    expected = 0.0

    for _ in range(15):
        x = rng.normal(size=2)
        k = int(rng.integers(3))
        expected += state.log_prior_all()[k] + state.log_predictive_matrix(x)[0, k]
        state.add(k, x)

    assert state.log_joint() == pytest.approx(expected, abs=1e-9)


def test_sampling_symmetric_model_is_uniform(rng):
    state = GmmState(GmmHyper(3, 1.0, np.zeros(2), 1.0, 1.0))
    draws = 20000

    counts = np.zeros(3)
    for _ in range(draws):
        counts[state.sample_assignment(np.array([0.3, -0.2]), rng, key="x")] += 1
        state.remove_item("x")

    assert np.all(np.abs(counts / draws - 1 / 3) < 4 * np.sqrt((1 / 3) * (2 / 3) / draws))


def test_sampling_prefers_occupied_component(rng):
    state = GmmState(GmmHyper(3, 1.0, np.zeros(2), 1.0, 0.001))
    x = np.array([0.6, 0.8])
    for _ in range(100):
        state.add(0, x)

    chosen = 0
    for _ in range(1000):
        chosen += state.sample_assignment(x, rng, key="x") == 0
        state.remove_item("x")

    assert chosen > 990


def test_sampling_matches_exact_conditional(rng):
    state = random_state(rng, sigma_sq=1.0)
    x = rng.normal(size=4)
    draws = 20000

    log_weights = state.log_prior_all() + state.log_predictive_matrix(x)[0]
    exact = np.exp(log_weights - np.logaddexp.reduce(log_weights))

    counts = np.zeros(3)
    for _ in range(draws):
        counts[state.sample_assignment(x, rng, key="x")] += 1
        state.remove_item("x")

    assert np.all(np.abs(counts / draws - exact) < 4 * np.sqrt(exact * (1 - exact) / draws) + 1e-3)


def test_snapshot(tmp_path):
    cache = EmbeddingCache(2)
    cache.add_utterance("u", [0, 2, 0], [2, 4, 4], [[0.6, 0.8], [1.0, 0.0], [0.0, 1.0]])

    state = GmmState(GmmHyper(3, 1.0, np.zeros(2), 1.0, 0.5))
    state.add(2, cache[SegmentSpan("u", 0, 2)], SegmentSpan("u", 0, 2))
    state.add(0, cache[SegmentSpan("u", 2, 4)], SegmentSpan("u", 2, 4))

    path = str(tmp_path / "state.json")
    state.save(path)
    loaded = GmmState.load(path, cache)

    assert loaded.assignments == state.assignments
    np.testing.assert_array_equal(loaded.counts, state.counts)
    np.testing.assert_allclose(loaded.sums, state.sums)
    assert loaded.log_joint() == pytest.approx(state.log_joint())


def test_prior_normalizes_on_many_states(rng):
    for _ in range(100):
        state = random_state(rng, components=int(rng.integers(1, 8)), items=int(rng.integers(0, 30)))

        assert np.exp(state.log_prior_all()).sum() == pytest.approx(1.0, abs=1e-12)


def test_predictive_matches_monte_carlo_integration(rng):
    n_samples = 10 ** 6
    errors_in_se = []

    for _ in range(20):
        state = random_state(rng, items=int(rng.integers(0, 15)))
        hyper = state.hyper
        k = int(rng.integers(hyper.components))

        members = np.array([x for _, x in state.members(k)]).reshape(-1, hyper.dim)
        precision = 1.0 / hyper.sigma0_sq + len(members) / hyper.sigma_sq
        mean = (hyper.mu0 / hyper.sigma0_sq + members.sum(axis=0) / hyper.sigma_sq) / precision
        x = mean + rng.normal(scale=np.sqrt(hyper.sigma_sq), size=hyper.dim)

        expected = state.log_post_predictive(k, x)

        mu = mean + rng.normal(scale=np.sqrt(1.0 / precision), size=(n_samples, hyper.dim))
        log_density = (-0.5 * hyper.dim * np.log(2 * np.pi * hyper.sigma_sq)
                       - np.square(x - mu).sum(axis=1) / (2 * hyper.sigma_sq))
        ratio = np.exp(log_density - expected)

        errors_in_se.append(abs(ratio.mean() - 1.0) / (ratio.std() / np.sqrt(n_samples)))

    # one state in 20 may fall outside 3 standard errors by chance
    assert sum(e > 3 for e in errors_in_se) <= 1
    assert max(errors_in_se) < 5


@pytest.mark.slow
def test_collapsed_sampler_prefers_few_components():
    occupied = []

    for seed in range(20):
        rng = np.random.default_rng(seed)
        centres = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])
        points = centres[rng.integers(3, size=200)] + rng.normal(scale=0.5, size=(200, 2))

        state = GmmState(GmmHyper(20, 1.0, np.zeros(2), 4.0, 0.25))
        for i, x in enumerate(points):
            state.add(int(rng.integers(20)), x, i)

        for _ in range(40):
            for i in rng.permutation(len(points)):
                state.remove_item(int(i))
                state.sample_assignment(points[i], rng, key=int(i))

        occupied.append(int(np.sum(state.counts >= 5)))

    assert np.median(occupied) <= 6
