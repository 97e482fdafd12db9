import itertools

import numpy as np
import pytest
from scipy.stats import chisquare

from seglex import errors
from seglex.acoustic_model import GmmHyper, GmmState
from seglex.config import SamplerConfig, linear_anneal
from seglex.corpus import SegmentSpan, candidate_segments
from seglex.embed import EmbeddingCache
from seglex.segmenter import (
    Lattice, Sampler, Segmentation, backward_sample, forward_pass, initial_spans, load_decode, run_sampler,
    save_decode, segment_log_score, segment_log_scores,
)


def full_lattice(n_frames):
    """Every span of a T frame utterance, grid and minimum duration of one frame."""

    pairs = [(s, e) for s in range(n_frames) for e in range(s + 1, n_frames + 1)]

    return Lattice("u", n_frames, [s for s, _ in pairs], [e for _, e in pairs])


def compositions(n_frames):
    """All tilings of [0, T) as lists of (start, end)."""

    for cuts in itertools.product([False, True], repeat=n_frames - 1):
        bounds = [0] + [t + 1 for t, cut in enumerate(cuts) if cut] + [n_frames]
        yield list(zip(bounds[:-1], bounds[1:]))


def tiling_log_weight(lattice, scores, tiling):
    return sum(scores[lattice.index(s, e)] for s, e in tiling)


@pytest.fixture
def sampler_config():
    return SamplerConfig(burn_in=2, anneal_stages=[(2, 0.5), (2, 1.0)], chains=2, master_seed=3)


@pytest.fixture(scope="module")
def corpus_cache(small_corpus, random_cache):
    return random_cache(small_corpus)


def test_lattice_lookups():
    lattice = full_lattice(3)

    assert len(lattice) == 6
    assert lattice.contains(1, 3)
    assert lattice.span(lattice.index(1, 3)) == SegmentSpan("u", 1, 3)
    assert sorted(lattice.by_end[3].tolist()) == sorted(lattice.index(s, 3) for s in range(3))

    with pytest.raises(errors.SegmentationError):
        lattice.index(2, 2)


def test_finishable_frames():
    lattice = Lattice("u", 6, [0, 0, 2, 3], [2, 3, 5, 6])

    assert lattice.finishable() == {0, 3, 6}


def test_segmentation_boundaries_and_check():
    seg = Segmentation("u", [(0, 4, 1), (4, 7, 0), (7, 10, 1)])

    assert seg.boundaries() == [4, 7]
    assert seg.clusters == [1, 0, 1]
    seg.check(10)

    with pytest.raises(errors.SegmentationError):
        seg.check(12)
    with pytest.raises(errors.SegmentationError):
        Segmentation("u", [(0, 4, 0), (5, 10, 0)]).check(10)
    with pytest.raises(errors.SegmentationError):
        seg.check(10, full_lattice(5))


def test_decode_file(tmp_path):
    decoded = [Segmentation("a", [(0, 10, 2)]), Segmentation("b", [(0, 4, 0), (4, 9, 1)])]
    path = str(tmp_path / "decode.json")

    save_decode(path, decoded)

    assert load_decode(path) == decoded


def test_malformed_decode(tmp_path):
    path = tmp_path / "decode.json"
    path.write_text('[{"utterance_id": "a", "spans": [{"start": 0}]}]')

    with pytest.raises(errors.DataError):
        load_decode(str(path))


def test_segment_score_scales_with_duration():
    cache = EmbeddingCache(2)
    v = np.array([0.6, 0.8])
    cache.add_utterance("u", [0, 0, 0], [1, 20, 40], [v, v, v])
    model = GmmState(GmmHyper(3, 1.0, np.zeros(2), 0.1, 0.005))
    model.add(1, [0.8, 0.6])

    one = segment_log_score(cache, model, SegmentSpan("u", 0, 1))
    assert one == pytest.approx(model.log_marginal(v))
    assert segment_log_score(cache, model, SegmentSpan("u", 0, 20)) == pytest.approx(20 * one)
    assert segment_log_score(cache, model, SegmentSpan("u", 0, 40)) == pytest.approx(40 * one)

    lattice = Lattice("u", 40, [0, 0, 0], [1, 20, 40])
    np.testing.assert_allclose(segment_log_scores(lattice, cache.entries("u")[2], model), [one, 20 * one, 40 * one])


def test_forward_single_path():
    lattice = Lattice("u", 10, [0], [10])

    alpha = forward_pass(lattice, np.array([-3.5]))

    assert alpha[10] == -3.5
    assert np.all(np.isneginf(alpha[1:10]))


@pytest.mark.parametrize("n_frames", range(1, 9))
def test_forward_matches_enumeration(n_frames, rng):
    lattice = full_lattice(n_frames)
    scores = rng.normal(size=len(lattice))

    weights = [tiling_log_weight(lattice, scores, t) for t in compositions(n_frames)]

    assert forward_pass(lattice, scores)[n_frames] == pytest.approx(np.logaddexp.reduce(weights), abs=1e-10)


def test_forward_counts_segmentations():
    lattice = full_lattice(7)

    alpha = forward_pass(lattice, np.zeros(len(lattice)))

    np.testing.assert_allclose(np.exp(alpha[1:]), [2 ** (t - 1) for t in range(1, 8)])


def test_forward_without_legal_path():
    lattice = Lattice("u", 10, [0, 4], [4, 8])

    with pytest.raises(errors.SegmentationError):
        forward_pass(lattice, np.zeros(2))


def test_backward_single_path_is_deterministic(rng):
    lattice = Lattice("u", 10, [0], [10])
    scores = np.array([-1.0])
    alpha = forward_pass(lattice, scores)

    for _ in range(5):
        assert backward_sample(alpha, lattice, scores, 1.0, rng) == [SegmentSpan("u", 0, 10)]


def test_backward_sampling_matches_enumeration(rng):
    lattice = full_lattice(4)
    scores = rng.normal(scale=0.7, size=len(lattice))
    alpha = forward_pass(lattice, scores)

    tilings = list(compositions(4))
    weights = np.exp([tiling_log_weight(lattice, scores, t) for t in tilings])
    exact = weights / weights.sum()

    draws = 10 ** 5
    counts = np.zeros(len(tilings))
    for _ in range(draws):
        spans = backward_sample(alpha, lattice, scores, 1.0, rng)
        counts[tilings.index([(s.start, s.end) for s in spans])] += 1

    assert counts.sum() == draws
    assert chisquare(counts, draws * exact).pvalue > 0.01


def test_low_inverse_temperature_flattens_choice(rng):
    lattice = Lattice("u", 2, [0, 0, 1], [2, 1, 2])
    scores = np.array([0.0, -5.0, 0.0])
    alpha = forward_pass(lattice, scores)

    draws = 20000
    whole = sum(len(backward_sample(alpha, lattice, scores, 1e-6, rng)) == 1 for _ in range(draws))

    assert abs(whole / draws - 0.5) < 4 * np.sqrt(0.25 / draws)


def test_initial_spans_are_legal(small_corpus, corpus_cache, rng):
    for utt in small_corpus:
        lattice, _ = Lattice.from_cache(corpus_cache, utt)
        spans = initial_spans(lattice, rng)

        Segmentation(utt.utterance_id, [(s.start, s.end, 0) for s in spans]).check(utt.n_frames, lattice)


def test_initial_spans_skip_dead_ends(rng):
    lattice = Lattice("u", 6, [0, 0, 2, 3], [2, 3, 5, 6])

    for _ in range(20):
        assert initial_spans(lattice, rng) == [SegmentSpan("u", 0, 3), SegmentSpan("u", 3, 6)]


def test_initial_spans_when_durations_cannot_tile(make_utterance, rng):
    spans = candidate_segments(make_utterance("u", 30), 20, 200, 250)
    lattice = Lattice("u", 30, [s.start for s in spans], [s.end for s in spans])

    assert initial_spans(lattice, rng) == [SegmentSpan("u", 0, 30)]


def test_resegment_without_boundaries_keeps_spans(small_corpus, corpus_cache, sampler_config):
    sampler = Sampler(small_corpus, corpus_cache, GmmHyper.from_kappa(4, 3), sampler_config)
    sampler.initialize()

    utt_id = small_corpus.ids[0]
    before = sampler.segmentations[utt_id].segment_spans()

    after = sampler.resegment_utterance(utt_id, 1.0, False)

    assert after.segment_spans() == before
    sampler.state.check_integrity()


def test_resegment_conserves_tokens(small_corpus, corpus_cache, sampler_config):
    sampler = Sampler(small_corpus, corpus_cache, GmmHyper.from_kappa(4, 3), sampler_config)
    sampler.initialize()

    for utt in small_corpus:
        seg = sampler.resegment_utterance(utt.utterance_id, 1.0, True)
        seg.check(utt.n_frames, sampler.lattices[utt.utterance_id][0])

    assert sampler.state.counts.sum() == sum(len(seg) for seg in sampler.segmentations.values())
    sampler.state.check_integrity()


def test_single_component_assigns_zero(small_corpus, corpus_cache, sampler_config):
    corpus = small_corpus
    sampler = Sampler(corpus, corpus_cache, GmmHyper.from_kappa(1, 3), sampler_config)
    sampler.initialize()

    seg = sampler.resegment_utterance(corpus.ids[0], 1.0, True)

    assert set(seg.clusters) == {0}


def test_run_is_deterministic(small_corpus, corpus_cache, sampler_config):
    hyper = GmmHyper.from_kappa(4, 3, sigma_sq=0.05)

    first = run_sampler(small_corpus, corpus_cache, hyper, sampler_config)
    second = run_sampler(small_corpus, corpus_cache, hyper, sampler_config)

    for a, b in zip(first, second):
        assert a.segmentations == b.segmentations
        assert a.diagnostics == b.diagnostics


def test_chains_differ_and_report_diagnostics(tmp_path, small_corpus, corpus_cache, sampler_config):
    result = run_sampler(small_corpus, corpus_cache, GmmHyper.from_kappa(4, 3, sigma_sq=0.05), sampler_config)

    assert len(result) == 2
    assert result[0].seed != result[1].seed

    for chain in result:
        assert len(chain.diagnostics) == sampler_config.burn_in + sampler_config.iterations
        assert [d.inv_temp for d in chain.diagnostics] == [1.0, 1.0, 0.5, 0.5, 1.0, 1.0]
        assert chain.final_log_score == pytest.approx(chain.state.log_joint())
        for utt, seg in zip(small_corpus, chain.segmentations):
            seg.check(utt.n_frames)

    best = result.best_chain()
    assert best.final_log_score == max(c.final_log_score for c in result)

    path = tmp_path / "diagnostics.csv"
    result.save_diagnostics(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,chain,inv_temp,occupied_components,total_log_score"
    assert len(lines) == 1 + 2 * 6


def test_sampler_needs_every_utterance_cached(small_corpus, sampler_config):
    cache = EmbeddingCache(3)

    with pytest.raises(errors.CacheError):
        Sampler(small_corpus, cache, GmmHyper.from_kappa(4, 3), sampler_config)


@pytest.mark.slow
def test_sampler_finds_few_clusters_on_five_types(five_type_corpus, five_type_embeddings):
    _, cache = five_type_embeddings
    config = SamplerConfig(burn_in=5, anneal_stages=linear_anneal(3, 5, 0.1, 1.0), chains=5, master_seed=8)

    result = run_sampler(five_type_corpus, cache, GmmHyper.from_kappa(20, cache.dim, sigma_sq=0.02), config)

    occupied = [chain.state.n_occupied for chain in result]
    assert sum(n <= 2 * 5 for n in occupied) >= 4
