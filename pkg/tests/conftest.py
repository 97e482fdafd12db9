import numpy as np
import pytest

from seglex.config import RunConfig
from seglex.corpus import Corpus, FrameSequence, SegmentConstraints
from seglex.embed import EmbeddingCache
from seglex.pipeline import build_embeddings, initial_reference_set
from seglex.synth import SynthSpec, generate
from seglex.util import make_rng


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_utterance():
    """Factory for an utterance of random frames."""

    def make(utt_id, n_frames, dim=4, seed=0, frame_shift_ms=10.0):
        frames = np.random.default_rng(seed).normal(size=(n_frames, dim))

        return FrameSequence(utt_id, frames, frame_shift_ms)

    return make


@pytest.fixture
def aligned_corpus():
    """Two utterances with hand-written alignments."""

    frames = np.random.default_rng(5)
    utterances = [FrameSequence("a", frames.normal(size=(25, 3))), FrameSequence("b", frames.normal(size=(20, 3)))]
    alignments = {
        "a": [("one", 0, 10), ("two", 10, 25)],
        "b": [("two", 0, 5), ("one", 5, 9), ("three", 9, 20)],
    }

    return Corpus(utterances, alignments=alignments)


@pytest.fixture(scope="session")
def small_spec():
    return SynthSpec(n_types=3, feat_dim=8, n_utts=6, words_per_utt=(2, 3), dur_frames=(20, 30),
                     prototype_frames=20, frame_noise_std=0.05, seed=7)


@pytest.fixture(scope="session")
def small_corpus(small_spec):
    return generate(small_spec)


@pytest.fixture(scope="session")
def random_cache():
    """Factory for a cache of random unit embeddings covering every candidate of a corpus."""

    def make(corpus, dim=3, seed=0):
        rng = np.random.default_rng(seed)
        cache = EmbeddingCache(dim)

        for utt in corpus:
            spans = SegmentConstraints().candidates(utt)
            vectors = rng.normal(size=(len(spans), dim))
            vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
            cache.add_utterance(utt.utterance_id, [s.start for s in spans], [s.end for s in spans], vectors)

        return cache

    return make


@pytest.fixture(scope="session")
def five_type_corpus():
    return generate(SynthSpec(n_types=5, feat_dim=10, n_utts=20, words_per_utt=(2, 4), dur_frames=(22, 34),
                              prototype_frames=20, frame_noise_std=0.05, seed=11))


@pytest.fixture(scope="session")
def five_type_embeddings(five_type_corpus):
    """Eigenmap model and cache trained on 120 random candidates of the five type corpus."""

    config = RunConfig.from_dict({"seed": 2,
                                  "embedding": {"dim": 6, "knn": 10, "sigma_k": 0.1, "sigma_samples": 500}})
    spans = initial_reference_set(five_type_corpus, 120, config.constraints.build(), make_rng(2, "reference", 1))

    return build_embeddings(five_type_corpus, spans, config, 2)
