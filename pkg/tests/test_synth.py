import json

import numpy as np
import pytest

from seglex import errors
from seglex.dtw import dtw_cost
from seglex.synth import SynthSpec, generate, make_prototype, warp


def tokens_by_type(corpus):
    tokens = {}
    for utt in corpus:
        for word in corpus.alignments[utt.utterance_id]:
            tokens.setdefault(word.token, []).append(utt.segment(word.start_frame, word.end_frame))

    return tokens


@pytest.fixture(scope="module")
def noiseless():
    return generate(SynthSpec(n_types=3, feat_dim=6, n_utts=8, words_per_utt=(2, 4), dur_frames=(20, 20),
                              prototype_frames=15, frame_noise_std=0.0, seed=2))


def test_prototype_frames_are_unit_norm(rng):
    prototype = make_prototype(30, 5, 0.3, rng)

    assert prototype.shape == (30, 5)
    np.testing.assert_allclose(np.linalg.norm(prototype, axis=1), 1.0)


def test_warp_keeps_end_points(rng):
    prototype = make_prototype(10, 3, 0.3, rng)

    np.testing.assert_allclose(warp(prototype, 10), prototype)

    stretched = warp(prototype, 25)
    assert stretched.shape == (25, 3)
    np.testing.assert_allclose(stretched[[0, -1]], prototype[[0, -1]])


def test_alignments_tile_utterances(small_corpus, small_spec):
    assert len(small_corpus) == small_spec.n_utts

    for utt in small_corpus:
        words = small_corpus.alignments[utt.utterance_id]

        assert words[0].start_frame == 0
        assert words[-1].end_frame == utt.n_frames
        assert all(a.end_frame == b.start_frame for a, b in zip(words, words[1:]))
        assert small_spec.words_per_utt[0] <= len(words) <= small_spec.words_per_utt[1]
        assert small_corpus.transcript(utt.utterance_id) == [w.token for w in words]


def test_noiseless_tokens_of_a_type_are_identical(noiseless):
    for tokens in tokens_by_type(noiseless).values():
        for token in tokens[1:]:
            np.testing.assert_array_equal(token, tokens[0])


def test_noiseless_types_are_separated_by_dtw(noiseless):
    tokens = tokens_by_type(noiseless)
    types = sorted(tokens)

    for t in types:
        assert dtw_cost(tokens[t][0], tokens[t][-1]) == pytest.approx(0.0, abs=1e-12)
        for other in types:
            if other != t:
                assert dtw_cost(tokens[t][0], tokens[other][0]) > 0.01


def test_generation_is_deterministic(small_spec, small_corpus):
    again = generate(small_spec)

    assert again.ids == small_corpus.ids
    for a, b in zip(again, small_corpus):
        np.testing.assert_array_equal(a.frames, b.frames)


def test_speaker_offsets():
    spec = SynthSpec(n_types=1, feat_dim=4, n_utts=2, words_per_utt=(1, 1), dur_frames=(20, 20),
                     frame_noise_std=0.0, speaker_count=2, speaker_offset_std=0.5, seed=4)

    first, second = generate(spec)

    assert not np.allclose(first.frames, second.frames)


def test_validation_lists_problems():
    with pytest.raises(errors.ConfigError) as info:
        SynthSpec(n_types=0, dur_frames=(10, 5)).validate()

    assert "n_types" in str(info.value)
    assert "dur_frames" in str(info.value)


def test_unknown_spec_key():
    with pytest.raises(errors.ConfigError):
        SynthSpec.from_dict({"n_types": 3, "vocabulary": 10})


def test_spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"n_types": 2, "n_utts": 3, "dur_frames": [20, 25]}))

    spec = SynthSpec.from_json(str(path))

    assert spec.dur_frames == (20, 25)
    assert spec.feat_dim == 15

    with pytest.raises(errors.ConfigError):
        SynthSpec.from_json(str(tmp_path / "missing.json"))
