import json
import os

import numpy as np
import pytest

from seglex import errors
from seglex.corpus import (
    Corpus, FrameSequence, SegmentConstraints, SegmentSpan, candidate_segments, ground_truth_boundaries,
    load_corpus, read_features, write_corpus, write_features,
)


def brute_force_candidates(n_frames, step, min_frames, max_frames):
    if n_frames < min_frames:
        return {(0, n_frames)}

    points = set(range(0, n_frames, step)) | {n_frames}

    return {(s, e) for s in points for e in points if s < e and min_frames <= e - s <= max_frames}


def test_candidate_count_on_grid(make_utterance):
    spans = candidate_segments(make_utterance("u", 50), 20, 200, 1000)

    assert len(spans) == 136
    assert spans[0] == SegmentSpan("u", 0, 20)
    assert spans[-1] == SegmentSpan("u", 30, 50)
    assert all(20 <= s.n_frames <= 100 and s.start % 2 == 0 and s.end % 2 == 0 for s in spans)


def test_short_utterance_yields_full_span(make_utterance):
    assert candidate_segments(make_utterance("u", 10), 20, 200, 1000) == [SegmentSpan("u", 0, 10)]


def test_grid_must_match_frame_shift(make_utterance):
    with pytest.raises(errors.ConfigError):
        candidate_segments(make_utterance("u", 50), 15, 200, 1000)


def test_min_above_max_is_rejected():
    with pytest.raises(errors.ConfigError):
        SegmentConstraints(20, 500, 400)


@pytest.mark.parametrize("n_frames", [1, 19, 20, 21, 37, 50, 99, 120, 157, 200])
def test_candidates_match_enumeration(make_utterance, n_frames):
    spans = candidate_segments(make_utterance("u", n_frames), 20, 200, 1000)

    assert {(s.start, s.end) for s in spans} == brute_force_candidates(n_frames, 2, 20, 100)
    assert [(s.start, s.end) for s in spans] == sorted((s.start, s.end) for s in spans)


def test_utterance_end_is_always_a_boundary(make_utterance):
    spans = candidate_segments(make_utterance("u", 45), 20, 200, 1000)

    assert SegmentSpan("u", 24, 45) in spans
    assert max(s.end for s in spans) == 45


def test_untileable_utterance_gets_full_span(make_utterance):
    spans = candidate_segments(make_utterance("u", 30), 20, 200, 250)

    assert SegmentSpan("u", 0, 30) in spans
    assert SegmentSpan("u", 0, 24) in spans
    assert [(s.start, s.end) for s in spans] == sorted((s.start, s.end) for s in spans)


def test_ground_truth_boundaries(aligned_corpus):
    assert ground_truth_boundaries(aligned_corpus) == {"a": [10], "b": [5, 9]}


def test_single_word_has_no_internal_boundary():
    corpus = Corpus([FrameSequence("u", np.ones((12, 2)))], alignments={"u": [("w", 0, 12)]})

    assert ground_truth_boundaries(corpus) == {"u": []}


def test_ground_truth_needs_alignments(make_utterance):
    with pytest.raises(errors.GroundTruthError):
        ground_truth_boundaries(Corpus([make_utterance("u", 10)]))


def test_corpus_rejects_duplicates_and_bad_alignments(make_utterance):
    with pytest.raises(errors.CorpusError, match="duplicate"):
        Corpus([make_utterance("u", 10), make_utterance("u", 12)])

    with pytest.raises(errors.CorpusError, match="overlap"):
        Corpus([make_utterance("u", 20)], alignments={"u": [("a", 0, 10), ("b", 5, 20)]})

    with pytest.raises(errors.CorpusError, match="outside"):
        Corpus([make_utterance("u", 20)], alignments={"u": [("a", 0, 30)]})


def test_frames_must_be_finite():
    frames = np.zeros((5, 2))
    frames[2, 1] = np.nan

    with pytest.raises(errors.CorpusError, match="bad"):
        FrameSequence("bad", frames)


def test_transcript_falls_back_to_alignment(aligned_corpus):
    assert aligned_corpus.has_transcripts
    assert aligned_corpus.transcript("b") == ["two", "one", "three"]


def test_load_single_utterance(tmp_path, make_utterance):
    corpus = Corpus([make_utterance("only", 50, dim=15)])
    manifest = write_corpus(corpus, str(tmp_path))

    loaded = load_corpus(manifest)

    assert len(loaded) == 1
    assert loaded["only"].n_frames == 50
    assert loaded["only"].dim == 15
    np.testing.assert_array_equal(loaded["only"].frames, corpus["only"].frames)


def test_round_trip_keeps_feature_bytes(tmp_path, aligned_corpus):
    first = write_corpus(aligned_corpus, str(tmp_path / "one"))
    second = write_corpus(load_corpus(first), str(tmp_path / "two"))

    for utt_id in aligned_corpus.ids:
        with open(os.path.join(os.path.dirname(first), "features", utt_id + ".sbft"), "rb") as f:
            a = f.read()
        with open(os.path.join(os.path.dirname(second), "features", utt_id + ".sbft"), "rb") as f:
            b = f.read()
        assert a == b

    assert load_corpus(second).alignments == aligned_corpus.alignments


def test_frame_count_mismatch_names_utterance(tmp_path, make_utterance):
    manifest = write_corpus(Corpus([make_utterance("u1", 30)]), str(tmp_path))

    with open(manifest) as f:
        entries = json.load(f)
    entries[0]["n_frames"] = 31
    with open(manifest, "w") as f:
        json.dump(entries, f)

    with pytest.raises(errors.CorpusError, match="u1"):
        load_corpus(manifest)


def test_all_problems_are_reported(tmp_path, make_utterance):
    manifest = write_corpus(Corpus([make_utterance(u, 20) for u in ("u1", "u2", "u3")]), str(tmp_path))

    bad = np.ones((20, 4), dtype=np.float32)
    bad[3, 0] = np.nan
    write_features(str(tmp_path / "features" / "u2.sbft"), bad)
    os.remove(str(tmp_path / "features" / "u3.sbft"))

    with pytest.raises(errors.CorpusError) as e:
        load_corpus(manifest)

    assert "u2" in str(e.value)
    assert "u3" in str(e.value)
    assert "u1" not in str(e.value)


def test_feature_file_header(tmp_path):
    path = str(tmp_path / "x.sbft")
    write_features(path, np.arange(6, dtype=np.float32).reshape(3, 2))

    with open(path, "rb") as f:
        data = f.read()

    assert data[:4] == b"SBFT"
    assert len(data) == 16 + 6 * 4
    np.testing.assert_array_equal(read_features(path), np.arange(6).reshape(3, 2))
