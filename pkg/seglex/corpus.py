# Copyright (c) 2026 seglex developers
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

"""
Corpora of frame sequences: the on-disk feature and manifest formats, validation, and enumeration of the
candidate word segments the sampler is allowed to hypothesize.
"""

import json
import logging
import os
import struct
from collections import namedtuple
from math import floor

import numpy as np

from seglex import errors
from seglex.util import ceil

log = logging.getLogger("seglex")

FEATURE_MAGIC = b"SBFT"
FEATURE_VERSION = 1

_feature_header = struct.Struct("<4sIII")


class SegmentSpan(namedtuple("SegmentSpan", ["utterance_id", "start", "end"])):
    """Frames [start, end) of one utterance."""

    __slots__ = ()

    @property
    def n_frames(self):
        return self.end - self.start


WordAlignment = namedtuple("WordAlignment", ["token", "start_frame", "end_frame"])


class FrameSequence(object):
    """
    One utterance's acoustic features.

    :param str utterance_id: Unique id of the utterance.
    :param numpy.ndarray frames: T x F matrix of feature vectors, stored as float32.
    :param float frame_shift_ms: Frame shift in milliseconds.
    """

    __slots__ = ["utterance_id", "frames", "frame_shift_ms"]

    def __init__(self, utterance_id, frames, frame_shift_ms=10.0):
        frames = np.array(frames, dtype=np.float32)

        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise errors.CorpusError("{}: frames must be a non-empty T x F matrix, got shape {}".format(
                utterance_id, frames.shape))
        if not np.all(np.isfinite(frames)):
            raise errors.CorpusError("{}: features contain NaN or Inf values".format(utterance_id))
        if not frame_shift_ms > 0:
            raise errors.CorpusError("{}: frame shift must be positive".format(utterance_id))

        frames.setflags(write=False)

        self.utterance_id = utterance_id
        self.frames = frames
        self.frame_shift_ms = float(frame_shift_ms)

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]

    def __repr__(self):
        return "<FrameSequence {} T={} F={}>".format(self.utterance_id, self.n_frames, self.dim)

    def segment(self, start, end):
        """Returns frames [start, end) as a float64 array."""

        return np.asarray(self.frames[start:end], dtype=np.float64)


class Corpus(object):
    """
    An ordered, immutable collection of utterances with optional ground truth.

    :param list utterances: :class:`FrameSequence` objects.
    :keyword dict transcripts: utterance id -> list of tokens.
    :keyword dict alignments: utterance id -> list of :class:`WordAlignment`.
    """

    def __init__(self, utterances, *, transcripts=None, alignments=None):
        self.utterances = list(utterances)
        self.transcripts = dict(transcripts) if transcripts else None
        self.alignments = {k: [WordAlignment(*a) for a in v] for k, v in alignments.items()} if alignments else None

        self.validate()

    def validate(self):
        problems = []
        self._index = {}

        for i, utt in enumerate(self.utterances):
            if utt.utterance_id in self._index:
                problems.append("{}: duplicate utterance id".format(utt.utterance_id))
            self._index[utt.utterance_id] = i

        for utt_id, words in (self.alignments or {}).items():
            if utt_id not in self._index:
                problems.append("{}: alignment for unknown utterance".format(utt_id))
                continue

            n_frames = self[utt_id].n_frames
            last_end = 0
            for word in words:
                if not 0 <= word.start_frame < word.end_frame <= n_frames:
                    problems.append("{}: alignment span ({}, {}) outside [0, {}]".format(
                        utt_id, word.start_frame, word.end_frame, n_frames))
                elif word.start_frame < last_end:
                    problems.append("{}: alignment spans overlap or are out of order at frame {}".format(
                        utt_id, word.start_frame))
                last_end = max(last_end, word.end_frame)

        for utt_id in (self.transcripts or {}):
            if utt_id not in self._index:
                problems.append("{}: transcript for unknown utterance".format(utt_id))

        if problems:
            raise errors.CorpusError("invalid corpus:\n  " + "\n  ".join(problems))

    def __iter__(self):
        return iter(self.utterances)

    def __len__(self):
        return len(self.utterances)

    def __getitem__(self, utterance_id):
        try:
            return self.utterances[self._index[utterance_id]]
        except KeyError:
            raise errors.CorpusError("unknown utterance {}".format(utterance_id))

    def __contains__(self, utterance_id):
        return utterance_id in self._index

    @property
    def ids(self):
        return [utt.utterance_id for utt in self.utterances]

    @property
    def total_frames(self):
        return sum(utt.n_frames for utt in self.utterances)

    @property
    def has_alignments(self):
        return self.alignments is not None and all(i in self.alignments for i in self._index)

    @property
    def has_transcripts(self):
        if self.transcripts is not None and all(i in self.transcripts for i in self._index):
            return True

        return self.has_alignments

    def transcript(self, utterance_id):
        """Token list of an utterance, taken from the alignment when no transcript was given."""

        if self.transcripts is not None and utterance_id in self.transcripts:
            return list(self.transcripts[utterance_id])
        if self.alignments is not None and utterance_id in self.alignments:
            return [word.token for word in self.alignments[utterance_id]]

        raise errors.GroundTruthError("{}: no transcript".format(utterance_id))


class SegmentConstraints(object):
    """
    Boundary grid and duration limits of candidate word segments.

    :param float grid_ms: Spacing of allowed boundaries. Must be a multiple of the frame shift.
    :param float min_dur_ms: Minimum word duration.
    :param float max_dur_ms: Maximum word duration.
    """

    __slots__ = ["grid_ms", "min_dur_ms", "max_dur_ms"]

    def __init__(self, grid_ms=20.0, min_dur_ms=200.0, max_dur_ms=1000.0):
        if min_dur_ms > max_dur_ms:
            raise errors.ConfigError("minimum duration {} ms exceeds maximum duration {} ms".format(
                min_dur_ms, max_dur_ms))

        self.grid_ms = float(grid_ms)
        self.min_dur_ms = float(min_dur_ms)
        self.max_dur_ms = float(max_dur_ms)

    def __repr__(self):
        return "<SegmentConstraints grid={}ms duration=[{}, {}]ms>".format(
            self.grid_ms, self.min_dur_ms, self.max_dur_ms)

    def in_frames(self, frame_shift_ms):
        """
        Converts the constraints to frame units.

        :return: (grid step, minimum frames, maximum frames)
        """

        ratio = self.grid_ms / frame_shift_ms
        step = int(round(ratio))

        if step < 1 or abs(ratio - step) > 1e-9:
            raise errors.ConfigError("boundary grid of {} ms is not a multiple of the {} ms frame shift".format(
                self.grid_ms, frame_shift_ms))

        min_frames = max(1, ceil(self.min_dur_ms / frame_shift_ms - 1e-9))
        max_frames = int(floor(self.max_dur_ms / frame_shift_ms + 1e-9))

        return step, min_frames, max_frames

    def candidates(self, utt):
        return candidate_segments(utt, self.grid_ms, self.min_dur_ms, self.max_dur_ms)


def candidate_segments(utt, grid_ms=20.0, min_dur_ms=200.0, max_dur_ms=1000.0):
    """
    Enumerates every span of an utterance that may be hypothesized as a word.

    Boundaries lie on a grid anchored at frame 0; the utterance end is always a legal boundary. An utterance
    shorter than the minimum duration yields its full span as the only candidate, and one that the duration
    limits can't tile gets its full span added.

    :param FrameSequence utt: Utterance.
    :return: list of :class:`SegmentSpan`, ordered by start then end.
    """

    step, min_frames, max_frames = SegmentConstraints(grid_ms, min_dur_ms, max_dur_ms).in_frames(utt.frame_shift_ms)
    n_frames = utt.n_frames

    if n_frames < min_frames:
        return [SegmentSpan(utt.utterance_id, 0, n_frames)]

    boundaries = list(range(0, n_frames, step)) + [n_frames]

    spans = []
    for start in boundaries[:-1]:
        for end in boundaries:
            if min_frames <= end - start <= max_frames:
                spans.append(SegmentSpan(utt.utterance_id, start, end))

    if not _tiles(spans, n_frames):
        log.warning("{}: no segmentation of {} frames fits the duration limits, adding the full span".format(
            utt.utterance_id, n_frames))
        spans.append(SegmentSpan(utt.utterance_id, 0, n_frames))
        spans.sort(key=lambda s: (s.start, s.end))

    return spans


def _tiles(spans, n_frames):
    """Whether spans sorted by start can be chained from frame 0 to n_frames."""

    reachable = {0}
    for span in spans:
        if span.start in reachable:
            reachable.add(span.end)

    return n_frames in reachable


def corpus_candidates(corpus, constraints):
    """All candidate spans of a corpus, utterance by utterance."""

    spans = []
    for utt in corpus:
        spans.extend(constraints.candidates(utt))

    return spans


def ground_truth_boundaries(corpus):
    """
    Word-internal boundary frames of every aligned utterance.

    :return: dict utterance id -> sorted list of frame indices, excluding 0 and T.
    """

    if not corpus.has_alignments:
        raise errors.GroundTruthError("corpus has no word alignments")

    boundaries = {}
    for utt in corpus:
        points = set()
        for word in corpus.alignments[utt.utterance_id]:
            points.update((word.start_frame, word.end_frame))

        points.discard(0)
        points.discard(utt.n_frames)
        boundaries[utt.utterance_id] = sorted(points)

    return boundaries


# feature files

def read_features(path):
    """
    Reads one binary feature file.

    :param str path: Path to the file.
    :return: numpy.ndarray of shape (n_frames, dim), float32
    """

    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise errors.CorpusError("can't read feature file {}: {}".format(path, e))

    if len(data) < _feature_header.size:
        raise errors.CorpusError("{}: truncated header".format(path))

    magic, version, n_frames, dim = _feature_header.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise errors.CorpusError("{}: bad magic bytes {!r}".format(path, magic))
    if version != FEATURE_VERSION:
        raise errors.CorpusError("{}: unsupported format version {}".format(path, version))

    payload = data[_feature_header.size:]
    if len(payload) != n_frames * dim * 4:
        raise errors.CorpusError("{}: header declares {} x {} values but payload holds {} bytes".format(
            path, n_frames, dim, len(payload)))

    return np.frombuffer(payload, dtype="<f4").reshape(n_frames, dim).astype(np.float32)


def write_features(path, frames):
    frames = np.ascontiguousarray(frames, dtype="<f4")

    with open(path, "wb") as f:
        f.write(_feature_header.pack(FEATURE_MAGIC, FEATURE_VERSION, frames.shape[0], frames.shape[1]))
        f.write(frames.tobytes())


# manifests

def _parse_alignment(utt_id, raw):
    try:
        return [WordAlignment(str(a["token"]), int(a["start_frame"]), int(a["end_frame"])) for a in raw]
    except (KeyError, TypeError, ValueError) as e:
        raise errors.CorpusError("{}: malformed alignment entry ({})".format(utt_id, e))


def load_corpus(manifest_path):
    """
    Loads and validates a corpus from a JSON manifest.

    Every problem found is collected, and a single :class:`errors.CorpusError` naming each offending utterance
    is raised.

    :param str manifest_path: Path to the manifest. Feature paths are relative to its directory.
    :return: Corpus
    """

    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            entries = json.load(f)
    except OSError as e:
        raise errors.CorpusError("can't read manifest {}: {}".format(manifest_path, e))
    except ValueError as e:
        raise errors.CorpusError("manifest {} is not valid JSON: {}".format(manifest_path, e))

    if not isinstance(entries, list):
        raise errors.CorpusError("manifest {} must be a JSON array".format(manifest_path))

    root = os.path.dirname(os.path.abspath(manifest_path))

    utterances = []
    transcripts = {}
    alignments = {}
    seen = set()
    problems = []

    for n, entry in enumerate(entries):
        if not isinstance(entry, dict) or "id" not in entry or "features" not in entry:
            problems.append("entry {}: needs at least \"id\" and \"features\"".format(n))
            continue

        utt_id = str(entry["id"])
        if utt_id in seen:
            problems.append("{}: duplicate utterance id".format(utt_id))
            continue
        seen.add(utt_id)

        try:
            frames = read_features(os.path.join(root, entry["features"]))

            if "n_frames" in entry and int(entry["n_frames"]) != frames.shape[0]:
                raise errors.CorpusError("manifest says {} frames but the feature file has {}".format(
                    entry["n_frames"], frames.shape[0]))

            utterances.append(FrameSequence(utt_id, frames, entry.get("frame_shift_ms", 10.0)))

            if entry.get("transcript") is not None:
                transcripts[utt_id] = [str(token) for token in entry["transcript"]]
            if entry.get("alignment") is not None:
                alignments[utt_id] = _parse_alignment(utt_id, entry["alignment"])

        except errors.CorpusError as e:
            message = str(e)
            problems.append(message if message.startswith(utt_id) else "{}: {}".format(utt_id, message))

    if problems:
        raise errors.CorpusError("manifest {} has {} problem(s):\n  {}".format(
            manifest_path, len(problems), "\n  ".join(problems)))

    corpus = Corpus(utterances, transcripts=transcripts or None, alignments=alignments or None)

    log.info("loaded {} utterances ({} frames) from {}".format(len(corpus), corpus.total_frames, manifest_path))

    return corpus


def write_corpus(corpus, out_dir, *, features_dir="features"):
    """
    Writes a corpus as a manifest plus one feature file per utterance.

    :return: path of the written manifest
    """

    os.makedirs(os.path.join(out_dir, features_dir), exist_ok=True)

    entries = []
    for utt in corpus:
        rel_path = os.path.join(features_dir, utt.utterance_id.replace(os.sep, "_") + ".sbft")
        write_features(os.path.join(out_dir, rel_path), utt.frames)

        entry = {
            "id": utt.utterance_id,
            "features": rel_path,
            "n_frames": utt.n_frames,
            "frame_shift_ms": utt.frame_shift_ms,
        }
        if corpus.transcripts is not None and utt.utterance_id in corpus.transcripts:
            entry["transcript"] = list(corpus.transcripts[utt.utterance_id])
        if corpus.alignments is not None and utt.utterance_id in corpus.alignments:
            entry["alignment"] = [{"token": w.token, "start_frame": w.start_frame, "end_frame": w.end_frame}
                                  for w in corpus.alignments[utt.utterance_id]]

        entries.append(entry)

    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(entries, f, indent=2)
        f.write("\n")

    log.info("wrote {} utterances to {}".format(len(entries), out_dir))

    return manifest_path
