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
Synthetic corpora with exact ground truth.

Every word type is a smooth random-walk trajectory; tokens are time-warped copies of it with frame noise
and an optional per-speaker offset, concatenated into utterances.
"""

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from seglex import errors
from seglex.corpus import Corpus, FrameSequence, WordAlignment
from seglex.util import make_rng, read_json

log = logging.getLogger("seglex")


@dataclass
class SynthSpec:
    n_types: int = 5
    feat_dim: int = 15
    n_utts: int = 50
    words_per_utt: tuple = (3, 8)
    dur_frames: tuple = (25, 60)
    prototype_frames: int = 40
    prototype_smoothness: float = 0.3
    frame_noise_std: float = 0.1
    speaker_count: int = 1
    speaker_offset_std: float = 0.0
    seed: int = 0
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        self.words_per_utt = tuple(self.words_per_utt)
        self.dur_frames = tuple(self.dur_frames)

    def validate(self):
        problems = []

        for name in ("n_types", "feat_dim", "n_utts", "prototype_frames", "speaker_count"):
            if getattr(self, name) < 1:
                problems.append("{} must be >= 1".format(name))
        for name in ("words_per_utt", "dur_frames"):
            low, high = getattr(self, name)
            if not 1 <= low <= high:
                problems.append("{} must satisfy 1 <= min <= max".format(name))
        for name in ("prototype_smoothness", "frame_noise_std", "speaker_offset_std"):
            if getattr(self, name) < 0:
                problems.append("{} must be >= 0".format(name))
        if not self.frame_shift_ms > 0:
            problems.append("frame_shift_ms must be > 0")

        if problems:
            raise errors.ConfigError("invalid synth spec:\n  " + "\n  ".join(problems))

        return self

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise errors.ConfigError("unknown synth spec key(s): {}".format(", ".join(unknown)))

        try:
            return cls(**data).validate()
        except TypeError as e:
            raise errors.ConfigError("invalid synth spec: {}".format(e))

    @classmethod
    def from_json(cls, path):
        try:
            data = read_json(path)
        except OSError as e:
            raise errors.ConfigError("can't read synth spec {}: {}".format(path, e))
        except ValueError as e:
            raise errors.ConfigError("synth spec {} is not valid JSON: {}".format(path, e))

        if not isinstance(data, dict):
            raise errors.ConfigError("synth spec {} must be a JSON object".format(path))

        return cls.from_dict(data)


def make_prototype(n_frames, dim, smoothness, rng):
    """A random walk of n_frames steps, each frame scaled to unit norm."""

    walk = rng.normal(size=dim) + np.cumsum(smoothness * rng.normal(size=(n_frames, dim)), axis=0)
    norms = np.linalg.norm(walk, axis=1, keepdims=True)

    return walk / np.where(norms > 0, norms, 1.0)


def warp(prototype, n_frames):
    """Linear time warp of a trajectory to n_frames frames."""

    source = np.arange(len(prototype))
    target = np.linspace(0, len(prototype) - 1, n_frames)

    return np.stack([np.interp(target, source, prototype[:, d]) for d in range(prototype.shape[1])], axis=1)


def _utterance(spec, n, prototypes, offsets):
    rng = make_rng(spec.seed, "utterance", n)
    utt_id = "utt{:04d}".format(n)
    speaker = n % spec.speaker_count

    n_words = int(rng.integers(spec.words_per_utt[0], spec.words_per_utt[1] + 1))

    pieces = []
    words = []
    position = 0
    for _ in range(n_words):
        word_type = int(rng.integers(spec.n_types))
        duration = int(rng.integers(spec.dur_frames[0], spec.dur_frames[1] + 1))

        token = warp(prototypes[word_type], duration) + offsets[speaker]
        if spec.frame_noise_std > 0:
            token = token + rng.normal(scale=spec.frame_noise_std, size=token.shape)

        pieces.append(token)
        words.append(WordAlignment("w{}".format(word_type), position, position + duration))
        position += duration

    return FrameSequence(utt_id, np.concatenate(pieces), spec.frame_shift_ms), words


def generate(spec):
    """
    Generates a corpus with transcripts and word alignments; the result only depends on spec.

    :param SynthSpec spec: Generator settings.
    :return: Corpus
    """

    spec.validate()

    rng = make_rng(spec.seed, "prototypes")
    prototypes = [make_prototype(spec.prototype_frames, spec.feat_dim, spec.prototype_smoothness, rng)
                  for _ in range(spec.n_types)]

    rng = make_rng(spec.seed, "speakers")
    offsets = spec.speaker_offset_std * rng.normal(size=(spec.speaker_count, spec.feat_dim))

    utterances = []
    alignments = {}
    for n in range(spec.n_utts):
        utt, words = _utterance(spec, n, prototypes, offsets)
        utterances.append(utt)
        alignments[utt.utterance_id] = words

    transcripts = {utt_id: [w.token for w in words] for utt_id, words in alignments.items()}
    corpus = Corpus(utterances, transcripts=transcripts, alignments=alignments)

    log.info("generated {} utterances, {} word types, {} tokens".format(
        len(corpus), spec.n_types, sum(len(w) for w in alignments.values())))

    return corpus
