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
Blocked Gibbs sampling of word segmentations.

Each utterance is resegmented as a block: its embeddings are taken out of the acoustic model, a new
segmentation is drawn by forward filtering backward sampling over the candidate lattice, and every new
segment is assigned a component from the collapsed conditional.
"""

import logging
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from tqdm import tqdm

from seglex import errors
from seglex.acoustic_model import GmmState
from seglex.corpus import SegmentSpan
from seglex.util import derive_seed, read_json, sample_log_categorical, write_csv, write_json

log = logging.getLogger("seglex")

# success probability of the geometric draw over legal word ends in a random initial segmentation
INIT_GEOMETRIC_P = 0.1

Diagnostic = namedtuple("Diagnostic", ["iteration", "chain", "inv_temp", "occupied_components", "total_log_score"])

DIAGNOSTICS_HEADER = list(Diagnostic._fields)


def _logsumexp(values):
    top = np.max(values)
    if top == -np.inf:
        return -np.inf

    return top + np.log(np.sum(np.exp(values - top)))


class Lattice(object):
    """
    Candidate segments of one utterance, indexed by start and by end frame.

    :param str utterance_id: Utterance id.
    :param int n_frames: Utterance length T.
    :param starts: Start frame of every candidate.
    :param ends: End frame of every candidate.
    """

    __slots__ = ["utterance_id", "n_frames", "starts", "ends", "by_end", "by_start", "_index"]

    def __init__(self, utterance_id, n_frames, starts, ends):
        self.utterance_id = utterance_id
        self.n_frames = int(n_frames)
        self.starts = np.asarray(starts, dtype=np.int64)
        self.ends = np.asarray(ends, dtype=np.int64)

        self.by_end = {}
        self.by_start = {}
        for i, (s, e) in enumerate(zip(self.starts.tolist(), self.ends.tolist())):
            self.by_end.setdefault(e, []).append(i)
            self.by_start.setdefault(s, []).append(i)

        self.by_end = {e: np.array(idx, dtype=np.int64) for e, idx in sorted(self.by_end.items())}
        self.by_start = {s: np.array(idx, dtype=np.int64) for s, idx in sorted(self.by_start.items())}
        self._index = {(s, e): i for i, (s, e) in enumerate(zip(self.starts.tolist(), self.ends.tolist()))}

    @classmethod
    def from_cache(cls, cache, utt):
        """:return: (Lattice, embedding matrix aligned with the lattice's candidates)"""

        starts, ends, vectors = cache.entries(utt.utterance_id)

        return cls(utt.utterance_id, utt.n_frames, starts, ends), vectors

    def __len__(self):
        return len(self.starts)

    @property
    def durations(self):
        return self.ends - self.starts

    def contains(self, start, end):
        return (start, end) in self._index

    def index(self, start, end):
        try:
            return self._index[(start, end)]
        except KeyError:
            raise errors.SegmentationError("({}, {}) is not a candidate of {}".format(start, end, self.utterance_id))

    def span(self, i):
        return SegmentSpan(self.utterance_id, int(self.starts[i]), int(self.ends[i]))

    def finishable(self):
        """Frames from which some chain of candidates reaches the utterance end."""

        reachable = {self.n_frames}
        for start in sorted(self.by_start, reverse=True):
            if any(e in reachable for e in self.ends[self.by_start[start]].tolist()):
                reachable.add(start)

        return reachable


class Segmentation(object):
    """
    A tiling of one utterance into segments, each labelled with a component.

    :param str utterance_id: Utterance id.
    :param list spans: (start, end, cluster) triples in left-to-right order.
    """

    __slots__ = ["utterance_id", "spans"]

    def __init__(self, utterance_id, spans):
        self.utterance_id = utterance_id
        self.spans = [(int(s), int(e), int(c)) for s, e, c in spans]

    def __len__(self):
        return len(self.spans)

    def __eq__(self, other):
        return isinstance(other, Segmentation) and (self.utterance_id, self.spans) == (other.utterance_id,
                                                                                         other.spans)

    def __repr__(self):
        return "<Segmentation {} {}>".format(self.utterance_id, self.spans)

    def segment_spans(self):
        return [SegmentSpan(self.utterance_id, s, e) for s, e, _ in self.spans]

    @property
    def clusters(self):
        return [c for _, _, c in self.spans]

    def boundaries(self):
        """Internal boundary frames, excluding 0 and T."""

        return [s for s, _, _ in self.spans[1:]]

    def check(self, n_frames, lattice=None):
        """Raises :class:`errors.SegmentationError` unless the spans tile [0, n_frames) with legal segments."""

        if not self.spans:
            raise errors.SegmentationError("{}: empty segmentation".format(self.utterance_id))

        position = 0
        for s, e, _ in self.spans:
            if s != position or e <= s:
                raise errors.SegmentationError("{}: spans don't tile the utterance at frame {}".format(
                    self.utterance_id, position))
            if lattice is not None and not lattice.contains(s, e):
                raise errors.SegmentationError("{}: ({}, {}) violates the segment constraints".format(
                    self.utterance_id, s, e))
            position = e

        if position != n_frames:
            raise errors.SegmentationError("{}: spans end at {}, utterance has {} frames".format(
                self.utterance_id, position, n_frames))

    def to_dict(self):
        return {
            "utterance_id": self.utterance_id,
            "spans": [{"start": s, "end": e, "cluster": c} for s, e, c in self.spans],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["utterance_id"], [(sp["start"], sp["end"], sp["cluster"]) for sp in data["spans"]])
        except (KeyError, TypeError) as e:
            raise errors.DataError("malformed segmentation entry ({})".format(e))


def save_decode(path, segmentations):
    write_json(path, [seg.to_dict() for seg in segmentations])


def load_decode(path):
    """:return: list of :class:`Segmentation`"""

    try:
        data = read_json(path)
    except OSError as e:
        raise errors.DataError("can't read decode {}: {}".format(path, e))
    except ValueError as e:
        raise errors.DataError("decode {} is not valid JSON: {}".format(path, e))

    if not isinstance(data, list):
        raise errors.DataError("decode {} must be a JSON array".format(path))

    return [Segmentation.from_dict(entry) for entry in data]


# scoring and forward filtering backward sampling

def segment_log_score(cache, model, span):
    """
    log p(segment frames | model) under the segment-level approximation: the embedding's marginal density
    raised to the number of frames.
    """

    return span.n_frames * model.log_marginal(cache[span])


def segment_log_scores(lattice, vectors, model):
    """:func:`segment_log_score` of every candidate of a lattice."""

    return lattice.durations * model.log_marginal_batch(vectors)


def forward_pass(lattice, scores):
    """
    Log forward variables: alpha[t] is the log total weight of all segmentations of frames [0, t).

    :param Lattice lattice: Candidates of the utterance.
    :param numpy.ndarray scores: Log score of every candidate.
    :return: numpy.ndarray of length T + 1, -inf at frames no candidate ends at.
    """

    alpha = np.full(lattice.n_frames + 1, -np.inf)
    alpha[0] = 0.0

    starts = lattice.starts
    for end, idx in lattice.by_end.items():
        alpha[end] = _logsumexp(scores[idx] + alpha[starts[idx]])

    if alpha[lattice.n_frames] == -np.inf:
        raise errors.SegmentationError("{}: no legal segmentation".format(lattice.utterance_id))

    return alpha


def backward_sample(alpha, lattice, scores, inv_temp, rng):
    """
    Draws a segmentation from the end of the utterance backwards.

    At every end frame t the last segment (s, t) is chosen with probability proportional to
    exp(inv_temp * (score(s, t) + alpha[s])).

    :return: list of :class:`SegmentSpan` in left-to-right order
    """

    spans = []
    position = lattice.n_frames
    starts = lattice.starts

    while position > 0:
        idx = lattice.by_end.get(position)
        if idx is None:
            raise errors.SegmentationError("{}: no candidate ends at frame {}".format(lattice.utterance_id,
                                                                                       position))

        try:
            choice = idx[sample_log_categorical(inv_temp * (scores[idx] + alpha[starts[idx]]), rng)]
        except ValueError:
            raise errors.SegmentationError("{}: forward variables are inconsistent at frame {}".format(
                lattice.utterance_id, position))

        spans.append(lattice.span(choice))
        position = int(starts[choice])

    spans.reverse()

    return spans


def initial_spans(lattice, rng, p=INIT_GEOMETRIC_P):
    """
    A random left-to-right segmentation: at each boundary the next end is the i-th legal one, with i drawn
    from a geometric distribution. Ends that can't be completed to the utterance end are never chosen.
    """

    finishable = lattice.finishable()
    if 0 not in finishable:
        raise errors.SegmentationError("{}: no legal segmentation".format(lattice.utterance_id))

    spans = []
    position = 0
    while position < lattice.n_frames:
        options = sorted(e for e in lattice.ends[lattice.by_start[position]].tolist() if e in finishable)
        end = options[min(int(rng.geometric(p)) - 1, len(options) - 1)]

        spans.append(SegmentSpan(lattice.utterance_id, position, end))
        position = end

    return spans


# sampler

class ChainResult(namedtuple("ChainResult", ["chain", "seed", "segmentations", "state", "diagnostics"])):
    __slots__ = ()

    @property
    def final_log_score(self):
        if self.diagnostics:
            return self.diagnostics[-1].total_log_score

        return self.state.log_joint()


class SamplerResult(object):
    """
    One :class:`ChainResult` per chain, in chain order.
    """

    def __init__(self, chains):
        self.chains = list(chains)

    def __len__(self):
        return len(self.chains)

    def __iter__(self):
        return iter(self.chains)

    def __getitem__(self, chain):
        return self.chains[chain]

    @property
    def diagnostics(self):
        return [d for chain in self.chains for d in chain.diagnostics]

    def best_chain(self):
        """The chain with the highest final total log score; the lowest index wins ties."""

        return max(self.chains, key=lambda c: (c.final_log_score, -c.chain))

    def save_diagnostics(self, path):
        write_csv(path, DIAGNOSTICS_HEADER, [list(d) for d in self.diagnostics])


class Sampler(object):
    """
    One chain of the blocked Gibbs sampler.

    :param Corpus corpus: Utterances to segment.
    :param EmbeddingCache cache: Embeddings of every candidate segment.
    :param GmmHyper hyper: Acoustic model hyperparameters.
    :param SamplerConfig config: Schedule and seeds.
    :keyword int chain: Chain index; the generator is seeded from (master seed, chain).
    """

    def __init__(self, corpus, cache, hyper, config, *, chain=0):
        cache.check_covers(corpus)

        self.corpus = corpus
        self.cache = cache
        self.config = config
        self.chain = chain
        self.seed = derive_seed(config.master_seed, "chain", chain)
        self.rng = np.random.default_rng(self.seed)

        self.state = GmmState(hyper)
        self.lattices = {utt.utterance_id: Lattice.from_cache(cache, utt) for utt in corpus}
        self.segmentations = {}

    def initialize(self):
        """Random initial segmentation with uniformly random component labels."""

        components = self.state.components

        for utt in self.corpus:
            lattice, vectors = self.lattices[utt.utterance_id]

            spans = []
            for span in initial_spans(lattice, self.rng):
                k = int(self.rng.integers(components))
                self.state.add(k, vectors[lattice.index(span.start, span.end)], span)
                spans.append((span.start, span.end, k))

            self.segmentations[utt.utterance_id] = Segmentation(utt.utterance_id, spans)

    def resegment_utterance(self, utterance_id, inv_temp, sample_boundaries):
        """
        Takes the utterance's segments out of the model, optionally draws new boundaries, and reassigns every
        segment a component.

        :return: the new :class:`Segmentation`
        """

        lattice, vectors = self.lattices[utterance_id]
        current = self.segmentations[utterance_id]

        for s, e, k in current.spans:
            self.state.remove(k, vectors[lattice.index(s, e)], SegmentSpan(utterance_id, s, e))

        if sample_boundaries:
            scores = segment_log_scores(lattice, vectors, self.state)
            alpha = forward_pass(lattice, scores)
            spans = backward_sample(alpha, lattice, scores, inv_temp, self.rng)
        else:
            spans = current.segment_spans()

        labelled = []
        for span in spans:
            k = self.state.sample_assignment(vectors[lattice.index(span.start, span.end)], self.rng, key=span)
            labelled.append((span.start, span.end, k))

        segmentation = Segmentation(utterance_id, labelled)
        self.segmentations[utterance_id] = segmentation

        return segmentation

    def sweep(self, inv_temp, sample_boundaries):
        """One Gibbs iteration over all utterances in a fresh random order."""

        ids = self.corpus.ids
        for i in self.rng.permutation(len(ids)):
            self.resegment_utterance(ids[i], inv_temp, sample_boundaries)

        self.state.check_integrity()

    def run(self, *, progress=False):
        """
        Initializes and runs burn-in plus the annealed iterations.

        :return: ChainResult
        """

        self.initialize()

        diagnostics = []
        schedule = list(self.config.schedule())
        for iteration, (inv_temp, sample_boundaries) in enumerate(tqdm(
                schedule, desc="chain {}".format(self.chain), disable=not progress)):
            self.sweep(inv_temp, sample_boundaries)

            diagnostic = Diagnostic(iteration, self.chain, inv_temp, self.state.n_occupied, self.state.log_joint())
            diagnostics.append(diagnostic)

            log.debug("chain {} iteration {}: 1/gamma={} occupied={} log score={:.3f}".format(
                self.chain, iteration, inv_temp, diagnostic.occupied_components, diagnostic.total_log_score))

        segmentations = [self.segmentations[utt_id] for utt_id in self.corpus.ids]
        log.info("chain {} finished: {} segments in {} components".format(
            self.chain, len(self.state), self.state.n_occupied))

        return ChainResult(self.chain, self.seed, segmentations, self.state, diagnostics)


def run_sampler(corpus, cache, hyper, config, *, progress=False):
    """
    Runs config.chains independent chains concurrently.

    Chains share only the read-only corpus and cache, so results don't depend on scheduling. Threads overlap
    only inside numpy calls; the per-segment mixture bookkeeping holds the GIL, so several chains take close
    to the wall time of running them one after another.

    :return: SamplerResult
    """

    cache.check_covers(corpus)

    samplers = [Sampler(corpus, cache, hyper, config, chain=c) for c in range(config.chains)]

    log.info("sampling {} chain(s): K={} burn-in={} J={}".format(
        config.chains, hyper.components, config.burn_in, config.iterations))

    with ThreadPoolExecutor(max_workers=config.chains) as executor:
        results = list(executor.map(lambda sampler: sampler.run(progress=progress), samplers))

    return SamplerResult(results)
