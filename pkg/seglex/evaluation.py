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
Scoring decoded segmentations against ground truth: frame-level mapping matrix, cluster purity,
unsupervised word error rate and word boundary F-score.
"""

import logging
from collections import Counter, namedtuple

import numpy as np

from seglex import errors
from seglex.corpus import ground_truth_boundaries
from seglex.util import write_csv

log = logging.getLogger("seglex")

# hypothesis token of a cluster that has no truth type mapped to it; never equals a transcript token
UNMAPPED = None

METRIC_KEYS = ["purity", "wer", "substitutions", "deletions", "insertions", "n_tokens", "boundary_precision",
               "boundary_recall", "boundary_f", "clusters_covering_90pct"]


class MappingMatrix(object):
    """
    Frame counts of every (truth type, cluster) pair.

    :param numpy.ndarray counts: I x J integer matrix.
    :param list truth_labels: Row labels.
    :param list cluster_ids: Column labels.
    """

    __slots__ = ["counts", "truth_labels", "cluster_ids"]

    def __init__(self, counts, truth_labels, cluster_ids):
        self.counts = np.asarray(counts, dtype=np.int64).reshape(len(truth_labels), len(cluster_ids))
        self.truth_labels = list(truth_labels)
        self.cluster_ids = list(cluster_ids)

    def __repr__(self):
        return "<MappingMatrix {}x{} frames={}>".format(len(self.truth_labels), len(self.cluster_ids), self.total)

    @property
    def shape(self):
        return self.counts.shape

    @property
    def total(self):
        return int(self.counts.sum())

    def by_size(self):
        """The same matrix with columns ordered by frame count, largest first."""

        order = sorted(range(len(self.cluster_ids)), key=lambda j: (-self.counts[:, j].sum(), self.cluster_ids[j]))

        return MappingMatrix(self.counts[:, order], self.truth_labels, [self.cluster_ids[j] for j in order])

    def top_clusters(self, n):
        ordered = self.by_size()

        return MappingMatrix(ordered.counts[:, :n], ordered.truth_labels, ordered.cluster_ids[:n])

    def to_csv(self, path):
        rows = [[label] + row.tolist() for label, row in zip(self.truth_labels, self.counts)]
        write_csv(path, ["truth"] + list(self.cluster_ids), rows)


def _frame_labels(n_frames, spans, labels):
    out = np.full(n_frames, -1, dtype=np.int64)
    for (start, end), label in zip(spans, labels):
        out[start:end] = label

    return out


def _check_decode(decoded, corpus):
    decoded_ids = [seg.utterance_id for seg in decoded]
    problems = []

    if len(set(decoded_ids)) != len(decoded_ids):
        problems.append("decode lists an utterance more than once")

    missing = [utt_id for utt_id in corpus.ids if utt_id not in set(decoded_ids)]
    unknown = [utt_id for utt_id in decoded_ids if utt_id not in corpus]
    if missing:
        problems.append("no decode for {} utterance(s): {}".format(len(missing), ", ".join(missing[:10])))
    if unknown:
        problems.append("decode has {} unknown utterance(s): {}".format(len(unknown), ", ".join(unknown[:10])))

    for seg in decoded:
        if seg.utterance_id in corpus:
            try:
                seg.check(corpus[seg.utterance_id].n_frames)
            except errors.SegmentationError as e:
                problems.append(str(e))

    if problems:
        raise errors.DataError("decode doesn't match the corpus:\n  " + "\n  ".join(problems))


def mapping_matrix(decoded, corpus):
    """
    Cross-tabulates aligned truth words against decoded clusters frame by frame.

    Frames outside every aligned word are not counted.

    :param list decoded: :class:`Segmentation` of every utterance.
    :param Corpus corpus: Corpus with word alignments.
    :return: MappingMatrix
    """

    if not corpus.has_alignments:
        raise errors.GroundTruthError("corpus has no word alignments")

    _check_decode(decoded, corpus)

    truth_labels = sorted({w.token for words in corpus.alignments.values() for w in words})
    cluster_ids = sorted({c for seg in decoded for c in seg.clusters})
    row_of = {label: i for i, label in enumerate(truth_labels)}
    col_of = {c: j for j, c in enumerate(cluster_ids)}

    counts = np.zeros((len(truth_labels), len(cluster_ids)), dtype=np.int64)
    for seg in decoded:
        n_frames = corpus[seg.utterance_id].n_frames
        words = corpus.alignments.get(seg.utterance_id, [])

        truth = _frame_labels(n_frames, [(w.start_frame, w.end_frame) for w in words],
                              [row_of[w.token] for w in words])
        hyp = _frame_labels(n_frames, [(s, e) for s, e, _ in seg.spans], [col_of[c] for c in seg.clusters])

        labelled = truth >= 0
        np.add.at(counts, (truth[labelled], hyp[labelled]), 1)

    return MappingMatrix(counts, truth_labels, cluster_ids)


def _counts(G):
    counts = G.counts if isinstance(G, MappingMatrix) else np.asarray(G)
    if counts.size == 0 or counts.sum() <= 0:
        raise errors.DataError("mapping matrix is empty")

    return counts


def cluster_purity(G):
    """Share of frames whose cluster's majority truth type is their own truth type."""

    counts = _counts(G)

    return float(counts.max(axis=0).sum() / counts.sum())


def greedy_mapping(G):
    """
    One-to-one mapping of clusters to truth types.

    Every pair is visited by decreasing frame count (ties: smaller column, then smaller row) and accepted while
    both sides are free, so a free cluster still takes a free type it shares no frames with.

    :return: dict cluster id -> truth label
    """

    counts = _counts(G)
    if isinstance(G, MappingMatrix):
        truth_labels, cluster_ids = G.truth_labels, G.cluster_ids
    else:
        truth_labels, cluster_ids = list(range(counts.shape[0])), list(range(counts.shape[1]))

    pairs = sorted(np.ndindex(counts.shape), key=lambda ij: (-counts[ij], ij[1], ij[0]))

    mapped_rows = set()
    mapping = {}
    for i, j in pairs:
        cluster = cluster_ids[j]
        if i not in mapped_rows and cluster not in mapping:
            mapping[cluster] = truth_labels[i]
            mapped_rows.add(i)

    return mapping


def levenshtein_counts(ref, hyp):
    """
    Unit-cost alignment of a hypothesis against a reference.

    Ties in the backtrace prefer a match or substitution, then a deletion, then an insertion.

    :return: (substitutions, deletions, insertions)
    """

    n, m = len(ref), len(hyp)
    dp = np.zeros((n + 1, m + 1), dtype=np.int64)
    dp[:, 0] = np.arange(n + 1)
    dp[0, :] = np.arange(m + 1)

    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dp[i, j] = min(dp[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]), dp[i - 1, j] + 1, dp[i, j - 1] + 1)

    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i, j] == dp[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dp[i, j] == dp[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1

    return int(subs), dels, ins


WerReport = namedtuple("WerReport", ["wer", "substitutions", "deletions", "insertions", "n_tokens", "mapping"])


def unsupervised_wer(decoded, corpus, G):
    """
    Word error rate of the decoded cluster sequences after mapping clusters to truth types.

    Segments of unmapped clusters become a token that matches nothing, so surplus clusters count as errors.

    :return: WerReport
    """

    if not corpus.has_transcripts:
        raise errors.GroundTruthError("corpus has no transcripts")

    mapping = greedy_mapping(G)

    subs = dels = ins = n_tokens = 0
    for seg in decoded:
        ref = corpus.transcript(seg.utterance_id)
        hyp = [mapping.get(c, UNMAPPED) for c in seg.clusters]

        s, d, i = levenshtein_counts(ref, hyp)
        subs, dels, ins = subs + s, dels + d, ins + i
        n_tokens += len(ref)

    if n_tokens == 0:
        raise errors.GroundTruthError("transcripts are empty")

    return WerReport((subs + dels + ins) / n_tokens, subs, dels, ins, n_tokens, mapping)


def match_boundaries(proposed, reference, tolerance):
    """
    Greedy one-to-one matching in left-to-right order: each proposed boundary takes the leftmost free
    reference boundary within tolerance frames.

    :return: number of matches
    """

    reference = sorted(reference)
    used = [False] * len(reference)
    matches = 0

    for p in sorted(proposed):
        for n, r in enumerate(reference):
            if r - p > tolerance:
                break
            if not used[n] and abs(p - r) <= tolerance:
                used[n] = True
                matches += 1
                break

    return matches


def _prf(matches, n_proposed, n_reference):
    if n_proposed == 0 and n_reference == 0:
        return 1.0, 1.0, 1.0

    precision = matches / n_proposed if n_proposed else 0.0
    recall = matches / n_reference if n_reference else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    return precision, recall, f


def boundary_fscore(decoded_boundaries, truth_boundaries, tol_ms=40.0, frame_shift_ms=10.0):
    """
    Precision, recall and F-score of internal word boundaries.

    :param decoded_boundaries: Proposed boundary frames, or a dict utterance id -> frames.
    :param truth_boundaries: Reference boundary frames, or a dict utterance id -> frames.
    :param float tol_ms: A proposed boundary within this distance of a reference one is a hit.
    :param frame_shift_ms: Frame shift, or a dict utterance id -> frame shift.
    :return: (precision, recall, F)
    """

    if isinstance(decoded_boundaries, dict):
        ids = sorted(set(decoded_boundaries) | set(truth_boundaries))
        pairs = [(u, decoded_boundaries.get(u, []), truth_boundaries.get(u, [])) for u in ids]
    else:
        pairs = [(None, decoded_boundaries, truth_boundaries)]

    matches = n_proposed = n_reference = 0
    for utt_id, proposed, reference in pairs:
        shift = frame_shift_ms[utt_id] if isinstance(frame_shift_ms, dict) else frame_shift_ms

        matches += match_boundaries(proposed, reference, tol_ms / shift)
        n_proposed += len(proposed)
        n_reference += len(reference)

    return _prf(matches, n_proposed, n_reference)


def covering_clusters(sizes, threshold=0.9):
    """
    The fewest largest clusters whose share of tokens reaches threshold.

    :param dict sizes: cluster id -> token count.
    :return: list of cluster ids, largest first (ties by id)
    """

    ordered = sorted((c for c in sizes if sizes[c] > 0), key=lambda c: (-sizes[c], c))
    total = sum(sizes[c] for c in ordered)
    if total == 0:
        return []

    covered = 0
    for n, c in enumerate(ordered):
        covered += sizes[c]
        if covered >= threshold * total - 1e-9:
            return ordered[:n + 1]

    return ordered


def clusters_covering(sizes, threshold=0.9):
    """
    Number of largest clusters covering threshold of all tokens.

    :param sizes: cluster sizes as a sequence or dict, or a :class:`MappingMatrix` (frame counts per column).
    """

    if isinstance(sizes, MappingMatrix):
        sizes = dict(zip(sizes.cluster_ids, sizes.counts.sum(axis=0).tolist()))
    elif not isinstance(sizes, dict):
        sizes = dict(enumerate(sizes))

    return len(covering_clusters(sizes, threshold))


def cluster_sizes(decoded):
    """dict cluster id -> number of segments"""

    return dict(Counter(c for seg in decoded for c in seg.clusters))


class MetricsReport(namedtuple("MetricsReport", METRIC_KEYS)):
    __slots__ = ()

    def to_dict(self):
        return {key: (float(v) if isinstance(v, float) else int(v)) for key, v in zip(METRIC_KEYS, self)}


def evaluate(decoded, corpus, *, tolerance_ms=40.0, coverage_threshold=0.9):
    """
    Scores one decode.

    :return: (MetricsReport, MappingMatrix)
    """

    G = mapping_matrix(decoded, corpus)
    wer = unsupervised_wer(decoded, corpus, G)

    truth = ground_truth_boundaries(corpus)
    proposed = {seg.utterance_id: seg.boundaries() for seg in decoded}
    shifts = {utt.utterance_id: utt.frame_shift_ms for utt in corpus}
    precision, recall, f = boundary_fscore(proposed, truth, tolerance_ms, shifts)

    report = MetricsReport(cluster_purity(G), wer.wer, wer.substitutions, wer.deletions, wer.insertions,
                           wer.n_tokens, precision, recall, f,
                           clusters_covering(cluster_sizes(decoded), coverage_threshold))

    return report, G


def summarize(reports):
    """
    Mean of every metric over chains, plus a per-metric standard deviation and the per-chain values.

    :param list reports: :class:`MetricsReport` per chain.
    :return: dict
    """

    values = np.array([[float(v) for v in report] for report in reports])

    summary = dict(zip(METRIC_KEYS, values.mean(axis=0).tolist()))
    summary["std"] = dict(zip(METRIC_KEYS, values.std(axis=0).tolist()))
    summary["chains"] = [report.to_dict() for report in reports]

    return summary
