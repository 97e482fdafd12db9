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
Dynamic time warping with cosine frame distance.

Costs are accumulated over monotone paths with the symmetric step pattern (1, 0), (0, 1), (1, 1) and unit
weights, then divided by the number of nodes on the path. Among paths of equal cost the shortest is taken.
"""

from concurrent.futures import ThreadPoolExecutor

import numba as nb
import numpy as np

from seglex import errors


def cosine_distance(a, b):
    """
    1 - cos(a, b), in [0, 2].

    A zero vector is at distance 1 from any nonzero vector and at distance 0 from another zero vector.
    """

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    na = np.linalg.norm(a)
    nb_ = np.linalg.norm(b)

    if na == 0 or nb_ == 0:
        return 0.0 if na == nb_ else 1.0

    return float(min(2.0, max(0.0, 1.0 - np.dot(a, b) / (na * nb_))))


def _unit_rows(frames):
    frames = np.asarray(frames, dtype=np.float64)
    norms = np.linalg.norm(frames, axis=1)
    zero = norms == 0

    return frames / np.where(zero, 1.0, norms)[:, None], zero


def frame_distances(Y1, Y2):
    """Matrix of cosine distances between the frames of Y1 (rows) and Y2 (columns)."""

    A, zero_a = _unit_rows(Y1)
    B, zero_b = _unit_rows(Y2)

    dist = 1.0 - A @ B.T
    np.clip(dist, 0.0, 2.0, out=dist)
    dist[np.ix_(zero_a, zero_b)] = 0.0

    return dist


@nb.njit(cache=True, nogil=True)
def _accumulate(dist):
    n, m = dist.shape
    cost = np.empty((n, m))
    length = np.empty((n, m), dtype=np.int64)

    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                cost[0, 0] = dist[0, 0]
                length[0, 0] = 1
                continue

            best = np.inf
            best_len = 0

            if i > 0 and j > 0:
                best = cost[i - 1, j - 1]
                best_len = length[i - 1, j - 1]
            if i > 0:
                c = cost[i - 1, j]
                if c < best or (c == best and length[i - 1, j] < best_len):
                    best = c
                    best_len = length[i - 1, j]
            if j > 0:
                c = cost[i, j - 1]
                if c < best or (c == best and length[i, j - 1] < best_len):
                    best = c
                    best_len = length[i, j - 1]

            cost[i, j] = best + dist[i, j]
            length[i, j] = best_len + 1

    return cost[n - 1, m - 1] / length[n - 1, m - 1]


@nb.njit(cache=True, nogil=True)
def _accumulate_many(dist, offsets):
    out = np.empty(offsets.shape[0] - 1)

    for r in range(offsets.shape[0] - 1):
        out[r] = _accumulate(dist[:, offsets[r]:offsets[r + 1]])

    return out


@nb.njit(cache=True, nogil=True)
def _accumulate_spans(dist, offsets, starts, ends):
    out = np.empty((starts.shape[0], offsets.shape[0] - 1))

    for k in range(starts.shape[0]):
        out[k] = _accumulate_many(dist[starts[k]:ends[k]], offsets)

    return out


def dtw_cost(Y1, Y2):
    """
    Path-length normalized DTW alignment cost between two frame sequences.

    :param Y1: n x F array
    :param Y2: m x F array
    :return: float in [0, 2]
    """

    if len(Y1) == 0 or len(Y2) == 0:
        raise errors.DataError("can't align an empty sequence")

    return float(_accumulate(frame_distances(Y1, Y2)))


class DtwBank(object):
    """
    A fixed list of sequences that queries are aligned against all at once.

    The bank's frames are normalized and concatenated so that one matrix product yields the frame distances
    to every member; the accumulation then runs per member on column slices.

    :param list sequences: Frame sequences (n_i x F arrays).
    """

    __slots__ = ["frames", "zero", "offsets"]

    def __init__(self, sequences):
        if not sequences:
            raise errors.DataError("DTW bank needs at least one sequence")
        if any(len(s) == 0 for s in sequences):
            raise errors.DataError("can't align an empty sequence")

        self.frames, self.zero = _unit_rows(np.concatenate([np.asarray(s, dtype=np.float64) for s in sequences]))
        self.offsets = np.concatenate([[0], np.cumsum([len(s) for s in sequences])]).astype(np.int64)

    def __len__(self):
        return len(self.offsets) - 1

    def distances(self, Y):
        """Frame distances of Y (rows) against the concatenated frames of every member (columns)."""

        A, zero_a = _unit_rows(Y)

        dist = 1.0 - A @ self.frames.T
        np.clip(dist, 0.0, 2.0, out=dist)
        dist[np.ix_(zero_a, self.zero)] = 0.0

        return dist

    def accumulate(self, dist):
        """
        DTW costs from a block of rows of :meth:`distances`.

        Rows [s, e) of the distances of a whole utterance give the costs of its segment [s, e), so the matrix
        product is done once per utterance rather than once per segment.
        """

        if len(dist) == 0:
            raise errors.DataError("can't align an empty sequence")

        return _accumulate_many(np.ascontiguousarray(dist), self.offsets)

    def span_costs(self, dist, starts, ends):
        """
        Costs of many segments of one utterance against every member, from the utterance's :meth:`distances`.

        All segments go through a single compiled call, so worker threads embedding different utterances
        hold the GIL only between utterances.

        :return: len(starts) x len(bank) array
        """

        starts = np.asarray(starts, dtype=np.int64)
        ends = np.asarray(ends, dtype=np.int64)
        if np.any(ends <= starts) or np.any(starts < 0) or np.any(ends > len(dist)):
            raise errors.DataError("segment spans must be non-empty and lie within the distance rows")

        return _accumulate_spans(np.ascontiguousarray(dist), self.offsets, starts, ends)

    def costs(self, Y):
        """DTW cost of Y against every member, as a 1-D array."""

        if len(Y) == 0:
            raise errors.DataError("can't align an empty sequence")

        return self.accumulate(self.distances(Y))

    def pairwise(self, sequences, *, threads=1):
        """Cost matrix of sequences (rows) against the bank (columns)."""

        with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
            rows = list(executor.map(self.costs, sequences))

        return np.vstack(rows)


def dtw_matrix(sequences, *, threads=1):
    """Symmetric matrix of pairwise DTW costs."""

    costs = DtwBank(sequences).pairwise(sequences, threads=threads)

    return (costs + costs.T) / 2.0
