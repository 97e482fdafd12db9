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
Acoustic word embeddings.

A Laplacian eigenmap is trained on a reference set of segments using a DTW based RBF kernel; any other
segment is projected with the kernel out-of-sample extension h_j(Y) = sum_i alpha_ij K(Y_i, Y), jittered and
scaled to the unit sphere. All candidate segments of a corpus are embedded up front into an
:class:`EmbeddingCache`.
"""

import logging
import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg
from sklearn.neighbors import kneighbors_graph
from tqdm import tqdm

from seglex import errors
from seglex.corpus import SegmentSpan, corpus_candidates
from seglex.dtw import DtwBank
from seglex.util import make_rng

log = logging.getLogger("seglex")

CACHE_MAGIC = b"SBEC"
CACHE_VERSION = 1

GRAM_JITTER = 1e-8

_cache_header = struct.Struct("<4sIQI")


def rbf_kernel(cost, sigma_k):
    """
    exp(-cost^2 / (2 sigma_k^2)) for a scalar or an array of DTW costs.

    :param cost: DTW cost(s)
    :param float sigma_k: Kernel width, > 0.
    """

    if not sigma_k > 0:
        raise errors.ConfigError("kernel width must be positive, got {}".format(sigma_k))

    values = np.exp(-np.square(np.asarray(cost, dtype=np.float64)) / (2.0 * sigma_k ** 2))

    return float(values) if values.ndim == 0 else values


class EmbeddingModel(object):
    """
    A trained eigenmap projection.

    :param list reference: Reference segments, each an n_i x F array.
    :param numpy.ndarray coefficients: N_ref x D projection coefficients.
    :keyword float kernel_width: sigma_K of the RBF kernel.
    :keyword float regularizer: xi used in training.
    :keyword int knn: Neighbourhood size used in training.
    :keyword float jitter_scale: Noise std as a fraction of sigma_e.
    :keyword float sigma_e: Standard deviation of raw embedding values, set by :func:`calibrate_sigma_e`.
    :keyword list reference_spans: Where the reference segments came from, if known.
    """

    def __init__(self, reference, coefficients, *, kernel_width, regularizer=0.0, knn=1, jitter_scale=0.05,
                 sigma_e=None, reference_spans=None, eigenvalues=None):
        coefficients = np.asarray(coefficients, dtype=np.float64)

        if coefficients.ndim != 2 or coefficients.shape[0] != len(reference):
            raise errors.ConfigError("coefficients must have one row per reference segment")
        if coefficients.shape[1] > len(reference):
            raise errors.ConfigError("embedding dimension exceeds the reference set size")
        if not kernel_width > 0:
            raise errors.ConfigError("kernel width must be positive, got {}".format(kernel_width))

        self.reference = [np.asarray(r, dtype=np.float64) for r in reference]
        self.coefficients = coefficients
        self.kernel_width = float(kernel_width)
        self.regularizer = float(regularizer)
        self.knn = int(knn)
        self.jitter_scale = float(jitter_scale)
        self.sigma_e = sigma_e
        self.reference_spans = list(reference_spans) if reference_spans is not None else None
        self.eigenvalues = eigenvalues

        self.bank = DtwBank(self.reference)

    @property
    def dim(self):
        return self.coefficients.shape[1]

    @property
    def n_ref(self):
        return len(self.reference)

    def __repr__(self):
        return "<EmbeddingModel N_ref={} D={} sigma_K={}>".format(self.n_ref, self.dim, self.kernel_width)

    def kernel_row(self, Y):
        """Kernel values of Y against every reference segment."""

        return rbf_kernel(self.bank.costs(Y), self.kernel_width)

    def embed_raw(self, Y):
        return self.kernel_row(Y) @ self.coefficients


def embed_raw(model, Y):
    """
    Out-of-sample projection of a segment, before jitter and normalization.

    :param EmbeddingModel model: Trained model.
    :param Y: n x F frames, n >= 1.
    :return: D-vector
    """

    if len(Y) == 0:
        raise errors.DataError("can't embed an empty segment")

    return model.embed_raw(Y)


def finalize_embedding(raw, sigma_e, jitter_scale, rng):
    """
    Adds zero-mean Gaussian noise with std jitter_scale * sigma_e and scales to unit norm.

    :param raw: D-vector from :func:`embed_raw`.
    :param float sigma_e: Sample std of raw embedding values, >= 0.
    :param float jitter_scale: Noise std relative to sigma_e.
    :param numpy.random.Generator rng: Noise source.
    :return: unit-norm D-vector
    """

    if sigma_e < 0:
        raise errors.ConfigError("sigma_e must be non-negative, got {}".format(sigma_e))

    raw = np.asarray(raw, dtype=np.float64)
    std = jitter_scale * sigma_e

    for _ in range(2):
        x = raw + rng.normal(0.0, std, size=raw.shape) if std > 0 else raw.copy()
        norm = np.linalg.norm(x)

        if norm > 0:
            return x / norm

    raise errors.NumericalError("embedding is the zero vector after jitter")


def gram_eigen(gram):
    """
    Eigen-decomposition of a symmetric Gram matrix projected onto the positive semi-definite cone.

    DTW based kernels are not positive semi-definite in general, so negative eigenvalues are clipped to zero.
    A singular result gets GRAM_JITTER added to every eigenvalue, i.e. K + GRAM_JITTER I.

    :return: (eigenvalues, eigenvectors), eigenvalues ascending and all positive
    """

    try:
        values, vectors = scipy.linalg.eigh(gram)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise errors.EigenSolverError("can't decompose the Gram matrix: {}".format(e))

    if not np.all(np.isfinite(values)) or values[-1] <= 0:
        raise errors.EigenSolverError("Gram matrix has no positive eigenvalue")

    if values[0] < -GRAM_JITTER:
        log.warning("Gram matrix is indefinite (smallest eigenvalue {:.4g}), clipping {} negative eigenvalue(s)"
                    .format(values[0], int(np.sum(values < 0))))
    values = np.clip(values, 0.0, None)

    if values[0] < GRAM_JITTER:
        log.warning("Gram matrix is singular, adding {} to the diagonal".format(GRAM_JITTER))
        values = values + GRAM_JITTER

    return values, vectors


def normalized_laplacian(weights):
    """I - Deg^(-1/2) W Deg^(-1/2); isolated nodes get an identity row."""

    degree = weights.sum(axis=1)
    scale = np.where(degree > 0, 1.0 / np.sqrt(np.where(degree > 0, degree, 1.0)), 0.0)

    return np.eye(len(weights)) - scale[:, None] * weights * scale[None, :], degree


def knn_weights(costs, gram, knn):
    """Kernel-weighted k-NN graph over a DTW cost matrix, symmetrized by union."""

    k = min(knn, len(costs) - 1)
    adjacency = kneighbors_graph(costs, n_neighbors=k, mode="connectivity", metric="precomputed",
                                 include_self=False).toarray() > 0
    adjacency |= adjacency.T

    return np.where(adjacency, gram, 0.0)


def train_eigenmaps(reference, knn=30, sigma_k=0.04, xi=2.0, dim=11, *, jitter_scale=0.05, reference_spans=None,
                    threads=1):
    """
    Trains the eigenmap projection by solving (L K + xi I) alpha = lambda K alpha.

    With beta = K alpha this is the symmetric problem (L + xi K^-1) beta = lambda beta, where beta holds the
    embedding of the reference set itself. K is first projected onto the positive semi-definite cone, see
    :func:`gram_eigen`. The eigenvector closest to the constant direction Deg^(1/2) 1 is
    skipped among the dim + 1 smallest; the next dim give the coefficients. Every coefficient column is
    scaled so the embedded reference set has unit variance, and signed so its first nonzero entry is
    positive.

    :param list reference: N_ref frame sequences.
    :return: EmbeddingModel
    """

    n_ref = len(reference)

    if dim < 1 or dim + 1 > n_ref:
        raise errors.ConfigError("embedding dimension {} needs at least {} reference segments, got {}".format(
            dim, dim + 1, n_ref))
    if any(len(r) == 0 for r in reference):
        raise errors.DataError("reference set contains an empty segment")

    log.info("training eigenmaps on {} reference segments (D={}, k={}, sigma_K={}, xi={})".format(
        n_ref, dim, knn, sigma_k, xi))

    bank = DtwBank(reference)
    costs = bank.pairwise(reference, threads=threads)
    costs = (costs + costs.T) / 2.0

    gram = rbf_kernel(costs, sigma_k)
    np.fill_diagonal(gram, 1.0)

    laplacian, degree = normalized_laplacian(knn_weights(costs, gram, knn))
    gram_values, gram_vectors = gram_eigen(gram)

    gram_inv = (gram_vectors / gram_values) @ gram_vectors.T
    system = laplacian + xi * gram_inv
    system = (system + system.T) / 2.0

    try:
        eigenvalues, beta = scipy.linalg.eigh(system, subset_by_index=[0, dim])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise errors.EigenSolverError("eigen-solve failed: {}".format(e))

    constant = np.sqrt(degree) if np.any(degree > 0) else np.ones(n_ref)
    constant = constant / np.linalg.norm(constant)
    trivial = int(np.argmax(np.abs(constant @ beta)))
    keep = [j for j in range(dim + 1) if j != trivial]

    eigenvalues = eigenvalues[keep]
    beta = beta[:, keep]
    coefficients = gram_vectors @ ((gram_vectors.T @ beta) / gram_values[:, None])

    spread = (gram @ coefficients).std(axis=0)
    for j in range(dim):
        if spread[j] > 0:
            coefficients[:, j] /= spread[j]
        else:
            log.warning("embedding dimension {} has zero variance on the reference set".format(j))

        nonzero = np.flatnonzero(np.abs(coefficients[:, j]) > 1e-12 * np.max(np.abs(coefficients[:, j])))
        if len(nonzero) and coefficients[nonzero[0], j] < 0:
            coefficients[:, j] = -coefficients[:, j]

    log.debug("eigenvalues: {}".format(np.round(eigenvalues, 6).tolist()))

    return EmbeddingModel(reference, coefficients, kernel_width=sigma_k, regularizer=xi, knn=knn,
                          jitter_scale=jitter_scale, reference_spans=reference_spans, eigenvalues=eigenvalues)


def calibrate_sigma_e(model, corpus, constraints, rng, *, n_samples=2000):
    """
    Sets model.sigma_e to the sample std of all coordinates of raw embeddings.

    :keyword int n_samples: Number of candidate segments drawn uniformly without replacement. 0 or None uses
                            every candidate.
    :return: float
    """

    spans = corpus_candidates(corpus, constraints)

    if n_samples and n_samples < len(spans):
        picks = rng.choice(len(spans), size=n_samples, replace=False)
        spans = [spans[i] for i in np.sort(picks)]

    values = np.concatenate([model.embed_raw(corpus[s.utterance_id].segment(s.start, s.end)) for s in spans])
    model.sigma_e = float(values.std(ddof=1)) if len(values) > 1 else 0.0

    log.info("sigma_E = {:.6g} over {} segments".format(model.sigma_e, len(spans)))

    return model.sigma_e


class EmbeddingCache(object):
    """
    Unit-norm embeddings of every candidate segment, grouped by utterance.

    Vectors are kept as float64 in memory; the cache file stores float32.
    """

    def __init__(self, dim):
        self.dim = int(dim)

        self._entries = {}
        self._lookup = {}

    def __len__(self):
        return sum(len(starts) for starts, _, _ in self._entries.values())

    def __contains__(self, span):
        return (span.start, span.end) in self._lookup.get(span.utterance_id, {})

    def __getitem__(self, span):
        try:
            row = self._lookup[span.utterance_id][(span.start, span.end)]
        except KeyError:
            raise errors.CacheError("no cached embedding for {}".format(tuple(span)))

        return self._entries[span.utterance_id][2][row]

    @property
    def utterance_ids(self):
        return list(self._entries)

    def add_utterance(self, utterance_id, starts, ends, vectors):
        vectors = np.asarray(vectors, dtype=np.float64).reshape(len(starts), self.dim)

        self._entries[utterance_id] = (np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64),
                                       vectors)
        self._lookup[utterance_id] = {(int(s), int(e)): i for i, (s, e) in enumerate(zip(starts, ends))}

    def entries(self, utterance_id):
        """(starts, ends, vectors) of one utterance."""

        try:
            return self._entries[utterance_id]
        except KeyError:
            raise errors.CacheError("no cached embeddings for utterance {}".format(utterance_id))

    def spans(self):
        for utt_id, (starts, ends, _) in self._entries.items():
            for s, e in zip(starts, ends):
                yield SegmentSpan(utt_id, int(s), int(e))

    def check_covers(self, corpus):
        missing = [utt.utterance_id for utt in corpus if utt.utterance_id not in self._entries]
        if missing:
            raise errors.CacheError("cache has no embeddings for {} utterance(s): {}".format(
                len(missing), ", ".join(missing[:10])))

    def save(self, path):
        with open(path, "wb") as f:
            f.write(_cache_header.pack(CACHE_MAGIC, CACHE_VERSION, len(self), self.dim))

            for utt_id, (starts, ends, vectors) in self._entries.items():
                name = utt_id.encode("utf-8")
                prefix = struct.pack("<H", len(name)) + name
                values = vectors.astype("<f4")

                for i in range(len(starts)):
                    f.write(prefix)
                    f.write(struct.pack("<II", starts[i], ends[i]))
                    f.write(values[i].tobytes())

    @classmethod
    def load(cls, path):
        try:
            with open(path, "rb") as f:
                data = f.read()
        except OSError as e:
            raise errors.CacheError("can't read cache {}: {}".format(path, e))

        if len(data) < _cache_header.size:
            raise errors.CacheError("{}: truncated header".format(path))

        magic, version, count, dim = _cache_header.unpack_from(data)
        if magic != CACHE_MAGIC or version != CACHE_VERSION:
            raise errors.CacheError("{}: not a version {} embedding cache".format(path, CACHE_VERSION))

        grouped = {}
        offset = _cache_header.size
        try:
            for _ in range(count):
                (length,) = struct.unpack_from("<H", data, offset)
                utt_id = data[offset + 2:offset + 2 + length].decode("utf-8")
                offset += 2 + length

                start, end = struct.unpack_from("<II", data, offset)
                offset += 8

                vector = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
                offset += 4 * dim

                group = grouped.setdefault(utt_id, ([], [], []))
                group[0].append(start)
                group[1].append(end)
                group[2].append(vector)
        except (struct.error, ValueError, UnicodeDecodeError) as e:
            raise errors.CacheError("{}: corrupt entry ({})".format(path, e))

        if offset != len(data):
            raise errors.CacheError("{}: {} trailing bytes".format(path, len(data) - offset))

        cache = cls(dim)
        for utt_id, (starts, ends, vectors) in grouped.items():
            cache.add_utterance(utt_id, starts, ends, np.array(vectors, dtype=np.float64).reshape(len(starts), dim))

        return cache


def _embed_utterance(model, utt, constraints, seed):
    spans = constraints.candidates(utt)
    starts, ends = [s.start for s in spans], [s.end for s in spans]

    costs = model.bank.span_costs(model.bank.distances(utt.frames), starts, ends)
    raw = rbf_kernel(costs, model.kernel_width) @ model.coefficients

    vectors = np.empty((len(spans), model.dim))
    for i, span in enumerate(spans):
        rng = make_rng(seed, "embedding", span.utterance_id, span.start, span.end)
        vectors[i] = finalize_embedding(raw[i], model.sigma_e, model.jitter_scale, rng)

    return starts, ends, vectors


def precompute_cache(model, corpus, constraints, seed, *, threads=1, progress=False):
    """
    Embeds every candidate segment of the corpus.

    Each segment draws its jitter from its own generator, derived from (seed, utterance id, start, end), so the
    cache is identical for any thread count.

    :return: EmbeddingCache
    """

    if model.sigma_e is None:
        raise errors.NumericalError("sigma_E must be calibrated before building the cache")

    cache = EmbeddingCache(model.dim)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = executor.map(lambda utt: _embed_utterance(model, utt, constraints, seed), corpus)

        for utt, (starts, ends, vectors) in tqdm(zip(corpus, results), total=len(corpus), desc="embedding",
                                                 disable=not progress):
            cache.add_utterance(utt.utterance_id, starts, ends, vectors)

    log.info("cached {} embeddings for {} utterances".format(len(cache), len(corpus)))

    return cache
