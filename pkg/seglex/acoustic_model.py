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
Bayesian Gaussian mixture with a symmetric Dirichlet prior on the weights and a fixed spherical covariance.

Mixture weights and component means are integrated out; the state only keeps per-component counts and sums of
the embeddings assigned to them, which is all the collapsed Gibbs conditionals need. Probabilities are
handled in log space throughout.
"""

import logging

import numpy as np
from scipy.special import gammaln, logsumexp

from seglex import errors
from seglex.corpus import SegmentSpan
from seglex.util import read_json, sample_log_categorical, write_json

log = logging.getLogger("seglex")

LOG_2PI = np.log(2.0 * np.pi)


class GmmHyper(object):
    """
    Hyperparameters of the acoustic model.

    :param int components: Maximum number of components K.
    :param float a: Dirichlet concentration, the prior is Dir(a/K 1).
    :param mu0: Prior mean of the component means, a D-vector.
    :param float sigma0_sq: Prior variance of the component means.
    :param float sigma_sq: Fixed variance of every component.
    """

    __slots__ = ["components", "a", "mu0", "sigma0_sq", "sigma_sq"]

    def __init__(self, components, a, mu0, sigma0_sq, sigma_sq):
        problems = []
        if int(components) < 1:
            problems.append("components must be >= 1")
        if not a > 0:
            problems.append("a must be > 0")
        if not sigma0_sq > 0:
            problems.append("sigma0_sq must be > 0")
        if not sigma_sq > 0:
            problems.append("sigma_sq must be > 0")
        if problems:
            raise errors.ConfigError("invalid GMM hyperparameters: " + "; ".join(problems))

        self.components = int(components)
        self.a = float(a)
        self.mu0 = np.asarray(mu0, dtype=np.float64).ravel()
        self.sigma0_sq = float(sigma0_sq)
        self.sigma_sq = float(sigma_sq)

    @classmethod
    def from_kappa(cls, components, dim, *, a=1.0, sigma_sq=0.005, kappa0=0.05):
        """Zero prior mean and sigma0_sq = sigma_sq / kappa0."""

        if not kappa0 > 0:
            raise errors.ConfigError("kappa0 must be > 0")

        return cls(components, a, np.zeros(dim), sigma_sq / kappa0, sigma_sq)

    @property
    def dim(self):
        return len(self.mu0)

    def __repr__(self):
        return "<GmmHyper K={} a={} sigma_sq={} sigma0_sq={}>".format(
            self.components, self.a, self.sigma_sq, self.sigma0_sq)

    def to_dict(self):
        return {
            "components": self.components,
            "a": self.a,
            "mu0": self.mu0.tolist(),
            "sigma0_sq": self.sigma0_sq,
            "sigma_sq": self.sigma_sq,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["components"], data["a"], data["mu0"], data["sigma0_sq"], data["sigma_sq"])


class GmmState(object):
    """
    Sufficient statistics of the collapsed mixture.

    Items are identified by a hashable key (the sampler uses :class:`SegmentSpan`). Sums are updated
    incrementally and recomputed from the members every ``RECOMPUTE_EVERY`` mutations; an emptied component's
    sum is reset to exactly zero.

    :param GmmHyper hyper: Hyperparameters.
    """

    RECOMPUTE_EVERY = 1000

    def __init__(self, hyper):
        self.hyper = hyper

        self.counts = np.zeros(hyper.components, dtype=np.int64)
        self.sums = np.zeros((hyper.components, hyper.dim))
        self.n_total = 0

        self._members = {}
        self._next_key = 0
        self._mutations = 0

    def __len__(self):
        return self.n_total

    def __contains__(self, key):
        return key in self._members

    @property
    def components(self):
        return self.hyper.components

    @property
    def assignments(self):
        """dict item key -> component id"""

        return {key: k for key, (k, _) in self._members.items()}

    @property
    def n_occupied(self):
        return int(np.count_nonzero(self.counts))

    def component_of(self, key):
        return self._members[key][0]

    def members(self, k):
        """(key, embedding) pairs currently assigned to component k."""

        return [(key, x) for key, (kk, x) in self._members.items() if kk == k]

    # mutation

    def _mutated(self):
        self._mutations += 1

        if self._mutations % self.RECOMPUTE_EVERY == 0:
            self.recompute()

    def add(self, k, x, key=None):
        """
        Assigns embedding x to component k.

        :return: the item key (generated when not given)
        """

        if key is None:
            key = ("item", self._next_key)
            self._next_key += 1
        elif key in self._members:
            raise errors.AcousticModelError("{} is already assigned".format(key))

        x = np.asarray(x, dtype=np.float64)

        self.counts[k] += 1
        self.sums[k] += x
        self.n_total += 1
        self._members[key] = (k, x)

        self._mutated()

        return key

    def remove(self, k, x, key=None):
        """
        Removes embedding x from component k.

        When no key is given the first member of k equal to x is removed.
        """

        if self.counts[k] == 0:
            raise errors.AcousticModelError("can't remove from empty component {}".format(k))

        if key is None:
            key = next((kk for kk, (c, v) in self._members.items() if c == k and np.array_equal(v, x)), None)
        if key not in self._members or self._members[key][0] != k:
            raise errors.AcousticModelError("{} is not assigned to component {}".format(key, k))

        x = self._members.pop(key)[1]

        self.counts[k] -= 1
        self.n_total -= 1
        if self.counts[k] == 0:
            self.sums[k] = 0.0
        else:
            self.sums[k] -= x

        self._mutated()

    def remove_item(self, key):
        k, x = self._members[key]
        self.remove(k, x, key)

        return k

    def recompute(self):
        """Rebuilds counts and sums from the members; returns the largest absolute drift of the sums."""

        counts = np.zeros_like(self.counts)
        sums = np.zeros_like(self.sums)
        for k, x in self._members.values():
            counts[k] += 1
            sums[k] += x

        drift = float(np.max(np.abs(sums - self.sums))) if len(sums) else 0.0

        self.counts = counts
        self.sums = sums
        self.n_total = int(counts.sum())

        return drift

    def check_integrity(self, tolerance=1e-8):
        """Raises :class:`errors.AcousticModelError` if the statistics disagree with the members."""

        counts = np.zeros_like(self.counts)
        sums = np.zeros_like(self.sums)
        for k, x in self._members.values():
            counts[k] += 1
            sums[k] += x

        if not np.array_equal(counts, self.counts) or int(self.counts.sum()) != self.n_total:
            raise errors.AcousticModelError("component counts are out of sync with assignments")
        if np.max(np.abs(sums - self.sums), initial=0.0) > tolerance:
            raise errors.AcousticModelError("component sums drifted by more than {}".format(tolerance))

    # scoring

    def _effective(self, exclude):
        counts = self.counts.astype(np.float64)
        sums = self.sums

        if exclude is not None:
            try:
                k, x = self._members[exclude]
            except KeyError:
                raise errors.AcousticModelError("{} is not assigned".format(exclude))

            counts = counts.copy()
            counts[k] -= 1
            sums = sums.copy()
            sums[k] -= x

        return counts, sums

    def log_prior_all(self, exclude=None):
        """log P(z = k | other assignments) for every k."""

        hyper = self.hyper
        counts, _ = self._effective(exclude)
        denominator = self.n_total + hyper.a - (1.0 if exclude is not None else 0.0)

        return np.log(counts + hyper.a / hyper.components) - np.log(denominator)

    def log_prior_z(self, k, exclude=None):
        return float(self.log_prior_all(exclude)[k])

    def posterior_params(self, exclude=None):
        """Posterior mean (K x D) and variance (K) of every component mean."""

        hyper = self.hyper
        counts, sums = self._effective(exclude)

        var_n = hyper.sigma_sq * hyper.sigma0_sq / (counts * hyper.sigma0_sq + hyper.sigma_sq)
        mu_n = var_n[:, None] * (hyper.mu0[None, :] / hyper.sigma0_sq + sums / hyper.sigma_sq)

        return mu_n, var_n

    def log_predictive_matrix(self, X, exclude=None):
        """log p(x | component k) for every row x of X and every k, as an n x K matrix."""

        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        mu_n, var_n = self.posterior_params(exclude)
        var = var_n + self.hyper.sigma_sq

        sq = np.sum(np.square(X[:, None, :] - mu_n[None, :, :]), axis=2)

        return -0.5 * self.hyper.dim * (LOG_2PI + np.log(var))[None, :] - sq / (2.0 * var[None, :])

    def log_post_predictive(self, k, x, exclude=None):
        return float(self.log_predictive_matrix(x, exclude)[0, k])

    def log_marginal(self, x, exclude=None):
        """log sum_k P(z = k) p(x | k), the density of x under the mixture."""

        return float(logsumexp(self.log_prior_all(exclude) + self.log_predictive_matrix(x, exclude)[0]))

    def log_marginal_batch(self, X):
        """:meth:`log_marginal` of every row of X, without exclusion."""

        return logsumexp(self.log_prior_all()[None, :] + self.log_predictive_matrix(X), axis=1)

    def sample_assignment(self, x, rng, key=None):
        """
        Draws a component for an unassigned embedding from the collapsed conditional and adds it.

        :return: component id
        """

        if key is not None and key in self._members:
            raise errors.AcousticModelError("{} is already assigned".format(key))

        log_weights = self.log_prior_all() + self.log_predictive_matrix(x)[0]
        k = sample_log_categorical(log_weights, rng)
        self.add(k, x, key)

        return k

    def log_joint(self):
        """
        log P(z) + sum_k log p(X_k): the collapsed joint density of the current assignments and embeddings.
        """

        hyper = self.hyper
        alpha_k = hyper.a / hyper.components

        log_pz = (gammaln(hyper.a) - gammaln(self.n_total + hyper.a)
                  + np.sum(gammaln(self.counts + alpha_k) - gammaln(alpha_k)))

        squares = np.zeros_like(self.sums)
        for k, x in self._members.values():
            squares[k] += np.square(x - hyper.mu0)

        n = self.counts.astype(np.float64)
        centred = self.sums - n[:, None] * hyper.mu0[None, :]
        spread = hyper.sigma_sq + n * hyper.sigma0_sq

        per_dim = (-0.5 * n[:, None] * np.log(2.0 * np.pi * hyper.sigma_sq)
                   + 0.5 * np.log(hyper.sigma_sq / spread)[:, None]
                   - squares / (2.0 * hyper.sigma_sq)
                   + hyper.sigma0_sq * np.square(centred) / (2.0 * hyper.sigma_sq * spread)[:, None])

        return float(log_pz + np.sum(per_dim))

    # snapshots

    def to_dict(self):
        assignments = []
        for key, (k, _) in self._members.items():
            assignments.append({"item": list(key) if isinstance(key, tuple) else key, "component": int(k)})

        return {
            "hyper": self.hyper.to_dict(),
            "counts": self.counts.tolist(),
            "sums": self.sums.tolist(),
            "assignments": assignments,
        }

    def save(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path, cache):
        """
        Restores a snapshot whose items are segment spans, taking their embeddings from the cache.
        """

        data = read_json(path)
        state = cls(GmmHyper.from_dict(data["hyper"]))

        for entry in data["assignments"]:
            span = SegmentSpan(*entry["item"])
            state.add(int(entry["component"]), cache[span], span)

        if state.counts.tolist() != data["counts"]:
            raise errors.AcousticModelError("snapshot counts disagree with its assignments")

        return state
