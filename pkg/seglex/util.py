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

import csv
import hashlib
import json
import os
from math import ceil as _ceil

import numpy as np

ceil = lambda x: int(_ceil(x))

_MASK64 = (1 << 64) - 1


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64

    return x ^ (x >> 31)


def _as_word(part):
    if isinstance(part, str):
        return int.from_bytes(hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest(), "little")

    return int(part) & _MASK64


def derive_seed(*parts):
    """
    Derives a 64 bit seed from a sequence of ints and strings with a splitmix64 chain.

    The result only depends on the values of the parts, never on the process or platform, so streams derived
    from (master seed, utterance id, start, end) are stable across runs and thread counts.

    :param parts: ints or strings
    :return: int in [0, 2**64)
    """

    state = 0
    for part in parts:
        state = _splitmix64(state ^ _as_word(part))

    return state


def make_rng(*parts):
    """Returns a :class:`numpy.random.Generator` seeded with :func:`derive_seed` of parts."""

    return np.random.default_rng(derive_seed(*parts))


def sample_log_categorical(log_weights, rng):
    """
    Draws an index with probability proportional to exp(log_weights).

    :param numpy.ndarray log_weights: Unnormalized log weights, -inf allowed.
    :param numpy.random.Generator rng: Generator to draw from.
    :return: int
    """

    log_weights = np.asarray(log_weights, dtype=np.float64)
    top = np.max(log_weights)

    if not np.isfinite(top):
        raise ValueError("all weights are zero or not finite")

    cdf = np.cumsum(np.exp(log_weights - top))
    u = rng.random() * cdf[-1]

    return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)

    return path
