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
seglex: unsupervised word segmentation and lexicon discovery from continuous feature sequences.

Utterances are embedded segment by segment into a fixed-dimensional space, a Bayesian GMM clusters the
embeddings into hypothesized word types, and a blocked Gibbs sampler jointly resamples the segmentation.
"""

import logging
import sys

__version__ = (0, 3, 1)

version_string = "{}.{}r{}".format(*__version__)

log = logging.getLogger("seglex")
log.setLevel(logging.DEBUG)
handler = logging.StreamHandler(sys.stderr)
handler.setLevel(logging.INFO)
handler.setFormatter(logging.Formatter("%(asctime)s:%(levelname)s:%(name)s: %(message)s"))
log.addHandler(handler)

from seglex import errors  # noqa: E402
from seglex.corpus import (  # noqa: E402
    Corpus, FrameSequence, SegmentConstraints, SegmentSpan, candidate_segments, ground_truth_boundaries,
    load_corpus, write_corpus,
)
from seglex.dtw import cosine_distance, dtw_cost  # noqa: E402
from seglex.embed import (  # noqa: E402
    EmbeddingCache, EmbeddingModel, embed_raw, finalize_embedding, precompute_cache, rbf_kernel, train_eigenmaps,
)
from seglex.acoustic_model import GmmHyper, GmmState  # noqa: E402
from seglex.segmenter import Lattice, Segmentation, Sampler, run_sampler  # noqa: E402
from seglex.pipeline import run_pipeline  # noqa: E402
from seglex.synth import SynthSpec, generate  # noqa: E402


def set_verbosity(level):
    """
    Sets the level of the package's stderr handler.

    :param int level: A :mod:`logging` level, e.g. ``logging.DEBUG``.
    """

    handler.setLevel(level)
