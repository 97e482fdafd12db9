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
The outer loop: embed with a reference set, sample segmentations, then rebuild the reference set from the
discovered clusters and start again.
"""

import dataclasses
import logging
import os
from collections import namedtuple

import numpy as np

from seglex import errors
from seglex.corpus import SegmentSpan, corpus_candidates
from seglex.embed import calibrate_sigma_e, precompute_cache, train_eigenmaps
from seglex.evaluation import cluster_sizes, covering_clusters, evaluate, summarize
from seglex.segmenter import run_sampler, save_decode
from seglex.util import derive_seed, ensure_dir, make_rng, read_json, write_csv, write_json

log = logging.getLogger("seglex")

IterationResult = namedtuple("IterationResult", ["iteration", "reference_spans", "model", "cache", "result",
                                                 "metrics"])

SWEEP_HEADER = ["components", "sigma_sq", "chain", "wer", "purity", "boundary_f", "clusters_covering_90pct"]


def initial_reference_set(corpus, n_ref, constraints, rng):
    """
    n_ref candidate segments drawn uniformly without replacement, or with replacement when the corpus has
    fewer candidates.

    :return: list of :class:`SegmentSpan`
    """

    spans = corpus_candidates(corpus, constraints)
    if not spans:
        raise errors.CorpusError("corpus has no candidate segments")

    return _draw(spans, n_ref, rng)


def _draw(spans, n, rng):
    if n <= 0:
        return []

    picks = rng.choice(len(spans), size=n, replace=n > len(spans))

    return [spans[i] for i in np.sort(picks)]


def apportion(sizes, total):
    """
    Splits total proportionally to sizes by the largest remainder method; earlier entries win ties.

    :return: list of ints summing to total (or to 0 when sizes sum to 0)
    """

    weight = sum(sizes)
    if weight == 0:
        return [0] * len(sizes)

    exact = [total * s / weight for s in sizes]
    shares = [int(np.floor(x)) for x in exact]

    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - shares[i]), i))
    for i in order[:total - sum(shares)]:
        shares[i] += 1

    return shares


def refine_reference_set(chain, cache, corpus, constraints, config, rng):
    """
    Builds the next reference set from a finished chain.

    The fewest largest clusters covering config.coverage_threshold of all tokens supply the discovered share,
    split between them in proportion to their size; within a cluster the tokens with the highest marginal
    density under the chain's final model come first. Random candidates fill the rest.

    :param ChainResult chain: The selected chain.
    :param PipelineConfig config: Quotas and coverage threshold.
    :return: list of :class:`SegmentSpan` of length config.n_ref
    """

    discovered_quota, random_quota = config.quotas()

    tokens = {}
    for seg in chain.segmentations:
        for span, k in zip(seg.segment_spans(), seg.clusters):
            tokens.setdefault(k, []).append(span)

    covering = covering_clusters(cluster_sizes(chain.segmentations), config.coverage_threshold)
    shares = apportion([len(tokens[k]) for k in covering], discovered_quota)

    discovered = []
    for k, share in zip(covering, shares):
        members = tokens[k]
        density = chain.state.log_marginal_batch(np.array([cache[span] for span in members]))
        ranked = sorted(range(len(members)), key=lambda i: (-density[i], members[i]))
        discovered.extend(members[i] for i in ranked[:share])

    shortfall = discovered_quota - len(discovered)
    if shortfall > 0:
        log.warning("covering clusters hold only {} tokens, drawing {} more exemplars at random".format(
            len(discovered), shortfall))

    chosen = set(discovered)
    pool = [span for span in corpus_candidates(corpus, constraints) if span not in chosen]
    extra = _draw(pool if pool else corpus_candidates(corpus, constraints), random_quota + shortfall, rng)

    log.info("reference set: {} exemplars from {} covering clusters, {} random".format(
        len(discovered), len(covering), len(extra)))

    return discovered + extra


def save_reference_set(path, spans):
    write_json(path, [{"utterance_id": s.utterance_id, "start": s.start, "end": s.end} for s in spans])


def load_reference_set(path):
    try:
        return [SegmentSpan(e["utterance_id"], int(e["start"]), int(e["end"])) for e in read_json(path)]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise errors.DataError("can't read reference set {}: {}".format(path, e))


def build_embeddings(corpus, spans, config, seed, *, progress=False):
    """
    Trains eigenmaps on the given reference spans, calibrates the jitter scale and embeds every candidate.

    :param RunConfig config: Resolved run config.
    :return: (EmbeddingModel, EmbeddingCache)
    """

    constraints = config.constraints.build()
    emb = config.embedding

    reference = [corpus[s.utterance_id].segment(s.start, s.end) for s in spans]
    model = train_eigenmaps(reference, emb.knn, emb.sigma_k, emb.xi, emb.dim, jitter_scale=emb.jitter_scale,
                            reference_spans=spans, threads=config.threads)
    calibrate_sigma_e(model, corpus, constraints, make_rng(seed, "sigma"), n_samples=emb.sigma_samples)
    cache = precompute_cache(model, corpus, constraints, derive_seed(seed, "cache"), threads=config.threads,
                             progress=progress)

    return model, cache


def evaluate_chains(result, corpus, config):
    """Per-chain metrics summarized over chains, or None without ground truth."""

    if not corpus.has_alignments:
        return None

    reports = [evaluate(chain.segmentations, corpus, tolerance_ms=config.evaluation.boundary_tolerance_ms,
                        coverage_threshold=config.pipeline.coverage_threshold)[0] for chain in result]

    return summarize(reports)


def write_tokens(path, chain, cache):
    rows = []
    for seg in chain.segmentations:
        for span, k in zip(seg.segment_spans(), seg.clusters):
            rows.append([span.utterance_id, span.start, span.end, k] + cache[span].tolist())

    write_csv(path, ["utterance_id", "start", "end", "cluster"] + ["e{}".format(d) for d in range(cache.dim)],
              rows)


def write_sampler_outputs(directory, result, corpus, cache, config):
    """
    Writes decodes, diagnostics, the selected chain's model state and token embeddings, and, with ground
    truth, metrics and the mapping matrix.

    :return: metrics summary or None
    """

    ensure_dir(directory)

    for chain in result:
        save_decode(os.path.join(directory, "decode_chain{}.json".format(chain.chain)), chain.segmentations)
    result.save_diagnostics(os.path.join(directory, "diagnostics.csv"))

    best = result.best_chain()
    best.state.save(os.path.join(directory, "state.json"))
    write_tokens(os.path.join(directory, "tokens.csv"), best, cache)

    metrics = evaluate_chains(result, corpus, config)
    if metrics is not None:
        metrics["selected_chain"] = best.chain
        write_json(os.path.join(directory, "metrics.json"), metrics)

        _, G = evaluate(best.segmentations, corpus, tolerance_ms=config.evaluation.boundary_tolerance_ms,
                        coverage_threshold=config.pipeline.coverage_threshold)
        G.by_size().to_csv(os.path.join(directory, "mapping.csv"))

    return metrics


def run_pipeline(corpus, config, out_dir=None, *, progress=False):
    """
    Runs config.pipeline.iterations rounds of embedding and sampling, refining the reference set between
    rounds from the highest scoring chain.

    :param Corpus corpus: Corpus to segment.
    :param RunConfig config: Validated run config.
    :param str out_dir: Run directory; nothing is written when None.
    :return: (list of IterationResult, constrained IterationResult or None)
    """

    seed = config.sampler.master_seed
    constraints = config.constraints.build()

    if out_dir is not None:
        ensure_dir(out_dir)
        write_json(os.path.join(out_dir, "config.json"), config.to_dict())

    iterations = []
    for n in range(1, config.pipeline.iterations + 1):
        log.info("pipeline iteration {}/{}".format(n, config.pipeline.iterations))
        rng = make_rng(seed, "reference", n)

        if not iterations:
            spans = initial_reference_set(corpus, config.pipeline.n_ref, constraints, rng)
        else:
            previous = iterations[-1]
            spans = refine_reference_set(previous.result.best_chain(), previous.cache, corpus, constraints,
                                         config.pipeline, rng)

        model, cache = build_embeddings(corpus, spans, config, derive_seed(seed, "iteration", n),
                                        progress=progress)

        sampler_config = dataclasses.replace(config.sampler, master_seed=derive_seed(seed, "iteration", n))
        result = run_sampler(corpus, cache, config.gmm.build(model.dim), sampler_config, progress=progress)

        if out_dir is not None:
            directory = ensure_dir(os.path.join(out_dir, "iter_{}".format(n)))
            save_reference_set(os.path.join(directory, "refset.json"), spans)
            cache.save(os.path.join(directory, "cache.bin"))
            metrics = write_sampler_outputs(directory, result, corpus, cache, config)
        else:
            metrics = evaluate_chains(result, corpus, config)

        if metrics is not None:
            log.info("iteration {}: purity {:.3f}, WER {:.3f}, boundary F {:.3f}".format(
                n, metrics["purity"], metrics["wer"], metrics["boundary_f"]))

        iterations.append(IterationResult(n, spans, model, cache, result, metrics))

    constrained = None
    if config.pipeline.constrained_components is not None:
        constrained = run_constrained(corpus, iterations[-1], config, out_dir, progress=progress)

    return iterations, constrained


def run_constrained(corpus, last, config, out_dir=None, *, progress=False):
    """
    Reruns the sampler on the last iteration's cache with the component count capped at
    config.pipeline.constrained_components.
    """

    components = config.pipeline.constrained_components
    log.info("constrained run with K={}".format(components))

    sampler_config = dataclasses.replace(config.sampler,
                                         master_seed=derive_seed(config.sampler.master_seed, "constrained"))
    result = run_sampler(corpus, last.cache, config.gmm.build(last.cache.dim, components), sampler_config,
                         progress=progress)

    if out_dir is not None:
        metrics = write_sampler_outputs(os.path.join(out_dir, "constrained"), result, corpus, last.cache, config)
    else:
        metrics = evaluate_chains(result, corpus, config)

    return IterationResult("constrained", last.reference_spans, last.model, last.cache, result, metrics)


def sweep_hyperparameters(corpus, cache, config, components, variances, out_dir=None, *, progress=False):
    """
    Reruns the sampler on a fixed cache for every (K, sigma^2) pair and scores each chain.

    :param list components: Component counts K.
    :param list variances: Component variances sigma^2.
    :return: list of rows in :data:`SWEEP_HEADER` order
    """

    if not corpus.has_alignments:
        raise errors.GroundTruthError("a sweep needs word alignments to score against")

    rows = []
    for k in components:
        for sigma_sq in variances:
            gmm = dataclasses.replace(config.gmm, components=int(k), sigma_sq=float(sigma_sq))
            problems = gmm.problems()
            if problems:
                raise errors.ConfigError("; ".join(problems))

            result = run_sampler(corpus, cache, gmm.build(cache.dim), config.sampler, progress=progress)

            for chain in result:
                report, _ = evaluate(chain.segmentations, corpus,
                                     tolerance_ms=config.evaluation.boundary_tolerance_ms,
                                     coverage_threshold=config.pipeline.coverage_threshold)
                rows.append([int(k), float(sigma_sq), chain.chain, report.wer, report.purity, report.boundary_f,
                             report.clusters_covering_90pct])

            log.info("sweep K={} sigma^2={}: mean WER {:.3f}".format(
                k, sigma_sq, np.mean([row[3] for row in rows[-len(result):]])))

    if out_dir is not None:
        write_csv(os.path.join(ensure_dir(out_dir), "sweep.csv"), SWEEP_HEADER, rows)

    return rows
