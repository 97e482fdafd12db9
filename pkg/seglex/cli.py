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

import argparse
import dataclasses
import logging
import os
import sys

import seglex
from seglex import errors
from seglex.command import Context, add_arguments, command
from seglex.config import RunConfig
from seglex.converters import Directory, ExistingFile, Flag, Integer, Number, NumberList, String
from seglex.corpus import load_corpus, write_corpus
from seglex.embed import EmbeddingCache
from seglex.evaluation import evaluate
from seglex.pipeline import (
    build_embeddings, initial_reference_set, load_reference_set, run_pipeline, save_reference_set,
    sweep_hyperparameters, write_sampler_outputs,
)
from seglex.segmenter import load_decode, run_sampler
from seglex.synth import SynthSpec, generate
from seglex.util import derive_seed, ensure_dir, make_rng, write_json

log = logging.getLogger("seglex")

TABLE_ROWS = [
    ("WER", "wer", "{:.1%}"),
    ("Cluster purity", "purity", "{:.1%}"),
    ("Boundary F-score", "boundary_f", "{:.1%}"),
    ("Clusters covering 90%", "clusters_covering_90pct", "{:.1f}"),
]


def format_table(columns):
    """
    Renders per-iteration metrics as a text table.

    :param list columns: (heading, metrics dict) pairs.
    """

    cells = [["Metric"] + [heading for heading, _ in columns]]
    for label, key, fmt in TABLE_ROWS:
        cells.append([label] + [fmt.format(metrics[key]) for _, metrics in columns])

    widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths)))
             for row in cells]
    lines.insert(1, "-" * len(lines[0]))

    return "\n".join(lines)


class Cli(object):
    """
    The ``seglex`` command line. Every method decorated with :func:`seglex.command` is a subcommand.
    """

    def __init__(self, stdout=None):
        self.stdout = stdout
        self.commands = {}

        self.collect_commands()

    def collect_commands(self):
        for name in dir(self):
            o = getattr(self, name)
            if getattr(o, "is_command", False):
                for cmd in o.command:
                    self.commands[cmd] = o

        log.debug("loaded {} commands".format(len(self.commands)))

    def build_parser(self):
        parser = argparse.ArgumentParser(prog="seglex", description="Unsupervised word segmentation and clustering.")
        parser.add_argument("--version", action="version", version="seglex " + seglex.version_string)

        verbosity = parser.add_mutually_exclusive_group()
        verbosity.add_argument("--verbose", "-v", action="store_true", help="log debug messages")
        verbosity.add_argument("--quiet", "-q", action="store_true", help="only log warnings and errors")

        subparsers = parser.add_subparsers(dest="command", metavar="command")
        subparsers.required = True
        for name in sorted(self.commands):
            cmd = self.commands[name]
            add_arguments(subparsers.add_parser(name, help=cmd.description, description=cmd.description),
                          cmd.signature)

        return parser

    def main(self, argv=None):
        """
        Parses argv and runs the command.

        :return: exit code
        """

        namespace = self.build_parser().parse_args(argv)

        if namespace.verbose:
            seglex.set_verbosity(logging.DEBUG)
        elif namespace.quiet:
            seglex.set_verbosity(logging.WARNING)

        ctx = Context(self, self.stdout)

        try:
            self.commands[namespace.command](ctx, namespace)
        except errors.SeglexError as e:
            print("error: {}".format(e), file=sys.stderr)
            return e.exit_code
        finally:
            seglex.set_verbosity(logging.INFO)

        return 0

    # helpers

    @staticmethod
    def resolve_config(config=None, preset=None, require_seed=True, **flags):
        """
        Loads the config file, applies the preset and the command line flags, and validates.

        Flags are given as section__name=value (or name=value for the root); None values are ignored.
        """

        resolved = RunConfig.load(config) if config else RunConfig()
        if preset is not None:
            resolved.apply_preset(preset)

        for key, value in flags.items():
            section, _, name = key.rpartition("__")
            resolved.override(section or None, **{name: value})

        return resolved.validate(require_manifest=True, require_seed=require_seed)

    # commands

    @command("synth")
    def synth(self, ctx, out_dir: Directory, *, spec: ExistingFile = None, seed: Integer = None,
              utterances: Integer = None, types: Integer = None):
        """
        Generates a synthetic corpus with ground truth.

        Writes manifest.json and one feature file per utterance to out_dir. The spec is a JSON object of
        generator settings; --seed, --utterances and --types override it.
        """

        synth_spec = SynthSpec.from_json(spec) if spec else SynthSpec()
        for name, value in (("seed", seed), ("n_utts", utterances), ("n_types", types)):
            if value is not None:
                setattr(synth_spec, name, value)

        corpus = generate(synth_spec)
        manifest = write_corpus(corpus, out_dir)

        return "wrote {} utterances to {}".format(len(corpus), manifest)

    @command("run")
    def run(self, ctx, config: ExistingFile = None, *, manifest: String = None, out: Directory = None,
            seed: Integer = None, preset: String = None, chains: Integer = None, iterations: Integer = None,
            components: Integer = None, n_ref: Integer = None, threads: Integer = None, progress: Flag = False):
        """
        Runs the full pipeline: embedding, sampling and reference set refinement.

        Every iteration's artifacts go to <out>/iter_<n>; the resolved config is echoed to <out>/config.json.
        --seed is required.
        """

        resolved = self.resolve_config(config, preset, manifest=manifest, out_dir=out, seed=seed, threads=threads,
                                       sampler__chains=chains, pipeline__iterations=iterations,
                                       gmm__components=components, pipeline__n_ref=n_ref)

        corpus = load_corpus(resolved.manifest)
        iterations_, constrained = run_pipeline(corpus, resolved, resolved.out_dir, progress=progress)

        columns = [("Iteration {}".format(it.iteration), it.metrics) for it in iterations_ if it.metrics]
        if constrained is not None and constrained.metrics:
            columns.append(("Constrained", constrained.metrics))

        if columns:
            ctx.send(format_table(columns))
        else:
            ctx.send("corpus has no ground truth, metrics skipped")

        return "run written to {}".format(resolved.out_dir)

    @command("eval")
    def eval(self, ctx, decode: ExistingFile, manifest: ExistingFile, *, out: Directory = None,
             tolerance_ms: Number = 40.0, coverage: Number = 0.9):
        """
        Scores a decode file against the corpus ground truth.

        Writes metrics.json and mapping.csv next to the decode, or to --out.
        """

        corpus = load_corpus(manifest)
        report, G = evaluate(load_decode(decode), corpus, tolerance_ms=tolerance_ms, coverage_threshold=coverage)

        directory = ensure_dir(out or os.path.dirname(os.path.abspath(decode)))
        write_json(os.path.join(directory, "metrics.json"), report.to_dict())
        G.by_size().to_csv(os.path.join(directory, "mapping.csv"))

        return format_table([("Decode", report.to_dict())])

    @command("embed")
    def embed(self, ctx, config: ExistingFile = None, *, manifest: String = None, out: Directory = None,
              seed: Integer = None, refset: ExistingFile = None, n_ref: Integer = None, threads: Integer = None,
              progress: Flag = False):
        """
        Trains eigenmaps and embeds every candidate segment, without sampling.

        Uses the reference set in --refset, or draws one at random. Writes refset.json and cache.bin; with the
        same seed the result equals the first iteration of `run`.
        """

        resolved = self.resolve_config(config, require_seed=False, manifest=manifest, out_dir=out, seed=seed,
                                       threads=threads, pipeline__n_ref=n_ref)
        corpus = load_corpus(resolved.manifest)

        master = resolved.sampler.master_seed
        if refset:
            spans = load_reference_set(refset)
        else:
            spans = initial_reference_set(corpus, resolved.pipeline.n_ref, resolved.constraints.build(),
                                          make_rng(master, "reference", 1))

        _, cache = build_embeddings(corpus, spans, resolved, derive_seed(master, "iteration", 1), progress=progress)

        ensure_dir(resolved.out_dir)
        save_reference_set(os.path.join(resolved.out_dir, "refset.json"), spans)
        cache.save(os.path.join(resolved.out_dir, "cache.bin"))

        return "cached {} embeddings in {}".format(len(cache), resolved.out_dir)

    @command("segment")
    def segment(self, ctx, cache: ExistingFile, config: ExistingFile = None, *, manifest: String = None,
                out: Directory = None, seed: Integer = None, chains: Integer = None, components: Integer = None,
                progress: Flag = False):
        """
        Runs the sampler on an existing embedding cache.

        Writes decodes, diagnostics and, with ground truth, metrics to --out.
        """

        resolved = self.resolve_config(config, require_seed=False, manifest=manifest, out_dir=out, seed=seed,
                                       sampler__chains=chains, gmm__components=components)
        corpus = load_corpus(resolved.manifest)
        embeddings = EmbeddingCache.load(cache)

        sampler_config = dataclasses.replace(resolved.sampler,
                                             master_seed=derive_seed(resolved.sampler.master_seed, "iteration", 1))
        result = run_sampler(corpus, embeddings, resolved.gmm.build(embeddings.dim), sampler_config,
                             progress=progress)

        metrics = write_sampler_outputs(resolved.out_dir, result, corpus, embeddings, resolved)
        if metrics is not None:
            ctx.send(format_table([("Sampler", metrics)]))

        return "decodes written to {}".format(resolved.out_dir)

    @command("sweep")
    def sweep(self, ctx, cache: ExistingFile, config: ExistingFile = None, *, manifest: String = None,
              out: Directory = None, seed: Integer = None, components: NumberList = None,
              variances: NumberList = None, chains: Integer = None, progress: Flag = False):
        """
        Reruns the sampler over a grid of component counts and variances on a fixed cache.

        Writes sweep.csv with one row per (K, sigma^2, chain).
        """

        resolved = self.resolve_config(config, require_seed=False, manifest=manifest, out_dir=out, seed=seed,
                                       sampler__chains=chains)
        corpus = load_corpus(resolved.manifest)
        embeddings = EmbeddingCache.load(cache)

        rows = sweep_hyperparameters(corpus, embeddings, resolved, components or [resolved.gmm.components],
                                     variances or [resolved.gmm.sigma_sq], resolved.out_dir, progress=progress)

        return "{} sweep rows written to {}".format(len(rows), os.path.join(resolved.out_dir, "sweep.csv"))

    @command("help")
    def help(self, ctx, *command_: String):
        """Shows a list of commands, or help for a specific command."""

        if command_:
            name = command_[0]  # ignore any lingering stuff

            cmd = self.commands.get(name)
            if cmd is None:
                raise errors.ArgumentError("`{}` isn't a command".format(name))

            return "seglex {} {}".format(name, cmd.help_message)

        width = max(len(name) for name in self.commands)
        lines = ["Do `seglex help <command>` for more information about a command.", ""]
        lines.extend("  {}  {}".format(name.ljust(width), self.commands[name].description)
                     for name in sorted(self.commands))

        return "\n".join(lines)


def main(argv=None):
    return Cli().main(argv)
