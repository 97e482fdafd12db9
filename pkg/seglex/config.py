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
Run configuration.

Every hyperparameter group is a dataclass section of :class:`RunConfig`. Files are JSON; unknown keys are
rejected and every problem is reported at once. Values resolve in the order defaults, preset, file, command
line flags.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

from seglex import errors
from seglex.acoustic_model import GmmHyper
from seglex.corpus import SegmentConstraints
from seglex.util import read_json

log = logging.getLogger("seglex")


def linear_anneal(stages=5, iterations_per_stage=5, start=0.01, end=1.0):
    """
    Inverse temperatures increasing linearly from start to end.

    :return: list of (iterations, inverse temperature)
    """

    if stages == 1:
        return [(iterations_per_stage, end)]

    step = (end - start) / (stages - 1)

    return [(iterations_per_stage, round(start + i * step, 10)) for i in range(stages)]


@dataclass
class ConstraintConfig:
    grid_ms: float = 20.0
    min_dur_ms: float = 200.0
    max_dur_ms: float = 1000.0

    def problems(self):
        found = []
        if not self.grid_ms > 0:
            found.append("constraints.grid_ms must be > 0")
        if not self.min_dur_ms > 0:
            found.append("constraints.min_dur_ms must be > 0")
        if self.min_dur_ms > self.max_dur_ms:
            found.append("constraints.min_dur_ms must not exceed constraints.max_dur_ms")

        return found

    def build(self):
        return SegmentConstraints(self.grid_ms, self.min_dur_ms, self.max_dur_ms)


@dataclass
class EmbedConfig:
    dim: int = 11
    knn: int = 30
    sigma_k: float = 0.04
    xi: float = 2.0
    jitter_scale: float = 0.05
    sigma_samples: int = 2000

    def problems(self):
        found = []
        if self.dim < 1:
            found.append("embedding.dim must be >= 1")
        if self.knn < 1:
            found.append("embedding.knn must be >= 1")
        if not self.sigma_k > 0:
            found.append("embedding.sigma_k must be > 0")
        if self.xi < 0:
            found.append("embedding.xi must be >= 0")
        if self.jitter_scale < 0:
            found.append("embedding.jitter_scale must be >= 0")
        if self.sigma_samples < 0:
            found.append("embedding.sigma_samples must be >= 0")

        return found


@dataclass
class GmmConfig:
    components: int = 100
    a: float = 1.0
    sigma_sq: float = 0.005
    kappa0: float = 0.05

    def problems(self):
        found = []
        if self.components < 1:
            found.append("gmm.components must be >= 1")
        if not self.a > 0:
            found.append("gmm.a must be > 0")
        if not self.sigma_sq > 0:
            found.append("gmm.sigma_sq must be > 0")
        if not self.kappa0 > 0:
            found.append("gmm.kappa0 must be > 0")

        return found

    def build(self, dim, components=None):
        return GmmHyper.from_kappa(components or self.components, dim, a=self.a, sigma_sq=self.sigma_sq,
                                   kappa0=self.kappa0)


@dataclass
class SamplerConfig:
    """
    :ivar int burn_in: Leading iterations that resample assignments only.
    :ivar list anneal_stages: (iterations, inverse temperature) pairs; their iterations sum to J.
    :ivar int chains: Independent chains.
    :ivar int master_seed: Seed every chain's generator is derived from.
    """

    burn_in: int = 25
    anneal_stages: list = field(default_factory=linear_anneal)
    chains: int = 5
    master_seed: int = 0

    def __post_init__(self):
        self.anneal_stages = [tuple(stage) for stage in self.anneal_stages]

    @property
    def iterations(self):
        return sum(n for n, _ in self.anneal_stages)

    def problems(self):
        found = []
        if self.burn_in < 0:
            found.append("sampler.burn_in must be >= 0")
        if self.chains < 1:
            found.append("sampler.chains must be >= 1")
        if not self.anneal_stages:
            found.append("sampler.anneal_stages must not be empty")
        for n, (iterations, inv_temp) in enumerate(self.anneal_stages):
            if iterations < 1:
                found.append("sampler.anneal_stages[{}]: iterations must be >= 1".format(n))
            if not 0 < inv_temp <= 1:
                found.append("sampler.anneal_stages[{}]: inverse temperature must be in (0, 1]".format(n))

        return found

    def schedule(self):
        """
        Yields (inverse temperature, sample boundaries) for every iteration: burn-in first, then the stages.
        """

        for _ in range(self.burn_in):
            yield 1.0, False

        for iterations, inv_temp in self.anneal_stages:
            for _ in range(iterations):
                yield inv_temp, True


@dataclass
class PipelineConfig:
    iterations: int = 3
    n_ref: int = 8000
    discovered_quota: int = None
    random_quota: int = None
    coverage_threshold: float = 0.9
    constrained_components: int = None

    def quotas(self):
        """(discovered, random) exemplar counts, defaulting to an even split of n_ref."""

        discovered, random = self.discovered_quota, self.random_quota
        if discovered is None and random is None:
            discovered = self.n_ref // 2
        if discovered is None:
            discovered = self.n_ref - random
        if random is None:
            random = self.n_ref - discovered

        return discovered, random

    def problems(self):
        found = []
        if self.iterations < 1:
            found.append("pipeline.iterations must be >= 1")
        if self.n_ref < 2:
            found.append("pipeline.n_ref must be >= 2")

        discovered, random = self.quotas()
        if discovered < 0 or random < 0:
            found.append("pipeline quotas must be >= 0")
        if discovered + random != self.n_ref:
            found.append("pipeline.discovered_quota + pipeline.random_quota must equal pipeline.n_ref ({})".format(
                self.n_ref))
        if not 0 < self.coverage_threshold <= 1:
            found.append("pipeline.coverage_threshold must be in (0, 1]")
        if self.constrained_components is not None and self.constrained_components < 1:
            found.append("pipeline.constrained_components must be >= 1")

        return found


@dataclass
class EvalConfig:
    boundary_tolerance_ms: float = 40.0

    def problems(self):
        return ["evaluation.boundary_tolerance_ms must be >= 0"] if self.boundary_tolerance_ms < 0 else []


def _field_types(obj):
    return {f.name: f for f in dataclasses.fields(obj)}


def _coerce(kind, value):
    if kind is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError
        return int(value)
    if kind is float:
        if isinstance(value, bool):
            raise ValueError
        return float(value)
    if kind is str and not isinstance(value, str):
        raise ValueError

    return value


def _assign(obj, name, value, problems, path):
    fields = _field_types(obj)

    if name not in fields:
        problems.append("unknown key `{}`".format(path))
        return

    if value is None:
        if fields[name].default is not None:
            problems.append("`{}` can't be null".format(path))
        else:
            setattr(obj, name, None)
        return

    try:
        setattr(obj, name, _coerce(fields[name].type, value))
    except (TypeError, ValueError):
        problems.append("`{}` must be of type {}, got {!r}".format(path, fields[name].type.__name__, value))


PRESETS = {
    "unconstrained": {"gmm": {"components": 100}},
    "constrained": {"gmm": {"components": 15}},
}


@dataclass
class RunConfig:
    manifest: str = None
    out_dir: str = "run"
    seed: int = None
    threads: int = 1
    preset: str = None
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    embedding: EmbedConfig = field(default_factory=EmbedConfig)
    gmm: GmmConfig = field(default_factory=GmmConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    SECTIONS = {
        "constraints": ConstraintConfig,
        "embedding": EmbedConfig,
        "gmm": GmmConfig,
        "sampler": SamplerConfig,
        "pipeline": PipelineConfig,
        "evaluation": EvalConfig,
    }

    @classmethod
    def from_dict(cls, data):
        """
        Builds a config from nested dicts, applying the named preset before the given values.

        :raises errors.ConfigError: listing every unknown key and bad value.
        """

        if not isinstance(data, dict):
            raise errors.ConfigError("config must be a JSON object")

        config = cls()
        problems = []

        preset = data.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                problems.append("unknown preset `{}` (choose from {})".format(preset, ", ".join(sorted(PRESETS))))
            else:
                config._merge(PRESETS[preset], problems)

        config._merge(data, problems)

        if problems:
            raise errors.ConfigError("invalid config:\n  " + "\n  ".join(problems))

        return config

    @classmethod
    def load(cls, path):
        try:
            data = read_json(path)
        except OSError as e:
            raise errors.ConfigError("can't read config {}: {}".format(path, e))
        except ValueError as e:
            raise errors.ConfigError("config {} is not valid JSON: {}".format(path, e))

        return cls.from_dict(data)

    def _merge(self, data, problems):
        for key, value in data.items():
            if key not in _field_types(self):
                problems.append("unknown key `{}`".format(key))
            elif key in self.SECTIONS:
                if not isinstance(value, dict):
                    problems.append("`{}` must be an object".format(key))
                    continue

                section = getattr(self, key)
                for name, item in value.items():
                    if name == "anneal_stages":
                        try:
                            section.anneal_stages = [(int(n), float(t)) for n, t in item]
                        except (TypeError, ValueError):
                            problems.append("sampler.anneal_stages must be a list of [iterations, inv_temp]")
                    else:
                        _assign(section, name, item, problems, "{}.{}".format(key, name))
            else:
                _assign(self, key, value, problems, key)

    def override(self, section, **values):
        """Sets the non-None values on a section (or the root when section is None)."""

        target = self if section is None else getattr(self, section)
        for name, value in values.items():
            if value is not None:
                setattr(target, name, value)

        return self

    def apply_preset(self, name):
        if name not in PRESETS:
            raise errors.ConfigError("unknown preset `{}` (choose from {})".format(name, ", ".join(sorted(PRESETS))))

        problems = []
        self._merge(PRESETS[name], problems)
        self.preset = name

        return self

    def validate(self, *, require_manifest=False, require_seed=False):
        """
        Checks every section and syncs the master seed into the sampler section.

        :raises errors.ConfigError: listing every problem.
        """

        problems = []
        for name in self.SECTIONS:
            problems.extend(getattr(self, name).problems())

        if self.threads < 1:
            problems.append("threads must be >= 1")
        if require_manifest and not self.manifest:
            problems.append("a corpus manifest is required")
        if require_seed and self.seed is None:
            problems.append("an explicit --seed is required")
        if self.embedding.dim + 1 > self.pipeline.n_ref:
            problems.append("pipeline.n_ref must be at least embedding.dim + 1")

        if problems:
            raise errors.ConfigError("invalid config:\n  " + "\n  ".join(problems))

        if self.seed is not None:
            self.sampler.master_seed = int(self.seed)

        return self

    def to_dict(self):
        data = dataclasses.asdict(self)
        data["sampler"]["anneal_stages"] = [list(stage) for stage in self.sampler.anneal_stages]

        return data
