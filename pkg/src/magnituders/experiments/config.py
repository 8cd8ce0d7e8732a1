"""Experiment configuration.

Configs are YAML mappings whose keys are the :class:`ExperimentConfig` field
names, for example::

    experiment: synth_approx
    d: 128
    l: 128
    rf_sweep: [8, 16, 32, 64, 128]
    seeds: 10
    epochs: 1000
    targets: [relu, softplus]
    ensembles: [orthogonal, iid]

Keys left out take the per-experiment defaults in :data:`DEFAULTS`. Unknown
keys are rejected so typos surface before any work starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import yaml

from ..errors import InvalidArgument
from ..layers import Activation
from ..numerics import EnsembleKind


class Experiment(str, Enum):
    SYNTH_APPROX = "synth_approx"
    VARIANCE_STUDY = "variance"
    TOY_INR = "toy_inr"
    DISTILL_BENCH = "distill"
    FUSE_BENCH = "fuse_bench"

    @classmethod
    def parse(cls, value: "str | Experiment") -> "Experiment":
        if isinstance(value, Experiment):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"synth": "synth_approx", "variance_study": "variance", "distill_bench": "distill", "fuse": "fuse_bench"}
        key = aliases.get(key, key)
        for member in cls:
            if member.value == key:
                return member
        raise InvalidArgument(f"unknown experiment {value!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings for one experiment run.

    Parameters
    ----------
    experiment
        Which study to run.
    d, l
        Input and output widths of the synthetic target layer, or the input
        dimension of the variance study.
    rf_sweep
        Feature counts ``m``, strictly increasing.
    seeds
        Number of seeds; seed ``k`` is ``seed + k``.
    epochs
        Optimisation length (full-batch steps for the synthetic study).
    targets
        Activations of the synthetic target layers.
    ensembles
        Random matrix ensembles to compare.
    distill_layer
        Layer replaced by the distillation bench; ``None`` picks the last
        hidden layer of the trunk (index 7 for the image net, 3 for SDF).
    subsample
        Fraction of captured rows kept for the distillation solve.
    """

    experiment: Experiment
    d: int = 128
    l: int = 128
    rf_sweep: tuple[int, ...] = (8, 16, 32, 64, 128)
    seeds: int = 10
    epochs: int = 1000
    targets: tuple[Activation, ...] = (Activation("relu"), Activation("softplus"))
    ensembles: tuple[EnsembleKind, ...] = (EnsembleKind.BLOCK_ORTHOGONAL, EnsembleKind.IID_GAUSSIAN)
    out: str = "results"
    seed: int = 0
    n_samples: int = 10_000
    learning_rate: float = 1e-3
    batch_size: int = 512
    snnk: bool = True
    trials: int = 100_000
    functions: tuple[str, ...] = ("exp(1)", "relu")
    tasks: tuple[str, ...] = ("image", "sdf")
    image_size: int = 64
    sdf_size: int = 128
    sdf_frequencies: int = 6
    distill_layer: int | None = None
    subsample: float = 1.0
    ridge: float = 1e-8
    dr_width: int = 32
    dumps: bool = True

    def __post_init__(self) -> None:
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("experiment", Experiment.parse(self.experiment))
        set_("rf_sweep", tuple(int(m) for m in self.rf_sweep))
        set_("targets", tuple(Activation.parse(a) for a in self.targets))
        set_("ensembles", tuple(EnsembleKind.parse(e) for e in self.ensembles))
        set_("functions", tuple(str(f) for f in self.functions))
        set_("tasks", tuple(str(t).lower() for t in self.tasks))
        if not self.rf_sweep:
            raise InvalidArgument("rf_sweep must not be empty")
        if any(m < 1 for m in self.rf_sweep):
            raise InvalidArgument("rf_sweep entries must be >= 1")
        if any(b <= a for a, b in zip(self.rf_sweep, self.rf_sweep[1:])):
            raise InvalidArgument(f"rf_sweep must be strictly increasing, got {list(self.rf_sweep)}")
        if self.seeds < 1:
            raise InvalidArgument("seeds must be >= 1")
        for name in ("d", "l", "n_samples", "batch_size", "image_size", "sdf_size", "dr_width"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be >= 1")
        if self.epochs < 0:
            raise InvalidArgument("epochs must be >= 0")
        if self.seed < 0:
            raise InvalidArgument("seed must be a non-negative integer")
        if not self.learning_rate > 0:
            raise InvalidArgument("learning_rate must be positive")
        if self.ridge < 0:
            raise InvalidArgument("ridge must be non-negative")
        if self.distill_layer is not None and self.distill_layer < 0:
            raise InvalidArgument("distill_layer must be a non-negative layer index")
        if not 0.0 < self.subsample <= 1.0:
            raise InvalidArgument("subsample must lie in (0, 1]")
        if not self.ensembles:
            raise InvalidArgument("ensembles must not be empty")
        if set(self.tasks) - {"image", "sdf"} or not self.tasks:
            raise InvalidArgument(f"tasks must be a non-empty subset of image, sdf; got {list(self.tasks)}")
        if self.experiment is Experiment.SYNTH_APPROX and not self.targets:
            raise InvalidArgument("synth_approx needs at least one target activation")
        if self.experiment is Experiment.VARIANCE_STUDY:
            if self.trials < 100:
                raise InvalidArgument("variance study needs at least 100 trials")
            if self.rf_sweep[0] < self.d:
                raise InvalidArgument("variance study needs every m >= d")
        if self.experiment is Experiment.SYNTH_APPROX and self.snnk and any(m % 2 for m in self.rf_sweep):
            raise InvalidArgument("SNNK rows pair sin/cos features and need even m")

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def seed_list(self) -> list[int]:
        return [self.seed + k for k in range(self.seeds)]


DEFAULTS: dict[Experiment, dict] = {
    Experiment.SYNTH_APPROX: {},
    Experiment.VARIANCE_STUDY: {"d": 16, "l": 1, "rf_sweep": (16, 32, 64), "seeds": 1},
    Experiment.TOY_INR: {"rf_sweep": (256,), "seeds": 3, "epochs": 20, "ensembles": ("orthogonal",)},
    Experiment.DISTILL_BENCH: {
        "rf_sweep": (32, 64, 128, 256, 512),
        "seeds": 1,
        "epochs": 20,
        "ensembles": ("orthogonal",),
        "tasks": ("image",),
    },
    Experiment.FUSE_BENCH: {
        "rf_sweep": (32,),
        "seeds": 3,
        "epochs": 60,
        "learning_rate": 5e-4,
        "ensembles": ("orthogonal",),
        "tasks": ("sdf",),
    },
}

_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def default_config(experiment: "str | Experiment", **overrides) -> ExperimentConfig:
    exp = Experiment.parse(experiment)
    values = dict(DEFAULTS[exp])
    values.update(overrides)
    return ExperimentConfig(experiment=exp, **values)


def config_from_mapping(data: dict, experiment: "str | Experiment | None" = None) -> ExperimentConfig:
    """Build a config from a plain mapping, filling in experiment defaults."""
    if not isinstance(data, dict):
        raise InvalidArgument("config must be a mapping of field names to values")
    data = dict(data)
    named = data.pop("experiment", None)
    if experiment is None and named is None:
        raise InvalidArgument("config does not name an experiment")
    exp = Experiment.parse(experiment if experiment is not None else named)
    if named is not None and Experiment.parse(named) is not exp:
        raise InvalidArgument(f"config is for {Experiment.parse(named).value}, not {exp.value}")
    unknown = set(data) - _FIELDS
    if unknown:
        raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
    for key in ("rf_sweep", "targets", "ensembles", "functions", "tasks"):
        if key in data and not isinstance(data[key], (list, tuple)):
            data[key] = [data[key]]
    try:
        return default_config(exp, **data)
    except TypeError as exc:
        raise InvalidArgument(str(exc)) from exc


def load_config(path: str | Path, experiment: "str | Experiment | None" = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_mapping(data, experiment)
