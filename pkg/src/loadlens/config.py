"""Run configuration: YAML document, command-line overrides, validation.

Precedence, lowest first: built-in defaults, the ``--config`` file, the
``LOADLENS_THREADS`` environment variable (threads only), command-line flags.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .balance import BalanceMethod
from .cleaning import CleaningPolicy
from .epoching import Modality
from .errors import ConfigInvalidError
from .eval import SplitMode, Task
from .features import FeatureMode, MergeMode
from .synth import SyntheticSpec

MODEL_KINDS = ("rf", "gbt", "svm")

DEFAULT_MODEL_PARAMS = {
    "rf": {"n_trees": 100, "max_depth": None, "class_weight": "balanced"},
    "gbt": {"n_trees": 100, "max_depth": 5, "lr": 0.1, "subsample": 0.8, "colsample": 0.8, "reg_lambda": 1.0},
    "svm": {"C": 1.0, "gamma": "scale", "class_weight": "balanced"},
}


@dataclass
class FeatureConfig:
    mode: str = FeatureMode.CATCH22.value
    merge: str = MergeMode.CONCATENATE.value
    raw_points: int = 256


@dataclass
class BalanceSection:
    method: str = BalanceMethod.SMOTE.value
    k_neighbors: int = 5
    enn_neighbors: int = 3


@dataclass
class ModelSection:
    kind: str = "gbt"
    params: dict = field(default_factory=dict)

    def resolved_params(self) -> dict:
        return {**DEFAULT_MODEL_PARAMS[self.kind], **self.params}


@dataclass
class SplitSection:
    mode: str = SplitMode.PER_EPOCH.value
    test_fraction: float = 0.2
    k: int = 5


@dataclass
class RunConfig:
    data: str | None = None
    out: str = "loadlens-out"
    modality: str = Modality.PUPIL.value
    channels: list = field(default_factory=lambda: ["Fz"])
    windows: dict | None = None
    code_map: str | None = None
    task: str = Task.BINARY.value
    seed: int = 42
    threads: int = 1
    top_k: int = 10
    cleaning: dict = field(default_factory=lambda: dataclasses.asdict(CleaningPolicy()))
    features: FeatureConfig = field(default_factory=FeatureConfig)
    balance: BalanceSection = field(default_factory=BalanceSection)
    model: ModelSection = field(default_factory=ModelSection)
    split: SplitSection = field(default_factory=SplitSection)
    synth: dict = field(default_factory=lambda: {k: v for k, v in SyntheticSpec().to_dict().items() if k != "seed"})

    # derived -----------------------------------------------------------------------------------
    def cleaning_policy(self) -> CleaningPolicy:
        return CleaningPolicy(**self.cleaning)

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec.from_dict({**self.synth, "seed": self.synth.get("seed", self.seed)})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    def validate(self) -> "RunConfig":
        def bad(msg):
            raise ConfigInvalidError(msg)

        choices = {
            "modality": (self.modality, [m.value for m in Modality]),
            "task": (self.task, [t.value for t in Task]),
            "features.mode": (self.features.mode, [m.value for m in FeatureMode]),
            "features.merge": (self.features.merge, [m.value for m in MergeMode]),
            "balance.method": (self.balance.method, [m.value for m in BalanceMethod]),
            "model.kind": (self.model.kind, list(MODEL_KINDS)),
            "split.mode": (self.split.mode, [m.value for m in SplitMode]),
        }
        for key, (value, allowed) in choices.items():
            if value not in allowed:
                bad(f"{key}: {value!r} is not one of {allowed}")
        if not 0.0 < float(self.split.test_fraction) < 1.0:
            bad("split.test_fraction must lie in (0, 1)")
        if int(self.split.k) < 2:
            bad("split.k must be >= 2")
        if int(self.threads) < 1:
            bad("threads must be >= 1")
        if self.balance.k_neighbors < 1 or self.balance.enn_neighbors < 1:
            bad("balance neighbour counts must be >= 1")
        if self.features.raw_points < 2:
            bad("features.raw_points must be >= 2")
        try:
            self.cleaning_policy()
        except (TypeError, ValueError) as exc:
            bad(f"cleaning: {exc}")
        try:
            self.synthetic_spec()
        except (TypeError, ValueError) as exc:
            bad(f"synth: {exc}")
        return self


_SECTIONS = {"features": FeatureConfig, "balance": BalanceSection, "model": ModelSection, "split": SplitSection}


def _merge(cfg: RunConfig, data: dict, where: str) -> None:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    for key, value in data.items():
        if key not in fields:
            raise ConfigInvalidError(f"{where}: unknown key {key!r}")
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigInvalidError(f"{where}: {key} must be a mapping")
            section = getattr(cfg, key)
            allowed = {f.name for f in dataclasses.fields(section)}
            for k, v in value.items():
                if k not in allowed:
                    raise ConfigInvalidError(f"{where}: unknown key {key}.{k}")
                setattr(section, k, v)
        elif key in ("cleaning", "synth"):
            if not isinstance(value, dict):
                raise ConfigInvalidError(f"{where}: {key} must be a mapping")
            getattr(cfg, key).update(value)
        else:
            setattr(cfg, key, value)


def load_config(path=None, overrides: dict[str, Any] | None = None, env=None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigInvalidError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigInvalidError(f"{p}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigInvalidError(f"{p}: top level must be a mapping")
        _merge(cfg, data, str(p))
    env = os.environ if env is None else env
    if env.get("LOADLENS_THREADS"):
        try:
            cfg.threads = int(env["LOADLENS_THREADS"])
        except ValueError:
            raise ConfigInvalidError("LOADLENS_THREADS must be an integer") from None
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        head, _, tail = dotted.partition(".")
        _merge(cfg, {head: {tail: value}} if tail else {head: value}, "command line")
    return cfg.validate()
