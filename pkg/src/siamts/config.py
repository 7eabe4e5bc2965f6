"""Run configuration: JSON in, validated dataclasses out.

A config names a dataset profile and overrides pieces of it; everything
resolved (profile defaults included) is echoed into the report header so
a report alone suffices to rerun the experiment.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import SplitConfig, get_profile
from .errors import ConfigError
from .models import FeatureExtractorSpec
from .training import TrainConfig

VALID_METHODS = ("simsiam", "mtssl", "supervised", "augmented", "transfer")


def _take(d: dict, cls, what: str) -> dict:
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{what}: unknown keys {unknown}; allowed: {sorted(allowed)}")
    return d


def _pick(override, default):
    """Override wins only when actually set; falsy values like () count."""
    return default if override is None else override


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for generating a synthetic corpus on the fly."""

    n_users: int = 10
    sessions_per_user: int = 8
    session_len: int = 300
    channels: int = 8
    harmonics: int = 2
    noise_sigma: float = 0.1
    amp_sigma: float = 0.15
    offset: float = 0.0

    def __post_init__(self):
        if self.n_users < 2:
            raise ConfigError(f"synth: n_users must be >= 2, got {self.n_users}")
        if self.sessions_per_user < 4:
            raise ConfigError(
                f"synth: sessions_per_user must be >= 4 to cover all pools, "
                f"got {self.sessions_per_user}")


@dataclass(frozen=True)
class TrainOverrides:
    """Optional replacements for profile defaults; None keeps the profile's."""

    filters: tuple[int, ...] | None = None
    projector: tuple[int, ...] | None = None
    predictor: tuple[int, ...] | None = None
    classifier_hidden: tuple[int, ...] | None = None
    pretrain_lr: float | None = None
    classifier_lr: float | None = None
    pretrain_epochs: int | None = None
    classifier_epochs: int | None = None
    batch_size: int | None = None
    patience: int | None = None
    weight_decay: float | None = None
    standardize: bool = True
    # fine-tune the pretrained extractor during the classifier stage;
    # frozen by default, which keeps tiny labelled sets from erasing it
    finetune: bool = False


@dataclass(frozen=True)
class RunConfig:
    profile: str = "synth"
    scenario: int = 2
    methods: tuple[str, ...] = ("simsiam", "supervised")
    label_fractions: tuple[float, ...] = (0.1, 0.2, 0.5, 1.0)
    runs: int = 10
    seed: int = 0
    corpus: str | None = None
    synth: SynthSpec = field(default_factory=SynthSpec)
    split: SplitConfig = field(default_factory=SplitConfig)
    train: TrainOverrides = field(default_factory=TrainOverrides)
    out_dir: str = "runs"

    def __post_init__(self):
        get_profile(self.profile)
        if self.scenario not in (1, 2, 3):
            raise ConfigError(f"scenario must be 1, 2 or 3, got {self.scenario}")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        for m in self.methods:
            if m not in VALID_METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {VALID_METHODS}")
        if "transfer" in self.methods and self.scenario != 1:
            raise ConfigError("the transfer baseline needs scenario 1 (auxiliary users)")
        if not self.label_fractions:
            raise ConfigError("label_fractions must be non-empty")
        for f in self.label_fractions:
            if not 0.0 < f <= 1.0:
                raise ConfigError(f"label fractions must lie in (0, 1], got {f}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")

    # ------------------------------------------------------------------
    # resolution against the profile

    @property
    def profile_obj(self):
        return get_profile(self.profile)

    def fe_spec(self) -> FeatureExtractorSpec:
        p = self.profile_obj
        return FeatureExtractorSpec(
            filters=_pick(self.train.filters, p.fe_filters),
            weight_decay_lambda=_pick(self.train.weight_decay, p.weight_decay))

    def projector(self) -> tuple[int, ...]:
        return _pick(self.train.projector, self.profile_obj.projector)

    def predictor(self) -> tuple[int, ...]:
        return _pick(self.train.predictor, self.profile_obj.predictor)

    def classifier_hidden(self) -> tuple[int, ...]:
        # An explicit empty tuple selects a linear classifier head, so the
        # fallback must key on None rather than truthiness.
        return _pick(self.train.classifier_hidden, self.profile_obj.classifier_hidden)

    def pretrain_cfg(self, seed: int) -> TrainConfig:
        p, t = self.profile_obj, self.train
        return TrainConfig(
            initial_lr=_pick(t.pretrain_lr, p.pretrain_lr),
            epochs=_pick(t.pretrain_epochs, p.pretrain_epochs),
            batch_size=_pick(t.batch_size, p.batch_size),
            weight_decay=_pick(t.weight_decay, p.weight_decay),
            patience=_pick(t.patience, 5),
            seed=seed)

    def classifier_cfg(self, seed: int) -> TrainConfig:
        p, t = self.profile_obj, self.train
        return TrainConfig(
            initial_lr=_pick(t.classifier_lr, p.classifier_lr),
            epochs=_pick(t.classifier_epochs, p.classifier_epochs),
            batch_size=_pick(t.batch_size, p.batch_size),
            weight_decay=_pick(t.weight_decay, p.weight_decay),
            patience=_pick(t.patience, 5),
            seed=seed)

    # ------------------------------------------------------------------
    # serialization

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["label_fractions"] = list(self.label_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(_take(d, cls, "run config"))
        if "synth" in d:
            d["synth"] = SynthSpec(**_take(dict(d["synth"]), SynthSpec, "synth"))
        if "split" in d:
            d["split"] = SplitConfig(**_take(dict(d["split"]), SplitConfig, "split"))
        if "train" in d:
            t = dict(_take(dict(d["train"]), TrainOverrides, "train"))
            for key in ("filters", "projector", "predictor", "classifier_hidden"):
                if t.get(key) is not None:
                    t[key] = tuple(int(v) for v in t[key])
            d["train"] = TrainOverrides(**t)
        for key in ("methods", "label_fractions"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"run config: {exc}")

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})")
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw)

    def resolved(self) -> dict:
        """Config plus effective profile-derived settings, for report headers.

        out_dir is omitted: where a report lands must not change its content.
        """
        out = self.to_dict()
        out.pop("out_dir", None)
        out["resolved"] = {
            "filters": list(self.fe_spec().filters),
            "projector": list(self.projector()),
            "predictor": list(self.predictor()),
            "classifier_hidden": list(self.classifier_hidden()),
            "pretrain_lr": self.pretrain_cfg(0).initial_lr,
            "classifier_lr": self.classifier_cfg(0).initial_lr,
            "pretrain_epochs": self.pretrain_cfg(0).epochs,
            "classifier_epochs": self.classifier_cfg(0).epochs,
            "batch_size": self.pretrain_cfg(0).batch_size,
            "weight_decay": self.fe_spec().weight_decay_lambda,
            "window_len": self.profile_obj.window_len,
            "recipe": [[s.kind, dict(s.params)] for s in self.profile_obj.recipe],
        }
        return out
