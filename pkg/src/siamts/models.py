"""Model definitions: residual 1-D conv feature extractor, MLP heads, and
the siamese / transformation-recognition / classifier assemblies.

All models expose params() as an ordered name->Tensor mapping; training
and checkpointing work purely through that mapping.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import DTYPE, Tensor
from .errors import ConfigError, DataError, ShapeError

_CKPT_MAGIC = b"STSM"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class FeatureExtractorSpec:
    """Residual conv stack: a stem conv to filters[0], then one residual
    block per further entry.  Stride 1, same padding, global average pool."""

    filters: tuple[int, ...]
    kernel_size: int = 3
    weight_decay_lambda: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        if not self.filters or any(f < 1 for f in self.filters):
            raise ConfigError(f"filters must be positive and non-empty, got {self.filters}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(
                f"kernel_size must be odd for same padding, got {self.kernel_size}")
        if self.weight_decay_lambda < 0:
            raise ConfigError(
                f"weight_decay_lambda must be >= 0, got {self.weight_decay_lambda}")


@dataclass(frozen=True)
class MlpSpec:
    """Dense stack; widths are the output sizes of successive layers.
    Hidden layers use hidden_activation (optionally preceded by batch
    standardization); the final layer is linear, with out_activation
    applied only where probabilities are requested."""

    widths: tuple[int, ...]
    hidden_activation: str = "relu"
    out_activation: str = "none"
    standardize_hidden: bool = False
    center_output: bool = False

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not self.widths or any(w < 1 for w in self.widths):
            raise ConfigError(f"widths must be positive and non-empty, got {self.widths}")
        if self.hidden_activation not in ("relu", "none"):
            raise ConfigError(f"unknown hidden_activation {self.hidden_activation!r}")
        if self.out_activation not in ("none", "softmax", "sigmoid"):
            raise ConfigError(f"unknown out_activation {self.out_activation!r}")


def he_uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, shape)


class FeatureExtractor:
    """x [B, T, C] -> features [B, filters[-1]]."""

    def __init__(self, spec: FeatureExtractorSpec, in_channels: int,
                 rng: np.random.Generator):
        if in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {in_channels}")
        self.spec = spec
        self.in_channels = in_channels
        self._params: dict[str, Tensor] = {}
        k = spec.kernel_size

        def conv_param(name, c_in, c_out):
            self._params[name + ".w"] = Tensor(
                he_uniform(rng, k * c_in, (k, c_in, c_out)), requires_grad=True)
            self._params[name + ".b"] = Tensor(np.zeros(c_out), requires_grad=True)

        conv_param("stem", in_channels, spec.filters[0])
        for i in range(1, len(spec.filters)):
            c_in, c_out = spec.filters[i - 1], spec.filters[i]
            conv_param(f"block{i}.c1", c_in, c_out)
            conv_param(f"block{i}.c2", c_out, c_out)
            if c_in != c_out:
                self._params[f"block{i}.proj.w"] = Tensor(
                    he_uniform(rng, c_in, (1, c_in, c_out)), requires_grad=True)

    @property
    def out_dim(self) -> int:
        return self.spec.filters[-1]

    def params(self) -> dict[str, Tensor]:
        return self._params

    def _conv(self, x: Tensor, name: str) -> Tensor:
        pad = (self.spec.kernel_size - 1) // 2
        return ad.add(ad.conv1d(x, self._params[name + ".w"], stride=1, padding=pad),
                      self._params[name + ".b"])

    def features_seq(self, x: Tensor) -> Tensor:
        """Features before pooling, [B, T, filters[-1]]."""
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(
                f"feature extractor expects [B, T, {self.in_channels}], got {x.shape}")
        h = ad.relu(self._conv(x, "stem"))
        for i in range(1, len(self.spec.filters)):
            main = ad.relu(self._conv(h, f"block{i}.c1"))
            main = self._conv(main, f"block{i}.c2")
            proj = self._params.get(f"block{i}.proj.w")
            skip = h if proj is None else ad.conv1d(h, proj)
            # residual sum stays unactivated so an identically-zero main
            # path passes the input through exactly
            h = ad.add(main, skip)
        return h

    def forward(self, x: Tensor) -> Tensor:
        return ad.global_avg_pool(self.features_seq(x))

    def clone(self) -> "FeatureExtractor":
        copy = FeatureExtractor(self.spec, self.in_channels, np.random.default_rng(0))
        for name, p in self._params.items():
            copy._params[name] = Tensor(p.data.copy(), requires_grad=True)
        return copy


class Mlp:
    def __init__(self, spec: MlpSpec, in_dim: int, rng: np.random.Generator):
        if in_dim < 1:
            raise ConfigError(f"in_dim must be >= 1, got {in_dim}")
        self.spec = spec
        self.in_dim = in_dim
        self._params: dict[str, Tensor] = {}
        prev = in_dim
        for i, width in enumerate(spec.widths):
            self._params[f"l{i}.w"] = Tensor(
                he_uniform(rng, prev, (prev, width)), requires_grad=True)
            self._params[f"l{i}.b"] = Tensor(np.zeros(width), requires_grad=True)
            prev = width

    @property
    def out_dim(self) -> int:
        return self.spec.widths[-1]

    def params(self) -> dict[str, Tensor]:
        return self._params

    def forward(self, x: Tensor) -> Tensor:
        """Linear output of the last layer (no out_activation)."""
        h = x
        last = len(self.spec.widths) - 1
        for i in range(len(self.spec.widths)):
            h = ad.dense(h, self._params[f"l{i}.w"], self._params[f"l{i}.b"])
            if i < last:
                if self.spec.standardize_hidden:
                    h = ad.batch_standardize(h)
                if self.spec.hidden_activation == "relu":
                    h = ad.relu(h)
            elif self.spec.center_output:
                # subtract the batch mean only: rectified features push every
                # output the same way, which centering removes, while the
                # per-dimension variance stays free so a collapsing encoder
                # still reads as collapsed
                h = ad.add(h, ad.neg(ad.tensor_mean(h, axis=0, keepdims=True)))
        return h

    def proba(self, x: Tensor) -> Tensor:
        out = self.forward(x)
        if self.spec.out_activation == "softmax":
            return ad.softmax(out)
        if self.spec.out_activation == "sigmoid":
            return ad.sigmoid(out)
        return out


def _merge(*groups: tuple[str, Mapping[str, Tensor]]) -> dict[str, Tensor]:
    merged: dict[str, Tensor] = {}
    for prefix, params in groups:
        for name, p in params.items():
            merged[f"{prefix}.{name}"] = p
    return merged


class SimSiamModel:
    """Feature extractor + projector (the encoder) and the predictor head."""

    def __init__(self, fe: FeatureExtractor, projector: Mlp, predictor: Mlp):
        if predictor.out_dim != projector.out_dim:
            raise ConfigError(
                f"predictor output {predictor.out_dim} must match projector "
                f"output {projector.out_dim}")
        if predictor.in_dim != projector.out_dim:
            raise ConfigError(
                f"predictor input {predictor.in_dim} must match projector "
                f"output {projector.out_dim}")
        self.fe = fe
        self.projector = projector
        self.predictor = predictor

    def params(self) -> dict[str, Tensor]:
        return _merge(("fe", self.fe.params()), ("proj", self.projector.params()),
                      ("pred", self.predictor.params()))

    def encode(self, x: Tensor) -> Tensor:
        return self.projector.forward(self.fe.forward(x))

    def predict(self, z: Tensor) -> Tensor:
        return self.predictor.forward(z)


class MtsslModel:
    """Feature extractor shared by one binary head per transformation."""

    def __init__(self, fe: FeatureExtractor, heads: list[Mlp]):
        self.fe = fe
        self.heads = heads

    def params(self) -> dict[str, Tensor]:
        groups = [("fe", self.fe.params())]
        groups += [(f"head{i}", h.params()) for i, h in enumerate(self.heads)]
        return _merge(*groups)


class ClassifierModel:
    """Feature extractor + softmax head over user classes."""

    def __init__(self, fe: FeatureExtractor, head: Mlp):
        self.fe = fe
        self.head = head

    def params(self) -> dict[str, Tensor]:
        return _merge(("fe", self.fe.params()), ("head", self.head.params()))

    def logits(self, x: Tensor) -> Tensor:
        return self.head.forward(self.fe.forward(x))

    def proba(self, x: Tensor) -> Tensor:
        return ad.softmax(self.logits(x))


def build_simsiam(fe_spec: FeatureExtractorSpec, projector: tuple[int, ...],
                  predictor: tuple[int, ...], in_channels: int,
                  rng: np.random.Generator, standardize: bool = True) -> SimSiamModel:
    """Assemble the siamese model.  standardize=True puts batch
    standardization in the MLPs, including the projector output; without
    it the rectified features leave every projection pointing the same
    way and representation quality is hard to read off the embeddings."""
    fe = FeatureExtractor(fe_spec, in_channels, rng)
    proj = Mlp(MlpSpec(tuple(projector), standardize_hidden=standardize), fe.out_dim, rng)
    pred = Mlp(MlpSpec(tuple(predictor), standardize_hidden=standardize),
               proj.out_dim, rng)
    return SimSiamModel(fe, proj, pred)


def build_mtssl(fe_spec: FeatureExtractorSpec, n_heads: int, in_channels: int,
                rng: np.random.Generator, head_hidden: int = 64) -> MtsslModel:
    if n_heads < 1:
        raise ConfigError(f"n_heads must be >= 1, got {n_heads}")
    fe = FeatureExtractor(fe_spec, in_channels, rng)
    heads = [Mlp(MlpSpec((head_hidden, 1)), fe.out_dim, rng) for _ in range(n_heads)]
    return MtsslModel(fe, heads)


def build_classifier(fe: FeatureExtractor, n_classes: int, rng: np.random.Generator,
                     hidden: tuple[int, ...] = (256, 64)) -> ClassifierModel:
    if n_classes < 2:
        raise ConfigError(f"n_classes must be >= 2, got {n_classes}")
    head = Mlp(MlpSpec(tuple(hidden) + (n_classes,), out_activation="softmax"),
               fe.out_dim, rng)
    return ClassifierModel(fe, head)


def set_trainable(params: Mapping[str, Tensor], trainable: bool) -> None:
    for p in params.values():
        p.requires_grad = trainable


def param_count(params: Mapping[str, Tensor]) -> int:
    return int(sum(p.data.size for p in params.values()))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: Mapping[str, Tensor] | Mapping[str, np.ndarray],
                    path: str | Path) -> None:
    """Named-array checkpoint; float32 payloads, little endian."""
    path = Path(path)
    blob = bytearray(struct.pack("<4sII", _CKPT_MAGIC, _CKPT_VERSION, len(params)))
    for name, value in params.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        encoded = name.encode()
        blob += struct.pack("<I", len(encoded)) + encoded
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != _CKPT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    offset = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode()
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            out[name] = arr.reshape(shape).astype(DTYPE)
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated or corrupt checkpoint ({exc})")
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes")
    return out


def restore_params(params: Mapping[str, Tensor], arrays: Mapping[str, np.ndarray]) -> None:
    """Load checkpoint arrays into live parameters, strict on names/shapes."""
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise DataError(f"checkpoint mismatch: missing={missing} unexpected={extra}")
    for name, p in params.items():
        arr = arrays[name]
        if tuple(arr.shape) != p.shape:
            raise DataError(
                f"checkpoint {name}: shape {arr.shape} does not match {p.shape}")
        p.data = np.asarray(arr, dtype=DTYPE)
