"""Stochastic time-series transforms used to build self-supervised views.

Every transform maps a [time, channels] array to a new array of the same
shape, leaving the input untouched.  Stochastic transforms draw from the
caller's Generator, so a fixed seed fixes the view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.interpolate import CubicSpline

from .autodiff import DTYPE
from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class Window:
    """A fixed-length slice of one session: values [T, C] plus provenance.

    user_id is None for windows in an unlabelled pool.
    """

    values: np.ndarray
    user_id: int | None = None
    session_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=DTYPE))
        if self.values.ndim != 2:
            raise ConfigError(f"window values must be [time, channels], got {self.values.shape}")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "Window":
        return Window(values, self.user_id, self.session_id)


# ---------------------------------------------------------------------------
# transforms


def jitter(x: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
    """Add iid Gaussian noise with standard deviation sigma."""
    return x + rng.normal(0.0, sigma, x.shape)


def random_scaling(x: np.ndarray, rng: np.random.Generator, sigma: float,
                   mu: float = 1.0) -> np.ndarray:
    """Multiply each channel by one factor drawn from N(mu, sigma^2)."""
    return x * rng.normal(mu, sigma, (1, x.shape[1]))


def _knot_curve(rng: np.random.Generator, length: int, knots: int, sigma: float,
                columns: int) -> np.ndarray:
    """Smooth random curves around 1: cubic spline through N(1, sigma^2) knots."""
    positions = np.linspace(0.0, length - 1.0, knots)
    values = rng.normal(1.0, sigma, (knots, columns))
    return CubicSpline(positions, values, axis=0)(np.arange(length))


def magnitude_warp(x: np.ndarray, rng: np.random.Generator, sigma: float,
                   knots: int = 4) -> np.ndarray:
    """Multiply each channel by its own smooth random curve around 1."""
    return x * _knot_curve(rng, x.shape[0], knots, sigma, x.shape[1])


def time_warp(x: np.ndarray, rng: np.random.Generator, sigma: float,
              knots: int = 4) -> np.ndarray:
    """Resample all channels along one smooth monotone distortion of time.

    A positive rate curve is integrated into a warp, rescaled to pin both
    endpoints, and the signal is linearly interpolated at the warped
    positions.  Endpoints are fixed; interior time stretches and squeezes.
    """
    length = x.shape[0]
    rates = _knot_curve(rng, length, knots, sigma, 1)[:, 0]
    rates = np.maximum(rates, 0.05)
    warped = np.concatenate(([0.0], np.cumsum((rates[1:] + rates[:-1]) / 2.0)))
    warped *= (length - 1.0) / warped[-1]
    grid = np.arange(length)
    out = np.empty_like(x)
    for c in range(x.shape[1]):
        out[:, c] = np.interp(warped, grid, x[:, c])
    return out


def flip(x: np.ndarray) -> np.ndarray:
    """Reverse the time axis."""
    return x[::-1].copy()


def drop(x: np.ndarray, rng: np.random.Generator, fraction: float = 0.1) -> np.ndarray:
    """Zero out one contiguous segment of round(fraction * T) steps."""
    length = x.shape[0]
    n = int(round(fraction * length))
    out = x.copy()
    if n == 0:
        return out
    start = int(rng.integers(0, length - n + 1))
    out[start:start + n] = 0.0
    return out


def random_sampling(x: np.ndarray, rng: np.random.Generator,
                    keep_fraction: float = 0.8) -> np.ndarray:
    """Keep a random subset of time steps and linearly re-interpolate to T.

    The first and last steps are always kept so interpolation never
    extrapolates.
    """
    length = x.shape[0]
    n = int(round(keep_fraction * length))
    n = min(max(n, 2), length)
    interior = rng.choice(np.arange(1, length - 1), size=n - 2, replace=False)
    kept = np.concatenate(([0], np.sort(interior), [length - 1]))
    grid = np.arange(length)
    out = np.empty_like(x)
    for c in range(x.shape[1]):
        out[:, c] = np.interp(grid, kept, x[kept, c])
    return out


def permutation(x: np.ndarray, rng: np.random.Generator, segments: int = 4) -> np.ndarray:
    """Split time into near-equal segments and concatenate them shuffled."""
    parts = np.array_split(np.arange(x.shape[0]), segments)
    order = rng.permutation(segments)
    return np.concatenate([x[parts[i]] for i in order])


def negation(x: np.ndarray) -> np.ndarray:
    """Invert the sign of every value."""
    return -x


def channel_shuffle(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Reorder the channels uniformly at random."""
    return x[:, rng.permutation(x.shape[1])]


# ---------------------------------------------------------------------------
# named specs and dispatch

# kind -> (callable, takes rng, allowed params with defaults)
_REGISTRY: dict[str, tuple] = {
    "jitter": (jitter, True, {"sigma": None}),
    "random_scaling": (random_scaling, True, {"sigma": None, "mu": 1.0}),
    "magnitude_warp": (magnitude_warp, True, {"sigma": None, "knots": 4}),
    "time_warp": (time_warp, True, {"sigma": None, "knots": 4}),
    "flip": (flip, False, {}),
    "drop": (drop, True, {"fraction": 0.1}),
    "random_sampling": (random_sampling, True, {"keep_fraction": 0.8}),
    "permutation": (permutation, True, {"segments": 4}),
    "negation": (negation, False, {}),
    "channel_shuffle": (channel_shuffle, True, {}),
}

KINDS = tuple(_REGISTRY)


@dataclass(frozen=True)
class AugmentationSpec:
    """A transform by name with its parameters, e.g. for config files."""

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _REGISTRY:
            raise ConfigError(f"unknown augmentation {self.kind!r}; expected one of {KINDS}")
        _, _, allowed = _REGISTRY[self.kind]
        object.__setattr__(self, "params", dict(self.params))
        for name, value in self.params.items():
            if name not in allowed:
                raise ConfigError(f"{self.kind}: unknown parameter {name!r}")
            if not np.isfinite(value):
                raise ConfigError(f"{self.kind}: parameter {name}={value!r} is not finite")
        for name, default in allowed.items():
            if default is None and name not in self.params:
                raise ConfigError(f"{self.kind}: parameter {name!r} is required")
        sigma = self.params.get("sigma")
        if sigma is not None and sigma < 0:
            raise ConfigError(f"{self.kind}: sigma must be >= 0, got {sigma}")
        knots = self.params.get("knots")
        if knots is not None and (int(knots) != knots or knots < 2):
            raise ConfigError(f"{self.kind}: knots must be an integer >= 2, got {knots}")
        fraction = self.params.get("fraction")
        if fraction is not None and not 0.0 <= fraction <= 1.0:
            raise ConfigError(f"{self.kind}: fraction must lie in [0, 1], got {fraction}")
        keep = self.params.get("keep_fraction")
        if keep is not None and not 0.0 < keep <= 1.0:
            raise ConfigError(f"{self.kind}: keep_fraction must lie in (0, 1], got {keep}")
        segments = self.params.get("segments")
        if segments is not None and (int(segments) != segments or segments < 2):
            raise ConfigError(f"{self.kind}: segments must be an integer >= 2, got {segments}")

    def apply(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        fn, takes_rng, allowed = _REGISTRY[self.kind]
        kwargs = dict(self.params)
        if "knots" in kwargs:
            kwargs["knots"] = int(kwargs["knots"])
        if "segments" in kwargs:
            kwargs["segments"] = int(kwargs["segments"])
        if self.kind == "permutation" and kwargs.get("segments", 4) > x.shape[0]:
            raise ConfigError(
                f"permutation: segments {kwargs['segments']} exceeds window length {x.shape[0]}")
        if self.kind == "channel_shuffle" and x.shape[1] < 2:
            raise ConfigError("channel_shuffle: needs at least 2 channels")
        if takes_rng:
            return fn(x, rng, **kwargs)
        return fn(x, **kwargs)


def apply_chain(window: Window, specs, rng: np.random.Generator) -> Window:
    """Apply every spec in order, producing one augmented view."""
    values = window.values
    for spec in specs:
        values = spec.apply(values, rng)
    return window.with_values(values)


def sample_positive_pair(window: Window, specs, rng: np.random.Generator) -> tuple[Window, Window]:
    """Two independently augmented views of the same window."""
    return apply_chain(window, specs, rng), apply_chain(window, specs, rng)


def mtssl_example(window: Window, spec: AugmentationSpec,
                  rng: np.random.Generator) -> tuple[Window, int]:
    """Transformation-recognition example: apply the transform with
    probability 1/2 and return (window, applied-bit)."""
    applied = int(rng.integers(0, 2))
    if applied:
        return window.with_values(spec.apply(window.values, rng)), 1
    return window, 0
