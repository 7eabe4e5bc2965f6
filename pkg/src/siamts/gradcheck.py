"""Finite-difference verification of every differentiable operation.

Each check builds a small graph from named parameters, compares the
analytic gradients from the reverse sweep against central differences,
and reports the worst relative error.  The suite is the ground truth the
rest of the package leans on: if it passes, training optimizes what the
loss says it optimizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import DTYPE, Tensor

DEFAULT_STEP = 1e-5
DEFAULT_THRESHOLD = 1e-4


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of f w.r.t. x, probing x in place."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        hi = f()
        flat[i] = keep - h
        lo = f()
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * h)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst relative error, with denominators floored at 1 so components
    near zero are compared absolutely."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(make_loss: Callable[[], Tensor], params: Mapping[str, Tensor],
                    h: float = DEFAULT_STEP) -> dict[str, float]:
    """Max relative error per parameter between analytic and numeric grads."""
    analytic = ad.grads_for(make_loss(), params)
    errs: dict[str, float] = {}
    for name, p in params.items():
        if not p.requires_grad:
            continue
        numeric = numeric_grad(lambda: float(make_loss().data), p.data, h)
        errs[name] = max_rel_err(analytic[name], numeric)
    return errs


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    passed: bool


def _away_from_kink(x: np.ndarray, margin: float = 0.2) -> np.ndarray:
    """Shift values off zero so relu's nondifferentiable point is not probed."""
    return x + margin * np.sign(x) + (x == 0.0) * margin


def _reduce(out: Tensor, rng: np.random.Generator) -> Tensor:
    """Contract a non-scalar output with a fixed random functional."""
    r = Tensor(rng.standard_normal(out.shape))
    return ad.tensor_sum(ad.mul(out, r))


def _suite(rng: np.random.Generator):
    """Yields (name, params, make_loss) triples covering every op."""
    from .training import simsiam_loss

    def randn(*shape):
        return rng.standard_normal(shape)

    checks = []

    def case(name, params, builder):
        red = Tensor(rng.standard_normal(np.asarray(builder(params).data).shape))

        def make_loss():
            out = builder(params)
            if out.ndim == 0:
                return out
            return ad.tensor_sum(ad.mul(out, red))

        checks.append((name, params, make_loss))

    case("add_broadcast",
         {"a": Tensor(randn(3, 4), True), "b": Tensor(randn(4), True)},
         lambda p: ad.add(p["a"], p["b"]))
    case("mul_broadcast",
         {"a": Tensor(randn(3, 4), True), "b": Tensor(randn(1, 4), True)},
         lambda p: ad.mul(p["a"], p["b"]))
    case("neg", {"a": Tensor(randn(5), True)}, lambda p: ad.neg(p["a"]))
    case("pow", {"a": Tensor(np.abs(randn(4, 3)) + 0.5, True)},
         lambda p: ad.pow_scalar(p["a"], 1.7))
    case("pow_inverse_sqrt", {"a": Tensor(np.abs(randn(6)) + 0.5, True)},
         lambda p: ad.pow_scalar(p["a"], -0.5))
    case("matmul", {"a": Tensor(randn(3, 4), True), "b": Tensor(randn(4, 2), True)},
         lambda p: ad.matmul(p["a"], p["b"]))
    case("relu", {"a": Tensor(_away_from_kink(randn(4, 5)), True)},
         lambda p: ad.relu(p["a"]))
    case("sigmoid", {"a": Tensor(randn(3, 4), True)}, lambda p: ad.sigmoid(p["a"]))
    case("sum_axis", {"a": Tensor(randn(3, 4, 2), True)},
         lambda p: ad.tensor_sum(p["a"], axis=1))
    case("mean_keepdims", {"a": Tensor(randn(4, 3), True)},
         lambda p: ad.tensor_mean(p["a"], axis=0, keepdims=True))
    case("reshape", {"a": Tensor(randn(3, 4), True)},
         lambda p: ad.reshape(p["a"], (2, 6)))
    case("softmax", {"a": Tensor(randn(3, 5), True)}, lambda p: ad.softmax(p["a"]))
    case("dense", {"x": Tensor(randn(4, 3), True), "w": Tensor(randn(3, 2), True),
                   "b": Tensor(randn(2), True)},
         lambda p: ad.dense(p["x"], p["w"], p["b"]))
    case("conv1d_pad", {"x": Tensor(randn(2, 7, 3), True), "w": Tensor(randn(3, 3, 4), True)},
         lambda p: ad.conv1d(p["x"], p["w"], stride=1, padding=1))
    case("conv1d_stride", {"x": Tensor(randn(2, 9, 2), True), "w": Tensor(randn(3, 2, 3), True)},
         lambda p: ad.conv1d(p["x"], p["w"], stride=2, padding=0))
    case("conv1d_pointwise", {"x": Tensor(randn(2, 5, 4), True), "w": Tensor(randn(1, 4, 2), True)},
         lambda p: ad.conv1d(p["x"], p["w"]))
    case("global_avg_pool", {"x": Tensor(randn(3, 6, 4), True)},
         lambda p: ad.global_avg_pool(p["x"]))
    case("batch_standardize", {"x": Tensor(randn(6, 4), True)},
         lambda p: ad.batch_standardize(p["x"]))
    labels = rng.integers(0, 4, size=5)
    case("softmax_cross_entropy", {"z": Tensor(randn(5, 4), True)},
         lambda p: ad.softmax_cross_entropy(p["z"], labels))
    targets = rng.integers(0, 2, size=(3, 4)).astype(float)
    case("sigmoid_bce", {"z": Tensor(randn(3, 4), True)},
         lambda p: ad.sigmoid_bce(p["z"], targets))
    case("cosine_similarity", {"p": Tensor(randn(4, 6), True), "z": Tensor(randn(4, 6), True)},
         lambda p: ad.cosine_similarity(p["p"], p["z"]))
    # without the stop-gradient every input is differentiable and must
    # match finite differences
    case("simsiam_loss_no_stopgrad",
         {"pi": Tensor(randn(3, 5), True), "zj": Tensor(randn(3, 5), True),
          "pj": Tensor(randn(3, 5), True), "zi": Tensor(randn(3, 5), True)},
         lambda p: simsiam_loss(p["pi"], p["zj"], p["pj"], p["zi"],
                                use_stop_gradient=False))
    # with it, only the prediction side carries gradient; the projection
    # side is held constant, so finite differences apply to p alone
    zj_const, zi_const = Tensor(randn(3, 5)), Tensor(randn(3, 5))
    case("simsiam_loss_stopgrad",
         {"pi": Tensor(randn(3, 5), True), "pj": Tensor(randn(3, 5), True)},
         lambda p: simsiam_loss(p["pi"], zj_const, p["pj"], zi_const))

    # end to end through one of everything that appears in a real model
    def conv_net(p):
        h1 = ad.relu(ad.conv1d(p["x"], p["w1"], stride=1, padding=1))
        h2 = ad.relu(ad.conv1d(h1, p["w2"], stride=2, padding=1))
        feats = ad.global_avg_pool(h2)
        logits = ad.dense(feats, p["w3"], p["b3"])
        return ad.softmax_cross_entropy(logits, np.array([0, 2, 1]))

    case("conv_net_end_to_end",
         {"x": Tensor(randn(3, 8, 2) * 0.7, True),
          "w1": Tensor(randn(3, 2, 4) * 0.5, True),
          "w2": Tensor(randn(3, 4, 5) * 0.5, True),
          "w3": Tensor(randn(5, 3) * 0.5, True),
          "b3": Tensor(randn(3) * 0.1, True)},
         conv_net)
    return checks


def run_suite(h: float = DEFAULT_STEP, threshold: float = DEFAULT_THRESHOLD,
              seed: int = 0, perturb: bool = False) -> list[CheckResult]:
    """Run every check.  With perturb=True one analytic gradient is corrupted
    on purpose, which must surface as a failure."""
    rng = np.random.default_rng(seed)
    results = []
    for i, (name, params, make_loss) in enumerate(_suite(rng)):
        analytic = ad.grads_for(make_loss(), params)
        if perturb and i == 0:
            first = next(iter(analytic))
            analytic[first] = analytic[first] * 1.05 + 0.01
        worst = 0.0
        for pname, p in params.items():
            numeric = numeric_grad(lambda: float(make_loss().data), p.data, h)
            worst = max(worst, max_rel_err(analytic[pname], numeric))
        results.append(CheckResult(name, worst, worst < threshold))
    return results
