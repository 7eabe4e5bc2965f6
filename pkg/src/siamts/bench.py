"""Timing comparison of the compiled and BLAS convolution backends."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass
class BenchRow:
    batch: int
    time_len: int
    c_in: int
    width: int
    c_out: int
    numba_ms: float | None
    numpy_ms: float | None
    auto_choice: str

    @property
    def macs(self) -> int:
        t_out = kernels.out_length(self.time_len, self.width, 1, 1)
        return self.batch * t_out * self.width * self.c_in * self.c_out


DEFAULT_SHAPES = (
    # batch, time, c_in, width, c_out: window-scale convs small to large
    (32, 30, 8, 3, 32),
    (32, 30, 32, 3, 64),
    (32, 30, 24, 3, 128),
    (32, 30, 128, 3, 256),
    (16, 128, 40, 3, 48),
    (16, 30, 256, 3, 512),
    (8, 30, 1024, 3, 2048),
)


def _time_backend(name: str, x, w, repeats: int) -> float:
    kernels.set_backend(name)
    try:
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            y = kernels.conv1d_forward(x, w, 1, 1)
            kernels.conv1d_grad_input(y, w, 1, 1, x.shape[1])
            kernels.conv1d_grad_kernels(x, y, 1, 1, w.shape[0])
            best = min(best, time.perf_counter() - t0)
        return best * 1e3
    finally:
        kernels.set_backend(None)


def run_bench(shapes=DEFAULT_SHAPES, repeats: int = 3, seed: int = 0) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    kernels.warmup()
    rows = []
    for batch, time_len, c_in, width, c_out in shapes:
        x = rng.standard_normal((batch, time_len, c_in))
        w = rng.standard_normal((width, c_in, c_out))
        numba_ms = (_time_backend("numba", x, w, repeats)
                    if kernels.HAVE_NUMBA else None)
        numpy_ms = _time_backend("numpy", x, w, repeats)
        auto = "numba" if (kernels.HAVE_NUMBA and
                           width * c_in * c_out <= kernels.AUTO_NUMBA_MAX_MACS) else "numpy"
        rows.append(BenchRow(batch, time_len, c_in, width, c_out,
                             numba_ms, numpy_ms, auto))
    return rows


def format_bench(rows: list[BenchRow]) -> str:
    lines = [f"{'shape (BxTxCi k Co)':<24} {'numba ms':>9} {'numpy ms':>9} "
             f"{'ratio':>6} {'auto':>6}"]
    for r in rows:
        shape = f"{r.batch}x{r.time_len}x{r.c_in} k{r.width} {r.c_out}"
        nb = "n/a" if r.numba_ms is None else f"{r.numba_ms:.2f}"
        ratio = ("" if r.numba_ms is None or r.numpy_ms == 0
                 else f"{r.numba_ms / r.numpy_ms:.2f}")
        lines.append(f"{shape:<24} {nb:>9} {r.numpy_ms:>9.2f} {ratio:>6} "
                     f"{r.auto_choice:>6}")
    lines.append("ratio < 1 means the compiled loops win; the auto backend "
                 "switches per call at "
                 f"width*c_in*c_out = {kernels.AUTO_NUMBA_MAX_MACS}.")
    return "\n".join(lines)
