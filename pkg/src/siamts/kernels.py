"""1-D convolution kernels: numba-compiled loops with a pure-numpy fallback.

Layout conventions (fixed across the package):
    input   x  [batch, time, channels_in]
    kernels w  [width, channels_in, channels_out]
    output  y  [batch, time_out, channels_out]
with time_out = (time + 2*padding - width) // stride + 1.

Backend selection is controlled by the SIAMTS_BACKEND environment variable:
    "numba"  force the compiled loops (error if numba is unavailable)
    "numpy"  force the im2col + BLAS path
    "auto"   (default) pick per call site by arithmetic intensity; small
             channel products run faster in the compiled loops, large ones
             in BLAS.
`set_backend` overrides the environment for the current process.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError, ShapeError

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only where numba is absent
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


BACKENDS = ("auto", "numba", "numpy")

# Measured on the reference box: BLAS sustains roughly 6x the f64 throughput
# of the compiled loops, but the loops win while the GEMM is too small to
# amortise im2col.  Crossover sits near this many multiply-adds per output
# element (width * channels_in * channels_out).
AUTO_NUMBA_MAX_MACS = 4096

_backend_override: str | None = None


def set_backend(name: str | None) -> None:
    """Force a backend for this process, or None to fall back to the env var."""
    if name is not None and name not in BACKENDS:
        raise ConfigError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    global _backend_override
    _backend_override = name


def backend() -> str:
    name = _backend_override or os.environ.get("SIAMTS_BACKEND", "auto")
    if name not in BACKENDS:
        raise ConfigError(f"SIAMTS_BACKEND={name!r}; expected one of {BACKENDS}")
    if name == "numba" and not HAVE_NUMBA:
        raise ConfigError("SIAMTS_BACKEND=numba but numba is not importable")
    if name == "auto" and not HAVE_NUMBA:
        return "numpy"
    return name


def _resolve(width: int, c_in: int, c_out: int) -> str:
    name = backend()
    if name != "auto":
        return name
    return "numba" if width * c_in * c_out <= AUTO_NUMBA_MAX_MACS else "numpy"


def _pad_time(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (0, 0)))


def out_length(time: int, width: int, stride: int, padding: int) -> int:
    span = time + 2 * padding - width
    if span < 0:
        raise ShapeError(
            f"kernel width {width} exceeds padded input length {time + 2 * padding}"
        )
    return span // stride + 1


# ---------------------------------------------------------------------------
# numba path


@njit(cache=True, nogil=True)
def _nb_forward(xp, w, stride, y):  # pragma: no cover - compiled
    batch, t_out, c_out = y.shape
    width, c_in, _ = w.shape
    for b in range(batch):
        for t in range(t_out):
            base = t * stride
            for k in range(width):
                for ci in range(c_in):
                    v = xp[b, base + k, ci]
                    for co in range(c_out):
                        y[b, t, co] += v * w[k, ci, co]


@njit(cache=True, nogil=True)
def _nb_grad_input(gy, w, stride, gxp):  # pragma: no cover - compiled
    batch, t_out, c_out = gy.shape
    width, c_in, _ = w.shape
    for b in range(batch):
        for t in range(t_out):
            base = t * stride
            for co in range(c_out):
                g = gy[b, t, co]
                for k in range(width):
                    for ci in range(c_in):
                        gxp[b, base + k, ci] += g * w[k, ci, co]


@njit(cache=True, nogil=True)
def _nb_grad_kernels(xp, gy, stride, gw):  # pragma: no cover - compiled
    batch, t_out, c_out = gy.shape
    width, c_in, _ = gw.shape
    for b in range(batch):
        for t in range(t_out):
            base = t * stride
            for k in range(width):
                for ci in range(c_in):
                    v = xp[b, base + k, ci]
                    for co in range(c_out):
                        gw[k, ci, co] += v * gy[b, t, co]


# ---------------------------------------------------------------------------
# numpy path (im2col + BLAS)


def _cols(xp: np.ndarray, width: int, stride: int, t_out: int) -> np.ndarray:
    """[batch, t_out, width, c_in] view-then-copy of the sliding windows."""
    v = np.lib.stride_tricks.sliding_window_view(xp, width, axis=1)
    # v is [batch, t_full, c_in, width]; subsample stride, put width before c_in
    return np.ascontiguousarray(v[:, ::stride][:, :t_out].transpose(0, 1, 3, 2))


def _np_forward(xp, w, stride, t_out):
    batch = xp.shape[0]
    width, c_in, c_out = w.shape
    cols = _cols(xp, width, stride, t_out).reshape(batch * t_out, width * c_in)
    y = cols @ w.reshape(width * c_in, c_out)
    return y.reshape(batch, t_out, c_out)


def _np_grad_input(gy, w, stride, gxp):
    batch, t_out, c_out = gy.shape
    width, c_in, _ = w.shape
    gcols = gy.reshape(batch * t_out, c_out) @ w.reshape(width * c_in, c_out).T
    gcols = gcols.reshape(batch, t_out, width, c_in)
    for k in range(width):
        gxp[:, k : k + stride * t_out : stride, :] += gcols[:, :, k, :]


def _np_grad_kernels(xp, gy, stride, width):
    batch, t_out, c_out = gy.shape
    c_in = xp.shape[2]
    cols = _cols(xp, width, stride, t_out).reshape(batch * t_out, width * c_in)
    gw = cols.T @ gy.reshape(batch * t_out, c_out)
    return gw.reshape(width, c_in, c_out)


# ---------------------------------------------------------------------------
# public dispatch


def conv1d_forward(x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of x [B,T,Ci] with kernels w [K,Ci,Co] -> [B,To,Co]."""
    width, c_in, c_out = w.shape
    t_out = out_length(x.shape[1], width, stride, padding)
    xp = _pad_time(x, padding)
    if _resolve(width, c_in, c_out) == "numba":
        y = np.zeros((x.shape[0], t_out, c_out), dtype=x.dtype)
        _nb_forward(xp, w, stride, y)
        return y
    return _np_forward(xp, w, stride, t_out)


def conv1d_grad_input(
    gy: np.ndarray, w: np.ndarray, stride: int, padding: int, t_in: int
) -> np.ndarray:
    """Gradient of the convolution output w.r.t. its input, shape [B,t_in,Ci]."""
    width, c_in, c_out = w.shape
    batch = gy.shape[0]
    gxp = np.zeros((batch, t_in + 2 * padding, c_in), dtype=gy.dtype)
    if _resolve(width, c_in, c_out) == "numba":
        _nb_grad_input(gy, w, stride, gxp)
    else:
        _np_grad_input(gy, w, stride, gxp)
    if padding:
        return gxp[:, padding:-padding, :]
    return gxp


def conv1d_grad_kernels(
    x: np.ndarray, gy: np.ndarray, stride: int, padding: int, width: int
) -> np.ndarray:
    """Gradient of the convolution output w.r.t. the kernels, shape [K,Ci,Co]."""
    c_in = x.shape[2]
    c_out = gy.shape[2]
    xp = _pad_time(x, padding)
    if _resolve(width, c_in, c_out) == "numba":
        gw = np.zeros((width, c_in, c_out), dtype=gy.dtype)
        _nb_grad_kernels(xp, gy, stride, gw)
        return gw
    return _np_grad_kernels(xp, gy, stride, width)


def warmup() -> None:
    """Trigger numba compilation on tiny inputs so timings exclude JIT cost."""
    if not HAVE_NUMBA:
        return
    x = np.zeros((1, 4, 2))
    w = np.zeros((3, 2, 2))
    y = conv1d_forward(x, w, 1, 1)
    conv1d_grad_input(y, w, 1, 1, 4)
    conv1d_grad_kernels(x, y, 1, 1, 3)
