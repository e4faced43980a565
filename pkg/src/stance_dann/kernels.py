"""Fused conv1d + ReLU + max-over-time kernels.

The convolution over document token sequences is the hot loop of training,
so a compiled Cython kernel is used when the extension built; a pure numpy
implementation is the fallback. Selection happens at import and can be
forced with STANCE_DANN_KERNEL=compiled|pure|auto.

Both backends implement the same contract:

forward(x[L, D], filt[W, D, M], bias[M]) -> (pooled[M], argmax[M])
    Valid convolution (positions P = L - W + 1, inputs shorter than W are
    zero-padded on the right), ReLU, then per-map max over positions with
    first-occurrence tie break. argmax indexes the post-ReLU activations.

backward(dpooled[M], x, filt, argmax, active[M]) -> (dx, dfilt, dbias)
    Routes gradient only through each map's argmax position; `active` is
    the ReLU mask at that position (pooled > 0).
"""

from __future__ import annotations

import os

import numpy as np

try:
    from stance_dann import _kernels as _compiled
except ImportError:
    _compiled = None

_choice = os.environ.get("STANCE_DANN_KERNEL", "auto")
if _choice not in ("auto", "compiled", "pure"):
    raise ValueError(f"STANCE_DANN_KERNEL must be auto|compiled|pure, got {_choice!r}")
if _choice == "compiled" and _compiled is None:
    raise ImportError("STANCE_DANN_KERNEL=compiled but the extension is not built")
_use_compiled = _compiled is not None and _choice != "pure"


def backend_name() -> str:
    return "compiled" if _use_compiled else "pure"


def has_compiled() -> bool:
    return _compiled is not None


def _pad_short(x: np.ndarray, width: int) -> np.ndarray:
    if x.shape[0] >= width:
        return x
    pad = np.zeros((width - x.shape[0], x.shape[1]), dtype=np.float64)
    return np.vstack([x, pad])


def _windows(x: np.ndarray, width: int) -> np.ndarray:
    # [P, W*D] copy of the sliding windows, row p = x[p:p+W] flattened
    view = np.lib.stride_tricks.sliding_window_view(x, width, axis=0)
    return np.ascontiguousarray(view.transpose(0, 2, 1)).reshape(x.shape[0] - width + 1, -1)


def _check_conv_args(x, filt, bias):
    width, depth, maps = filt.shape
    if width <= 0 or maps <= 0:
        raise ValueError("filter width and map count must be positive")
    if x.ndim != 2 or x.shape[1] != depth:
        raise ValueError(f"input depth {x.shape} does not match filter depth {depth}")
    if bias.shape != (maps,):
        raise ValueError(f"bias shape {bias.shape} does not match map count {maps}")


def _forward_pure(x, filt, bias):
    width, depth, maps = filt.shape
    x = _pad_short(x, width)
    z = _windows(x, width) @ filt.reshape(width * depth, maps) + bias
    act = np.maximum(z, 0.0)
    argmax = act.argmax(axis=0)
    pooled = act[argmax, np.arange(maps)]
    return pooled, argmax.astype(np.int64)


def _backward_pure(dpooled, x, filt, argmax, active):
    width, depth, maps = filt.shape
    length = x.shape[0]
    xp = _pad_short(x, width)
    positions = xp.shape[0] - width + 1
    win = _windows(xp, width)

    g = dpooled * active
    dbias = g.copy()
    dfilt = (win[argmax] * g[:, None]).T.reshape(width, depth, maps)

    dact = np.zeros((positions, maps), dtype=np.float64)
    dact[argmax, np.arange(maps)] = g
    dwin = dact @ filt.reshape(width * depth, maps).T
    dxp = np.zeros_like(xp)
    for w in range(width):
        dxp[w : w + positions] += dwin[:, w * depth : (w + 1) * depth]
    return dxp[:length], dfilt, dbias


def conv1d_maxpool_forward(
    x: np.ndarray, filt: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    filt = np.ascontiguousarray(filt, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    _check_conv_args(x, filt, bias)
    if _use_compiled:
        return _compiled.conv1d_maxpool_forward(x, filt, bias)
    return _forward_pure(x, filt, bias)


def conv1d_maxpool_backward(
    dpooled: np.ndarray,
    x: np.ndarray,
    filt: np.ndarray,
    argmax: np.ndarray,
    active: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    filt = np.ascontiguousarray(filt, dtype=np.float64)
    dpooled = np.ascontiguousarray(dpooled, dtype=np.float64)
    argmax = np.ascontiguousarray(argmax, dtype=np.int64)
    active = np.ascontiguousarray(active, dtype=np.float64)
    if _use_compiled:
        return _compiled.conv1d_maxpool_backward(dpooled, x, filt, argmax, active)
    return _backward_pure(dpooled, x, filt, argmax, active)
