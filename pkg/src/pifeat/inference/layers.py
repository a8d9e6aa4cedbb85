"""float32 forward kernels: LSTM, valid 2-D convolution, dense."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ShapeMismatch

F32 = np.float32


@dataclass(frozen=True, eq=False)
class LstmParams:
    """One LSTM direction; gates stacked ``(input, forget, cell, output)``."""

    w_ih: np.ndarray  # (4H, D)
    w_hh: np.ndarray  # (4H, H)
    b_ih: np.ndarray  # (4H,)
    b_hh: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]

    def check(self, input_dim: int) -> None:
        h = self.hidden
        expected = {"w_ih": (4 * h, input_dim), "w_hh": (4 * h, h), "b_ih": (4 * h,), "b_hh": (4 * h,)}
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeMismatch(f"LSTM {name}: expected {shape}, got {got}")


def _run_direction(x: np.ndarray, p: LstmParams, reverse: bool) -> np.ndarray:
    steps = x.shape[0]
    h_dim = p.hidden
    gates_x = x @ p.w_ih.T.astype(F32) + (p.b_ih + p.b_hh).astype(F32)
    w_hh_t = p.w_hh.T.astype(F32)
    h = np.zeros(h_dim, dtype=F32)
    c = np.zeros(h_dim, dtype=F32)
    out = np.empty((steps, h_dim), dtype=F32)
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        z = gates_x[t] + h @ w_hh_t
        i = expit(z[:h_dim])
        f = expit(z[h_dim : 2 * h_dim])
        g = np.tanh(z[2 * h_dim : 3 * h_dim])
        o = expit(z[3 * h_dim :])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[t] = h
    return out


def lstm_forward(x, forward: LstmParams, backward: LstmParams | None = None) -> np.ndarray:
    """Run an LSTM over ``x`` of shape ``(T, D)`` from zero state.

    With ``backward`` given the layer is bidirectional and returns ``(T, 2H)``
    with the forward features first; otherwise ``(T, H)``.
    """
    x = np.asarray(x, dtype=F32)
    if x.ndim != 2:
        raise ShapeMismatch(f"LSTM input must be (T, D), got shape {x.shape}")
    forward.check(x.shape[1])
    out = _run_direction(x, forward, reverse=False)
    if backward is None:
        return out
    backward.check(x.shape[1])
    if backward.hidden != forward.hidden:
        raise ShapeMismatch("forward and backward hidden sizes differ")
    return np.concatenate([out, _run_direction(x, backward, reverse=True)], axis=1)


def conv2d_forward(x, kernel, bias=None, stride: int = 1, relu: bool = True) -> np.ndarray:
    """Valid-padding convolution of ``(H, W, C)`` input with an ``(kh, kw, C, F)`` kernel."""
    x = np.asarray(x, dtype=F32)
    kernel = np.asarray(kernel, dtype=F32)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeMismatch(f"expected (H, W, C) input and (kh, kw, C, F) kernel, got {x.shape}, {kernel.shape}")
    kh, kw, c_in, c_out = kernel.shape
    if x.shape[2] != c_in:
        raise ShapeMismatch(f"input has {x.shape[2]} channels, kernel expects {c_in}")
    if x.shape[0] < kh or x.shape[1] < kw:
        raise ShapeMismatch(f"input {x.shape[:2]} smaller than kernel {(kh, kw)}")
    if stride < 1:
        raise ShapeMismatch("stride must be >= 1")
    # (Ho, Wo, C, kh, kw) patches
    patches = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))[::stride, ::stride]
    ho, wo = patches.shape[:2]
    cols = patches.transpose(0, 1, 3, 4, 2).reshape(ho * wo, kh * kw * c_in)
    y = (cols @ kernel.reshape(kh * kw * c_in, c_out)).reshape(ho, wo, c_out)
    if bias is not None:
        bias = np.asarray(bias, dtype=F32)
        if bias.shape != (c_out,):
            raise ShapeMismatch(f"conv bias: expected ({c_out},), got {bias.shape}")
        y = y + bias
    if relu:
        y = np.maximum(y, F32(0.0))
    return y.astype(F32, copy=False)


def dense_forward(x, weight, bias) -> np.ndarray:
    """``x @ weight.T + bias`` with ``weight`` laid out ``(out, in)``."""
    x = np.asarray(x, dtype=F32)
    weight = np.asarray(weight, dtype=F32)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeMismatch(f"dense input has {x.shape[-1]} features, weight expects {weight.shape[1]}")
    return (x @ weight.T + np.asarray(bias, dtype=F32)).astype(F32, copy=False)
