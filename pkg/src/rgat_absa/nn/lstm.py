"""LSTM recurrences as a single tape op, and the bidirectional wrapper.

Gate layout in the stacked weights is ``[input, forget, cell, output]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _op, _sigmoid, concat, mul


def lstm(x: Tensor, W: Tensor, U: Tensor, b: Tensor) -> Tensor:
    """Left-to-right LSTM over ``x`` of shape (B, T, D) from zero states; returns (B, T, H)."""
    B, T, D = x.shape
    H = U.shape[0]
    if W.shape != (D, 4 * H) or U.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ValueError(f"LSTM weight shapes {W.shape}, {U.shape}, {b.shape} "
                         f"do not fit input dim {D} and hidden dim {H}")
    dtype = np.result_type(x.data, W.data)
    xw = x.data @ W.data + b.data
    gates = np.empty((B, T, 4, H), dtype=dtype)
    cells = np.empty((B, T, H), dtype=dtype)
    hs = np.empty((B, T, H), dtype=dtype)
    h = np.zeros((B, H), dtype=dtype)
    c = np.zeros((B, H), dtype=dtype)
    for t in range(T):
        z = (xw[:, t] + h @ U.data).reshape(B, 4, H)
        i, f, o = _sigmoid(z[:, 0]), _sigmoid(z[:, 1]), _sigmoid(z[:, 3])
        g = np.tanh(z[:, 2])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, 0], gates[:, t, 1], gates[:, t, 2], gates[:, t, 3] = i, f, g, o
        cells[:, t] = c
        hs[:, t] = h

    def bw(dH, needs):
        dxw = np.empty((B, T, 4 * H), dtype=dtype)
        dU = np.zeros_like(U.data)
        dh_next = np.zeros((B, H), dtype=dtype)
        dc_next = np.zeros((B, H), dtype=dtype)
        for t in range(T - 1, -1, -1):
            i, f, g, o = gates[:, t, 0], gates[:, t, 1], gates[:, t, 2], gates[:, t, 3]
            c_prev = cells[:, t - 1] if t > 0 else np.zeros((B, H), dtype=dtype)
            h_prev = hs[:, t - 1] if t > 0 else np.zeros((B, H), dtype=dtype)
            tc = np.tanh(cells[:, t])
            dh = dH[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate([dc * g * i * (1.0 - i),
                                 dc * c_prev * f * (1.0 - f),
                                 dc * i * (1.0 - g * g),
                                 dh * tc * o * (1.0 - o)], axis=1)
            dxw[:, t] = dz
            dU += h_prev.T @ dz
            dh_next = dz @ U.data.T
            dc_next = dc * f
        flat = dxw.reshape(B * T, 4 * H)
        dx = (dxw @ W.data.T) if needs[0] else None
        dW = (x.data.reshape(B * T, D).T @ flat) if needs[1] else None
        db = flat.sum(axis=0) if needs[3] else None
        return dx, dW, dU, db

    return _op(hs, (x, W, U, b), bw)


def reverse_within(x: Tensor, lengths: np.ndarray) -> Tensor:
    """Reverse each sequence in (B, T, ...) within its own length; padding stays in place."""
    B, T = x.shape[:2]
    t = np.arange(T)[None, :]
    lengths = np.asarray(lengths)[:, None]
    idx = np.where(t < lengths, lengths - 1 - t, t)
    rows = np.arange(B)[:, None]
    # idx is an involution, so the same gather undoes itself in backward
    return _op(x.data[rows, idx], (x,), lambda g, needs: (g[rows, idx],))


@dataclass
class BiLstmParams:
    fw_W: Tensor
    fw_U: Tensor
    fw_b: Tensor
    bw_W: Tensor
    bw_U: Tensor
    bw_b: Tensor

    @property
    def hidden(self) -> int:
        return self.fw_U.shape[0]

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden


def bilstm(p: BiLstmParams, x: Tensor, lengths=None) -> Tensor:
    """Concatenated forward and backward LSTM states, (B, T, 2H); padded positions are zero."""
    B, T = x.shape[:2]
    lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
    if lengths.min() < 1:
        raise ValueError("bilstm needs non-empty sequences")
    fw = lstm(x, p.fw_W, p.fw_U, p.fw_b)
    bw = reverse_within(lstm(reverse_within(x, lengths), p.bw_W, p.bw_U, p.bw_b), lengths)
    out = concat([fw, bw], axis=-1)
    if lengths.min() < T:
        mask = (np.arange(T)[None, :] < lengths[:, None]).astype(out.data.dtype)
        out = mul(out, mask[:, :, None])
    return out
