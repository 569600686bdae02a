"""Embedding, LSTM/GRU cells with hand-derived BPTT, dropout, dense layers.

All step functions are batched: inputs are (batch, dim) arrays, and a
sequence is (batch, time, dim). Variable lengths are handled by masked
state carry: at step t, rows with t >= true_len keep their previous
hidden/cell state unchanged, which is exactly equivalent to running the
recurrence only over the first true_len steps of each row. The backward
passes mirror that carry, so padded positions contribute zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ShapeError
from .tensor import ParamSet, orthogonal_init, sigmoid, softmax, xavier_init

Cache = Dict[str, np.ndarray]

LSTM_TENSORS = (
    "W_f", "W_i", "W_c", "W_o",
    "U_f", "U_i", "U_c", "U_o",
    "b_f", "b_i", "b_c", "b_o",
)
GRU_TENSORS = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")


@dataclass
class LstmParams:
    """Input weights W_* (d x h), recurrent weights U_* (h x h), biases b_* (h,)."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    U_f: np.ndarray
    U_i: np.ndarray
    U_c: np.ndarray
    U_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W_f.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, seed: int) -> "LstmParams":
        """Xavier input weights, orthogonal recurrent weights, zero biases."""
        fields = {}
        for k, name in enumerate(("f", "i", "c", "o")):
            fields[f"W_{name}"] = xavier_init(input_dim, hidden_dim, seed * 8 + k)
            fields[f"U_{name}"] = orthogonal_init(hidden_dim, hidden_dim, seed * 8 + 4 + k)
            fields[f"b_{name}"] = np.zeros(hidden_dim)
        return cls(**fields)

    @classmethod
    def from_dict(cls, params: ParamSet, prefix: str = "") -> "LstmParams":
        return cls(**{n: params[prefix + n] for n in LSTM_TENSORS})

    def to_dict(self, prefix: str = "") -> ParamSet:
        return {prefix + n: getattr(self, n) for n in LSTM_TENSORS}


@dataclass
class GruParams:
    """Update (z), reset (r), candidate (h) parameter triples."""

    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W_z.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, seed: int) -> "GruParams":
        fields = {}
        for k, name in enumerate(("z", "r", "h")):
            fields[f"W_{name}"] = xavier_init(input_dim, hidden_dim, seed * 6 + k)
            fields[f"U_{name}"] = orthogonal_init(hidden_dim, hidden_dim, seed * 6 + 3 + k)
            fields[f"b_{name}"] = np.zeros(hidden_dim)
        return cls(**fields)

    @classmethod
    def from_dict(cls, params: ParamSet, prefix: str = "") -> "GruParams":
        return cls(**{n: params[prefix + n] for n in GRU_TENSORS})

    def to_dict(self, prefix: str = "") -> ParamSet:
        return {prefix + n: getattr(self, n) for n in GRU_TENSORS}


def _check_x(x: np.ndarray, d: int, what: str) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != d:
        raise ShapeError(f"{what}: input dim {x.shape[1]} != expected {d}")
    return x


def lstm_step(
    p: LstmParams, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, Cache]:
    """One LSTM step: forget/input/output gates, candidate, cell and hidden update.

    The cell update is the standard additive form c = f*c_prev + i*c_tilde
    (no outer squashing), so cell memory is unbounded and the carry
    property f=1, i=0 => c_t = c_prev holds exactly.
    """
    x_t = _check_x(x_t, p.input_dim, "lstm_step")
    h_prev = np.atleast_2d(h_prev)
    c_prev = np.atleast_2d(c_prev)
    if h_prev.shape[1] != p.hidden_dim or c_prev.shape[1] != p.hidden_dim:
        raise ShapeError(
            f"lstm_step: state dims {h_prev.shape}/{c_prev.shape} != hidden {p.hidden_dim}"
        )
    f = sigmoid(x_t @ p.W_f + h_prev @ p.U_f + p.b_f)
    i = sigmoid(x_t @ p.W_i + h_prev @ p.U_i + p.b_i)
    c_tilde = np.tanh(x_t @ p.W_c + h_prev @ p.U_c + p.b_c)
    c = f * c_prev + i * c_tilde
    o = sigmoid(x_t @ p.W_o + h_prev @ p.U_o + p.b_o)
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = {
        "x": x_t, "h_prev": h_prev, "c_prev": c_prev,
        "f": f, "i": i, "c_tilde": c_tilde, "o": o,
        "c": c, "tanh_c": tanh_c, "h": h,
    }
    return h, c, cache


def lstm_forward(
    p: LstmParams,
    xs: np.ndarray,
    lens: Optional[np.ndarray] = None,
    h0: Optional[np.ndarray] = None,
    c0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Tuple[np.ndarray, np.ndarray], List[Cache]]:
    """Fold lstm_step over time with masked state carry for padded rows."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[None, :, :]
    if xs.ndim != 3 or xs.shape[1] == 0:
        raise ShapeError(f"lstm_forward: need (batch, time>=1, dim), got {xs.shape}")
    b, t_max, _ = xs.shape
    h = np.zeros((b, p.hidden_dim)) if h0 is None else np.atleast_2d(h0).copy()
    c = np.zeros((b, p.hidden_dim)) if c0 is None else np.atleast_2d(c0).copy()
    h_seq = np.zeros((b, t_max, p.hidden_dim))
    caches: List[Cache] = []
    for t in range(t_max):
        h_new, c_new, cache = lstm_step(p, xs[:, t, :], h, c)
        if lens is not None:
            m = (t < lens).astype(np.float64)[:, None]
            cache["mask"] = m
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
        else:
            h, c = h_new, c_new
        h_seq[:, t, :] = h
        caches.append(cache)
    return h_seq, (h, c), caches


def lstm_backward(
    p: LstmParams, caches: List[Cache], d_h_final: np.ndarray
) -> Tuple[ParamSet, np.ndarray]:
    """BPTT gradients for all 12 LSTM tensors plus input gradients."""
    d_h_final = np.atleast_2d(np.asarray(d_h_final, dtype=np.float64))
    if d_h_final.shape[1] != p.hidden_dim:
        raise ShapeError(
            f"lstm_backward: upstream dim {d_h_final.shape[1]} != hidden {p.hidden_dim}"
        )
    grads = {n: np.zeros_like(getattr(p, n)) for n in LSTM_TENSORS}
    b = d_h_final.shape[0]
    t_max = len(caches)
    dxs = np.zeros((b, t_max, p.input_dim))
    dh = d_h_final.copy()
    dc = np.zeros_like(dh)
    for t in range(t_max - 1, -1, -1):
        cc = caches[t]
        m = cc.get("mask")
        if m is not None:
            dh_new = m * dh
            dc_new = m * dc
            dh_pass = (1.0 - m) * dh
            dc_pass = (1.0 - m) * dc
        else:
            dh_new, dc_new = dh, dc
            dh_pass = np.zeros_like(dh)
            dc_pass = np.zeros_like(dc)
        o, f, i = cc["o"], cc["f"], cc["i"]
        c_tilde, tanh_c = cc["c_tilde"], cc["tanh_c"]
        do = dh_new * tanh_c
        dc_total = dc_new + dh_new * o * (1.0 - tanh_c**2)
        df = dc_total * cc["c_prev"]
        di = dc_total * c_tilde
        dct = dc_total * i
        dpre_f = df * f * (1.0 - f)
        dpre_i = di * i * (1.0 - i)
        dpre_c = dct * (1.0 - c_tilde**2)
        dpre_o = do * o * (1.0 - o)
        x, h_prev = cc["x"], cc["h_prev"]
        dx = np.zeros((b, p.input_dim))
        dh_prev = dh_pass.copy()
        for gate, dpre in (("f", dpre_f), ("i", dpre_i), ("c", dpre_c), ("o", dpre_o)):
            grads[f"W_{gate}"] += x.T @ dpre
            grads[f"U_{gate}"] += h_prev.T @ dpre
            grads[f"b_{gate}"] += dpre.sum(axis=0)
            dx += dpre @ getattr(p, f"W_{gate}").T
            dh_prev = dh_prev + dpre @ getattr(p, f"U_{gate}").T
        dxs[:, t, :] = dx
        dh = dh_prev
        dc = dc_total * f + dc_pass
    return grads, dxs


def gru_step(
    p: GruParams, x_t: np.ndarray, h_prev: np.ndarray
) -> Tuple[np.ndarray, Cache]:
    """One GRU step: update/reset gates, candidate, convex-combination update.

    Reset is applied to the previous state before the recurrent transform:
    h_tilde = tanh(x W_h + (r * h_prev) U_h + b_h).
    """
    x_t = _check_x(x_t, p.input_dim, "gru_step")
    h_prev = np.atleast_2d(h_prev)
    if h_prev.shape[1] != p.hidden_dim:
        raise ShapeError(f"gru_step: state dim {h_prev.shape[1]} != hidden {p.hidden_dim}")
    z = sigmoid(x_t @ p.W_z + h_prev @ p.U_z + p.b_z)
    r = sigmoid(x_t @ p.W_r + h_prev @ p.U_r + p.b_r)
    rh = r * h_prev
    h_tilde = np.tanh(x_t @ p.W_h + rh @ p.U_h + p.b_h)
    h = (1.0 - z) * h_tilde + z * h_prev
    cache = {
        "x": x_t, "h_prev": h_prev, "z": z, "r": r,
        "rh": rh, "h_tilde": h_tilde, "h": h,
    }
    return h, cache


def gru_forward(
    p: GruParams,
    xs: np.ndarray,
    lens: Optional[np.ndarray] = None,
    h0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, List[Cache]]:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[None, :, :]
    if xs.ndim != 3 or xs.shape[1] == 0:
        raise ShapeError(f"gru_forward: need (batch, time>=1, dim), got {xs.shape}")
    b, t_max, _ = xs.shape
    h = np.zeros((b, p.hidden_dim)) if h0 is None else np.atleast_2d(h0).copy()
    h_seq = np.zeros((b, t_max, p.hidden_dim))
    caches: List[Cache] = []
    for t in range(t_max):
        h_new, cache = gru_step(p, xs[:, t, :], h)
        if lens is not None:
            m = (t < lens).astype(np.float64)[:, None]
            cache["mask"] = m
            h = m * h_new + (1.0 - m) * h
        else:
            h = h_new
        h_seq[:, t, :] = h
        caches.append(cache)
    return h_seq, h, caches


def gru_backward(
    p: GruParams, caches: List[Cache], d_h_final: np.ndarray
) -> Tuple[ParamSet, np.ndarray]:
    """BPTT gradients for all 9 GRU tensors plus input gradients."""
    d_h_final = np.atleast_2d(np.asarray(d_h_final, dtype=np.float64))
    if d_h_final.shape[1] != p.hidden_dim:
        raise ShapeError(
            f"gru_backward: upstream dim {d_h_final.shape[1]} != hidden {p.hidden_dim}"
        )
    grads = {n: np.zeros_like(getattr(p, n)) for n in GRU_TENSORS}
    b = d_h_final.shape[0]
    t_max = len(caches)
    dxs = np.zeros((b, t_max, p.input_dim))
    dh = d_h_final.copy()
    for t in range(t_max - 1, -1, -1):
        cc = caches[t]
        m = cc.get("mask")
        if m is not None:
            dh_new = m * dh
            dh_pass = (1.0 - m) * dh
        else:
            dh_new = dh
            dh_pass = np.zeros_like(dh)
        z, r, h_tilde = cc["z"], cc["r"], cc["h_tilde"]
        x, h_prev, rh = cc["x"], cc["h_prev"], cc["rh"]
        dz = dh_new * (h_prev - h_tilde)
        dht = dh_new * (1.0 - z)
        dh_prev = dh_new * z + dh_pass
        dpre_h = dht * (1.0 - h_tilde**2)
        grads["W_h"] += x.T @ dpre_h
        grads["U_h"] += rh.T @ dpre_h
        grads["b_h"] += dpre_h.sum(axis=0)
        d_rh = dpre_h @ p.U_h.T
        dr = d_rh * h_prev
        dh_prev = dh_prev + d_rh * r
        dpre_z = dz * z * (1.0 - z)
        dpre_r = dr * r * (1.0 - r)
        for gate, dpre in (("z", dpre_z), ("r", dpre_r)):
            grads[f"W_{gate}"] += x.T @ dpre
            grads[f"U_{gate}"] += h_prev.T @ dpre
            grads[f"b_{gate}"] += dpre.sum(axis=0)
            dh_prev = dh_prev + dpre @ getattr(p, f"U_{gate}").T
        dxs[:, t, :] = dpre_h @ p.W_h.T + dpre_z @ p.W_z.T + dpre_r @ p.W_r.T
        dh = dh_prev
    return grads, dxs


def embedding_forward(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Row lookup: ids (batch, time) -> (batch, time, embed_dim)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"token id out of range [0, {table.shape[0]}): "
            f"min {ids.min()}, max {ids.max()}"
        )
    return table[ids]


def embedding_backward(
    table_shape: Tuple[int, int], ids: np.ndarray, upstream: np.ndarray
) -> np.ndarray:
    """Accumulate upstream gradients into the rows the ids selected."""
    grad = np.zeros(table_shape)
    np.add.at(grad, np.asarray(ids, dtype=np.int64).ravel(),
              upstream.reshape(-1, table_shape[1]))
    return grad


def dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator, mode: str = "train"
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout; identity in infer mode. Returns (output, mask)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    if mode != "train" or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dense_forward(
    w: np.ndarray, b: np.ndarray, x: np.ndarray, activation: str = "none"
) -> Tuple[np.ndarray, Cache]:
    """x W + b followed by sigmoid, softmax, or no activation."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: input dim {x.shape[1]} != weight rows {w.shape[0]}")
    pre = x @ w + b
    if activation == "sigmoid":
        out = sigmoid(pre)
    elif activation == "softmax":
        out = softmax(pre)
    elif activation == "none":
        out = pre
    else:
        raise ValueError(f"unknown activation {activation!r}")
    return out, {"x": x, "pre": pre, "out": out}


def dense_backward(
    w: np.ndarray, cache: Cache, d_pre: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients for (w, b, x) given the gradient at the pre-activation."""
    x = cache["x"]
    dw = x.T @ d_pre
    db = d_pre.sum(axis=0)
    dx = d_pre @ w.T
    return dw, db, dx
