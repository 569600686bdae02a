"""Numeric substrate: dense ops, activations, initializers, Adam, finite differences.

Matrices and vectors are plain float64 numpy arrays; a "parameter set" is a
dict mapping tensor names to arrays. All randomness flows through explicitly
seeded numpy Generators so every caller is reproducible from one seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from .errors import NumericError, ShapeError

ParamSet = Dict[str, np.ndarray]


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x):
    """Numerically stable logistic function, elementwise.

    Sign-split so exp() never overflows: exp(-|x|) is always in (0, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def tanh_act(x):
    """Hyperbolic tangent, elementwise (np.tanh is stable at extremes)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.tanh(x)
    return out if out.ndim else float(out)


def softmax(v: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ShapeError("softmax of an empty vector")
    shifted = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def orthogonal_init(rows: int, cols: int, seed: int) -> np.ndarray:
    """Seeded orthogonal matrix via QR of a standard-normal draw.

    Signs are fixed so the diagonal of R is positive, making the result a
    deterministic function of (rows, cols, seed).
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"orthogonal_init needs positive dims, got ({rows}, {cols})")
    rng = np.random.default_rng(seed)
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(q[:rows, :cols])


def xavier_init(rows: int, cols: int, seed: int) -> np.ndarray:
    """Seeded Glorot-uniform matrix in +/- sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"xavier_init needs positive dims, got ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class AdamState:
    """Optimizer state for one parameter set. alpha is mutated by the scheduler."""

    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: ParamSet = field(default_factory=dict)
    second_moment: ParamSet = field(default_factory=dict)

    def _ensure_moments(self, params: ParamSet) -> None:
        if not self.first_moment:
            self.first_moment = {k: np.zeros_like(v) for k, v in params.items()}
            self.second_moment = {k: np.zeros_like(v) for k, v in params.items()}


def adam_step(params: ParamSet, grads: ParamSet, state: AdamState) -> ParamSet:
    """One Adam update with bias correction; mutates state, returns new params."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")
        if g.shape != params[name].shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter shape "
                f"{params[name].shape} for '{name}'"
            )
    state._ensure_moments(params)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    out: ParamSet = {}
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        m[:] = b1 * m + (1.0 - b1) * g
        v[:] = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        out[name] = p - state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return out


def finite_diff_grad(
    loss_fn: Callable[[ParamSet], float], params: ParamSet, h: float = 1e-5
) -> ParamSet:
    """Central-difference gradient of loss_fn over every coordinate.

    Test oracle only: O(2 * n_params) loss evaluations.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    grads: ParamSet = {}
    work = {k: v.copy() for k, v in params.items()}
    for name, p in work.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_fn(work)
            flat[i] = orig - h
            lo = loss_fn(work)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads[name] = g
    return grads
