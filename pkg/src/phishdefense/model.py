"""PD-LSTM / PD-GRU model graphs, binary cross-entropy, and prediction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .codec import Vocab, encode_url
from .errors import ConfigError, ShapeError
from .layers import (
    GruParams,
    LstmParams,
    dense_backward,
    dense_forward,
    dropout,
    embedding_backward,
    embedding_forward,
    gru_backward,
    gru_forward,
    lstm_backward,
    lstm_forward,
)
from .tensor import ParamSet, xavier_init

EPS_CLAMP = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    cell_kind: str = "gru"  # "lstm" | "gru"
    vocab_size: int = 97
    embed_dim: int = 32
    hidden_dim: int = 128
    dense_dims: Tuple[int, ...] = ()
    dropout_rate: float = 0.0
    output_kind: str = "softmax_pair"  # "sigmoid_scalar" | "softmax_pair"
    max_len: int = 200
    seed: int = 0

    def validate(self) -> None:
        if self.cell_kind not in ("lstm", "gru"):
            raise ConfigError(f"unknown cell kind {self.cell_kind!r}")
        if self.output_kind not in ("sigmoid_scalar", "softmax_pair"):
            raise ConfigError(f"unknown output kind {self.output_kind!r}")
        if min(self.vocab_size, self.embed_dim, self.hidden_dim, self.max_len) < 1:
            raise ConfigError("all dims must be >= 1")
        if any(d < 1 for d in self.dense_dims) or not self.dense_dims:
            raise ConfigError(f"bad dense widths {self.dense_dims}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout rate {self.dropout_rate} outside [0,1)")
        want = 1 if self.output_kind == "sigmoid_scalar" else 2
        if self.dense_dims[-1] != want:
            raise ConfigError(
                f"{self.output_kind} needs final dense width {want}, "
                f"got {self.dense_dims[-1]}"
            )


def default_config(cell_kind: str, **overrides) -> ModelConfig:
    """PD-LSTM: sigmoid head, dropout 0.5 after the recurrent layer.
    PD-GRU: dense 64 -> softmax pair, dropout 0.2 between the dense layers."""
    if cell_kind == "lstm":
        cfg = ModelConfig(
            cell_kind="lstm",
            dense_dims=(1,),
            dropout_rate=0.5,
            output_kind="sigmoid_scalar",
        )
    elif cell_kind == "gru":
        cfg = ModelConfig(
            cell_kind="gru",
            dense_dims=(64, 2),
            dropout_rate=0.2,
            output_kind="softmax_pair",
        )
    else:
        raise ConfigError(f"unknown cell kind {cell_kind!r}")
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class ModelGraph:
    config: ModelConfig
    params: ParamSet
    mode: str = "infer"  # "train" | "infer"
    threshold: float = 0.5

    @property
    def cell(self):
        if self.config.cell_kind == "lstm":
            return LstmParams.from_dict(self.params, "cell.")
        return GruParams.from_dict(self.params, "cell.")

    def param_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def copy(self) -> "ModelGraph":
        return ModelGraph(
            config=self.config,
            params={k: v.copy() for k, v in self.params.items()},
            mode=self.mode,
            threshold=self.threshold,
        )


def build_model(cfg: ModelConfig) -> ModelGraph:
    """Deterministic construction from cfg.seed; recurrent weights orthogonal."""
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).generate_state(4 + len(cfg.dense_dims))
    params: ParamSet = {"embed": xavier_init(cfg.vocab_size, cfg.embed_dim, int(seeds[0]))}
    if cfg.cell_kind == "lstm":
        cell = LstmParams.init(cfg.embed_dim, cfg.hidden_dim, int(seeds[1]))
    else:
        cell = GruParams.init(cfg.embed_dim, cfg.hidden_dim, int(seeds[1]))
    params.update(cell.to_dict("cell."))
    in_dim = cfg.hidden_dim
    for k, out_dim in enumerate(cfg.dense_dims):
        params[f"dense{k}.w"] = xavier_init(in_dim, out_dim, int(seeds[2 + k]))
        params[f"dense{k}.b"] = np.zeros(out_dim)
        in_dim = out_dim
    return ModelGraph(config=cfg, params=params, mode="infer")


def _dropout_slot(cfg: ModelConfig) -> str:
    # single dense layer: mask the recurrent output feeding the head;
    # deeper stacks: mask between the last two dense layers.
    return "after_recurrent" if len(cfg.dense_dims) == 1 else "between_dense"


def forward_batch(
    m: ModelGraph,
    ids: np.ndarray,
    lens: Optional[np.ndarray] = None,
    mode: Optional[str] = None,
    seed: int = 0,
) -> Tuple[np.ndarray, Dict]:
    """Embedding -> recurrence over true lengths -> dropout -> dense head.

    Returns per-example phishing probability in (0,1) plus caches for BPTT.
    """
    cfg = m.config
    mode = mode or m.mode
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    if lens is not None:
        # padded columns beyond the longest row are pure carry; skip them
        ids = ids[:, : max(1, int(np.max(lens)))]
    rng = np.random.default_rng(seed)
    xs = embedding_forward(m.params["embed"], ids)
    if cfg.cell_kind == "lstm":
        _, (h_final, _), cell_caches = lstm_forward(m.cell, xs, lens)
    else:
        _, h_final, cell_caches = gru_forward(m.cell, xs, lens)
    caches: Dict = {"ids": ids, "cell": cell_caches, "dense": [], "drop_mask": None}
    slot = _dropout_slot(cfg)
    x = h_final
    if slot == "after_recurrent":
        x, mask = dropout(x, cfg.dropout_rate, rng, mode)
        caches["drop_mask"] = mask
    n_dense = len(cfg.dense_dims)
    for k in range(n_dense):
        last = k == n_dense - 1
        if last and slot == "between_dense":
            x, mask = dropout(x, cfg.dropout_rate, rng, mode)
            caches["drop_mask"] = mask
        if last:
            act = "sigmoid" if cfg.output_kind == "sigmoid_scalar" else "softmax"
        else:
            act = "sigmoid"
        x, dcache = dense_forward(m.params[f"dense{k}.w"], m.params[f"dense{k}.b"], x, act)
        caches["dense"].append(dcache)
    if cfg.output_kind == "sigmoid_scalar":
        probs = x[:, 0]
    else:
        probs = x[:, 1]
    caches["probs"] = probs
    return probs, caches


def bce_loss(y: np.ndarray, p: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient wrt p.

    p is clamped to [1e-12, 1 - 1e-12] before the logs; the gradient is
    that of the clamped expression (zero where the clamp is active).
    """
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape or y.size == 0:
        raise ShapeError(f"bce_loss: labels {y.shape} vs probs {p.shape}")
    n = y.size
    pc = np.clip(p, EPS_CLAMP, 1.0 - EPS_CLAMP)
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    grad = np.where(
        (p > EPS_CLAMP) & (p < 1.0 - EPS_CLAMP),
        (-y / pc + (1.0 - y) / (1.0 - pc)) / n,
        0.0,
    )
    return float(loss), grad


def backward_batch(
    m: ModelGraph, caches: Dict, labels: np.ndarray
) -> Tuple[ParamSet, float]:
    """Full parameter gradients of the mean BCE over the batch."""
    cfg = m.config
    probs = caches["probs"]
    labels = np.asarray(labels, dtype=np.float64)
    loss, dp = bce_loss(labels, probs)
    n_dense = len(cfg.dense_dims)
    head_cache = caches["dense"][-1]
    out = head_cache["out"]
    if cfg.output_kind == "sigmoid_scalar":
        d_pre = (dp * out[:, 0] * (1.0 - out[:, 0]))[:, None]
    else:
        # 2-class softmax: only the phishing coordinate reaches the loss
        p1 = out[:, 1]
        common = dp * p1 * out[:, 0]
        d_pre = np.stack([-common, common], axis=1)
    grads: ParamSet = {}
    dx = d_pre
    slot = _dropout_slot(cfg)
    for k in range(n_dense - 1, -1, -1):
        dcache = caches["dense"][k]
        if k != n_dense - 1:
            # hidden dense layers use a sigmoid activation
            a = dcache["out"]
            dx = dx * a * (1.0 - a)
        dw, db, dx = dense_backward(m.params[f"dense{k}.w"], dcache, dx)
        grads[f"dense{k}.w"] = dw
        grads[f"dense{k}.b"] = db
        if k == n_dense - 1 and slot == "between_dense" and caches["drop_mask"] is not None:
            dx = dx * caches["drop_mask"]
    if slot == "after_recurrent" and caches["drop_mask"] is not None:
        dx = dx * caches["drop_mask"]
    if cfg.cell_kind == "lstm":
        cell_grads, dxs = lstm_backward(m.cell, caches["cell"], dx)
    else:
        cell_grads, dxs = gru_backward(m.cell, caches["cell"], dx)
    grads.update({f"cell.{k}": v for k, v in cell_grads.items()})
    grads["embed"] = embedding_backward(m.params["embed"].shape, caches["ids"], dxs)
    return grads, loss


def predict(
    m: ModelGraph, url: str, vocab: Vocab, threshold: float = 0.5
) -> Tuple[str, float]:
    """Infer-mode score for one URL; ties at the threshold go to legitimate."""
    enc = encode_url(url, vocab, m.config.max_len)
    probs, _ = forward_batch(m, enc.ids[None, :], np.array([enc.true_len]), mode="infer")
    score = float(probs[0])
    verdict = "phishing" if score > threshold else "legitimate"
    return verdict, score
