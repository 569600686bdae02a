import math

import numpy as np
import pytest


def scalar_sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def oracle_lstm_step(p, x, h_prev, c_prev):
    """Independent scalar-by-scalar LSTM step (no numpy vectorization)."""
    d = len(x)
    h = len(h_prev)

    def affine(W, U, b, k):
        s = b[k]
        for a in range(d):
            s += x[a] * W[a, k]
        for a in range(h):
            s += h_prev[a] * U[a, k]
        return s

    f = [scalar_sigmoid(affine(p.W_f, p.U_f, p.b_f, k)) for k in range(h)]
    i = [scalar_sigmoid(affine(p.W_i, p.U_i, p.b_i, k)) for k in range(h)]
    ct = [math.tanh(affine(p.W_c, p.U_c, p.b_c, k)) for k in range(h)]
    c = [f[k] * c_prev[k] + i[k] * ct[k] for k in range(h)]
    o = [scalar_sigmoid(affine(p.W_o, p.U_o, p.b_o, k)) for k in range(h)]
    hv = [o[k] * math.tanh(c[k]) for k in range(h)]
    return np.array(hv), np.array(c)


def oracle_gru_step(p, x, h_prev):
    """Independent scalar-by-scalar GRU step."""
    d = len(x)
    h = len(h_prev)

    def affine(W, U, b, k, hvec):
        s = b[k]
        for a in range(d):
            s += x[a] * W[a, k]
        for a in range(h):
            s += hvec[a] * U[a, k]
        return s

    z = [scalar_sigmoid(affine(p.W_z, p.U_z, p.b_z, k, h_prev)) for k in range(h)]
    r = [scalar_sigmoid(affine(p.W_r, p.U_r, p.b_r, k, h_prev)) for k in range(h)]
    rh = [r[k] * h_prev[k] for k in range(h)]
    ht = [math.tanh(affine(p.W_h, p.U_h, p.b_h, k, rh)) for k in range(h)]
    out = [(1.0 - z[k]) * ht[k] + z[k] * h_prev[k] for k in range(h)]
    return np.array(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def confusion_fixture():
    """A real LSTM model plus 10 single-char URLs hitting TP=3 FP=1 TN=5 FN=1.

    embed=1, hidden=1; gates are saturated so h = tanh(tanh(x)) where x is
    the embedding value of the single character, and the sigmoid head pushes
    the score far from 0.5. Characters a,b,c,e score high; the rest score low.
    Labels: a,b,c,d phishing; e..j legitimate -> d is the miss, e the false alarm.
    """
    from phishdefense.codec import default_vocab
    from phishdefense.data import LabeledDataset
    from phishdefense.model import ModelConfig, ModelGraph

    vocab = default_vocab()
    cfg = ModelConfig(
        cell_kind="lstm",
        vocab_size=vocab.size,
        embed_dim=1,
        hidden_dim=1,
        dense_dims=(1,),
        dropout_rate=0.0,
        output_kind="sigmoid_scalar",
        max_len=4,
        seed=0,
    )
    params = {
        "embed": np.zeros((vocab.size, 1)),
        "dense0.w": np.array([[10.0]]),
        "dense0.b": np.zeros(1),
    }
    for g in "fico":
        params[f"cell.W_{g}"] = np.zeros((1, 1))
        params[f"cell.U_{g}"] = np.zeros((1, 1))
        params[f"cell.b_{g}"] = np.zeros(1)
    params["cell.b_i"][:] = 50.0   # input gate open
    params["cell.b_o"][:] = 50.0   # output gate open
    params["cell.W_c"][:] = 1.0    # candidate = tanh(x)
    for ch in "abce":
        params["embed"][vocab.id_for(ch), 0] = 10.0
    for ch in "dfghij":
        params["embed"][vocab.id_for(ch), 0] = -10.0
    model = ModelGraph(config=cfg, params=params, mode="infer")
    ds = LabeledDataset(
        records=[(ch, 1) for ch in "abcd"] + [(ch, 0) for ch in "efghij"]
    )
    return model, ds
