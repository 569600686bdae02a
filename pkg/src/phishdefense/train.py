"""Training loop, plateau LR scheduler, early stopping, metrics, synthetic corpus."""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .codec import Vocab, default_vocab
from .data import LabeledDataset, SplitPair, batches
from .errors import DataError, NumericError
from .model import ModelGraph, backward_batch, bce_loss, forward_batch, predict
from .tensor import AdamState, adam_step

IMPROVE_TOL = 1e-6


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 500
    initial_lr: float = 1e-3
    lr_factor: float = 0.1
    lr_patience: int = 5
    min_lr: float = 1e-5
    early_stop_patience: int = 6
    seed: int = 0
    split_ratio: float = 0.75

    def validate(self) -> None:
        if not 0.0 < self.lr_factor < 1.0:
            raise ValueError(f"lr_factor must be in (0,1), got {self.lr_factor}")
        if self.min_lr > self.initial_lr:
            raise ValueError("min_lr exceeds initial_lr")
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patiences must be >= 1")


@dataclass
class SchedulerState:
    current_lr: float
    best_loss: float = float("inf")
    epochs_since_improvement: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    lr: float
    wall_time: float


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f_score: float
    confusion: Tuple[int, int, int, int]  # TP, FP, TN, FN
    mean_inference_seconds: Optional[float] = None

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["confusion"] = {
            "TP": self.confusion[0],
            "FP": self.confusion[1],
            "TN": self.confusion[2],
            "FN": self.confusion[3],
        }
        return d


def scheduler_update(s: SchedulerState, epoch_train_loss: float, cfg: TrainConfig) -> SchedulerState:
    """Plateau decay on training loss: after lr_patience stagnant epochs,
    multiply the rate by lr_factor, floored at min_lr."""
    if not np.isfinite(epoch_train_loss):
        raise NumericError(f"non-finite training loss {epoch_train_loss}")
    if epoch_train_loss < s.best_loss - IMPROVE_TOL:
        return SchedulerState(
            current_lr=s.current_lr, best_loss=epoch_train_loss, epochs_since_improvement=0
        )
    stagnant = s.epochs_since_improvement + 1
    if stagnant >= cfg.lr_patience:
        return SchedulerState(
            current_lr=max(s.current_lr * cfg.lr_factor, cfg.min_lr),
            best_loss=s.best_loss,
            epochs_since_improvement=0,
        )
    return SchedulerState(
        current_lr=s.current_lr, best_loss=s.best_loss, epochs_since_improvement=stagnant
    )


def early_stop_check(history: Sequence[float], cfg: TrainConfig) -> str:
    """'stop' once the running best has not improved for early_stop_patience epochs."""
    if not history:
        raise ValueError("empty loss history")
    best = float("inf")
    stagnant = 0
    for loss in history:
        if loss < best - IMPROVE_TOL:
            best = loss
            stagnant = 0
        else:
            stagnant += 1
    return "stop" if stagnant >= cfg.early_stop_patience else "continue"


def _eval_loss_acc(
    m: ModelGraph, ds: LabeledDataset, vocab: Vocab, batch_size: int = 1000
) -> Tuple[float, float]:
    total_loss = 0.0
    correct = 0
    n = len(ds)
    for ids, lens, labels in batches(ds, batch_size, 0, vocab, m.config.max_len):
        probs, _ = forward_batch(m, ids, lens, mode="infer")
        loss, _ = bce_loss(labels.astype(np.float64), probs)
        total_loss += loss * len(labels)
        correct += int(np.sum((probs > 0.5).astype(np.int64) == labels))
    return total_loss / n, correct / n


def _save_checkpoint(path: str, m: ModelGraph, best: ModelGraph, adam: AdamState,
                     sched: SchedulerState, epoch: int, best_val_acc: float,
                     history: List[EpochRecord]) -> None:
    from .store import save_model

    tensors = {f"cur.{k}": v for k, v in m.params.items()}
    tensors.update({f"best.{k}": v for k, v in best.params.items()})
    tensors.update({f"m1.{k}": v for k, v in adam.first_moment.items()})
    tensors.update({f"m2.{k}": v for k, v in adam.second_moment.items()})
    meta = json.dumps(
        {
            "epoch": epoch,
            "adam": {"alpha": adam.alpha, "beta1": adam.beta1, "beta2": adam.beta2,
                     "epsilon": adam.epsilon, "step": adam.step},
            "sched": asdict(sched),
            "best_val_acc": best_val_acc,
            "history": [asdict(r) for r in history],
        }
    )
    tmp = path + ".tmp.npz"
    np.savez(tmp, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **tensors)
    os.replace(tmp, path)
    ckdir = os.path.dirname(path) or "."
    save_model(m, os.path.join(ckdir, f"ck_epoch{epoch}.pdm"))
    # prune weight checkpoints to best + latest
    keep = {f"ck_epoch{epoch}.pdm", f"ck_epoch{_best_epoch(history)}.pdm"}
    for name in os.listdir(ckdir):
        if name.startswith("ck_epoch") and name.endswith(".pdm") and name not in keep:
            os.remove(os.path.join(ckdir, name))


def _best_epoch(history: List[EpochRecord]) -> int:
    if not history:
        return 0
    return max(history, key=lambda r: (r.val_accuracy, -r.epoch)).epoch


def _load_checkpoint(path: str, m: ModelGraph):
    data = np.load(path)
    meta = json.loads(bytes(data["__meta__"]).decode())
    cur = {k[len("cur."):]: data[k] for k in data.files if k.startswith("cur.")}
    best = {k[len("best."):]: data[k] for k in data.files if k.startswith("best.")}
    adam = AdamState(**meta["adam"])
    adam.first_moment = {k[len("m1."):]: data[k].copy() for k in data.files if k.startswith("m1.")}
    adam.second_moment = {k[len("m2."):]: data[k].copy() for k in data.files if k.startswith("m2.")}
    sched = SchedulerState(**meta["sched"])
    history = [EpochRecord(**r) for r in meta["history"]]
    m.params = {k: v.copy() for k, v in cur.items()}
    best_model = ModelGraph(config=m.config, params={k: v.copy() for k, v in best.items()})
    return best_model, adam, sched, meta["epoch"], meta["best_val_acc"], history


def train(
    model: ModelGraph,
    data: SplitPair,
    cfg: TrainConfig,
    vocab: Optional[Vocab] = None,
    checkpoint_dir: Optional[str] = None,
    resume: bool = False,
    history_path: Optional[str] = None,
    log=None,
) -> Tuple[ModelGraph, List[EpochRecord]]:
    """Run the full regimen: Adam + plateau scheduler + early stopping.

    The scheduler and early stop monitor TRAINING loss; the returned model
    carries the weights from the best validation-accuracy epoch.
    """
    cfg.validate()
    vocab = vocab or default_vocab()
    max_len = model.config.max_len
    adam = AdamState(alpha=cfg.initial_lr)
    sched = SchedulerState(current_lr=cfg.initial_lr)
    history: List[EpochRecord] = []
    best_model = model.copy()
    best_val_acc = -1.0
    start_epoch = 0
    state_path = None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)
        state_path = os.path.join(checkpoint_dir, "train_state.npz")
        if resume and os.path.exists(state_path):
            best_model, adam, sched, last_epoch, best_val_acc, history = _load_checkpoint(
                state_path, model
            )
            start_epoch = last_epoch + 1
    n_train = len(data.train)
    hist_fh = open(history_path, "a" if resume else "w") if history_path else None
    try:
        for epoch in range(start_epoch, cfg.epochs):
            t0 = time.perf_counter()
            epoch_seed = int(np.random.SeedSequence([cfg.seed, epoch]).generate_state(1)[0])
            total_loss = 0.0
            correct = 0
            model.mode = "train"
            for b_idx, (ids, lens, labels) in enumerate(
                batches(data.train, cfg.batch_size, epoch_seed, vocab, max_len)
            ):
                drop_seed = int(
                    np.random.SeedSequence([cfg.seed, epoch, b_idx, 7]).generate_state(1)[0]
                )
                probs, caches = forward_batch(model, ids, lens, mode="train", seed=drop_seed)
                try:
                    grads, loss = backward_batch(model, caches, labels)
                    model.params = adam_step(model.params, grads, adam)
                except NumericError as e:
                    raise NumericError(f"epoch {epoch} batch {b_idx}: {e}") from e
                if not np.isfinite(loss):
                    raise NumericError(f"epoch {epoch} batch {b_idx}: loss is {loss}")
                total_loss += loss * len(labels)
                correct += int(np.sum((probs > 0.5).astype(np.int64) == labels))
            train_loss = total_loss / n_train
            train_acc = correct / n_train
            model.mode = "infer"
            val_loss, val_acc = _eval_loss_acc(model, data.test, vocab)
            rec = EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                train_accuracy=train_acc,
                val_loss=val_loss,
                val_accuracy=val_acc,
                lr=sched.current_lr,
                wall_time=time.perf_counter() - t0,
            )
            history.append(rec)
            if hist_fh:
                hist_fh.write(json.dumps(asdict(rec)) + "\n")
                hist_fh.flush()
            if log:
                log(
                    f"epoch {epoch}: train_loss={train_loss:.4f} "
                    f"train_acc={train_acc:.4f} val_loss={val_loss:.4f} "
                    f"val_acc={val_acc:.4f} lr={sched.current_lr:g}"
                )
            if val_acc > best_val_acc:
                best_val_acc = val_acc
                best_model = model.copy()
            sched = scheduler_update(sched, train_loss, cfg)
            adam.alpha = sched.current_lr
            if state_path:
                _save_checkpoint(
                    state_path, model, best_model, adam, sched, epoch, best_val_acc, history
                )
            if early_stop_check([r.train_loss for r in history], cfg) == "stop":
                break
    finally:
        if hist_fh:
            hist_fh.close()
    best_model.mode = "infer"
    return best_model, history


def evaluate(
    model: ModelGraph,
    ds: LabeledDataset,
    threshold: float = 0.5,
    vocab: Optional[Vocab] = None,
    measure_latency: bool = False,
    latency_sample: int = 50,
) -> MetricsReport:
    """Confusion-matrix metrics at the given threshold.

    Zero-denominator convention: precision and recall are 1 when their
    denominators are empty. Latency, when requested, is measured over
    single-URL infer calls.
    """
    if len(ds) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    vocab = vocab or default_vocab()
    tp = fp = tn = fn = 0
    for ids, lens, labels in batches(ds, 1000, 0, vocab, model.config.max_len):
        probs, _ = forward_batch(model, ids, lens, mode="infer")
        pred = (probs > threshold).astype(np.int64)
        tp += int(np.sum((pred == 1) & (labels == 1)))
        fp += int(np.sum((pred == 1) & (labels == 0)))
        tn += int(np.sum((pred == 0) & (labels == 0)))
        fn += int(np.sum((pred == 0) & (labels == 1)))
    n = len(ds)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    f_score = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    mean_latency = None
    if measure_latency:
        urls = [url for url, _ in ds.records[:latency_sample]]
        stats = bench_inference(model, urls, repetitions=len(urls), vocab=vocab)
        mean_latency = stats["mean"]
    return MetricsReport(
        accuracy=(tp + tn) / n,
        precision=precision,
        recall=recall,
        f_score=f_score,
        confusion=(tp, fp, tn, fn),
        mean_inference_seconds=mean_latency,
    )


_WORDS = (
    "news", "shop", "cloud", "mail", "photo", "blog", "store", "media", "data",
    "home", "travel", "music", "game", "forum", "wiki", "tech", "bank", "book",
    "green", "river", "stone", "maple", "cedar", "swift", "lunar", "solar",
    "alpha", "delta", "nova", "prime", "atlas", "orbit", "pixel", "quartz",
)
_TLDS = (".com", ".org", ".net", ".io", ".edu")
_MARKERS = ("-secure-login", "-account-verify", "-webscr-update", "-signin-confirm")


def _legit_url(rng: np.random.Generator) -> str:
    scheme = "https" if rng.random() < 0.7 else "http"
    host = rng.choice(_WORDS)
    if rng.random() < 0.4:
        host += rng.choice(_WORDS)
    tld = rng.choice(_TLDS)
    path = "/".join(rng.choice(_WORDS) for _ in range(rng.integers(0, 4)))
    url = f"{scheme}://www.{host}{tld}"
    return url + ("/" + path if path else "")


def _phish_url(rng: np.random.Generator) -> str:
    """Always plants at least one character-level phishing signal."""
    scheme = "http" if rng.random() < 0.7 else "https"
    host = str(rng.choice(_WORDS))
    signal = int(rng.integers(0, 4))
    if signal == 0:  # marker substring in the host
        host += str(rng.choice(_MARKERS))
    elif signal == 1:  # long hyphenated subdomain chain
        host = "-".join(str(rng.choice(_WORDS)) for _ in range(5)) + "." + host
    elif signal == 2:  # digit-heavy host
        host += "".join(str(rng.integers(0, 10)) for _ in range(8))
    else:  # userinfo '@' trick
        host = f"{rng.choice(_WORDS)}{rng.choice(_TLDS)[1:]}@{host}{rng.integers(100, 999)}"
    tld = rng.choice(_TLDS)
    path = "/".join(str(rng.choice(_WORDS)) for _ in range(rng.integers(0, 3)))
    url = f"{scheme}://{host}{tld}"
    return url + ("/" + path if path else "")


def make_synthetic_corpus(n: int, phish_fraction: float, seed: int) -> LabeledDataset:
    """Deterministic labeled corpus with learnable character-level signals."""
    if n < 10:
        raise ValueError(f"corpus size must be >= 10, got {n}")
    rng = np.random.default_rng(seed)
    n_phish = int(round(n * phish_fraction))
    records = [(_phish_url(rng), 1) for _ in range(n_phish)]
    records += [(_legit_url(rng), 0) for _ in range(n - n_phish)]
    order = rng.permutation(len(records))
    return LabeledDataset(
        records=[records[i] for i in order], source_tag=f"synthetic(n={n},seed={seed})"
    )


def bench_inference(
    model: ModelGraph,
    urls: Sequence[str],
    repetitions: int,
    vocab: Optional[Vocab] = None,
    warmup: int = 3,
) -> Dict[str, float]:
    """Wall-clock stats for single-URL predict calls; warm-ups excluded."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    vocab = vocab or default_vocab()
    for k in range(warmup):
        predict(model, urls[k % len(urls)], vocab)
    samples = np.zeros(repetitions)
    for k in range(repetitions):
        t0 = time.perf_counter()
        predict(model, urls[k % len(urls)], vocab)
        samples[k] = time.perf_counter() - t0
    return {
        "mean": float(samples.mean()),
        "p50": float(np.percentile(samples, 50)),
        "p95": float(np.percentile(samples, 95)),
        "repetitions": repetitions,
    }
