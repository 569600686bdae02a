"""Operator surface: train / eval / predict / bench / synth / serve.

stdout carries machine-parseable JSON only; diagnostics go to stderr.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .codec import default_vocab
from .data import load_csv, split
from .errors import PhishDefenseError
from .model import ModelGraph, default_config, build_model, predict
from .store import load_model, save_model
from .train import (
    TrainConfig,
    bench_inference,
    evaluate,
    make_synthetic_corpus,
    train,
)

MAX_REQUEST_BODY = 16 * 1024


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _seed_default() -> int:
    return int(os.environ.get("PD_SEED", "0"))


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phishdefense")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common_model_flags(p):
        p.add_argument("--cell", choices=["lstm", "gru"], default="gru")
        p.add_argument("--max-len", type=int, default=200)
        p.add_argument("--embed", type=int, default=32)
        p.add_argument("--hidden", type=int, default=128)
        p.add_argument("--seed", type=int, default=_seed_default())

    p = sub.add_parser("train", help="train a model on a CSV or synthetic corpus")
    p.add_argument("--data", help="url,label CSV path")
    p.add_argument("--synthetic", type=int, help="generate a synthetic corpus of N URLs")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output model path (.pdm)")
    p.add_argument("--history", help="history JSONL path (default: <out>.history.jsonl)")
    p.add_argument("--workdir", help="checkpoint directory (enables crash resume)")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--stratify", action="store_true")
    common_model_flags(p)

    p = sub.add_parser("eval", help="evaluate a model on a labeled CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("predict", help="score one URL or a stream of URLs")
    p.add_argument("--model", required=True)
    p.add_argument("--url")
    p.add_argument("--stdin", action="store_true")
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("bench", help="single-URL latency statistics")
    p.add_argument("--model", required=True)
    p.add_argument("--urls", help="file with one URL per line (default: built-in sample)")
    p.add_argument("--reps", type=int, default=100)

    p = sub.add_parser("synth", help="write a synthetic corpus CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="HTTP scoring endpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--threshold", type=float, default=None)
    return ap


def cmd_train(args) -> int:
    if not args.data and args.synthetic is None:
        _log("train: either --data or --synthetic is required")
        return 2
    if args.synthetic is not None:
        ds = make_synthetic_corpus(args.synthetic, 0.5, args.seed)
    else:
        ds = load_csv(args.data, dedup=args.dedup)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        initial_lr=args.lr,
        seed=args.seed,
    )
    pair = split(ds, cfg.split_ratio, args.seed, stratify=args.stratify)
    model = build_model(
        default_config(
            args.cell,
            max_len=args.max_len,
            embed_dim=args.embed,
            hidden_dim=args.hidden,
            seed=args.seed,
        )
    )
    model.threshold = args.threshold
    vocab = default_vocab()
    history_path = args.history or args.out + ".history.jsonl"
    best, history = train(
        model,
        pair,
        cfg,
        vocab=vocab,
        checkpoint_dir=args.workdir,
        resume=args.resume,
        history_path=history_path,
        log=_log,
    )
    best.threshold = args.threshold
    save_model(best, args.out)
    # latency is measured by `bench`, not here: the metrics JSON must be
    # byte-identical across reruns with the same flags
    report = evaluate(best, pair.test, args.threshold, vocab)
    out = report.to_dict()
    out["epochs_run"] = len(history)
    out["model_path"] = args.out
    print(json.dumps(out))
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    threshold = args.threshold if args.threshold is not None else model.threshold
    ds = load_csv(args.data)
    report = evaluate(model, ds, threshold, measure_latency=True)
    print(json.dumps(report.to_dict()))
    return 0


def cmd_predict(args) -> int:
    if not args.url and not args.stdin:
        _log("predict: either --url or --stdin is required")
        return 2
    model = load_model(args.model)
    threshold = args.threshold if args.threshold is not None else model.threshold
    vocab = default_vocab()
    urls = [args.url] if args.url else (line.rstrip("\n") for line in sys.stdin)
    for url in urls:
        verdict, score = predict(model, url, vocab, threshold)
        print(json.dumps({"url": url, "score": score, "verdict": verdict}))
    return 0


_SAMPLE_URLS = [
    "https://www.example.com/index",
    "http://login-secure-update.example.net/account",
    "https://news.site.org/articles/today",
]


def cmd_bench(args) -> int:
    model = load_model(args.model)
    if args.urls:
        with open(args.urls, encoding="utf-8") as fh:
            urls = [line.strip() for line in fh if line.strip()]
    else:
        urls = _SAMPLE_URLS
    stats = bench_inference(model, urls, args.reps)
    print(json.dumps(stats))
    return 0


def cmd_synth(args) -> int:
    ds = make_synthetic_corpus(args.n, args.fraction, args.seed)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["url", "label"])
        writer.writerows(ds.records)
    print(json.dumps({"written": len(ds), "path": args.out}))
    return 0


def make_handler(model: ModelGraph, threshold: float):
    vocab = default_vocab()

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # route access logs to stderr
            _log("%s - %s" % (self.address_string(), fmt % args))

        def _reply(self, code: int, payload: dict) -> None:
            body = json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/health":
                self._reply(200, {"status": "ok", "model_loaded": True})
            else:
                self._reply(404, {"error": "not found"})

        def do_POST(self):
            if self.path != "/check":
                self._reply(404, {"error": "not found"})
                return
            length = int(self.headers.get("Content-Length", "0"))
            if length > MAX_REQUEST_BODY:
                self._reply(413, {"error": "request body too large"})
                return
            raw = self.rfile.read(length)
            try:
                payload = json.loads(raw)
                url = payload["url"]
                if not isinstance(url, str):
                    raise TypeError("url must be a string")
            except (ValueError, KeyError, TypeError) as e:
                self._reply(400, {"error": f"bad request: {e}"})
                return
            verdict, score = predict(model, url, vocab, threshold)
            self._reply(200, {"url": url, "score": score, "verdict": verdict})

    return Handler


def cmd_serve(args) -> int:
    model = load_model(args.model)
    threshold = args.threshold if args.threshold is not None else model.threshold
    host, _, port = args.bind.rpartition(":")
    try:
        server = ThreadingHTTPServer((host or "127.0.0.1", int(port)), make_handler(model, threshold))
    except OSError as e:
        _log(f"serve: cannot bind {args.bind}: {e}")
        return 1
    _log(f"serving on {args.bind}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


_DISPATCH = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "synth": cmd_synth,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.subcommand](args)
    except PhishDefenseError as e:
        _log(f"error: {e}")
        return 1
    except OSError as e:
        _log(f"i/o error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
