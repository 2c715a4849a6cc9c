"""Command-line interface: ``mem2mem {synth,train,summarize,evaluate,inspect}``.

Every command exits 0 on success. Failures print a single JSON line
``{"error": <kind>, "message": <text>}`` to stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .beam import summarize as beam_summarize
from .config import ConfigError, load_config
from .evaluation import corpus_mean, extract_by_memory, score_document
from .plotting import plot_read_attention, plot_write_attention
from .text import collate, make_synthetic_corpus, read_jsonl, summary_tokens, tokenize, write_jsonl
from .training import TrainState, load_checkpoint, prepare, save_checkpoint, train, vocab_for

log = logging.getLogger("mem2mem")


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _read_corpus(path) -> list[dict]:
    try:
        return read_jsonl(path)
    except FileNotFoundError:
        raise CliError("io", f"cannot read {path}: no such file") from None
    except (OSError, json.JSONDecodeError, ValueError) as e:
        raise CliError("io", f"cannot read {path}: {e}") from None


def _load(path) -> TrainState:
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise CliError("io", f"cannot read checkpoint {path}: no such file") from None
    except (OSError, ValueError, KeyError) as e:
        raise CliError("checkpoint", f"cannot load {path}: {e}") from None


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise CliError("config", f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def _doc_text(rec: dict) -> list[str]:
    return [t for sec in rec.get("sections", []) for s in sec for t in tokenize(s)]


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> None:
    docs, _ = make_synthetic_corpus(
        args.seed, args.n_docs, n_sentences=args.n_sentences, n_salient=args.n_salient, vocab_size=args.vocab_size
    )
    write_jsonl(args.out, docs)
    print(json.dumps({"documents": len(docs), "out": str(args.out)}))


def cmd_train(args) -> None:
    cfg = load_config(args.preset, args.config, _overrides(args.set))
    records = _read_corpus(args.corpus)
    if not records:
        raise CliError("data", f"{args.corpus} holds no documents")
    if args.resume:
        ts = _load(args.resume)
        cfg = ts.model.config
        vocab = ts.vocab
    else:
        vocab = vocab_for(records, cfg)
        from .model import Mem2Mem

        ts = TrainState(Mem2Mem(cfg, len(vocab)), vocab)
    data = prepare(records, vocab, cfg)
    log_fh = open(args.log, "w", newline="", encoding="utf-8") if args.log else None
    columns = ["step", "epoch", "loss", "nll", "comp", "read", "coverage", "accuracy", "grad_norm"]
    writer = None
    if log_fh:
        writer = csv.DictWriter(log_fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()

    def on_step(row):
        if writer:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in columns})
        if cfg.log_every and row["step"] % cfg.log_every == 0:
            log.info("step %d loss %.4f nll %.4f acc %.3f", row["step"], row["loss"], row["nll"], row["accuracy"])

    try:
        train(ts, data, epochs=args.epochs, on_step=on_step, checkpoint_path=args.out)
    except ad.NonFiniteGradientError as e:
        raise CliError("numeric", str(e)) from None
    finally:
        if log_fh:
            log_fh.close()
    save_checkpoint(args.out, ts)
    last = ts.history[-1] if ts.history else {}
    print(json.dumps({"checkpoint": str(args.out), "steps": ts.optim.step, "epoch": ts.epoch, "loss": last.get("loss")}))


def cmd_summarize(args) -> None:
    ts = _load(args.checkpoint)
    cfg = ts.model.config
    records = _read_corpus(args.corpus)
    data = prepare(records, ts.vocab, cfg)
    beam = args.beam or cfg.beam
    max_len = args.max_len or cfg.max_decode_len
    out = []
    for doc, rid in zip(data.docs, data.ids):
        res = beam_summarize(ts.model, doc, beam_width=beam, max_len=max_len)
        text = " ".join(ts.vocab.decode(res.tokens, doc.source_oov))
        out.append({"id": rid, "summary": text, "log_prob": res.log_prob, "z_mean": float(np.mean(res.z)) if res.z else None})
    write_jsonl(args.out, out)
    print(json.dumps({"summaries": len(out), "out": str(args.out)}))


def evaluate_records(summaries: list[dict], references: list[dict]) -> dict:
    refs = {str(r.get("id", i)): r for i, r in enumerate(references)}
    cands = {str(s["id"]): s for s in summaries}
    missing = sorted(set(refs) - set(cands))
    extra = sorted(set(cands) - set(refs))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing summaries for ids {missing}")
        if extra:
            parts.append(f"no reference for ids {extra}")
        raise CliError("alignment", "; ".join(parts))
    per_doc = {}
    for rid, ref in refs.items():
        cand = tokenize(cands[rid]["summary"])
        per_doc[rid] = score_document(cand, summary_tokens(ref.get("abstract", [])), _doc_text(ref))
    return {"documents": per_doc, "mean": corpus_mean(list(per_doc.values()))}


def cmd_evaluate(args) -> None:
    report = evaluate_records(_read_corpus(args.summaries), _read_corpus(args.references))
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    m = report["mean"]
    print(json.dumps({k: m[k]["f"] for k in ("rouge1", "rouge2", "rougeL")}))


def _write_matrix_csv(path, matrix, row_name: str, col_name: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([row_name] + [f"{col_name}{j}" for j in range(matrix.shape[1])])
        for i, row in enumerate(matrix):
            w.writerow([i] + [repr(float(x)) for x in row])


def cmd_inspect(args) -> None:
    ts = _load(args.checkpoint)
    model, cfg = ts.model, ts.model.config
    if not cfg.encoder_mem:
        raise CliError("config", "checkpoint has no encoder memory to inspect")
    records = _read_corpus(args.corpus)
    ids = [str(r.get("id", i)) for i, r in enumerate(records)]
    if args.doc_id is None:
        if not records:
            raise CliError("data", f"{args.corpus} holds no documents")
        idx = 0
    elif args.doc_id in ids:
        idx = ids.index(args.doc_id)
    else:
        raise CliError("data", f"document id {args.doc_id!r} not found")
    data = prepare(records[idx : idx + 1], ts.vocab, cfg)
    doc = data.docs[0]
    with ad.no_grad():
        enc = model.encode(collate([doc]))
    A = enc.memory.write_attention.data[0].astype(np.float64)
    res = beam_summarize(model, doc, beam_width=args.beam or cfg.beam, max_len=args.max_len or cfg.max_decode_len)
    psi = res.psi if res.psi is not None else np.zeros((A.shape[0], 0))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_matrix_csv(out / "write_attention.csv", A, "head", "sentence")
    _write_matrix_csv(out / "read_attention.csv", psi, "slot", "step")
    plot_write_attention(A, out / "write_attention.png")
    if psi.shape[1]:
        plot_read_attention(psi, out / "read_attention.png")
    gram = A @ A.T
    off = gram[~np.eye(len(gram), dtype=bool)]
    ext = extract_by_memory(A, [" ".join(t) for t in doc.tokens])
    report = {
        "id": ids[idx],
        "extraction": {"indices": ext.indices, "summary": ext.summary},
        "max_offdiag_AAt": float(off.max()) if off.size else 0.0,
        "row_sums_A": [float(x) for x in A.sum(axis=1)],
        "summary": " ".join(ts.vocab.decode(res.tokens, doc.source_oov)),
    }
    (out / "extraction.json").write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
    print(json.dumps({"out_dir": str(out), "extracted": ext.indices, "max_offdiag_AAt": report["max_offdiag_AAt"]}))


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mem2mem", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a marked-salient synthetic corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-docs", type=int, default=500)
    s.add_argument("--n-sentences", type=int, default=12)
    s.add_argument("--n-salient", type=int, default=3)
    s.add_argument("--vocab-size", type=int, default=64)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model on a JSON-lines corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--preset", default="desk")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--log", help="per-step CSV metrics log")
    t.add_argument("--resume", help="continue from this checkpoint")
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("summarize", help="beam-decode summaries")
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--corpus", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--beam", type=int)
    m.add_argument("--max-len", type=int)
    m.set_defaults(func=cmd_summarize)

    e = sub.add_parser("evaluate", help="score summaries against references")
    e.add_argument("--summaries", required=True)
    e.add_argument("--references", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    i = sub.add_parser("inspect", help="dump memory attention matrices and extraction")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--corpus", required=True)
    i.add_argument("--doc-id")
    i.add_argument("--out-dir", required=True)
    i.add_argument("--beam", type=int)
    i.add_argument("--max-len", type=int)
    i.set_defaults(func=cmd_inspect)
    return p


def _fail(kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)
    return 2


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliError as e:
        return _fail(e.kind, str(e))
    except SystemExit as e:  # --help
        return 0 if e.code in (0, None) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as e:
        return _fail(e.kind, str(e))
    except ConfigError as e:
        return _fail("config", str(e))
    except ValueError as e:
        return _fail("data", str(e))
    except OSError as e:
        return _fail("io", str(e))
    return 0


if __name__ == "__main__":
    sys.exit(main())
