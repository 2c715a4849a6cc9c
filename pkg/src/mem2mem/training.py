"""Training loop, corpus preparation and checkpoints."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, load_arrays, save_arrays
from .config import RunConfig
from .model import Mem2Mem
from .text import HierDocument, Limits, Vocabulary, batch, build_vocab, corpus_token_stream, encode_document, encode_summary

log = logging.getLogger(__name__)


def limits_of(cfg: RunConfig) -> Limits:
    return Limits(cfg.max_sections, cfg.max_section_tokens, cfg.max_summary_tokens)


@dataclass
class Prepared:
    docs: list[HierDocument]
    targets: list[list[int]]
    ids: list[str]
    records: list[dict]


def prepare(records: list[dict], vocab: Vocabulary, cfg: RunConfig) -> Prepared:
    lim = limits_of(cfg)
    docs, targets, ids = [], [], []
    for i, rec in enumerate(records):
        doc = encode_document(rec["sections"], vocab, lim)
        docs.append(doc)
        targets.append(encode_summary(rec.get("abstract", []), vocab, doc, lim))
        ids.append(str(rec.get("id", i)))
    return Prepared(docs, targets, ids, records)


def vocab_for(records: list[dict], cfg: RunConfig) -> Vocabulary:
    return build_vocab(corpus_token_stream(records), cfg.max_vocab)


@dataclass
class TrainState:
    model: Mem2Mem
    vocab: Vocabulary
    optim: AdamState = field(default_factory=AdamState)
    epoch: int = 0
    history: list[dict] = field(default_factory=list)


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train_step(ts: TrainState, b) -> dict:
    cfg = ts.model.config
    rep = ts.model.loss(b)
    grads = ad.grad(rep.total, ts.model.params)
    _, _, norm = ad.adam_step(ts.model.params, grads, ts.optim, lr=cfg.lr, clip_norm=cfg.clip)
    row = rep.as_dict()
    row["grad_norm"] = norm
    row["step"] = ts.optim.step
    row["epoch"] = ts.epoch
    ts.history.append(row)
    return row


def train(
    ts: TrainState,
    data: Prepared,
    epochs: int | None = None,
    on_step: Callable[[dict], None] | None = None,
    checkpoint_path=None,
) -> TrainState:
    """Run ``epochs`` passes (default: the config's) continuing from
    ``ts.epoch``. Batch order per epoch depends only on (seed, epoch)."""
    cfg = ts.model.config
    epochs = cfg.epochs if epochs is None else epochs
    for _ in range(epochs):
        order = epoch_order(cfg.seed, ts.epoch, len(data.docs))
        for b in batch(data.docs, data.targets, cfg.batch_size, order=order):
            row = train_step(ts, b)
            if on_step is not None:
                on_step(row)
            if checkpoint_path and cfg.checkpoint_every and ts.optim.step % cfg.checkpoint_every == 0:
                save_checkpoint(checkpoint_path, ts)
        ts.epoch += 1
    return ts


def evaluate_loss(model: Mem2Mem, data: Prepared, batch_size: int | None = None) -> dict[str, float]:
    """Teacher-forced metrics averaged over tokens (accuracy, nll)."""
    bs = batch_size or model.config.batch_size
    tot_tok = 0
    acc = nll = 0.0
    with ad.no_grad():
        for b in batch(data.docs, data.targets, bs):
            rep = model.loss(b)
            n = int(b.tgt_mask.sum())
            acc += rep.accuracy * n
            nll += rep.nll * n
            tot_tok += n
    return {"accuracy": acc / max(tot_tok, 1), "nll": nll / max(tot_tok, 1)}


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, ts: TrainState) -> None:
    arrays = {f"param/{k}": v for k, v in ts.model.state_dict().items()}
    for k, v in ts.optim.m.items():
        arrays[f"adam_m/{k}"] = v
    for k, v in ts.optim.v.items():
        arrays[f"adam_v/{k}"] = v
    meta = {
        "config": ts.model.config.to_dict(),
        "vocab": ts.vocab.itos,
        "optimizer_step": ts.optim.step,
        "epoch": ts.epoch,
    }
    save_arrays(path, arrays, meta)


def load_checkpoint(path) -> TrainState:
    arrays, meta = load_arrays(path)
    cfg = RunConfig.from_dict(meta["config"])
    vocab = Vocabulary(meta["vocab"][4:])
    model = Mem2Mem(cfg, len(vocab))
    model.load_state_dict({k[len("param/") :]: v for k, v in arrays.items() if k.startswith("param/")})
    optim = AdamState(
        step=int(meta["optimizer_step"]),
        m={k[len("adam_m/") :]: v for k, v in arrays.items() if k.startswith("adam_m/")},
        v={k[len("adam_v/") :]: v for k, v in arrays.items() if k.startswith("adam_v/")},
    )
    return TrainState(model=model, vocab=vocab, optim=optim, epoch=int(meta["epoch"]))
