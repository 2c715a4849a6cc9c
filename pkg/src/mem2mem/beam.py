"""Beam search over a batched step function.

``step_fn(states, tokens) -> (log_probs, new_states)`` receives the list of
live hypothesis states and their last tokens and returns an (n, V) array of
next-token log-probabilities plus per-hypothesis successor states. The
model adapter in :func:`model_stepper` batches live hypotheses as rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import autodiff as ad
from .encoder import EncoderStates
from .memory import MemoryBank
from .model import DecoderState, Encoded
from .text import BOS, EOS, PAD, collate


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    log_prob: float
    state: Any = None
    finished: bool = False

    @property
    def score(self) -> float:
        """Length-normalized log-probability."""
        return self.log_prob / max(len(self.tokens), 1)


StepFn = Callable[[list, list[int]], tuple[np.ndarray, list]]


def beam_search(
    step_fn: StepFn,
    init_state: Any,
    beam_width: int = 4,
    max_len: int = 200,
    bos: int = BOS,
    eos: int = EOS,
) -> Hypothesis:
    """Return the best hypothesis.

    Each step ranks every one-token extension of the live hypotheses by
    cumulative log-probability (ties: lower token id, then the earlier-ranked
    parent) and keeps the top ``beam_width``. Extensions ending in ``eos`` move
    to the finished pool and free their slot. Finished hypotheses are compared
    by log-probability divided by length; if none finish within ``max_len``
    the best partial one is returned.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    live = [Hypothesis(tokens=(), log_prob=0.0, state=init_state)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        if not live:
            break
        logp, states = step_fn([h.state for h in live], [h.tokens[-1] if h.tokens else bos for h in live])
        logp = np.asarray(logp, dtype=np.float64)
        n, V = logp.shape
        totals = np.array([h.log_prob for h in live])[:, None] + logp
        flat = totals.ravel()
        token_of = np.tile(np.arange(V), n)
        parent_of = np.repeat(np.arange(n), V)
        # lexsort: last key is primary
        order = np.lexsort((parent_of, token_of, -flat))
        chosen = []
        for k in order:
            if len(chosen) == beam_width or not np.isfinite(flat[k]):
                break
            chosen.append(k)
        new_live = []
        for k in chosen:
            p, w = int(parent_of[k]), int(token_of[k])
            parent = live[p]
            hyp = Hypothesis(tokens=parent.tokens + (w,), log_prob=float(flat[k]), state=states[p])
            if w == eos:
                hyp.finished = True
                finished.append(hyp)
            else:
                new_live.append(hyp)
        live = new_live
    pool = finished if finished else live
    best = pool[0]
    for h in pool[1:]:
        if h.score > best.score:
            best = h
    return best


def greedy_decode(step_fn: StepFn, init_state: Any, max_len: int = 200, bos: int = BOS, eos: int = EOS) -> Hypothesis:
    tokens: list[int] = []
    state = init_state
    total = 0.0
    for _ in range(max_len):
        logp, states = step_fn([state], [tokens[-1] if tokens else bos])
        row = np.asarray(logp, dtype=np.float64)[0]
        w = int(np.argmax(row))  # first maximum = lowest id
        total += float(row[w])
        tokens.append(w)
        state = states[0]
        if w == eos:
            return Hypothesis(tuple(tokens), total, state, finished=True)
    return Hypothesis(tuple(tokens), total, state)


# ---------------------------------------------------------------- model adapter


def _rows(t, idx):
    if t is None:
        return None
    return ad.Tensor(t.data[idx])


class _ModelStepper:
    """Adapts a model to the beam interface for one document.

    A hypothesis state is a tuple ``(h, M_D, coverage, last_read, step)`` of
    plain arrays so each hypothesis owns its own memory and coverage; states
    produced by a step also carry ``(psi, z, parent_state)`` for tracing.
    """

    def __init__(self, model, doc, banned=(PAD, BOS)):
        self.model = model
        with ad.no_grad():
            self.enc = model.encode(collate([doc]))
            self.init = model.init_state(self.enc)
        self.banned = list(banned)

    def initial(self):
        s = self.init
        return (s.h.data[0], None if s.memory is None else s.memory.data[0], s.coverage.data[0], None, 0)

    def encoded_for(self, n: int):
        st = self.enc.states
        idx = np.zeros(n, dtype=np.int64)
        states = EncoderStates(
            word_states=_rows(st.word_states, idx),
            sentence_embeddings=_rows(st.sentence_embeddings, idx),
            doc_states=_rows(st.doc_states, idx),
            doc_final=_rows(st.doc_final, idx),
            tok_mask=st.tok_mask[idx],
            sent_mask=st.sent_mask[idx],
            sent_of_tok=st.sent_of_tok[idx],
            src_ext=st.src_ext[idx],
            ext_size=st.ext_size,
            word_proj=_rows(st.word_proj, idx),
        )
        mem = None
        if self.enc.memory is not None:
            mem = MemoryBank(_rows(self.enc.memory.slots, idx), _rows(self.enc.memory.write_attention, idx))
        return Encoded(states, mem)

    def __call__(self, states: list, tokens: list[int]):
        n = len(states)
        enc = self.encoded_for(n)
        h = ad.Tensor(np.stack([s[0] for s in states]))
        mem = None if states[0][1] is None else ad.Tensor(np.stack([s[1] for s in states]))
        cov = ad.Tensor(np.stack([s[2] for s in states]))
        last = None if states[0][3] is None else ad.Tensor(np.stack([s[3] for s in states]))
        ds = DecoderState(h=h, memory=mem, coverage=cov, last_read=last, step=states[0][4])
        with ad.no_grad():
            step, new = self.model.decode_step(np.asarray(tokens), ds, enc)
        p = step.p_final.data.astype(np.float64)
        with np.errstate(divide="ignore"):
            logp = np.log(p)
        logp[:, self.banned] = -np.inf
        out_states = []
        for i in range(n):
            out_states.append(
                (
                    new.h.data[i],
                    None if new.memory is None else new.memory.data[i],
                    new.coverage.data[i],
                    None if new.last_read is None else new.last_read.data[i],
                    new.step,
                    None if step.psi is None else step.psi.data[i],
                    float(step.z.data[i, 0]),
                    states[i],
                )
            )
        return logp, out_states


def model_stepper(model, doc):
    return _ModelStepper(model, doc)


@dataclass
class DecodeResult:
    tokens: list[int]  # copy-side ids, EOS stripped
    log_prob: float
    psi: np.ndarray | None  # (r, T) read weights along the chosen path
    z: list[float]  # pointer switch along the chosen path


def _trace(state) -> tuple[list, list]:
    psis, zs = [], []
    while state is not None and len(state) > 5:
        psis.append(state[5])
        zs.append(state[6])
        state = state[7]
    return psis[::-1], zs[::-1]


def summarize(model, doc, beam_width: int = 4, max_len: int = 200) -> DecodeResult:
    stepper = model_stepper(model, doc)
    hyp = beam_search(stepper, stepper.initial(), beam_width=beam_width, max_len=max_len)
    psis, zs = _trace(hyp.state)
    toks = list(hyp.tokens)
    if toks and toks[-1] == EOS:
        toks = toks[:-1]
    psi = None if not psis or psis[0] is None else np.stack(psis, axis=1)
    return DecodeResult(tokens=toks, log_prob=hyp.log_prob, psi=psi, z=zs)
