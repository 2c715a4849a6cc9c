"""The memory-to-memory hierarchical encoder-decoder with a pointer-generator
output layer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .config import RunConfig
from .encoder import (
    EncoderStates,
    GruCell,
    HierEncoder,
    WordAttention,
    combine_hierarchical,
    sentence_attention,
    update_coverage,
)
from .memory import MemoryBank, MemoryWriter, comp_loss, compress, read, read_loss, transfer
from .text import UNK, Batch

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class Encoded:
    states: EncoderStates
    memory: MemoryBank | None


@dataclass
class DecoderState:
    h: Tensor  # (B, Hd)
    memory: Tensor | None  # M_D (B, r, d)
    coverage: Tensor  # (B, Nd)
    last_read: Tensor | None = None  # m_{t-1}, consumed by the deferred write
    step: int = 0


@dataclass
class DecoderStep:
    h_d: Tensor
    h_m: Tensor
    context: Tensor
    alpha: Tensor
    beta: Tensor
    gamma: Tensor
    coverage: Tensor  # coverage used to compute alpha at this step
    z: Tensor  # (B, 1) pointer switch, probability of generating
    p_gen: Tensor  # (B, V) generator distribution
    p_final: Tensor  # (B, V_ext)
    sent_context: Tensor  # c_s
    psi: Tensor | None = None
    read: Tensor | None = None  # m_t
    enc_read: Tensor | None = None  # c_m


def pointer_switch(context: Tensor, h_d: Tensor, x_prev: Tensor, wc: Tensor, wd: Tensor, wx: Tensor, b: Tensor) -> Tensor:
    """Probability of generating from the vocabulary, (B, 1).

    Logistic sigmoid of a scalar score; a softmax over a single logit would
    be constant.
    """
    B = context.shape[0]
    score = ad.matmul(context, wc) + ad.matmul(h_d, wd) + ad.matmul(x_prev, wx) + ad.expand(ad.reshape(b, (1, 1)), (B, 1))
    return ad.sigmoid(score)


def pointer_mix(p_gen: Tensor, gamma: Tensor, z: Tensor, src_ext: np.ndarray, ext_size: int) -> Tensor:
    """``z * P_g + (1 - z) * P_c`` over vocabulary plus source OOV ids.

    ``P_c(w)`` sums γ over source positions holding ``w``; ``P_g`` is zero on
    extended ids.
    """
    B, V = p_gen.shape
    if ext_size > V:
        p_gen = ad.concat([p_gen, Tensor(np.zeros((B, ext_size - V), dtype=p_gen.dtype))], axis=1)
    p_copy = ad.scatter_add(gamma, src_ext, ext_size)
    zz = ad.expand(z, (B, ext_size))
    return zz * p_gen + (1.0 - zz) * p_copy


def nll(target_probs: list[Tensor], mask: np.ndarray) -> tuple[Tensor, int]:
    """Mean negative log-likelihood over unmasked target tokens.

    ``target_probs[t]`` is (B,) probabilities of the reference token at step
    t. Probabilities below 1e-12 are clamped; the count of clamped entries is
    returned alongside.
    """
    probs = ad.stack(target_probs, axis=1)  # (B, T)
    m = np.asarray(mask, dtype=bool)
    clamped = int(((probs.data < PROB_FLOOR) & m).sum())
    if clamped:
        log.warning("clamped %d zero-probability target tokens", clamped)
    logp = ad.log(probs, floor=PROB_FLOOR)
    n = max(int(m.sum()), 1)
    return ad.sum(logp * Tensor(m.astype(probs.dtype))) * (-1.0 / n), clamped


@dataclass
class LossReport:
    total: Tensor
    nll: float
    comp: float
    read: float
    coverage: float
    accuracy: float
    clamped: int
    steps: list[DecoderStep] = field(default_factory=list, repr=False)
    encoded: Encoded | None = field(default=None, repr=False)

    def as_dict(self) -> dict[str, float]:
        return {
            "loss": float(self.total.data),
            "nll": self.nll,
            "comp": self.comp,
            "read": self.read,
            "coverage": self.coverage,
            "accuracy": self.accuracy,
        }


class Mem2Mem:
    def __init__(self, config: RunConfig, vocab_size: int):
        config.validate()
        self.config = config
        self.vocab_size = vocab_size
        cfg = config
        dtype = np.dtype(cfg.dtype)
        store = ParamStore(seed=cfg.seed, dtype=dtype, scale=cfg.init_scale)
        self.store = store
        E, H = cfg.embed_size, cfg.hidden_size
        d = 2 * H
        Hd = H
        self.state_size = d
        self.emb = store.weight("emb", vocab_size, E)
        self.encoder = HierEncoder(store, E, H)
        self.init_W = store.weight("dec.init.W", d, Hd)
        self.init_b = store.bias("dec.init.b", Hd)
        self.cell = GruCell(store, "dec.gru", E, Hd)
        self.attn = WordAttention(store, d, Hd, cfg.attn_size)
        self.W_sent = store.weight("attn.Ws", Hd, d)
        if cfg.encoder_mem:
            self.W_a2 = store.weight("mem.Wa2", d, cfg.d_a)
            self.W_a1 = store.weight("mem.Wa1", cfg.d_a, cfg.heads)
            self.W_psi = store.weight("mem.Wpsi", Hd, d)
            self.W_m = store.weight("mem.Wm", Hd + d, Hd)
        self.writer = MemoryWriter(store, Hd, d) if cfg.decoder_mem else None
        if self.writer is not None:
            # a positive keep bias starts the memory close to the identity write
            self.writer.bz.data[...] = cfg.write_gate_bias
        self.out_W = store.weight("out.W", Hd + d, vocab_size)
        self.out_b = store.bias("out.b", vocab_size)
        self.ptr_wc = store.weight("ptr.wc", d, 1)
        self.ptr_wd = store.weight("ptr.wd", Hd, 1)
        self.ptr_wx = store.weight("ptr.wx", E, 1)
        self.ptr_b = store.bias("ptr.b", 1)

    @property
    def params(self) -> dict[str, Tensor]:
        return self.store.params

    @property
    def dtype(self):
        return self.store.dtype

    # ------------------------------------------------------------ encoder side

    def encode(self, batch: Batch) -> Encoded:
        states = self.encoder(self.emb, batch)
        states.word_proj = self.attn.project(states.word_states)
        bank = None
        if self.config.encoder_mem:
            bank = compress(states.doc_states, self.W_a2, self.W_a1, states.sent_mask)
        return Encoded(states, bank)

    def init_state(self, enc: Encoded) -> DecoderState:
        st = enc.states
        B = st.doc_final.shape[0]
        h0 = ad.matmul(st.doc_final, self.init_W) + ad.expand(ad.reshape(self.init_b, (1, -1)), (B, self.init_b.shape[0]))
        mem = None
        if self.config.encoder_mem:
            if self.config.decoder_mem:
                mem = transfer(enc.memory, zeros=not self.config.mem_transfer)
            else:
                mem = enc.memory.slots
        cov = Tensor(np.zeros(st.tok_mask.shape, dtype=self.dtype))
        return DecoderState(h=h0, memory=mem, coverage=cov)

    # ------------------------------------------------------------ decoder step

    def decode_step(self, prev_ids: np.ndarray, state: DecoderState, enc: Encoded) -> tuple[DecoderStep, DecoderState]:
        """One decoder step; ``prev_ids`` are generator-side ids (B,)."""
        cfg = self.config
        st = enc.states
        prev_ids = np.where(np.asarray(prev_ids) >= self.vocab_size, UNK, prev_ids)
        x = ad.embedding(self.emb, prev_ids)
        h_d = self.cell(x, state.h)
        memory = state.memory
        psi = m = cm = None
        if cfg.encoder_mem:
            if self.writer is not None and state.last_read is not None:
                memory = self.writer(h_d, state.last_read, memory)
            rr = read(h_d, memory, self.W_psi, enc.memory.slots)
            psi, m, cm = rr.psi, rr.readout, rr.enc_readout
            h_m = ad.matmul(ad.concat([h_d, m], axis=-1), self.W_m)
        else:
            h_m = h_d
        alpha = self.attn(h_m, st.word_proj, state.coverage, st.tok_mask)
        beta = sentence_attention(h_m, st.doc_states, self.W_sent, st.sent_mask)
        gamma, ctx = combine_hierarchical(alpha, beta, st.sent_of_tok, st.word_states)
        B, L, d = st.doc_states.shape
        c_s = ad.reshape(ad.matmul(ad.reshape(beta, (B, 1, L)), st.doc_states), (B, d))
        logits = ad.matmul(ad.concat([h_m, ctx], axis=-1), self.out_W) + ad.expand(
            ad.reshape(self.out_b, (1, -1)), (B, self.vocab_size)
        )
        p_gen = ad.softmax(logits)
        z = pointer_switch(ctx, h_d, x, self.ptr_wc, self.ptr_wd, self.ptr_wx, self.ptr_b)
        p_final = pointer_mix(p_gen, gamma, z, st.src_ext, st.ext_size)
        step = DecoderStep(
            h_d=h_d,
            h_m=h_m,
            context=ctx,
            alpha=alpha,
            beta=beta,
            gamma=gamma,
            coverage=state.coverage,
            z=z,
            p_gen=p_gen,
            p_final=p_final,
            sent_context=c_s,
            psi=psi,
            read=m,
            enc_read=cm,
        )
        new_state = DecoderState(
            h=h_d,
            memory=memory,
            coverage=update_coverage(state.coverage, alpha),
            last_read=m,
            step=state.step + 1,
        )
        return step, new_state

    # ------------------------------------------------------------ objective

    def loss(self, batch: Batch, keep_steps: bool = False) -> LossReport:
        """Teacher-forced ``L + λ1 L_comp + λ2 L_read`` (plus the optional
        coverage loss)."""
        cfg = self.config
        enc = self.encode(batch)
        state = self.init_state(enc)
        T = batch.dec_in.shape[1]
        probs, steps, cms, css, covs = [], [], [], [], []
        correct = 0
        for t in range(T):
            step, state = self.decode_step(batch.dec_in[:, t], state, enc)
            probs.append(ad.pick(step.p_final, batch.dec_out[:, t]))
            mt = batch.tgt_mask[:, t]
            correct += int(((step.p_final.data.argmax(axis=1) == batch.dec_out[:, t]) & mt).sum())
            if cfg.encoder_mem:
                cms.append(step.enc_read)
                css.append(step.sent_context)
            if cfg.coverage_loss:
                covs.append(ad.sum(ad.minimum(step.alpha, step.coverage), axis=1))
            if keep_steps:
                steps.append(step)
        L, clamped = nll(probs, batch.tgt_mask)
        total = L
        comp_v = read_v = cov_v = 0.0
        if cfg.encoder_mem:
            lc = comp_loss(enc.memory.write_attention)
            comp_v = float(lc.data)
            if cfg.reg_comp:
                total = total + lc * cfg.lambda1
            lr = read_loss(cms, css, batch.tgt_mask)
            read_v = float(lr.data)
            if cfg.reg_read:
                total = total + lr * cfg.lambda2
        if cfg.coverage_loss:
            m = batch.tgt_mask.astype(self.dtype)
            lcov = ad.sum(ad.stack(covs, axis=1) * Tensor(m)) * (1.0 / max(m.sum(), 1.0))
            cov_v = float(lcov.data)
            total = total + lcov * cfg.coverage_loss_weight
        n = max(int(batch.tgt_mask.sum()), 1)
        return LossReport(
            total=total,
            nll=float(L.data),
            comp=comp_v,
            read=read_v,
            coverage=cov_v,
            accuracy=correct / n,
            clamped=clamped,
            steps=steps,
            encoded=enc if keep_steps else None,
        )

    # ------------------------------------------------------------ persistence

    def state_dict(self) -> dict[str, np.ndarray]:
        return self.store.state_dict()

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        self.store.load_state_dict(arrays)
