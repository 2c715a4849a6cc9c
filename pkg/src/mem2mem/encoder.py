"""GRU encoders and hierarchical word/sentence attention with coverage.

Everything works on batches; a single example is a batch of one.
Time-major sequences are ``(T, B, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor


def _row(bias: Tensor, rows: int) -> Tensor:
    return ad.expand(ad.reshape(bias, (1, bias.shape[0])), (rows, bias.shape[0]))


class GruCell:
    """Single GRU layer.

    update  z = sigmoid(x Wz + h Uz + bz)
    reset   r = sigmoid(x Wr + h Ur + br)
    cand    n = tanh(x Wn + (r * h) Un + bn)
    output  h' = z * h + (1 - z) * n
    Gate weights are stored fused as ``Wx = [Wz | Wr | Wn]`` and
    ``Uzr = [Uz | Ur]``.
    """

    def __init__(self, store: ParamStore, name: str, input_size: int, hidden_size: int):
        self.input_size = input_size
        self.hidden_size = hidden_size
        H = hidden_size
        self.Wx = store.weight(f"{name}.Wx", input_size, 3 * H)
        self.Uzr = store.weight(f"{name}.Uzr", H, 2 * H)
        self.Un = store.weight(f"{name}.Un", H, H)
        self.b = store.bias(f"{name}.b", 3 * H)

    def project_inputs(self, xs: Tensor) -> Tensor:
        """``xs @ Wx + b`` for all steps at once; ``xs`` is (T, B, in)."""
        T, B, _ = xs.shape
        bias = ad.expand(ad.reshape(self.b, (1, 1, 3 * self.hidden_size)), (T, B, 3 * self.hidden_size))
        return ad.matmul(xs, self.Wx) + bias

    def step_projected(self, xw: Tensor, h: Tensor) -> Tensor:
        H = self.hidden_size
        zr = ad.sigmoid(xw[:, : 2 * H] + ad.matmul(h, self.Uzr))
        z = zr[:, :H]
        r = zr[:, H:]
        n = ad.tanh(xw[:, 2 * H :] + ad.matmul(r * h, self.Un))
        return z * h + (1.0 - z) * n

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        xw = ad.matmul(x, self.Wx) + _row(self.b, x.shape[0])
        return self.step_projected(xw, h)


def run_gru(cell: GruCell, xs: Tensor, mask: np.ndarray | None = None, reverse: bool = False, h0: Tensor | None = None):
    """Unroll over (T, B, in). Masked steps carry the previous state, so with
    right-padding the forward final state is the state at the last real token
    and the reverse pass starts fresh at each sequence's last real token.

    Returns the per-step states (list of (B, H), in input order) and the
    final state.
    """
    T, B, _ = xs.shape
    H = cell.hidden_size
    xw = cell.project_inputs(xs)
    h = h0 if h0 is not None else Tensor(np.zeros((B, H), dtype=xs.dtype))
    states: list[Tensor | None] = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        h_new = cell.step_projected(xw[t], h)
        if mask is not None and not mask[t].all():
            keep = np.broadcast_to(mask[t][:, None], (B, H)).astype(xs.dtype)
            h = h_new * Tensor(keep) + h * Tensor(1.0 - keep)
        else:
            h = h_new
        states[t] = h
    return states, h


class BiGru:
    def __init__(self, store: ParamStore, name: str, input_size: int, hidden_size: int):
        self.fwd = GruCell(store, f"{name}.f", input_size, hidden_size)
        self.bwd = GruCell(store, f"{name}.b", input_size, hidden_size)
        self.hidden_size = hidden_size

    @property
    def output_size(self) -> int:
        return 2 * self.hidden_size

    def __call__(self, xs: Tensor, mask: np.ndarray | None = None):
        """Returns (T, B, 2H) states and the (B, 2H) summary
        ``[forward final; backward final]``."""
        f_states, f_last = run_gru(self.fwd, xs, mask)
        b_states, b_last = run_gru(self.bwd, xs, mask, reverse=True)
        out = ad.stack([ad.concat([f, b], axis=-1) for f, b in zip(f_states, b_states)], axis=0)
        return out, ad.concat([f_last, b_last], axis=-1)


def encode_sentence(enc: BiGru, x: Tensor, mask: np.ndarray | None = None):
    """Word states and sentence embeddings for a batch of sentences.

    ``x`` is (B, N, E) token embeddings. Returns ((B, N, 2H), (B, 2H)).
    """
    if x.shape[1] < 1:
        raise ValueError("encode_sentence: empty sentence")
    xs = ad.transpose(x, (1, 0, 2))
    tmask = None if mask is None else np.asarray(mask, dtype=bool).T
    states, emb = enc(xs, tmask)
    return ad.transpose(states, (1, 0, 2)), emb


def encode_doc(enc: BiGru, s: Tensor, mask: np.ndarray | None = None):
    """Document states ``H`` (B, L, 2H) over sentence embeddings (B, L, 2H),
    plus the (B, 2H) final states."""
    if s.shape[1] < 1:
        raise ValueError("encode_doc: document has no sentences")
    xs = ad.transpose(s, (1, 0, 2))
    tmask = None if mask is None else np.asarray(mask, dtype=bool).T
    states, last = enc(xs, tmask)
    return ad.transpose(states, (1, 0, 2)), last


@dataclass
class EncoderStates:
    word_states: Tensor  # (B, Nd, d) flattened document order
    sentence_embeddings: Tensor  # (B, L, d)
    doc_states: Tensor  # (B, L, d), the matrix H per document
    doc_final: Tensor  # (B, d)
    tok_mask: np.ndarray
    sent_mask: np.ndarray
    sent_of_tok: np.ndarray
    src_ext: np.ndarray
    ext_size: int
    word_proj: Tensor | None = None  # word_states @ W_e, cached for attention

    @property
    def num_sentences(self) -> np.ndarray:
        return self.sent_mask.sum(axis=1)


class HierEncoder:
    def __init__(self, store: ParamStore, embed_size: int, hidden_size: int):
        self.word = BiGru(store, "enc.word", embed_size, hidden_size)
        self.doc = BiGru(store, "enc.doc", 2 * hidden_size, hidden_size)

    @property
    def state_size(self) -> int:
        return 2 * self.word.hidden_size

    def __call__(self, emb: Tensor, batch) -> EncoderStates:
        B, L, N = batch.word_ids.shape
        d = self.state_size
        x = ad.embedding(emb, batch.word_ids.reshape(B * L, N))
        wmask = batch.word_mask.reshape(B * L, N).copy()
        # fully padded sentences run one dummy step so every row is defined
        wmask[~wmask.any(axis=1), 0] = True
        words, sent = encode_sentence(self.word, x, wmask)
        flat = ad.reshape(words, (B * L * N, d))
        word_states = ad.take(flat, batch.tok_index, axis=0)
        sent = ad.reshape(sent, (B, L, d))
        sent = sent * Tensor(np.broadcast_to(batch.sent_mask[:, :, None], (B, L, d)).astype(sent.dtype))
        doc_states, doc_final = encode_doc(self.doc, sent, batch.sent_mask)
        return EncoderStates(
            word_states=word_states,
            sentence_embeddings=sent,
            doc_states=doc_states,
            doc_final=doc_final,
            tok_mask=batch.tok_mask,
            sent_mask=batch.sent_mask,
            sent_of_tok=batch.sent_of_tok,
            src_ext=batch.src_ext,
            ext_size=batch.ext_size,
        )


# ---------------------------------------------------------------- attention


class WordAttention:
    """Additive attention with coverage:
    ``score_i = v . tanh(W_e h_i + W_d q + w_c cov_i)``."""

    def __init__(self, store: ParamStore, state_size: int, query_size: int, attn_size: int):
        self.We = store.weight("attn.We", state_size, attn_size)
        self.Wd = store.weight("attn.Wd", query_size, attn_size)
        self.wc = store.weight("attn.wc", 1, attn_size)
        self.v = store.weight("attn.v", attn_size, 1)

    def project(self, word_states: Tensor) -> Tensor:
        return ad.matmul(word_states, self.We)

    def __call__(self, query: Tensor, word_proj: Tensor, coverage: Tensor, mask: np.ndarray) -> Tensor:
        return word_attention(query, word_proj, coverage, mask, self.Wd, self.wc, self.v)


def word_attention(query, word_proj, coverage, mask, Wd, wc, v) -> Tensor:
    """``word_proj`` is the precomputed (B, Nd, A) ``W_e h``; returns α (B, Nd)."""
    B, Nd, A = word_proj.shape
    q = ad.expand(ad.reshape(ad.matmul(query, Wd), (B, 1, A)), (B, Nd, A))
    cov = ad.matmul(ad.reshape(coverage, (B, Nd, 1)), wc)
    e = ad.tanh(word_proj + q + cov)
    scores = ad.reshape(ad.matmul(e, v), (B, Nd))
    return ad.softmax(scores, mask=mask)


def bilinear_attention(query: Tensor, keys: Tensor, W: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Luong "general" score ``q W k_j`` over keys (B, L, d); returns (B, L)."""
    B, L, d = keys.shape
    qw = ad.reshape(ad.matmul(query, W), (B, d, 1))
    scores = ad.reshape(ad.matmul(keys, qw), (B, L))
    return ad.softmax(scores, mask=mask)


def sentence_attention(query: Tensor, doc_states: Tensor, W: Tensor, mask: np.ndarray | None = None) -> Tensor:
    return bilinear_attention(query, doc_states, W, mask)


def combine_hierarchical(alpha: Tensor, beta: Tensor, sent_of_tok: np.ndarray, word_states: Tensor | None = None):
    """Rescale word attention by the attention of each word's sentence and
    renormalize. Returns (γ, context) where context is ``Σ_i γ_i h_i`` or
    None when ``word_states`` is not given."""
    B, Nd = alpha.shape
    L = beta.shape[1]
    flat_idx = np.arange(B)[:, None] * L + np.asarray(sent_of_tok)
    beta_tok = ad.take(ad.reshape(beta, (B * L,)), flat_idx, axis=0)
    prod = beta_tok * alpha
    den = ad.sum(prod, axis=1)
    if not np.all(den.data > 0):
        raise FloatingPointError("combine_hierarchical: zero normalizer, cannot renormalize γ")
    gamma = ad.div(prod, ad.expand(ad.reshape(den, (B, 1)), (B, Nd)))
    if word_states is None:
        return gamma, None
    ctx = ad.reshape(ad.matmul(ad.reshape(gamma, (B, 1, Nd)), word_states), (B, word_states.shape[2]))
    return gamma, ctx


def update_coverage(coverage: Tensor, alpha: Tensor) -> Tensor:
    if coverage.shape != alpha.shape:
        raise ad.ShapeError(f"update_coverage: shape mismatch {coverage.shape} vs {alpha.shape}")
    return coverage + alpha
