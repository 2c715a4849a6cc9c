"""Encoder memory compression, transfer, decoder read and gated write, and
the two memory regularizers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .encoder import bilinear_attention


@dataclass
class MemoryBank:
    slots: Tensor  # (B, r, d)
    write_attention: Tensor | None = None  # (B, r, L), kept for M_E only


@dataclass
class ReadResult:
    psi: Tensor  # (B, r)
    readout: Tensor  # (B, d) over the current decoder memory
    enc_readout: Tensor | None  # (B, d) same weights over the frozen encoder memory


def compress(H: Tensor, W_a2: Tensor, W_a1: Tensor, sent_mask: np.ndarray | None = None) -> MemoryBank:
    """Multi-head self-attentive compression of document states.

    ``A = softmax_L(W_a1 tanh(W_a2 H^T))`` per head, masked over padded
    sentences, and ``M_E = A H``. Shapes: H (B, L, d), W_a2 (d, d_a),
    W_a1 (d_a, r).
    """
    B, L, d = H.shape
    r = W_a1.shape[1]
    if r < 1:
        raise ValueError("compress: need at least one memory head")
    scores = ad.transpose(ad.matmul(ad.tanh(ad.matmul(H, W_a2)), W_a1), (0, 2, 1))  # (B, r, L)
    mask = None
    if sent_mask is not None:
        mask = np.broadcast_to(np.asarray(sent_mask, dtype=bool)[:, None, :], (B, r, L))
    A = ad.softmax(scores, mask=mask)
    return MemoryBank(slots=ad.matmul(A, H), write_attention=A)


def comp_loss(A: Tensor) -> Tensor:
    """``||A A^T - I||_F^2``; for a batch (B, r, L) the mean over documents."""
    single = A.ndim == 2
    if single:
        A = ad.reshape(A, (1,) + A.shape)
    B, r, _ = A.shape
    gram = ad.matmul(A, ad.transpose(A, (0, 2, 1)))
    eye = Tensor(np.broadcast_to(np.eye(r, dtype=A.dtype), (B, r, r)).copy())
    per_doc = ad.frobenius_norm_sq(gram - eye)
    return ad.mean(per_doc)


def transfer(M_E: MemoryBank | Tensor, zeros: bool = False) -> Tensor:
    """Initial decoder memory. Values equal the encoder memory (or zeros for
    the no-transfer ablation); the result is a fresh node so later writes
    build on it without touching ``M_E``."""
    slots = M_E.slots if isinstance(M_E, MemoryBank) else M_E
    if zeros:
        return Tensor(np.zeros(slots.shape, dtype=slots.dtype))
    return slots * 1.0


def read(h_d: Tensor, M_D: Tensor, W_psi: Tensor, M_E: Tensor | None = None) -> ReadResult:
    """Bilinear read over decoder memory slots with query ``h_d``."""
    B, r, d = M_D.shape
    psi = bilinear_attention(h_d, M_D, W_psi)
    w = ad.reshape(psi, (B, 1, r))
    m = ad.reshape(ad.matmul(w, M_D), (B, d))
    cm = None if M_E is None else ad.reshape(ad.matmul(w, M_E), (B, d))
    return ReadResult(psi=psi, readout=m, enc_readout=cm)


class MemoryWriter:
    """Gated slot update shared across slots:

    z_k = sigmoid(W_z1 h + W_z2 m + W_z3 M(k) + b_z)
    u_k = tanh(W_u1 h + W_u2 m + W_u3 M(k) + b_u)
    M(k) <- z_k * M(k) + (1 - z_k) * u_k
    """

    def __init__(self, store: ParamStore, query_size: int, slot_size: int):
        d = slot_size
        self.Wz1 = store.weight("mem.write.Wz1", query_size, d)
        self.Wz2 = store.weight("mem.write.Wz2", d, d)
        self.Wz3 = store.weight("mem.write.Wz3", d, d)
        self.bz = store.bias("mem.write.bz", d)
        self.Wu1 = store.weight("mem.write.Wu1", query_size, d)
        self.Wu2 = store.weight("mem.write.Wu2", d, d)
        self.Wu3 = store.weight("mem.write.Wu3", d, d)
        self.bu = store.bias("mem.write.bu", d)

    def gates(self, h_next: Tensor, m: Tensor, M_D: Tensor) -> tuple[Tensor, Tensor]:
        B, r, d = M_D.shape

        def pre(W1, W2, W3, b):
            shared = ad.matmul(h_next, W1) + ad.matmul(m, W2) + ad.expand(ad.reshape(b, (1, d)), (B, d))
            return ad.expand(ad.reshape(shared, (B, 1, d)), (B, r, d)) + ad.matmul(M_D, W3)

        z = ad.sigmoid(pre(self.Wz1, self.Wz2, self.Wz3, self.bz))
        u = ad.tanh(pre(self.Wu1, self.Wu2, self.Wu3, self.bu))
        return z, u

    def __call__(self, h_next: Tensor, m: Tensor, M_D: Tensor) -> Tensor:
        z, u = self.gates(h_next, m, M_D)
        return gated_update(M_D, z, u)


def gated_update(M_D: Tensor, z: Tensor, u: Tensor) -> Tensor:
    return z * M_D + (1.0 - z) * u


def read_loss(enc_readouts: list[Tensor], sent_contexts: list[Tensor], step_mask: np.ndarray | None = None) -> Tensor:
    """Mean over decoding steps of ``||c_m - c_s||_2``.

    Each list entry is (B, d) for one step; ``step_mask`` (B, T) drops padded
    target steps and the per-document mean uses that document's own length.
    The batch result is the mean over documents.
    """
    T = len(enc_readouts)
    if T == 0 or len(sent_contexts) != T:
        raise ValueError("read_loss: need equal, non-empty step sequences")
    dists = ad.stack([ad.l2_norm(a - b, axis=-1) for a, b in zip(enc_readouts, sent_contexts)], axis=1)  # (B, T)
    B = dists.shape[0]
    if step_mask is None:
        step_mask = np.ones((B, T), dtype=bool)
    lengths = step_mask.sum(axis=1).astype(dists.dtype)
    weights = step_mask / np.where(lengths > 0, lengths, 1.0)[:, None]
    return ad.sum(dists * Tensor(weights.astype(dists.dtype))) * (1.0 / B)
