"""Tokenization, vocabulary, hierarchical document encoding and batching."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ("<pad>", "<unk>", "<s>", "</s>")
MARKER = "mark"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int], oov: Sequence[str] = ()) -> list[str]:
        out = []
        n = len(self.itos)
        for i in ids:
            out.append(self.itos[i] if i < n else oov[i - n])
        return out

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[: len(SPECIALS)]) != SPECIALS:
            raise ValueError(f"{path}: vocabulary file must start with {SPECIALS}")
        return cls(lines[len(SPECIALS) :])


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int = 50_000) -> Vocabulary:
    """Keep the ``max_size - 4`` most frequent tokens; ties go to whichever
    token was seen first."""
    if max_size < len(SPECIALS):
        raise ValueError(f"max_size must be at least {len(SPECIALS)}, got {max_size}")
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    for seq in corpus:
        for tok in seq:
            if tok in SPECIALS:
                continue
            counts[tok] += 1
            first.setdefault(tok, len(first))
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
    return Vocabulary(ranked[: max_size - len(SPECIALS)])


@dataclass(frozen=True)
class Limits:
    max_sections: int = 4
    max_section_tokens: int = 500
    max_summary_tokens: int = 200


@dataclass
class HierDocument:
    """A truncated document.

    ``sentences`` holds generator-side ids (OOV mapped to UNK);
    ``ext_sentences`` holds copy-side ids where each source OOV word gets
    ``len(vocab) + k`` in order of first appearance.
    """

    tokens: list[list[str]]
    sentences: list[list[int]]
    ext_sentences: list[list[int]]
    section_sizes: list[int]
    source_oov: list[str]
    vocab_size: int

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    @property
    def sentence_of_token(self) -> list[int]:
        return [j for j, s in enumerate(self.sentences) for _ in s]

    @property
    def flat_ext_ids(self) -> list[int]:
        return [i for s in self.ext_sentences for i in s]

    @property
    def flat_tokens(self) -> list[str]:
        return [t for s in self.tokens for t in s]

    def sentence_text(self, j: int) -> str:
        return " ".join(self.tokens[j])

    def extended_id(self, token: str, vocab: Vocabulary) -> int:
        if token in vocab:
            return vocab.id(token)
        if token in self.source_oov:
            return self.vocab_size + self.source_oov.index(token)
        return UNK


def _as_tokens(sentence) -> list[str]:
    return tokenize(sentence) if isinstance(sentence, str) else [t.lower() for t in sentence]


def encode_document(sections: Sequence[Sequence], vocab: Vocabulary, limits: Limits = Limits()) -> HierDocument:
    """Truncate and encode a document given as a list of sections, each a list
    of sentences. A sentence that would push its section past
    ``max_section_tokens`` is dropped, along with the rest of that section."""
    tokens: list[list[str]] = []
    sizes: list[int] = []
    for section in list(sections)[: limits.max_sections]:
        used = 0
        kept = 0
        for sent in section:
            toks = _as_tokens(sent)
            if not toks:
                continue
            if used + len(toks) > limits.max_section_tokens:
                break
            tokens.append(toks)
            used += len(toks)
            kept += 1
        if kept:
            sizes.append(kept)
    if not tokens:
        raise ValueError("document is empty after truncation")
    oov: list[str] = []
    ext: list[list[int]] = []
    gen: list[list[int]] = []
    n = len(vocab)
    for toks in tokens:
        g, e = [], []
        for t in toks:
            if t in vocab:
                g.append(vocab.id(t))
                e.append(vocab.id(t))
            else:
                if t not in oov:
                    oov.append(t)
                g.append(UNK)
                e.append(n + oov.index(t))
        gen.append(g)
        ext.append(e)
    return HierDocument(tokens, gen, ext, sizes, oov, n)


def encode_summary(abstract: Sequence, vocab: Vocabulary, doc: HierDocument, limits: Limits = Limits()) -> list[int]:
    """Target ids (copy-side) ending in EOS, at most ``max_summary_tokens``
    long including EOS."""
    toks = [t for s in abstract for t in _as_tokens(s)]
    toks = toks[: limits.max_summary_tokens - 1]
    return [doc.extended_id(t, vocab) for t in toks] + [EOS]


def summary_tokens(abstract: Sequence) -> list[str]:
    return [t for s in abstract for t in _as_tokens(s)]


# ---------------------------------------------------------------- corpus files


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            out.append(rec)
    return out


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def corpus_token_stream(records: Iterable[dict]):
    for rec in records:
        for section in rec["sections"]:
            for sent in section:
                yield _as_tokens(sent)
        for sent in rec.get("abstract", []):
            yield _as_tokens(sent)


def make_synthetic_corpus(
    seed: int,
    n_docs: int,
    n_sentences: int = 12,
    n_salient: int = 3,
    vocab_size: int = 64,
    sentence_len: tuple[int, int] = (4, 7),
    sentences_per_section: int = 4,
) -> tuple[list[dict], list[list[str]]]:
    """Documents of random sentences, ``n_salient`` of which carry the marker
    word; each reference summary is its salient sentences in document order.

    ``vocab_size`` counts the four specials and the marker. Returns the
    JSON-lines records and the reference summaries as sentence lists.
    """
    if not 1 <= n_salient <= n_sentences:
        raise ValueError(f"need 1 <= n_salient <= n_sentences, got {n_salient}, {n_sentences}")
    n_words = vocab_size - len(SPECIALS) - 1
    if n_words < 1:
        raise ValueError(f"vocab_size {vocab_size} leaves no room for content words beside specials and marker")
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(n_words)]
    docs: list[dict] = []
    summaries: list[list[str]] = []
    lo, hi = sentence_len
    for d in range(n_docs):
        salient = sorted(rng.choice(n_sentences, size=n_salient, replace=False).tolist())
        sents = []
        for j in range(n_sentences):
            length = int(rng.integers(lo, hi + 1))
            toks = [words[k] for k in rng.integers(0, n_words, size=length)]
            if j in salient:
                toks[int(rng.integers(0, length))] = MARKER
            sents.append(" ".join(toks))
        sections = [sents[i : i + sentences_per_section] for i in range(0, n_sentences, sentences_per_section)]
        abstract = [sents[j] for j in salient]
        docs.append({"id": f"doc{d:05d}", "sections": sections, "abstract": abstract, "salient": salient})
        summaries.append(abstract)
    return docs, summaries


# ---------------------------------------------------------------- batching


@dataclass
class Batch:
    word_ids: np.ndarray  # (B, L, N) generator ids
    word_mask: np.ndarray  # (B, L, N)
    sent_mask: np.ndarray  # (B, L)
    tok_index: np.ndarray  # (B, Nd) flat index into B*L*N word positions
    tok_mask: np.ndarray  # (B, Nd)
    sent_of_tok: np.ndarray  # (B, Nd)
    src_ext: np.ndarray  # (B, Nd) copy-side ids
    ext_size: int  # vocab + max OOV count in batch
    dec_in: np.ndarray | None = None  # (B, T) generator ids, BOS first
    dec_out: np.ndarray | None = None  # (B, T) copy-side ids, EOS last
    tgt_mask: np.ndarray | None = None  # (B, T)
    docs: list[HierDocument] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.word_ids.shape[0]


def collate(docs: Sequence[HierDocument], targets: Sequence[Sequence[int]] | None = None) -> Batch:
    B = len(docs)
    L = max(d.num_sentences for d in docs)
    N = max(len(s) for d in docs for s in d.sentences)
    Nd = max(sum(len(s) for s in d.sentences) for d in docs)
    vsize = docs[0].vocab_size
    word_ids = np.full((B, L, N), PAD, dtype=np.int64)
    word_mask = np.zeros((B, L, N), dtype=bool)
    sent_mask = np.zeros((B, L), dtype=bool)
    tok_index = np.zeros((B, Nd), dtype=np.int64)
    tok_mask = np.zeros((B, Nd), dtype=bool)
    sent_of_tok = np.zeros((B, Nd), dtype=np.int64)
    src_ext = np.full((B, Nd), PAD, dtype=np.int64)
    for b, d in enumerate(docs):
        pos = 0
        for j, (g, e) in enumerate(zip(d.sentences, d.ext_sentences)):
            n = len(g)
            word_ids[b, j, :n] = g
            word_mask[b, j, :n] = True
            sent_mask[b, j] = True
            base = (b * L + j) * N
            tok_index[b, pos : pos + n] = base + np.arange(n)
            tok_mask[b, pos : pos + n] = True
            sent_of_tok[b, pos : pos + n] = j
            src_ext[b, pos : pos + n] = e
            pos += n
    ext_size = vsize + max(len(d.source_oov) for d in docs)
    batch = Batch(word_ids, word_mask, sent_mask, tok_index, tok_mask, sent_of_tok, src_ext, ext_size, docs=list(docs))
    if targets is not None:
        T = max(len(t) for t in targets)
        dec_in = np.full((B, T), PAD, dtype=np.int64)
        dec_out = np.full((B, T), PAD, dtype=np.int64)
        tgt_mask = np.zeros((B, T), dtype=bool)
        for b, t in enumerate(targets):
            t = list(t)
            prev = [BOS] + [i if i < vsize else UNK for i in t[:-1]]
            dec_in[b, : len(t)] = prev
            dec_out[b, : len(t)] = t
            tgt_mask[b, : len(t)] = True
        batch.dec_in, batch.dec_out, batch.tgt_mask = dec_in, dec_out, tgt_mask
    return batch


def batch(
    documents: Sequence[HierDocument],
    summaries: Sequence[Sequence[int]] | None = None,
    batch_size: int = 16,
    order: Sequence[int] | None = None,
) -> list[Batch]:
    """Split into padded batches; ``order`` permutes documents first."""
    idx = list(range(len(documents))) if order is None else list(order)
    out = []
    for start in range(0, len(idx), batch_size):
        chunk = idx[start : start + batch_size]
        docs = [documents[i] for i in chunk]
        tgts = None if summaries is None else [summaries[i] for i in chunk]
        out.append(collate(docs, tgts))
    return out
