"""ROUGE scoring, n-gram copy ratios and memory-based sentence extraction."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

COPY_NS = (5, 10, 15, 20)


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    defined: bool = True

    def as_dict(self) -> dict[str, float]:
        return {"p": self.precision, "r": self.recall, "f": self.f1}


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def ngrams(tokens: Sequence[Hashable], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[Hashable], reference: Sequence[Hashable], n: int) -> RougeScore:
    """Clipped n-gram overlap. A reference shorter than ``n`` scores zero
    with ``defined=False``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ref = ngrams(reference, n)
    if not ref:
        return RougeScore(0.0, 0.0, 0.0, defined=False)
    cand = ngrams(candidate, n)
    overlap = sum((cand & ref).values())
    p = overlap / sum(cand.values()) if cand else 0.0
    r = overlap / sum(ref.values())
    return RougeScore(p, r, _f1(p, r))


def lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> RougeScore:
    if not candidate or not reference:
        return RougeScore(0.0, 0.0, 0.0, defined=bool(reference))
    lcs = lcs_length(candidate, reference)
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return RougeScore(p, r, _f1(p, r))


def rouge_all(candidate, reference) -> dict[str, RougeScore]:
    return {
        "rouge1": rouge_n(candidate, reference, 1),
        "rouge2": rouge_n(candidate, reference, 2),
        "rougeL": rouge_l(candidate, reference),
    }


def ngram_copy_ratio(summary: Sequence[Hashable], article: Sequence[Hashable], n: int) -> float | None:
    """Percent of summary n-grams (counted with multiplicity) found anywhere
    in the article; None when the summary has fewer than ``n`` tokens."""
    if len(summary) < n:
        return None
    grams = ngrams(summary, n)
    present = set(ngrams(article, n))
    hit = sum(c for g, c in grams.items() if g in present)
    return 100.0 * hit / sum(grams.values())


# ---------------------------------------------------------------- extraction


@dataclass
class ExtractionReport:
    indices: list[int]
    summary: str


def extract_by_memory(A, sentences: Sequence[str]) -> ExtractionReport:
    """Per memory head take the sentence with the largest write weight (ties
    to the lowest index), drop duplicates and join in document order."""
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError(f"expected an (r, L) matrix, got shape {A.shape}")
    picks = sorted(set(int(i) for i in A.argmax(axis=1)))
    return ExtractionReport(picks, " ".join(sentences[i] for i in picks))


def gold_extract_oracle(sentences: Sequence[Sequence[Hashable]], reference: Sequence[Hashable], k: int) -> list[int]:
    """Greedy oracle: repeatedly add the sentence that most increases the
    ROUGE-1 recall of the selection against ``reference`` (ties to the lowest
    index) until ``k`` are chosen or no sentence helps. Returned in
    document order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    chosen: list[int] = []
    best = 0.0
    while len(chosen) < k:
        gains = []
        for j in range(len(sentences)):
            if j in chosen:
                continue
            sel = sorted(chosen + [j])
            toks = [t for i in sel for t in sentences[i]]
            gains.append((rouge_n(toks, reference, 1).recall, -j))
        if not gains:
            break
        score, neg_j = max(gains)
        if score <= best:
            break
        best = score
        chosen.append(-neg_j)
    return sorted(chosen)


# ---------------------------------------------------------------- reports


def score_document(candidate: Sequence[str], reference: Sequence[str], article: Sequence[str] | None = None) -> dict:
    out = {k: v.as_dict() for k, v in rouge_all(candidate, reference).items()}
    out["copy_ratio"] = {
        str(n): (None if article is None else ngram_copy_ratio(candidate, article, n)) for n in COPY_NS
    }
    return out


def corpus_mean(reports: Sequence[dict]) -> dict:
    mean: dict = {}
    for key in ("rouge1", "rouge2", "rougeL"):
        mean[key] = {
            m: (float(np.mean([r[key][m] for r in reports])) if reports else 0.0) for m in ("p", "r", "f")
        }
    mean["copy_ratio"] = {}
    for n in COPY_NS:
        vals = [r["copy_ratio"][str(n)] for r in reports if r["copy_ratio"][str(n)] is not None]
        mean["copy_ratio"][str(n)] = float(np.mean(vals)) if vals else None
    return mean


__all__ = [
    "RougeScore",
    "ExtractionReport",
    "rouge_n",
    "rouge_l",
    "rouge_all",
    "lcs_length",
    "ngram_copy_ratio",
    "extract_by_memory",
    "gold_extract_oracle",
    "score_document",
    "corpus_mean",
]
