"""Corpus-level BLEU and word error rate."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

Tokens = Sequence[Hashable]


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_length: int
    ref_length: int


def _ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> BleuReport:
    """Corpus BLEU-4: clipped n-gram precision pooled over the corpus,
    geometric mean over orders 1-4, brevity penalty, no smoothing.

    Any order with zero matches (or zero candidates) makes the score 0.
    """
    if len(hyps) != len(refs):
        raise ValueError(f"segment count mismatch: {len(hyps)} vs {len(refs)}")
    if not hyps:
        raise ValueError("at least one segment is required")

    matches = [0] * 4
    totals = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            matches[n - 1] += sum(
                min(count, ref_counts[gram]) for gram, count in hyp_counts.items()
            )
            totals[n - 1] += max(len(hyp) - n + 1, 0)

    precisions = tuple(
        matches[i] / totals[i] if totals[i] > 0 else 0.0 for i in range(4)
    )
    if hyp_len == 0:
        return BleuReport(0.0, precisions, 0.0, hyp_len, ref_len)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    return BleuReport(score, precisions, bp, hyp_len, ref_len)


def edit_distance(a: Tokens, b: Tokens) -> int:
    """Levenshtein distance with unit substitution/insertion/deletion costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        cur = [i]
        for j, tok_b in enumerate(b, start=1):
            cost = 0 if tok_a == tok_b else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def wer(hyp: Tokens, ref: Tokens) -> float:
    """Edit distance divided by reference length."""
    if len(ref) == 0:
        raise ValueError("reference must be non-empty")
    return edit_distance(hyp, ref) / len(ref)


def corpus_wer(hyps: Sequence[Tokens], refs: Sequence[Tokens]) -> float:
    """Total edits over total reference length."""
    if len(hyps) != len(refs):
        raise ValueError(f"segment count mismatch: {len(hyps)} vs {len(refs)}")
    if not refs:
        raise ValueError("at least one segment is required")
    total_ref = sum(len(r) for r in refs)
    if total_ref == 0:
        raise ValueError("references must be non-empty")
    total_edits = sum(edit_distance(h, r) for h, r in zip(hyps, refs))
    return total_edits / total_ref
