"""N-gram language models with interpolated domain adaptation, and
n-gram-overlap data selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import BOS_ID, ParallelCorpus, Sentence, Vocab

Gram = tuple[int, ...]


@dataclass
class NgramLm:
    """Jelinek-Mercer interpolated n-gram model with a uniform floor.

    `counts` holds raw n-gram counts for tuple lengths 1..order. Context
    denominators are derived from them, so the distribution over the
    vocabulary sums to 1 exactly: an order whose context was never seen
    contributes a uniform distribution.
    """

    order: int
    vocab_size: int
    counts: dict[Gram, int]
    weights: tuple[float, ...]
    floor: float = 0.01
    _ctx: dict[Gram, int] = field(init=False, repr=False)
    _cont: dict[Gram, list[tuple[int, int]]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 1 <= self.order <= 5:
            raise ValueError(f"order must be in [1, 5], got {self.order}")
        if len(self.weights) != self.order:
            raise ValueError("need one interpolation weight per order")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("interpolation weights must be non-negative and sum to 1")
        if not 0.0 < self.floor < 1.0:
            raise ValueError("floor weight must be in (0, 1)")
        ctx: dict[Gram, int] = {}
        cont: dict[Gram, list[tuple[int, int]]] = {}
        for gram, count in self.counts.items():
            if count < 1:
                raise ValueError(f"count for {gram} must be >= 1")
            ctx[gram[:-1]] = ctx.get(gram[:-1], 0) + count
            cont.setdefault(gram[:-1], []).append((gram[-1], count))
        self._ctx = ctx
        self._cont = cont

    def _history(self, history: Sequence[int]) -> Gram:
        hist = tuple(history[-(self.order - 1) :]) if self.order > 1 else ()
        if len(hist) < self.order - 1:
            hist = (BOS_ID,) * (self.order - 1 - len(hist)) + hist
        return hist

    def prob(self, history: Sequence[int], token: int) -> float:
        """p(token | history), mixing maximum-likelihood estimates of each
        order with a uniform floor. Strictly positive."""
        hist = self._history(history)
        p = self.floor / self.vocab_size
        for j, weight in enumerate(self.weights, start=1):
            ctx = hist[len(hist) - (j - 1) :]
            denom = self._ctx.get(ctx, 0)
            if denom == 0:
                ml = 1.0 / self.vocab_size
            else:
                ml = self.counts.get(ctx + (token,), 0) / denom
            p += (1.0 - self.floor) * weight * ml
        return p

    def distribution(self, history: Sequence[int]) -> np.ndarray:
        """Probability vector over the vocabulary for the given history."""
        hist = self._history(history)
        dist = np.full(self.vocab_size, self.floor / self.vocab_size)
        for j, weight in enumerate(self.weights, start=1):
            ctx = hist[len(hist) - (j - 1) :]
            denom = self._ctx.get(ctx, 0)
            scale = (1.0 - self.floor) * weight
            if denom == 0:
                dist += scale / self.vocab_size
            else:
                for token, count in self._cont[ctx]:
                    dist[token] += scale * count / denom
        return dist


def lm_train(
    corpus: Sequence[Sentence],
    order: int,
    vocab_size: int,
    weights: Sequence[float] | None = None,
    floor: float = 0.01,
) -> NgramLm:
    """Count BOS-padded n-grams of every order up to `order` over the corpus.

    Sentence tokens are the prediction targets; no EOS event is added.
    Default per-order weights are uniform.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if not 1 <= order <= 5:
        raise ValueError(f"order must be in [1, 5], got {order}")
    counts: dict[Gram, int] = {}
    for sent in corpus:
        seq = (BOS_ID,) * (order - 1) + tuple(sent.token_ids)
        for i in range(order - 1, len(seq)):
            for j in range(1, order + 1):
                gram = seq[i - j + 1 : i + 1]
                counts[gram] = counts.get(gram, 0) + 1
    if weights is None:
        weights = (1.0 / order,) * order
    return NgramLm(order, vocab_size, counts, tuple(weights), floor)


@dataclass(frozen=True)
class LmInterpConfig:
    lambda_domain: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_domain <= 1.0:
            raise ValueError("lambda_domain must be in [0, 1]")


def lm_interpolate(
    general: NgramLm, domain: NgramLm, cfg: LmInterpConfig
) -> Callable[[Sequence[int]], np.ndarray]:
    """Probability function mixing a domain LM into a general one:
    p = lambda * p_domain + (1 - lambda) * p_general."""
    if general.vocab_size != domain.vocab_size:
        raise ValueError(
            f"vocabulary mismatch: {general.vocab_size} vs {domain.vocab_size}"
        )
    lam = cfg.lambda_domain

    def interpolated(history: Sequence[int]) -> np.ndarray:
        return lam * domain.distribution(history) + (1.0 - lam) * general.distribution(
            history
        )

    return interpolated


def sentence_ngrams(sent: Sentence, n: int) -> list[Gram]:
    ids = sent.token_ids
    return [ids[i : i + n] for i in range(len(ids) - n + 1)]


def build_seed_ngrams(seed: Sequence[Sentence], max_order: int) -> dict[int, set[Gram]]:
    """Per-order n-gram sets of a seed corpus, for overlap scoring."""
    sets: dict[int, set[Gram]] = {n: set() for n in range(1, max_order + 1)}
    for sent in seed:
        for n in range(1, max_order + 1):
            sets[n].update(sentence_ngrams(sent, n))
    return sets


def overlap_score(
    candidate: Sentence, seed_ngrams: dict[int, set[Gram]], max_order: int
) -> float:
    """Fraction of the candidate's n-grams (orders 1..max_order, counted with
    multiplicity) that appear in the seed sets. Empty candidate scores 0."""
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    matched = 0
    total = 0
    for n in range(1, max_order + 1):
        grams = sentence_ngrams(candidate, n)
        seed = seed_ngrams.get(n, frozenset())
        matched += sum(1 for g in grams if g in seed)
        total += len(grams)
    return matched / total if total else 0.0


def select_data(
    pool: ParallelCorpus, seed: Sequence[Sentence], max_order: int, top_k: int
) -> ParallelCorpus:
    """Top-k pool pairs by n-gram overlap of the source side with the seed,
    descending; ties keep original pool order."""
    if top_k > len(pool):
        raise ValueError(f"top_k {top_k} exceeds pool size {len(pool)}")
    seed_sets = build_seed_ngrams(seed, max_order)
    scored = sorted(
        range(len(pool.pairs)),
        key=lambda i: (-overlap_score(pool.pairs[i].source, seed_sets, max_order), i),
    )
    return ParallelCorpus(tuple(pool.pairs[i] for i in scored[:top_k]), lang=pool.lang)


HEADER_PREFIX = "NGRAM-COUNTS v1 order="


def save_ngram_counts(lm: NgramLm, vocab: Vocab, path: str | Path) -> None:
    """Plain-text counts listing: header, then `count<TAB>tok1 tok2 ...`,
    sorted by gram length then token strings."""
    lines = [f"{HEADER_PREFIX}{lm.order}"]
    rendered = [
        (len(gram), tuple(vocab.decode(gram)), count)
        for gram, count in lm.counts.items()
    ]
    for _, toks, count in sorted(rendered):
        lines.append(f"{count}\t{' '.join(toks)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_ngram_counts(
    path: str | Path,
    vocab: Vocab,
    weights: Sequence[float] | None = None,
    floor: float = 0.01,
) -> NgramLm:
    """Load a counts listing written by save_ngram_counts."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(HEADER_PREFIX):
        raise ValueError(f"{path}: missing NGRAM-COUNTS header")
    order = int(lines[0][len(HEADER_PREFIX) :])
    counts: dict[Gram, int] = {}
    for line in lines[1:]:
        if not line:
            continue
        count_str, toks = line.split("\t")
        counts[tuple(vocab.encode(toks.split(" ")))] = int(count_str)
    if weights is None:
        weights = (1.0 / order,) * order
    return NgramLm(order, len(vocab), counts, tuple(weights), floor)
