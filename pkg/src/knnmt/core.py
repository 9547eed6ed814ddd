"""Vocabulary, tokenization, and corpus containers shared by all modules."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
RESERVED_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")


class CorpusError(ValueError):
    """Malformed corpus file or inconsistent corpus arguments."""


def is_punctuation(token: str) -> bool:
    """True if every character is in a Unicode P* category."""
    return len(token) > 0 and all(
        unicodedata.category(ch).startswith("P") for ch in token
    )


def tokenize(text: str) -> list[str]:
    """Split on whitespace, then detach leading/trailing punctuation characters
    as separate tokens. No lowercasing; deterministic; empty text gives []."""
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and unicodedata.category(chunk[0]).startswith("P"):
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and unicodedata.category(chunk[-1]).startswith("P"):
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


@dataclass(frozen=True)
class Vocab:
    """Token table with fixed reserved ids 0-3 (PAD, BOS, EOS, UNK)."""

    tokens: tuple[str, ...]
    _ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.tokens[: len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        ids = {tok: i for i, tok in enumerate(self.tokens)}
        if len(ids) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        object.__setattr__(self, "_ids", ids)

    def __len__(self) -> int:
        return len(self.tokens)

    def token_to_id(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def id_to_token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self._ids.get(tok, UNK_ID) for tok in tokens]

    def decode(self, token_ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in token_ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(lines))


def build_vocab(corpus: Sequence[Sequence[str]], max_size: int) -> Vocab:
    """Reserved tokens first, then corpus tokens by descending frequency,
    ties broken lexicographically, truncated to max_size entries."""
    if max_size < 5:
        raise ValueError(f"max_size must be >= 5, got {max_size}")
    counts: Counter[str] = Counter()
    for sent in corpus:
        counts.update(sent)
    for tok in RESERVED_TOKENS:
        counts.pop(tok, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    tokens = list(RESERVED_TOKENS) + [tok for tok, _ in ranked]
    return Vocab(tuple(tokens[:max_size]))


@dataclass(frozen=True)
class Sentence:
    """A sequence of vocabulary ids; BOS/EOS are added by consumers, not stored."""

    token_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.token_ids)


def encode_text(vocab: Vocab, text: str) -> Sentence:
    return Sentence(tuple(vocab.encode(tokenize(text))))


@dataclass(frozen=True)
class SentencePair:
    source: Sentence
    target: Sentence
    domain: str = "general"
    talk_id: int = 0

    def __post_init__(self) -> None:
        if len(self.source) == 0 or len(self.target) == 0:
            raise ValueError("sentence pair sides must be non-empty")
        if self.talk_id < 0:
            raise ValueError("talk_id must be >= 0")


@dataclass(frozen=True)
class ParallelCorpus:
    """Sentence pairs for one language pair, identified by `lang`."""

    pairs: tuple[SentencePair, ...]
    lang: str = "xx"

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def talk_ids(self) -> list[int]:
        return sorted({p.talk_id for p in self.pairs})


def read_tsv(path: str | Path) -> list[tuple[str, str, str, int]]:
    """Parse the corpus TSV format: source<TAB>target[<TAB>domain[<TAB>talk_id]].

    Missing domain defaults to "general", missing talk_id to 0. A line with
    fewer than 2 fields raises CorpusError naming the 1-based line number.
    """
    rows: list[tuple[str, str, str, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            fields = line.split("\t")
            if len(fields) < 2:
                raise CorpusError(
                    f"{path}: line {lineno}: expected at least 2 tab-separated fields"
                )
            source, target = fields[0], fields[1]
            domain = fields[2] if len(fields) > 2 and fields[2] else "general"
            if len(fields) > 3 and fields[3]:
                try:
                    talk_id = int(fields[3])
                except ValueError as exc:
                    raise CorpusError(
                        f"{path}: line {lineno}: talk_id is not an integer: {fields[3]!r}"
                    ) from exc
            else:
                talk_id = 0
            rows.append((source, target, domain, talk_id))
    return rows


def load_corpus(path: str | Path, vocab: Vocab, lang: str = "xx") -> ParallelCorpus:
    """Read a TSV corpus and encode both sides with `vocab`."""
    pairs = []
    for lineno, (src, tgt, domain, talk_id) in enumerate(read_tsv(path), start=1):
        source = encode_text(vocab, src)
        target = encode_text(vocab, tgt)
        if len(source) == 0 or len(target) == 0:
            raise CorpusError(f"{path}: line {lineno}: empty side after tokenization")
        pairs.append(SentencePair(source, target, domain, talk_id))
    return ParallelCorpus(tuple(pairs), lang=lang)


def write_corpus(path: str | Path, corpus: ParallelCorpus, vocab: Vocab) -> None:
    """Write a corpus in the TSV format, detokenizing with `vocab`."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in corpus:
            fh.write(
                "\t".join(
                    (
                        " ".join(vocab.decode(pair.source.token_ids)),
                        " ".join(vocab.decode(pair.target.token_ids)),
                        pair.domain,
                        str(pair.talk_id),
                    )
                )
                + "\n"
            )


def corpus_token_lists(path: str | Path) -> list[list[str]]:
    """Token lists of both sides of a TSV corpus, for vocabulary building."""
    lists: list[list[str]] = []
    for src, tgt, _, _ in read_tsv(path):
        lists.append(tokenize(src))
        lists.append(tokenize(tgt))
    return lists
