"""Comment ingestion, tokenization, vocabularies and entity documents.

Comments arrive as JSONL (one object per line with keys ``id``, ``user``,
``forum``, ``text`` and an optional integer ``label``). They are tokenized
with a deterministic rule-based tokenizer, aggregated into one document per
user and per forum (comments joined by the ``<END>`` delimiter), and indexed
through a frequency-sorted :class:`Vocabulary`.
"""
from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ContractError, ParseError

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
END_TOKEN = "<END>"
PAD_INDEX = 0
UNK_INDEX = 1
END_INDEX = 2
_SPECIALS = (PAD_TOKEN, UNK_TOKEN, END_TOKEN)

# Punctuation that carries sarcasm signal is kept as standalone tokens
# instead of being stripped.
KEEP_PUNCTUATION = frozenset("!?*\"")


@dataclass(frozen=True)
class CommentRecord:
    """One labeled comment; the unit of classification."""

    id: str
    user_id: str
    forum_id: str
    text: str
    label: int | None = None


@dataclass(frozen=True)
class TokenizedComment:
    """A comment mapped to vocabulary indices."""

    record_id: str
    tokens: tuple[int, ...]
    original_length: int


@dataclass(frozen=True)
class EntityDocument:
    """All comments of one user or forum, joined by the END delimiter."""

    entity_id: str
    tokens: tuple[int, ...]


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation per chunk.

    Punctuation in the keep-set (``! ? * "``) is emitted as standalone
    tokens in its original position; other edge punctuation is dropped.
    Idempotent on its own output joined by spaces.
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        start, end = 0, len(chunk)
        while start < end and _is_punct(chunk[start]):
            start += 1
        while end > start and _is_punct(chunk[end - 1]):
            end -= 1
        tokens.extend(c for c in chunk[:start] if c in KEEP_PUNCTUATION)
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(c for c in chunk[end:] if c in KEEP_PUNCTUATION)
    return tokens


def load_comments(path: str | Path) -> list[CommentRecord]:
    """Read a JSONL comment file, preserving file order.

    Raises :class:`ParseError` naming the line for malformed JSON, missing
    keys, duplicate ids, or labels outside {0, 1}.
    """
    records: list[CommentRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            for key in ("id", "user", "forum", "text"):
                if key not in obj:
                    raise ParseError(f"{path}: line {lineno}: missing required key '{key}'")
            label = obj.get("label")
            if label is not None and label not in (0, 1):
                raise ParseError(f"{path}: line {lineno}: label must be 0 or 1, got {label!r}")
            rec = CommentRecord(
                id=str(obj["id"]),
                user_id=str(obj["user"]),
                forum_id=str(obj["forum"]),
                text=str(obj["text"]),
                label=label,
            )
            if not rec.user_id or not rec.forum_id:
                raise ParseError(f"{path}: line {lineno}: user and forum must be non-empty")
            if rec.id in seen:
                raise ParseError(f"{path}: line {lineno}: duplicate comment id '{rec.id}'")
            seen.add(rec.id)
            records.append(rec)
    return records


@dataclass
class Vocabulary:
    """Token/index maps with counts; indices dense, PAD fixed at 0.

    Non-special tokens are ordered by descending count, ties broken
    lexicographically, so construction is deterministic.
    """

    index_to_token: list[str]
    counts: list[int]
    min_count: int
    token_to_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if self.index_to_token[:3] != list(_SPECIALS):
            raise ContractError("vocabulary must start with <PAD>, <UNK>, <END>")

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def index(self, token: str) -> int:
        """Index of ``token``, or UNK for out-of-vocabulary tokens."""
        return self.token_to_index.get(token, UNK_INDEX)

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.token_to_index.get(t, UNK_INDEX) for t in tokens)

    @classmethod
    def from_counts(cls, counts: dict[str, int], min_count: int = 1,
                    unk_count: int = 0, end_count: int = 0) -> "Vocabulary":
        kept = sorted(
            (t for t, c in counts.items() if c >= min_count),
            key=lambda t: (-counts[t], t),
        )
        dropped = sum(c for t, c in counts.items() if c < min_count)
        tokens = list(_SPECIALS) + kept
        freqs = [0, unk_count + dropped, end_count] + [counts[t] for t in kept]
        return cls(index_to_token=tokens, counts=freqs, min_count=min_count)

    def save(self, path: str | Path) -> None:
        """Text format: header ``<V> <min_count>``, then ``token\\tcount``."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self)} {self.min_count}\n")
            for token, count in zip(self.index_to_token, self.counts):
                fh.write(f"{token}\t{count}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ParseError(f"{path}: line 1: expected '<V> <min_count>' header")
            size, min_count = int(header[0]), int(header[1])
            tokens, counts = [], []
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    token, count = line.split("\t")
                except ValueError as exc:
                    raise ParseError(f"{path}: line {lineno}: expected 'token<TAB>count'") from exc
                tokens.append(token)
                counts.append(int(count))
        if len(tokens) != size:
            raise ParseError(f"{path}: header says {size} tokens, found {len(tokens)}")
        return cls(index_to_token=tokens, counts=counts, min_count=min_count)


def build_vocabulary(texts: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Count tokens over raw texts and build a Vocabulary.

    Tokens seen fewer than ``min_count`` times collapse into UNK (their
    counts accumulate there). END gets one pseudo-count per source text so
    the document delimiter keeps a positive frequency for tree building.
    """
    if min_count < 1:
        raise ContractError(f"min_count must be >= 1, got {min_count}")
    counter: Counter[str] = Counter()
    n_texts = 0
    for text in texts:
        n_texts += 1
        counter.update(tokenize(text))
    return Vocabulary.from_counts(dict(counter), min_count=min_count, end_count=n_texts)


def tokenize_comments(comments: Sequence[CommentRecord], vocab: Vocabulary) -> list[TokenizedComment]:
    """Tokenize and index every comment; unknown tokens map to UNK."""
    out = []
    for rec in comments:
        toks = tokenize(rec.text)
        out.append(TokenizedComment(rec.id, vocab.encode(toks), len(toks)))
    return out


def build_entity_documents(comments: Sequence[CommentRecord], vocab: Vocabulary,
                           key: str) -> list[EntityDocument]:
    """Group comments into one token document per user or forum.

    ``key`` selects the grouping field (``"user"`` or ``"forum"``). Comments
    keep their input order inside a document; documents are returned in
    lexicographic entity order; member comments are joined with END.
    """
    if key not in ("user", "forum"):
        raise ContractError(f"key must be 'user' or 'forum', got {key!r}")
    groups: dict[str, list[tuple[int, ...]]] = {}
    for rec in comments:
        entity = rec.user_id if key == "user" else rec.forum_id
        groups.setdefault(entity, []).append(vocab.encode(tokenize(rec.text)))
    docs = []
    for entity in sorted(groups):
        tokens: list[int] = []
        for i, part in enumerate(groups[entity]):
            if i:
                tokens.append(END_INDEX)
            tokens.extend(part)
        docs.append(EntityDocument(entity_id=entity, tokens=tuple(tokens)))
    return docs
