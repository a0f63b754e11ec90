"""Five-trait personality encoder and per-user trait feature vectors.

A sigmoid-head CNN is pre-trained on an essays-style corpus (JSONL with
keys ``text`` and binary ``O C E A N`` flags). A user's personality vector
is the mean of the dense-layer activations over their comments.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import textcnn
from .corpus import TokenizedComment, Vocabulary, tokenize
from .errors import CascadeWarning, ContractError, ParseError
from .numerics import AdamState

TRAITS = ("O", "C", "E", "A", "N")


@dataclass(frozen=True)
class EssayRecord:
    text: str
    traits: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.traits) != len(TRAITS):
            raise ContractError(f"expected {len(TRAITS)} trait flags, got {len(self.traits)}")
        if not self.text:
            raise ContractError("essay text must be non-empty")


def load_essays(path: str | Path) -> list[EssayRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            for key in ("text",) + TRAITS:
                if key not in obj:
                    raise ParseError(f"{path}: line {lineno}: missing required key '{key}'")
            flags = tuple(int(obj[t]) for t in TRAITS)
            if any(f not in (0, 1) for f in flags):
                raise ParseError(f"{path}: line {lineno}: trait flags must be 0 or 1")
            records.append(EssayRecord(text=str(obj["text"]), traits=flags))
    return records


def pretrain(essays: Sequence[EssayRecord], vocab: Vocabulary, config: textcnn.CnnConfig, *,
             optimizer: AdamState | None = None, patience: int = 12,
             holdout_fraction: float = 0.1, batch_size: int = 64,
             max_epochs: int = 200, seed: int = 0,
             embeddings: np.ndarray | None = None):
    """Train the multi-label trait classifier; returns (model, history)."""
    if len(essays) < 2:
        raise ContractError(f"need at least 2 essays, got {len(essays)}")
    if config.head != "sigmoid" or config.classes != len(TRAITS):
        raise ContractError("personality config needs a sigmoid head with 5 classes")
    labels = np.array([e.traits for e in essays])
    degenerate = [TRAITS[i] for i in range(len(TRAITS))
                  if labels[:, i].min() == labels[:, i].max()]
    if degenerate:
        warnings.warn(f"traits {degenerate} have a single label value in the corpus",
                      CascadeWarning, stacklevel=2)
    dataset = [(vocab.encode(tokenize(e.text)), np.asarray(e.traits, dtype=np.float64))
               for e in essays]
    model = textcnn.init_model(config, vocab_size=len(vocab), seed=seed,
                               embeddings=embeddings)
    return textcnn.train_classifier(
        model, dataset, loss="binary_cross_entropy_per_class",
        optimizer=optimizer, patience=patience, holdout_fraction=holdout_fraction,
        batch_size=batch_size, max_epochs=max_epochs, seed=seed)


def predict_traits(model: textcnn.CnnModel, tokens: Sequence[int]) -> np.ndarray:
    """Per-trait presence probabilities for one comment (threshold at 0.5)."""
    return textcnn.forward(model, tokens).output


def user_personality(model: textcnn.CnnModel, comments: Sequence[TokenizedComment]) -> np.ndarray:
    """Mean dense-layer activation over a user's comments.

    A user with no comments gets a zero vector and a warning; such users are
    excluded from correlation fitting downstream.
    """
    usable = [c for c in comments if len(c.tokens) >= 1]
    if not usable:
        warnings.warn("user has no non-empty comments; returning a zero personality vector",
                      CascadeWarning, stacklevel=2)
        return np.zeros(model.config.dense_dim, dtype=model.dtype)
    acc = np.zeros(model.config.dense_dim, dtype=np.float64)
    for comment in usable:
        acc += textcnn.forward(model, comment.tokens).hidden
    return (acc / len(usable)).astype(model.dtype)
