"""Run configuration: TOML file with one section per stage, strict keys.

Command-line flags override file values. All randomness flows from the
single ``seed``, expanded per stage through :func:`stage_seed` so stages can
be rerun independently yet reproducibly.
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ContractError, ParseError


@dataclass
class RunConfig:
    # [paths]
    train: str = ""
    test: str = ""
    essays: str = ""
    output_dir: str = "cascade-out"
    # [corpus]
    min_count: int = 5
    # [style] user document vectors
    style_dim: int = 100
    window: int = 2
    style_epochs: int = 20
    style_lr: float = 0.025
    edge_windows: bool = False
    # [discourse] forum document vectors
    discourse_dim: int = 100
    discourse_epochs: int = 20
    # [cnn]
    embed_dim: int = 300
    heights: tuple[int, ...] = (3, 4, 5)
    filter_maps: int = 128
    dense_dim: int = 100
    max_len: int = 100
    word_vectors: str = ""  # optional EmbeddingTable import for the word table
    # [training]
    learning_rate: float = 1e-4
    batch_size: int = 64
    patience: int = 12
    holdout_fraction: float = 0.1
    personality_epochs: int = 100
    cascade_epochs: int = 100
    class_weights: bool = False
    use_user: bool = True
    use_discourse: bool = True
    # [fusion]
    fusion_dim: int = 100
    fusion_mode: str = "cca"
    ridge: float | None = None
    # [run]
    seed: int = 1
    threads: int = 1

    def __post_init__(self) -> None:
        dims = (self.style_dim, self.discourse_dim, self.embed_dim, self.filter_maps,
                self.dense_dim, self.max_len, self.fusion_dim, self.window)
        if min(dims) < 1:
            raise ContractError("all dimensions must be >= 1")
        if self.fusion_mode not in ("cca", "concat"):
            raise ContractError(f"fusion mode must be 'cca' or 'concat', got {self.fusion_mode!r}")
        if isinstance(self.heights, list):
            self.heights = tuple(self.heights)

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# (section, key in file) -> RunConfig field
_SCHEMA: dict[tuple[str, str], str] = {
    ("paths", "train"): "train",
    ("paths", "test"): "test",
    ("paths", "essays"): "essays",
    ("paths", "output_dir"): "output_dir",
    ("corpus", "min_count"): "min_count",
    ("style", "dim"): "style_dim",
    ("style", "window"): "window",
    ("style", "epochs"): "style_epochs",
    ("style", "lr"): "style_lr",
    ("style", "edge_windows"): "edge_windows",
    ("discourse", "dim"): "discourse_dim",
    ("discourse", "epochs"): "discourse_epochs",
    ("cnn", "embed_dim"): "embed_dim",
    ("cnn", "heights"): "heights",
    ("cnn", "filter_maps"): "filter_maps",
    ("cnn", "dense_dim"): "dense_dim",
    ("cnn", "max_len"): "max_len",
    ("cnn", "word_vectors"): "word_vectors",
    ("training", "lr"): "learning_rate",
    ("training", "batch_size"): "batch_size",
    ("training", "patience"): "patience",
    ("training", "holdout_fraction"): "holdout_fraction",
    ("training", "personality_epochs"): "personality_epochs",
    ("training", "cascade_epochs"): "cascade_epochs",
    ("training", "class_weights"): "class_weights",
    ("training", "use_user"): "use_user",
    ("training", "use_discourse"): "use_discourse",
    ("fusion", "dim"): "fusion_dim",
    ("fusion", "mode"): "fusion_mode",
    ("fusion", "ridge"): "ridge",
    ("run", "seed"): "seed",
    ("run", "threads"): "threads",
}


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a TOML config; unrecognized keys are rejected."""
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    values = {}
    for section, body in raw.items():
        if not isinstance(body, dict):
            raise ParseError(f"{path}: top-level key '{section}' must be a section")
        for key, value in body.items():
            field_name = _SCHEMA.get((section, key))
            if field_name is None:
                raise ParseError(f"{path}: unrecognized key '{key}' in section [{section}]")
            values[field_name] = value
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def dump_config(config: RunConfig) -> str:
    """Render the config back to TOML (provenance echo; reparses to the same run)."""
    by_section: dict[str, list[str]] = {}
    field_to_loc = {v: k for k, v in _SCHEMA.items()}
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            continue
        section, key = field_to_loc[f.name]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, (int, float)):
            text = repr(value)
        elif isinstance(value, tuple):
            text = "[" + ", ".join(str(v) for v in value) + "]"
        else:
            text = json.dumps(value)
        by_section.setdefault(section, []).append(f"{key} = {text}")
    parts = []
    for section in ("paths", "corpus", "style", "discourse", "cnn", "training", "fusion", "run"):
        if section in by_section:
            parts.append(f"[{section}]\n" + "\n".join(by_section[section]))
    return "\n\n".join(parts) + "\n"


def stage_seed(seed: int, stage: str) -> int:
    """Deterministic per-stage seed derived from the run seed."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def corpus_hash(comment_ids: list[str]) -> str:
    payload = "\n".join(comment_ids).encode("utf-8")
    return hashlib.sha256(str(len(comment_ids)).encode() + b"\x00" + payload).hexdigest()[:16]
