"""Dense per-entity embedding tables with a plain-text exchange format.

Format: header line ``<N> <dim>``, then one line per entity:
``entity_id v1 v2 ... v_dim`` with space-separated decimal floats. Values
are printed with 9 significant digits, enough to round-trip float32.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ContractError, DimensionError, ParseError


class EmbeddingTable:
    """One dense row per entity (word, document, user, or forum)."""

    def __init__(self, ids: list[str], vectors: np.ndarray):
        vectors = np.ascontiguousarray(vectors)
        if vectors.ndim != 2 or vectors.shape[0] != len(ids):
            raise DimensionError(
                f"need one row per id: {len(ids)} ids vs array shape {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise ContractError("embedding table contains non-finite values")
        if len(set(ids)) != len(ids):
            raise ContractError("embedding table ids must be unique")
        self.ids = list(ids)
        self.vectors = vectors
        self._row = {eid: i for i, eid in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self._row

    def row(self, entity_id: str) -> int:
        return self._row[entity_id]

    def get(self, entity_id: str) -> np.ndarray:
        return self.vectors[self._row[entity_id]]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.ids)} {self.dim}\n")
            for eid, vec in zip(self.ids, self.vectors):
                values = " ".join("%.9g" % v for v in vec)
                fh.write(f"{eid} {values}\n")

    @classmethod
    def load(cls, path: str | Path, dtype=np.float32) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ParseError(f"{path}: line 1: expected '<N> <dim>' header")
            n, dim = int(header[0]), int(header[1])
            ids: list[str] = []
            vectors = np.empty((n, dim), dtype=dtype)
            for lineno, line in enumerate(fh, start=2):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != dim + 1:
                    raise ParseError(f"{path}: line {lineno}: expected id plus {dim} values")
                row = len(ids)
                if row >= n:
                    raise ParseError(f"{path}: more rows than the header's {n}")
                ids.append(parts[0])
                vectors[row] = [float(x) for x in parts[1:]]
        if len(ids) != n:
            raise ParseError(f"{path}: header says {n} rows, found {len(ids)}")
        return cls(ids, vectors)
