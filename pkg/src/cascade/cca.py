"""Canonical correlation analysis for fusing the two user views.

Both views are standardized per dimension, correlation matrices are formed
with 1/(N-1) normalization plus a ridge on the diagonals, and the projection
pairs come from the SVD of the whitened cross-correlation matrix. Fusion of
a user's two vectors is the sum of their projections. All fitting runs in
float64; persisting a model rounds to the checkpoint's float32.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingTable
from .errors import CascadeWarning, ContractError, DimensionError
from .numerics import inv_sqrt_sym, require_finite, svd

DEFAULT_RIDGE_SCALE = 1e-3  # ridge = scale * mean(diag) per view when unset


@dataclass
class CcaModel:
    """Standardization statistics, projections and canonical correlations."""

    mean1: np.ndarray
    std1: np.ndarray
    mean2: np.ndarray
    std2: np.ndarray
    a1: np.ndarray  # (d1, K)
    a2: np.ndarray  # (d2, K)
    correlations: np.ndarray  # (K,) descending, in [0, 1]
    ridge1: float
    ridge2: float

    @property
    def k(self) -> int:
        return self.a1.shape[1]

    def to_tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {
            f"{prefix}mean1": self.mean1, f"{prefix}std1": self.std1,
            f"{prefix}mean2": self.mean2, f"{prefix}std2": self.std2,
            f"{prefix}A1": self.a1, f"{prefix}A2": self.a2,
            f"{prefix}lambda": self.correlations,
            f"{prefix}ridge": np.array([self.ridge1, self.ridge2], dtype=np.float32),
        }

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], prefix: str = "") -> "CcaModel":
        ridge = tensors[f"{prefix}ridge"]
        return cls(
            mean1=tensors[f"{prefix}mean1"].astype(np.float64),
            std1=tensors[f"{prefix}std1"].astype(np.float64),
            mean2=tensors[f"{prefix}mean2"].astype(np.float64),
            std2=tensors[f"{prefix}std2"].astype(np.float64),
            a1=tensors[f"{prefix}A1"].astype(np.float64),
            a2=tensors[f"{prefix}A2"].astype(np.float64),
            correlations=tensors[f"{prefix}lambda"].astype(np.float64),
            ridge1=float(ridge[0]), ridge2=float(ridge[1]),
        )


def _standardize_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    std = np.where(std <= 0, 1.0, std)  # constant dimensions pass through
    return mean, std


def fit(styl: EmbeddingTable, pers: EmbeddingTable, k: int,
        ridge: float | None = None) -> CcaModel:
    """Fit projections maximizing correlation between the two views.

    Both tables must cover the same user set; users whose personality vector
    is all zero (no usable comments) are dropped before fitting. ``ridge``
    defaults to ``1e-3 * mean(diag)`` of each view's correlation matrix.
    """
    if set(styl.ids) != set(pers.ids):
        raise ContractError("both views must cover the same user set")
    order = sorted(styl.ids)
    x1 = np.stack([styl.get(u) for u in order]).astype(np.float64)
    x2 = np.stack([pers.get(u) for u in order]).astype(np.float64)
    require_finite(x1, "stylometric view")
    require_finite(x2, "personality view")
    usable = ~np.all(x2 == 0.0, axis=1)
    if usable.sum() < len(order):
        warnings.warn(f"excluding {int(len(order) - usable.sum())} zero-personality "
                      "users from the correlation fit", CascadeWarning, stacklevel=2)
    x1, x2 = x1[usable], x2[usable]
    n = x1.shape[0]
    if n < 3:
        raise ContractError(f"need at least 3 users to fit, got {n}")
    bound = min(x1.shape[1], x2.shape[1], n - 1)
    if not 1 <= k <= bound:
        raise ContractError(f"k={k} outside the admissible range [1, {bound}] "
                            f"(min of view dims {x1.shape[1]}, {x2.shape[1]} and N-1={n - 1})")

    mean1, std1 = _standardize_stats(x1)
    mean2, std2 = _standardize_stats(x2)
    z1 = (x1 - mean1) / std1
    z2 = (x2 - mean2) / std2
    r11 = z1.T @ z1 / (n - 1)
    r22 = z2.T @ z2 / (n - 1)
    r12 = z1.T @ z2 / (n - 1)
    ridge1 = DEFAULT_RIDGE_SCALE * float(np.trace(r11)) / r11.shape[0] if ridge is None else ridge
    ridge2 = DEFAULT_RIDGE_SCALE * float(np.trace(r22)) / r22.shape[0] if ridge is None else ridge
    r11[np.diag_indices_from(r11)] += ridge1
    r22[np.diag_indices_from(r22)] += ridge2

    w1 = inv_sqrt_sym(r11, 0.0)
    w2 = inv_sqrt_sym(r22, 0.0)
    a, lam, b = svd(w1 @ r12 @ w2)
    return CcaModel(
        mean1=mean1, std1=std1, mean2=mean2, std2=std2,
        a1=w1 @ a[:, :k], a2=w2 @ b[:, :k],
        correlations=np.clip(lam[:k], 0.0, 1.0),
        ridge1=ridge1, ridge2=ridge2,
    )


def fuse(model: CcaModel, styl_vec: np.ndarray, pers_vec: np.ndarray) -> np.ndarray:
    """Fused user embedding: sum of the standardized views' projections."""
    styl_vec = np.asarray(styl_vec, dtype=np.float64)
    pers_vec = np.asarray(pers_vec, dtype=np.float64)
    if styl_vec.shape != model.mean1.shape:
        raise DimensionError(f"stylometric vector has shape {styl_vec.shape}, "
                             f"expected {model.mean1.shape}")
    if pers_vec.shape != model.mean2.shape:
        raise DimensionError(f"personality vector has shape {pers_vec.shape}, "
                             f"expected {model.mean2.shape}")
    z1 = (styl_vec - model.mean1) / model.std1
    z2 = (pers_vec - model.mean2) / model.std2
    return z1 @ model.a1 + z2 @ model.a2
