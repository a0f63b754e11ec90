"""Convolutional text encoder with hand-written forward and backward passes.

Three filter heights slide over the word-embedding matrix of a padded
comment; each produces M feature maps that are max-pooled (positions whose
window overlaps padding are masked out first), concatenated, and projected
through one dense ReLU layer. The head is a softmax (classification) or a
per-class sigmoid (multi-label traits). Gradients are exact, including the
embedding table; the PAD row stays zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .corpus import PAD_INDEX
from .errors import ContractError, DimensionError
from .numerics import AdamState, adam_step

LN2 = float(np.log(2.0))
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class CnnConfig:
    embed_dim: int = 300
    heights: tuple[int, ...] = (3, 4, 5)
    maps_per_height: int = 128
    dense_dim: int = 100
    classes: int = 2
    head: str = "softmax"
    max_len: int = 100

    def __post_init__(self) -> None:
        if len(set(self.heights)) != len(self.heights) or min(self.heights) < 1:
            raise ContractError(f"filter heights must be distinct and >= 1, got {self.heights}")
        if self.max_len < max(self.heights):
            raise ContractError(f"max_len {self.max_len} shorter than tallest filter {max(self.heights)}")
        if min(self.embed_dim, self.maps_per_height, self.dense_dim, self.classes) < 1:
            raise ContractError("all dimensions must be >= 1")
        if self.head not in ("softmax", "sigmoid"):
            raise ContractError(f"head must be 'softmax' or 'sigmoid', got {self.head!r}")


@dataclass
class CnnModel:
    config: CnnConfig
    embeddings: np.ndarray
    filters: list[np.ndarray]
    filter_biases: list[np.ndarray]
    dense_w: np.ndarray
    dense_b: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    # bumped whenever parameters are mutated in place, to invalidate caches
    stamp: int = 0

    @property
    def dtype(self):
        return self.embeddings.dtype

    def params(self) -> dict[str, np.ndarray]:
        out = {"embeddings": self.embeddings}
        for h, w, b in zip(self.config.heights, self.filters, self.filter_biases):
            out[f"filter_h{h}"] = w
            out[f"filter_bias_h{h}"] = b
        out.update(dense_w=self.dense_w, dense_b=self.dense_b,
                   head_w=self.head_w, head_b=self.head_b)
        return out

    def trunk_params(self) -> dict[str, np.ndarray]:
        out = self.params()
        out.pop("head_w")
        out.pop("head_b")
        return out

    def copy(self) -> "CnnModel":
        return CnnModel(
            config=self.config,
            embeddings=self.embeddings.copy(),
            filters=[f.copy() for f in self.filters],
            filter_biases=[b.copy() for b in self.filter_biases],
            dense_w=self.dense_w.copy(), dense_b=self.dense_b.copy(),
            head_w=self.head_w.copy(), head_b=self.head_b.copy(),
            stamp=self.stamp,
        )

    def to_tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        cfg = self.config
        tensors = {f"{prefix}{k}": v for k, v in self.params().items()}
        tensors[f"{prefix}meta"] = np.array(
            [cfg.embed_dim, cfg.maps_per_height, cfg.dense_dim, cfg.classes,
             1.0 if cfg.head == "sigmoid" else 0.0, cfg.max_len], dtype=np.float32)
        tensors[f"{prefix}heights"] = np.array(cfg.heights, dtype=np.float32)
        return tensors

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], prefix: str = "") -> "CnnModel":
        meta = tensors[f"{prefix}meta"]
        heights = tuple(int(h) for h in tensors[f"{prefix}heights"])
        cfg = CnnConfig(embed_dim=int(meta[0]), heights=heights, maps_per_height=int(meta[1]),
                        dense_dim=int(meta[2]), classes=int(meta[3]),
                        head="sigmoid" if meta[4] else "softmax", max_len=int(meta[5]))
        return cls(
            config=cfg,
            embeddings=tensors[f"{prefix}embeddings"].copy(),
            filters=[tensors[f"{prefix}filter_h{h}"].copy() for h in heights],
            filter_biases=[tensors[f"{prefix}filter_bias_h{h}"].copy() for h in heights],
            dense_w=tensors[f"{prefix}dense_w"].copy(), dense_b=tensors[f"{prefix}dense_b"].copy(),
            head_w=tensors[f"{prefix}head_w"].copy(), head_b=tensors[f"{prefix}head_b"].copy(),
        )


def init_model(config: CnnConfig, vocab_size: int, seed: int = 0, dtype=np.float32,
               embeddings: np.ndarray | None = None) -> CnnModel:
    """Seeded uniform init in [-0.05, 0.05]; PAD embedding row forced to zero.

    ``embeddings`` overrides the random table (external word-vector import);
    it must have ``vocab_size`` rows.
    """
    rng = np.random.default_rng(seed)
    cfg = config

    def uniform(*shape):
        return rng.uniform(-0.05, 0.05, shape).astype(dtype)

    emb = uniform(vocab_size, cfg.embed_dim)
    if embeddings is not None:
        if embeddings.shape != (vocab_size, cfg.embed_dim):
            raise DimensionError(
                f"imported embeddings {embeddings.shape} != {(vocab_size, cfg.embed_dim)}")
        emb = np.asarray(embeddings, dtype=dtype).copy()
    emb[PAD_INDEX] = 0.0
    filters = [uniform(cfg.maps_per_height, h * cfg.embed_dim) for h in cfg.heights]
    biases = [np.zeros(cfg.maps_per_height, dtype=dtype) for _ in cfg.heights]
    return CnnModel(
        config=cfg,
        embeddings=emb,
        filters=filters,
        filter_biases=biases,
        dense_w=uniform(cfg.dense_dim, len(cfg.heights) * cfg.maps_per_height),
        dense_b=np.zeros(cfg.dense_dim, dtype=dtype),
        head_w=uniform(cfg.classes, cfg.dense_dim),
        head_b=np.zeros(cfg.classes, dtype=dtype),
    )


def pad_or_truncate(tokens: Sequence[int], max_len: int) -> np.ndarray:
    """Right-pad with PAD to ``max_len`` or keep the first ``max_len`` tokens."""
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    out = np.full(max_len, PAD_INDEX, dtype=np.int32)
    n = min(len(tokens), max_len)
    out[:n] = np.asarray(tokens[:n], dtype=np.int32) if n else []
    return out


def real_length(tokens: Sequence[int]) -> int:
    """Number of tokens before the first PAD (right-padding convention)."""
    for i, t in enumerate(tokens):
        if t == PAD_INDEX:
            return i
    return len(tokens)


class ForwardResult(NamedTuple):
    map_lengths: tuple[int, ...]
    pooled: np.ndarray
    hidden: np.ndarray
    output: np.ndarray


@dataclass
class _Cache:
    stamp: int
    token_mat: np.ndarray
    lengths: np.ndarray
    emb: np.ndarray
    pre_acts: list[np.ndarray]
    argmaxes: list[np.ndarray]
    valid: list[np.ndarray]
    pooled: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    output: np.ndarray


def _windows(emb: np.ndarray, h: int) -> np.ndarray:
    # (B, L, E) -> (B, L-h+1, h*E) row-major windows
    view = np.lib.stride_tricks.sliding_window_view(emb, h, axis=1)  # (B, Lk, E, h)
    return np.ascontiguousarray(view.transpose(0, 1, 3, 2)).reshape(
        emb.shape[0], emb.shape[1] - h + 1, h * emb.shape[2])


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def forward_batch(model: CnnModel, token_mat: np.ndarray, lengths: np.ndarray) -> _Cache:
    """Forward pass over a (B, max_len) batch; returns the full cache."""
    cfg = model.config
    if token_mat.shape[1] != cfg.max_len:
        raise DimensionError(f"batch width {token_mat.shape[1]} != max_len {cfg.max_len}")
    if token_mat.min() < 0 or token_mat.max() >= model.embeddings.shape[0]:
        raise ContractError("token index outside the embedding table")
    emb = model.embeddings[token_mat]  # (B, L, E)
    pre_acts, argmaxes, valids, pooled_parts = [], [], [], []
    neg_inf = np.array(-np.inf, dtype=model.dtype)
    for h, w, b in zip(cfg.heights, model.filters, model.filter_biases):
        z = _windows(emb, h) @ w.T + b  # (B, Lk, M)
        lk = z.shape[1]
        valid = np.clip(lengths - h + 1, 0, lk)  # windows free of PAD
        act = np.maximum(z, 0)
        act[np.arange(lk)[None, :] >= valid[:, None]] = neg_inf
        arg = act.argmax(axis=1)  # first occurrence on ties
        pooled = np.take_along_axis(act, arg[:, None, :], axis=1)[:, 0, :]
        dead = valid == 0
        pooled[dead] = 0.0
        arg[dead] = -1
        pre_acts.append(z)
        argmaxes.append(arg)
        valids.append(valid)
        pooled_parts.append(pooled)
    pooled = np.concatenate(pooled_parts, axis=1)  # (B, 3M)
    hidden_pre = pooled @ model.dense_w.T + model.dense_b
    hidden = np.maximum(hidden_pre, 0)
    logits = hidden @ model.head_w.T + model.head_b
    output = _softmax(logits) if cfg.head == "softmax" else _sigmoid(logits)
    return _Cache(stamp=model.stamp, token_mat=token_mat, lengths=lengths, emb=emb,
                  pre_acts=pre_acts, argmaxes=argmaxes, valid=valids, pooled=pooled,
                  hidden_pre=hidden_pre, hidden=hidden, output=output)


def backward_batch(model: CnnModel, cache: _Cache, d_output: np.ndarray) -> dict[str, np.ndarray]:
    """Exact parameter gradients given dLoss/d(output), summed over the batch."""
    cfg = model.config
    d_output = np.asarray(d_output, dtype=model.dtype)
    if cfg.head == "softmax":
        y = cache.output
        d_logits = y * (d_output - (d_output * y).sum(axis=1, keepdims=True))
    else:
        y = cache.output
        d_logits = d_output * y * (1.0 - y)
    return backward_from_logits(model, cache, d_logits)


def backward_from_logits(model: CnnModel, cache: _Cache, d_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients given dLoss/d(head logits), for losses fused with the head.

    Training goes through this entry point: the fused cross-entropy gradient
    ``(p - t)`` stays bounded where the factored head Jacobian underflows on
    saturated units.
    """
    d_logits = np.asarray(d_logits, dtype=model.dtype)
    grads = trunk_backward(model, cache, d_logits @ model.head_w)
    grads["head_w"] = d_logits.T @ cache.hidden
    grads["head_b"] = d_logits.sum(axis=0)
    return grads


def trunk_backward(model: CnnModel, cache: _Cache, d_hidden: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients below the head, given dLoss/d(hidden activations)."""
    if cache.stamp != model.stamp:
        raise ContractError("stale forward cache: model parameters changed since forward")
    cfg = model.config
    grads: dict[str, np.ndarray] = {}
    d_hidden_pre = d_hidden * (cache.hidden_pre > 0)
    grads["dense_w"] = d_hidden_pre.T @ cache.pooled
    grads["dense_b"] = d_hidden_pre.sum(axis=0)
    d_pooled = d_hidden_pre @ model.dense_w  # (B, 3M)

    d_emb_rows = np.zeros_like(cache.emb)
    m = cfg.maps_per_height
    for k, (h, w) in enumerate(zip(cfg.heights, model.filters)):
        z = cache.pre_acts[k]
        arg = cache.argmaxes[k]
        d_pool_k = d_pooled[:, k * m:(k + 1) * m].copy()
        d_pool_k[arg < 0] = 0.0
        scatter_idx = np.maximum(arg, 0)[:, None, :]
        d_act = np.zeros_like(z)
        np.put_along_axis(d_act, scatter_idx, d_pool_k[:, None, :], axis=1)
        d_z = d_act * (z > 0)
        x = _windows(cache.emb, h)  # recomputed, cheaper than caching
        grads[f"filter_h{h}"] = np.tensordot(d_z, x, axes=([0, 1], [0, 1]))
        grads[f"filter_bias_h{h}"] = d_z.sum(axis=(0, 1))
        d_x = (d_z @ w).reshape(z.shape[0], z.shape[1], h, cfg.embed_dim)
        for r in range(h):
            d_emb_rows[:, r:r + z.shape[1], :] += d_x[:, :, r, :]

    d_table = np.zeros_like(model.embeddings)
    np.add.at(d_table, cache.token_mat.ravel(),
              d_emb_rows.reshape(-1, cfg.embed_dim))
    d_table[PAD_INDEX] = 0.0  # PAD row frozen
    grads["embeddings"] = d_table
    return grads


def _prepare_single(model: CnnModel, tokens: Sequence[int]):
    n_real = real_length(tokens)
    if n_real < 1:
        raise ContractError("input must contain at least one real (non-PAD) token")
    mat = pad_or_truncate(tokens, model.config.max_len)[None, :]
    lengths = np.array([min(n_real, model.config.max_len)], dtype=np.int64)
    return mat, lengths


def forward(model: CnnModel, tokens: Sequence[int]) -> ForwardResult:
    """Single-comment forward pass (pads/truncates internally)."""
    result, _ = forward_cached(model, tokens)
    return result


def forward_cached(model: CnnModel, tokens: Sequence[int]) -> tuple[ForwardResult, _Cache]:
    mat, lengths = _prepare_single(model, tokens)
    cache = forward_batch(model, mat, lengths)
    map_lengths = tuple(model.config.max_len - h + 1 for h in model.config.heights)
    return ForwardResult(map_lengths, cache.pooled[0], cache.hidden[0], cache.output[0]), cache


def backward(model: CnnModel, cache: _Cache, d_output: np.ndarray) -> dict[str, np.ndarray]:
    """Single-comment gradients; ``d_output`` has shape (classes,)."""
    return backward_batch(model, cache, np.asarray(d_output)[None, :])


def categorical_cross_entropy_bits(output: np.ndarray, targets: np.ndarray,
                                   class_weights: np.ndarray | None = None):
    """Base-2 cross-entropy, mean over the batch; probability floor 1e-12.

    Returns ``(loss, d_output)``.
    """
    output = np.atleast_2d(np.asarray(output, dtype=np.float64))
    targets = np.atleast_2d(targets)
    batch = output.shape[0]
    weights = np.ones(output.shape[1]) if class_weights is None else np.asarray(class_weights)
    p = np.maximum(output, PROB_FLOOR)
    loss = float(-(weights * targets * np.log2(p)).sum() / batch)
    d_output = np.where(output > PROB_FLOOR, -(weights * targets) / (p * LN2), 0.0) / batch
    return loss, d_output


def binary_cross_entropy_per_class(output: np.ndarray, targets: np.ndarray):
    """Per-class (natural-log) binary cross-entropy, mean over the batch."""
    output = np.atleast_2d(np.asarray(output, dtype=np.float64))
    targets = np.atleast_2d(targets)
    batch = output.shape[0]
    p = np.clip(output, PROB_FLOOR, 1.0 - PROB_FLOOR)
    loss = float(-(targets * np.log(p) + (1 - targets) * np.log(1 - p)).sum() / batch)
    inside = (output > PROB_FLOOR) & (output < 1.0 - PROB_FLOOR)
    d_output = np.where(inside, (p - targets) / (p * (1 - p)), 0.0) / batch
    return loss, d_output


def softmax_ce_bits_logit_grad(output: np.ndarray, targets: np.ndarray,
                               class_weights: np.ndarray | None = None) -> np.ndarray:
    """d(base-2 CE)/d(logits) fused with the softmax head; bounded."""
    output = np.atleast_2d(np.asarray(output, dtype=np.float64))
    targets = np.atleast_2d(targets)
    batch = output.shape[0]
    weights = np.ones(output.shape[1]) if class_weights is None else np.asarray(class_weights)
    wt = weights * targets
    return (output * wt.sum(axis=1, keepdims=True) - wt) / (batch * LN2)


def sigmoid_bce_logit_grad(output: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d(per-class BCE)/d(logits) fused with the sigmoid head; bounded."""
    output = np.atleast_2d(np.asarray(output, dtype=np.float64))
    targets = np.atleast_2d(targets)
    return (output - targets) / output.shape[0]


LOSSES = {
    "categorical_cross_entropy_base2": categorical_cross_entropy_bits,
    "binary_cross_entropy_per_class": binary_cross_entropy_per_class,
}


def _batch_loss(model: CnnModel, loss_name: str, mat, lengths, targets, class_weights=None):
    """Forward pass plus (clamped) loss and the fused logit gradient."""
    cache = forward_batch(model, mat, lengths)
    if loss_name == "categorical_cross_entropy_base2":
        loss, _ = categorical_cross_entropy_bits(cache.output, targets, class_weights)
        d_logits = softmax_ce_bits_logit_grad(cache.output, targets, class_weights)
    else:
        loss, _ = binary_cross_entropy_per_class(cache.output, targets)
        d_logits = sigmoid_bce_logit_grad(cache.output, targets)
    return loss, cache, d_logits


def train_classifier(model: CnnModel, dataset: Sequence[tuple[Sequence[int], np.ndarray]], *,
                     loss: str = "categorical_cross_entropy_base2",
                     optimizer: AdamState | None = None,
                     patience: int = 12, holdout_fraction: float = 0.1,
                     batch_size: int = 64, max_epochs: int = 200, seed: int = 0,
                     class_weights: np.ndarray | None = None):
    """Mini-batch Adam with early stopping on a held-out split.

    Evaluates the holdout loss once per epoch; stops once it has failed to
    improve for more than ``patience`` consecutive evaluations and returns
    the best-holdout snapshot plus the per-epoch history. Deterministic
    given ``seed``.
    """
    if loss not in LOSSES:
        raise ContractError(f"unknown loss {loss!r}; options: {sorted(LOSSES)}")
    if len(dataset) < batch_size:
        raise ContractError(f"dataset smaller than one batch ({len(dataset)} < {batch_size})")
    optimizer = optimizer or AdamState()
    cfg = model.config
    mat = np.stack([pad_or_truncate(tokens, cfg.max_len) for tokens, _ in dataset])
    lengths = np.array([min(max(real_length(t), 1), cfg.max_len) for t, _ in dataset],
                       dtype=np.int64)
    targets = np.stack([np.asarray(t, dtype=np.float64) for _, t in dataset])
    if targets.shape[1] != cfg.classes:
        raise DimensionError(f"targets have {targets.shape[1]} classes, model has {cfg.classes}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    n_hold = max(1, int(round(holdout_fraction * len(dataset)))) if holdout_fraction > 0 else 0
    hold_idx = perm[:n_hold]
    train_idx = perm[n_hold:]
    if len(train_idx) == 0:
        raise ContractError("holdout fraction leaves no training data")
    eval_idx = hold_idx if n_hold else train_idx

    best = (np.inf, model.copy())
    history: list[dict[str, float]] = []
    bad_evals = 0
    for epoch in range(max_epochs):
        order = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(train_idx), batch_size):
            rows = train_idx[order[start:start + batch_size]]
            batch_loss, cache, d_logits = _batch_loss(
                model, loss, mat[rows], lengths[rows], targets[rows], class_weights)
            grads = backward_from_logits(model, cache, d_logits)
            adam_step(optimizer, model.params(), grads)
            model.stamp += 1
            epoch_loss += batch_loss
            n_batches += 1
        hold_loss, _, _ = _batch_loss(
            model, loss, mat[eval_idx], lengths[eval_idx], targets[eval_idx], class_weights)
        improved = hold_loss < best[0]
        history.append({"epoch": epoch, "train_loss": epoch_loss / max(1, n_batches),
                        "holdout_loss": hold_loss, "improved": float(improved)})
        if improved:
            best = (hold_loss, model.copy())
            bad_evals = 0
        else:
            bad_evals += 1
            if bad_evals > patience:
                break
    return best[1], history
