"""Document-vector training: distributed-memory paragraph vectors.

Each entity document gets a trainable vector that joins the averaged context
word vectors to predict every word in the document through a Huffman-coded
hierarchical softmax. The window loop runs in the compiled kernel when
available (see :mod:`cascade.kernels`).
"""
from __future__ import annotations

import heapq
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import EntityDocument, UNK_INDEX, Vocabulary
from .errors import CascadeWarning, ContractError

LR_FLOOR_RATIO = 100.0  # linear decay from lr to lr/100 over all windows


@dataclass
class HuffmanTree:
    """Prefix codes and root-to-parent node paths for every positive-count token.

    ``codes``/``points`` are flat arrays indexed through ``offsets`` (length
    vocab+1): token ``i`` owns the slice ``offsets[i]:offsets[i+1]``.
    ``node_vectors`` holds one parameter row per inner node; the trainer
    allocates and owns it.
    """

    offsets: np.ndarray
    codes: np.ndarray
    points: np.ndarray
    num_inner: int
    num_leaves: int
    node_vectors: np.ndarray | None = None

    def code(self, token_index: int) -> np.ndarray:
        return self.codes[self.offsets[token_index]:self.offsets[token_index + 1]]

    def path(self, token_index: int) -> np.ndarray:
        return self.points[self.offsets[token_index]:self.offsets[token_index + 1]]

    def code_length(self, token_index: int) -> int:
        return int(self.offsets[token_index + 1] - self.offsets[token_index])


def build_huffman(vocab: Vocabulary) -> HuffmanTree:
    """Classic Huffman construction over vocabulary counts.

    Ties break deterministically: the node carrying the lowest constituent
    token index is popped first and becomes the 0-branch. Tokens with zero
    count (always PAD, possibly UNK/END) get empty codes and stay out of the
    tree.
    """
    size = len(vocab)
    leaves = [(count, idx) for idx, count in enumerate(vocab.counts) if count > 0]
    if len(leaves) < 2:
        raise ContractError(f"huffman tree needs >= 2 positive-count tokens, got {len(leaves)}")
    # heap entries: (count, lowest constituent token index, node key);
    # keys < size are leaves, keys >= size are inner nodes.
    heap = [(count, idx, idx) for count, idx in leaves]
    heapq.heapify(heap)
    parent: dict[int, tuple[int, int]] = {}
    n_inner = 0
    while len(heap) > 1:
        count1, tie1, key1 = heapq.heappop(heap)
        count2, tie2, key2 = heapq.heappop(heap)
        parent[key1] = (n_inner, 0)
        parent[key2] = (n_inner, 1)
        heapq.heappush(heap, (count1 + count2, min(tie1, tie2), size + n_inner))
        n_inner += 1

    offsets = np.zeros(size + 1, dtype=np.int64)
    per_token: list[list[tuple[int, int]]] = [[] for _ in range(size)]
    for _, idx in leaves:
        steps = []
        key = idx
        while key in parent:
            inner, bit = parent[key]
            steps.append((inner, bit))
            key = size + inner
        steps.reverse()  # root first
        per_token[idx] = steps
    for idx in range(size):
        offsets[idx + 1] = offsets[idx] + len(per_token[idx])
    codes = np.fromiter((bit for steps in per_token for _, bit in steps),
                        dtype=np.uint8, count=int(offsets[-1]))
    points = np.fromiter((inner for steps in per_token for inner, _ in steps),
                         dtype=np.int32, count=int(offsets[-1]))
    return HuffmanTree(offsets=offsets, codes=codes, points=points,
                       num_inner=n_inner, num_leaves=len(leaves))


@dataclass
class PvdmModel:
    """Trained document and word vectors plus the shared Huffman tree."""

    vocab: Vocabulary
    tree: HuffmanTree
    doc_ids: list[str]
    doc_vectors: np.ndarray
    word_vectors: np.ndarray
    dim: int
    window: int
    lr: float
    edge_windows: bool = False
    loss_history: list[float] = field(default_factory=list)
    _doc_row: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._doc_row = {doc_id: i for i, doc_id in enumerate(self.doc_ids)}

    def doc_vector(self, doc_id: str) -> np.ndarray:
        if doc_id not in self._doc_row:
            raise KeyError(f"unknown document id: {doc_id!r}")
        return self.doc_vectors[self._doc_row[doc_id]]

    def to_tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {
            f"{prefix}doc_vectors": self.doc_vectors,
            f"{prefix}word_vectors": self.word_vectors,
            f"{prefix}node_vectors": self.tree.node_vectors,
            f"{prefix}meta": np.array(
                [self.dim, self.window, self.lr, float(self.edge_windows)], dtype=np.float32),
        }


def _doc_flags_and_windows(token_arrays, window: int, edge_windows: bool):
    flags, counts = [], []
    for toks in token_arrays:
        n = len(toks)
        edges = edge_windows or n < 2 * window + 1
        flags.append(edges)
        counts.append(n if edges else max(0, n - 2 * window))
    return flags, counts


def train(docs: list[EntityDocument], vocab: Vocabulary, *, dim: int, window: int = 2,
          epochs: int = 10, lr: float = 0.025, seed: int = 0,
          edge_windows: bool = False, threads: int = 1) -> PvdmModel:
    """Train document vectors over entity documents.

    Deterministic given ``seed`` when ``threads == 1``. With more threads,
    worker threads update the shared tables without locks (lock-free), which
    is faster but not reproducible. Documents shorter than one full window
    always train with truncated windows; full-length documents do so only
    when ``edge_windows`` is set.
    """
    if not docs:
        raise ContractError("cannot train on an empty document set")
    if dim < 1 or window < 1:
        raise ContractError(f"dim and window must be >= 1, got dim={dim} window={window}")
    tree = build_huffman(vocab)
    rng = np.random.default_rng(seed)
    bound = 0.5 / dim
    doc_vectors = rng.uniform(-bound, bound, (len(docs), dim)).astype(np.float32)
    word_vectors = rng.uniform(-bound, bound, (len(vocab), dim)).astype(np.float32)
    tree.node_vectors = np.zeros((max(len(vocab) - 1, 1), dim), dtype=np.float32)

    token_arrays = [np.asarray(doc.tokens, dtype=np.int32) for doc in docs]
    flags, win_counts = _doc_flags_and_windows(token_arrays, window, edge_windows)
    per_epoch = sum(win_counts)
    total = max(1, epochs * per_epoch)
    lr_lo = lr / LR_FLOOR_RATIO

    model = PvdmModel(
        vocab=vocab, tree=tree, doc_ids=[doc.entity_id for doc in docs],
        doc_vectors=doc_vectors, word_vectors=word_vectors,
        dim=dim, window=window, lr=lr, edge_windows=edge_windows,
    )

    if threads <= 1:
        counter = 0
        for _ in range(epochs):
            epoch_loss, epoch_preds = 0.0, 0
            for row, toks in enumerate(token_arrays):
                loss, n_pred, counter = kernels.train_document(
                    doc_vectors, word_vectors, tree.node_vectors, row, toks,
                    tree.codes, tree.points, tree.offsets, window, flags[row],
                    lr, lr_lo, counter, total, True, True)
                epoch_loss += loss
                epoch_preds += n_pred
            model.loss_history.append(epoch_loss / max(1, epoch_preds))
        return model

    # Lock-free parallel mode: window counters are precomputed per document
    # so the learning-rate schedule stays fixed; table updates may race.
    prefix = np.concatenate(([0], np.cumsum(win_counts)))
    for epoch in range(epochs):
        base = epoch * per_epoch
        results: list[tuple[float, int]] = [(0.0, 0)] * len(docs)

        def run(shard: range) -> None:
            for row in shard:
                loss, n_pred, _ = kernels.train_document(
                    doc_vectors, word_vectors, tree.node_vectors, row,
                    token_arrays[row], tree.codes, tree.points, tree.offsets,
                    window, flags[row], lr, lr_lo,
                    int(base + prefix[row]), total, True, True)
                results[row] = (loss, n_pred)

        workers = [threading.Thread(target=run, args=(range(k, len(docs), threads),))
                   for k in range(threads)]
        for w in workers:
            w.start()
        for w in workers:
            w.join()
        epoch_loss = sum(r[0] for r in results)
        epoch_preds = sum(r[1] for r in results)
        model.loss_history.append(epoch_loss / max(1, epoch_preds))
    return model


def _context_vector(model: PvdmModel, doc_vec: np.ndarray, context_indices) -> np.ndarray:
    h = doc_vec.astype(np.float64).copy()
    for idx in context_indices:
        h += model.word_vectors[idx].astype(np.float64)
    return h / (1 + len(context_indices))


def _path_log_prob(tree: HuffmanTree, token_index: int, h: np.ndarray) -> float:
    lo, hi = int(tree.offsets[token_index]), int(tree.offsets[token_index + 1])
    if lo == hi:
        return -np.inf
    f = tree.node_vectors[tree.points[lo:hi]].astype(np.float64) @ h
    sgn = 1.0 - 2.0 * tree.codes[lo:hi].astype(np.float64)
    return float(-np.logaddexp(0.0, -sgn * f).sum())


def predict_word_prob(model: PvdmModel, doc_id: str, target: str, context: list[str]) -> float:
    """p(target | document vector, context window) under the trained tree.

    Probabilities over the whole vocabulary sum to 1 (zero-count tokens have
    probability 0). Unknown ``doc_id`` raises ``KeyError``.
    """
    doc_vec = model.doc_vector(doc_id)
    h = _context_vector(model, doc_vec, [model.vocab.index(t) for t in context])
    log_p = _path_log_prob(model.tree, model.vocab.index(target), h)
    return float(np.exp(log_p))


def infer_doc_vector(model: PvdmModel, tokens: list[str], steps: int = 10,
                     seed: int = 0, lr: float | None = None) -> np.ndarray:
    """Vector for an unseen document; word and tree parameters stay frozen."""
    indices = np.asarray([model.vocab.index(t) for t in tokens], dtype=np.int32)
    if len(indices) == 0 or bool(np.all(indices == UNK_INDEX)):
        warnings.warn("no known tokens; returning a zero document vector",
                      CascadeWarning, stacklevel=2)
        return np.zeros(model.dim, dtype=np.float32)
    rng = np.random.default_rng(seed)
    bound = 0.5 / model.dim
    table = rng.uniform(-bound, bound, (1, model.dim)).astype(np.float32)
    lr = model.lr if lr is None else lr
    edges = model.edge_windows or len(indices) < 2 * model.window + 1
    n_windows = len(indices) if edges else max(0, len(indices) - 2 * model.window)
    total = max(1, steps * n_windows)
    counter = 0
    for _ in range(steps):
        _, _, counter = kernels.train_document(
            table, model.word_vectors, model.tree.node_vectors, 0, indices,
            model.tree.codes, model.tree.points, model.tree.offsets,
            model.window, edges, lr, lr / LR_FLOOR_RATIO, counter, total,
            False, False)
    return table[0]


def window_loss(doc_vec: np.ndarray, context_vecs: np.ndarray,
                node_vecs: np.ndarray, code: np.ndarray) -> float:
    """Reference float64 path loss for one window (negative log probability)."""
    h = (doc_vec + context_vecs.sum(axis=0)) / (1 + context_vecs.shape[0])
    f = node_vecs @ h
    sgn = 1.0 - 2.0 * code
    return float(np.logaddexp(0.0, -sgn * f).sum())


def window_loss_grads(doc_vec: np.ndarray, context_vecs: np.ndarray,
                      node_vecs: np.ndarray, code: np.ndarray):
    """Analytic gradients of :func:`window_loss` w.r.t. all inputs."""
    m = 1 + context_vecs.shape[0]
    h = (doc_vec + context_vecs.sum(axis=0)) / m
    f = node_vecs @ h
    sig = np.where(f >= 0, 1.0 / (1.0 + np.exp(-np.abs(f))),
                   np.exp(-np.abs(f)) / (1.0 + np.exp(-np.abs(f))))
    df = sig - (1.0 - code)  # dL/df per inner node
    dh = df @ node_vecs
    d_doc = dh / m
    d_context = np.tile(dh / m, (context_vecs.shape[0], 1))
    d_nodes = np.outer(df, h)
    return d_doc, d_context, d_nodes
