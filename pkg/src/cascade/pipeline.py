"""End-to-end orchestration: context building, hybrid training, evaluation.

The context bank holds everything learned from the training split's history:
fused user embeddings, forum discourse vectors, and the raw stylometric and
personality tables they came from. The hybrid classifier concatenates the
content CNN's dense activation with the (frozen) user and forum vectors and
trains a softmax output layer on base-2 cross-entropy.
"""
from __future__ import annotations

import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cca, checkpoint, personality, pvdm, textcnn
from .config import RunConfig, corpus_hash, stage_seed
from .corpus import (CommentRecord, TokenizedComment, Vocabulary,
                     build_entity_documents, build_vocabulary, tokenize,
                     tokenize_comments)
from .embeddings import EmbeddingTable
from .errors import CascadeWarning, ContractError, StageError
from .numerics import AdamState, adam_step
from .personality import EssayRecord
from .textcnn import CnnConfig, CnnModel


@contextmanager
def _stage(name: str):
    try:
        yield
    except Exception as exc:
        raise StageError(f"stage '{name}' failed: {exc}") from exc


@dataclass
class ContextBank:
    """Learned per-entity context vectors plus provenance."""

    users: EmbeddingTable
    forums: EmbeddingTable
    styl: EmbeddingTable
    pers: EmbeddingTable
    source_ids: frozenset[str]
    corpus_hash: str
    config_hash: str
    fusion: str
    miss_counts: dict[str, int] = field(default_factory=lambda: {"user": 0, "forum": 0})

    def user_vector(self, user_id: str) -> np.ndarray:
        if user_id in self.users:
            return self.users.get(user_id)
        self.miss_counts["user"] += 1
        return np.zeros(self.users.dim, dtype=self.users.vectors.dtype)

    def forum_vector(self, forum_id: str) -> np.ndarray:
        if forum_id in self.forums:
            return self.forums.get(forum_id)
        self.miss_counts["forum"] += 1
        return np.zeros(self.forums.dim, dtype=self.forums.vectors.dtype)

    def to_tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        tensors: dict[str, np.ndarray] = {}
        for name, table in (("users", self.users), ("forums", self.forums),
                            ("styl", self.styl), ("pers", self.pers)):
            tensors[f"{prefix}{name}.vectors"] = table.vectors
            checkpoint.pack_strings(tensors, f"{prefix}{name}.ids", table.ids)
        checkpoint.pack_strings(tensors, f"{prefix}source_ids", sorted(self.source_ids))
        checkpoint.pack_strings(tensors, f"{prefix}provenance",
                                [self.corpus_hash, self.config_hash, self.fusion])
        return tensors

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], prefix: str = "") -> "ContextBank":
        tables = {}
        for name in ("users", "forums", "styl", "pers"):
            ids = checkpoint.unpack_strings(tensors, f"{prefix}{name}.ids")
            tables[name] = EmbeddingTable(ids, tensors[f"{prefix}{name}.vectors"])
        prov = checkpoint.unpack_strings(tensors, f"{prefix}provenance")
        return cls(
            users=tables["users"], forums=tables["forums"],
            styl=tables["styl"], pers=tables["pers"],
            source_ids=frozenset(checkpoint.unpack_strings(tensors, f"{prefix}source_ids")),
            corpus_hash=prov[0], config_hash=prov[1], fusion=prov[2],
        )

    def save(self, path: str | Path) -> None:
        checkpoint.save(path, self.to_tensors())

    @classmethod
    def load(cls, path: str | Path) -> "ContextBank":
        return cls.from_tensors(checkpoint.load(path))


def _personality_table(model: CnnModel, comments: list[CommentRecord],
                       tokenized: list[TokenizedComment]) -> EmbeddingTable:
    by_user: dict[str, list[TokenizedComment]] = {}
    for rec, tok in zip(comments, tokenized):
        by_user.setdefault(rec.user_id, []).append(tok)
    user_ids = sorted(by_user)
    vectors = np.zeros((len(user_ids), model.config.dense_dim), dtype=np.float32)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CascadeWarning)
        for i, uid in enumerate(user_ids):
            vectors[i] = personality.user_personality(model, by_user[uid])
    return EmbeddingTable(user_ids, vectors)


def _fuse_users(styl: EmbeddingTable, pers: EmbeddingTable, fusion: str,
                k: int, ridge: float | None) -> EmbeddingTable:
    if fusion == "concat":
        vectors = np.concatenate([styl.vectors, pers.vectors], axis=1)
        return EmbeddingTable(list(styl.ids), vectors.astype(np.float32))
    model = cca.fit(styl, pers, k, ridge)
    vectors = np.zeros((len(styl.ids), k), dtype=np.float32)
    zero_users = 0
    for i, uid in enumerate(styl.ids):
        p = pers.get(uid)
        if np.all(p == 0.0):  # user missing the personality view
            zero_users += 1
            continue
        vectors[i] = cca.fuse(model, styl.get(uid), p).astype(np.float32)
    if zero_users:
        warnings.warn(f"{zero_users} users lacked a personality view and got zero embeddings",
                      CascadeWarning, stacklevel=2)
    return EmbeddingTable(list(styl.ids), vectors)


def build_context(train_comments: list[CommentRecord], essays: list[EssayRecord],
                  config: RunConfig, vocab: Vocabulary | None = None) -> ContextBank:
    """Learn all contextual features from the training split.

    Runs the stylometric document-vector trainer over per-user documents,
    pre-trains the personality encoder and averages per-user trait vectors,
    fuses the two views, and trains forum discourse vectors. Bit-exact for a
    fixed config+seed (single-threaded).
    """
    if not train_comments:
        raise ContractError("cannot build context from an empty training split")
    seed = config.seed
    with _stage("corpus"):
        if vocab is None:
            vocab = build_vocabulary((c.text for c in train_comments), config.min_count)
        tokenized = tokenize_comments(train_comments, vocab)
        user_docs = build_entity_documents(train_comments, vocab, key="user")
        forum_docs = build_entity_documents(train_comments, vocab, key="forum")

    with _stage("style-vectors"):
        style_model = pvdm.train(
            user_docs, vocab, dim=config.style_dim, window=config.window,
            epochs=config.style_epochs, lr=config.style_lr,
            seed=stage_seed(seed, "style"), edge_windows=config.edge_windows,
            threads=config.threads)
        styl = EmbeddingTable(style_model.doc_ids, style_model.doc_vectors.copy())

    with _stage("personality"):
        imported = None
        if config.word_vectors:
            imported = EmbeddingTable.load(config.word_vectors).vectors
        cnn_config = CnnConfig(
            embed_dim=config.embed_dim, heights=config.heights,
            maps_per_height=config.filter_maps, dense_dim=config.dense_dim,
            classes=5, head="sigmoid", max_len=config.max_len)
        trait_model, _ = personality.pretrain(
            essays, vocab, cnn_config,
            optimizer=AdamState(learning_rate=config.learning_rate),
            patience=config.patience, holdout_fraction=config.holdout_fraction,
            batch_size=config.batch_size, max_epochs=config.personality_epochs,
            seed=stage_seed(seed, "personality"), embeddings=imported)
        pers = _personality_table(trait_model, train_comments, tokenized)

    with _stage("fusion"):
        users = _fuse_users(styl, pers, config.fusion_mode, config.fusion_dim, config.ridge)

    with _stage("discourse-vectors"):
        discourse_model = pvdm.train(
            forum_docs, vocab, dim=config.discourse_dim, window=config.window,
            epochs=config.discourse_epochs, lr=config.style_lr,
            seed=stage_seed(seed, "discourse"), edge_windows=config.edge_windows,
            threads=config.threads)
        forums = EmbeddingTable(discourse_model.doc_ids, discourse_model.doc_vectors.copy())

    return ContextBank(
        users=users, forums=forums, styl=styl, pers=pers,
        source_ids=frozenset(c.id for c in train_comments),
        corpus_hash=corpus_hash([c.id for c in train_comments]),
        config_hash=config.config_hash(), fusion=config.fusion_mode,
    )


@dataclass
class CascadeModel:
    """Content CNN trunk plus the output layer over [content, user, forum]."""

    cnn: CnnModel
    out_w: np.ndarray
    out_b: np.ndarray
    use_user: bool
    use_discourse: bool
    bank: ContextBank
    vocab: Vocabulary

    @property
    def concat_dim(self) -> int:
        return self.out_w.shape[1]

    def to_tensors(self) -> dict[str, np.ndarray]:
        tensors = self.cnn.to_tensors("cnn.")
        tensors["out_w"] = self.out_w
        tensors["out_b"] = self.out_b
        tensors["flags"] = np.array(
            [float(self.use_user), float(self.use_discourse)], dtype=np.float32)
        checkpoint.pack_strings(tensors, "vocab.tokens", self.vocab.index_to_token)
        tensors["vocab.counts"] = np.array(self.vocab.counts, dtype=np.float32)
        tensors["vocab.min_count"] = np.array([self.vocab.min_count], dtype=np.float32)
        tensors.update(self.bank.to_tensors("bank."))
        return tensors

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "CascadeModel":
        vocab = Vocabulary(
            index_to_token=checkpoint.unpack_strings(tensors, "vocab.tokens"),
            counts=[int(c) for c in tensors["vocab.counts"]],
            min_count=int(tensors["vocab.min_count"][0]))
        flags = tensors["flags"]
        return cls(
            cnn=CnnModel.from_tensors(tensors, "cnn."),
            out_w=tensors["out_w"].copy(), out_b=tensors["out_b"].copy(),
            use_user=bool(flags[0]), use_discourse=bool(flags[1]),
            bank=ContextBank.from_tensors(tensors, "bank."), vocab=vocab,
        )

    def save(self, path: str | Path) -> None:
        checkpoint.save(path, self.to_tensors())

    @classmethod
    def load(cls, path: str | Path) -> "CascadeModel":
        return cls.from_tensors(checkpoint.load(path))


def _context_matrices(model_or_bank, comments, use_user: bool, use_discourse: bool,
                      dtype=np.float32):
    bank = model_or_bank
    n = len(comments)
    u = np.zeros((n, bank.users.dim if use_user else 0), dtype=dtype)
    t = np.zeros((n, bank.forums.dim if use_discourse else 0), dtype=dtype)
    for i, rec in enumerate(comments):
        if use_user:
            u[i] = bank.user_vector(rec.user_id)
        if use_discourse:
            t[i] = bank.forum_vector(rec.forum_id)
    return u, t


def _cascade_outputs(model: CascadeModel, mat, lengths, u, t):
    cache = textcnn.forward_batch(model.cnn, mat, lengths)
    concat = np.concatenate([cache.hidden, u, t], axis=1)
    logits = concat @ model.out_w.T + model.out_b
    probs = textcnn._softmax(logits)
    return cache, concat, probs


def _encode_comments(vocab: Vocabulary, comments, max_len: int):
    mat = np.stack([textcnn.pad_or_truncate(vocab.encode(tokenize(c.text)), max_len)
                    for c in comments])
    lengths = np.array([min(max(textcnn.real_length(row), 1), max_len) for row in mat],
                       dtype=np.int64)
    return mat, lengths


def train_cascade(bank: ContextBank, vocab: Vocabulary | None,
                  train_comments: list[CommentRecord], config: RunConfig, *,
                  use_user: bool | None = None,
                  use_discourse: bool | None = None):
    """Train the hybrid classifier against a frozen context bank.

    Ablation flags replace the user and/or discourse segments with
    zero-length segments (the concatenation shrinks accordingly); with both
    disabled this is exactly the content-only CNN baseline. Returns
    ``(CascadeModel, history)``.
    """
    if not train_comments:
        raise ContractError("cannot train on an empty training split")
    if vocab is None:
        vocab = build_vocabulary((c.text for c in train_comments), config.min_count)
    unlabeled = [c.id for c in train_comments if c.label is None]
    if unlabeled:
        raise ContractError(f"training comments must be labeled; missing: {unlabeled[:10]}")
    use_user = config.use_user if use_user is None else use_user
    use_discourse = config.use_discourse if use_discourse is None else use_discourse
    if len(train_comments) < config.batch_size:
        raise ContractError(
            f"dataset smaller than one batch ({len(train_comments)} < {config.batch_size})")

    cnn_config = CnnConfig(
        embed_dim=config.embed_dim, heights=config.heights,
        maps_per_height=config.filter_maps, dense_dim=config.dense_dim,
        classes=2, head="softmax", max_len=config.max_len)
    imported = EmbeddingTable.load(config.word_vectors).vectors if config.word_vectors else None
    cnn = textcnn.init_model(cnn_config, vocab_size=len(vocab),
                             seed=stage_seed(config.seed, "cascade-cnn"),
                             embeddings=imported)
    concat_dim = (config.dense_dim
                  + (bank.users.dim if use_user else 0)
                  + (bank.forums.dim if use_discourse else 0))
    head_rng = np.random.default_rng(stage_seed(config.seed, "cascade-head"))
    model = CascadeModel(
        cnn=cnn,
        out_w=head_rng.uniform(-0.05, 0.05, (2, concat_dim)).astype(np.float32),
        out_b=np.zeros(2, dtype=np.float32),
        use_user=use_user, use_discourse=use_discourse, bank=bank, vocab=vocab)

    mat, lengths = _encode_comments(vocab, train_comments, config.max_len)
    u_all, t_all = _context_matrices(bank, train_comments, use_user, use_discourse)
    targets = np.zeros((len(train_comments), 2), dtype=np.float64)
    for i, rec in enumerate(train_comments):
        targets[i, int(rec.label)] = 1.0
    weights = None
    if config.class_weights:
        counts = np.maximum(targets.sum(axis=0), 1.0)
        weights = counts.sum() / (2.0 * counts)

    rng = np.random.default_rng(stage_seed(config.seed, "cascade-split"))
    perm = rng.permutation(len(train_comments))
    n_hold = max(1, int(round(config.holdout_fraction * len(train_comments)))) \
        if config.holdout_fraction > 0 else 0
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    if len(train_idx) == 0:
        raise ContractError("holdout fraction leaves no training data")
    eval_idx = hold_idx if n_hold else train_idx

    optimizer = AdamState(learning_rate=config.learning_rate)
    params = dict(model.cnn.trunk_params())
    params["out_w"] = model.out_w
    params["out_b"] = model.out_b

    def eval_loss(rows) -> float:
        _, _, probs = _cascade_outputs(model, mat[rows], lengths[rows], u_all[rows], t_all[rows])
        loss, _ = textcnn.categorical_cross_entropy_bits(probs, targets[rows], weights)
        return loss

    best_loss = np.inf
    best_snapshot = (model.cnn.copy(), model.out_w.copy(), model.out_b.copy())
    history: list[dict[str, float]] = []
    bad_evals = 0
    for epoch in range(config.cascade_epochs):
        order = rng.permutation(len(train_idx))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(train_idx), config.batch_size):
            rows = train_idx[order[start:start + config.batch_size]]
            cache, concat, probs = _cascade_outputs(
                model, mat[rows], lengths[rows], u_all[rows], t_all[rows])
            loss, _ = textcnn.categorical_cross_entropy_bits(probs, targets[rows], weights)
            d_logits = textcnn.softmax_ce_bits_logit_grad(
                probs, targets[rows], weights).astype(np.float32)
            grads = textcnn.trunk_backward(model.cnn, cache,
                                           (d_logits @ model.out_w)[:, :config.dense_dim])
            grads["out_w"] = d_logits.T @ concat
            grads["out_b"] = d_logits.sum(axis=0)
            adam_step(optimizer, params, grads)
            model.cnn.stamp += 1
            epoch_loss += loss
            n_batches += 1
        hold_loss = eval_loss(eval_idx)
        improved = hold_loss < best_loss
        history.append({"epoch": epoch, "train_loss": epoch_loss / max(1, n_batches),
                        "holdout_loss": hold_loss, "improved": float(improved)})
        if improved:
            best_loss = hold_loss
            best_snapshot = (model.cnn.copy(), model.out_w.copy(), model.out_b.copy())
            bad_evals = 0
        else:
            bad_evals += 1
            if bad_evals > config.patience:
                break
    model.cnn, model.out_w, model.out_b = best_snapshot
    return model, history


@dataclass
class EvalReport:
    accuracy: float
    f1_sarcastic: float
    precision_sarcastic: float
    recall_sarcastic: float
    precision_non_sarcastic: float
    recall_non_sarcastic: float
    confusion: list[list[int]]  # rows = true class, cols = predicted
    loss_bits: float

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_sarcastic": self.f1_sarcastic,
            "precision_sarcastic": self.precision_sarcastic,
            "recall_sarcastic": self.recall_sarcastic,
            "confusion": [v for row in self.confusion for v in row],
            "loss_bits": self.loss_bits,
        }


def predict_batch(model: CascadeModel, comments: list[CommentRecord]) -> np.ndarray:
    """Class probabilities (N, 2) for a batch of comments."""
    mat, lengths = _encode_comments(model.vocab, comments, model.cnn.config.max_len)
    u, t = _context_matrices(model.bank, comments, model.use_user, model.use_discourse)
    _, _, probs = _cascade_outputs(model, mat, lengths, u, t)
    return probs


def predict(model: CascadeModel, comment: CommentRecord) -> tuple[int, tuple[float, float]]:
    """Label (argmax) and (non-sarcastic, sarcastic) probability pair."""
    probs = predict_batch(model, [comment])[0]
    return int(probs.argmax()), (float(probs[0]), float(probs[1]))


def evaluate(model: CascadeModel, test_comments: list[CommentRecord]) -> EvalReport:
    """Score a labeled test split; refuses test ids seen by the context bank."""
    if not test_comments:
        raise ContractError("cannot evaluate on an empty test split")
    unlabeled = [c.id for c in test_comments if c.label is None]
    if unlabeled:
        raise ContractError(f"test comments must be labeled; missing: {unlabeled[:10]}")
    leaked = [c.id for c in test_comments if c.id in model.bank.source_ids]
    if leaked:
        raise ContractError(
            f"test leakage: {len(leaked)} test ids appear in the context bank's "
            f"training sources, e.g. {leaked[:5]}")
    probs = predict_batch(model, test_comments)
    return compute_report([int(c.label) for c in test_comments], probs)


def compute_report(labels: list[int], probs: np.ndarray) -> EvalReport:
    """Metrics from true labels and (N, 2) class probabilities."""
    predicted = probs.argmax(axis=1)
    confusion = np.zeros((2, 2), dtype=np.int64)
    for truth, pred in zip(labels, predicted):
        confusion[int(truth), int(pred)] += 1
    tn, fp = int(confusion[0, 0]), int(confusion[0, 1])
    fn, tp = int(confusion[1, 0]), int(confusion[1, 1])
    total = len(labels)

    def ratio(num, denom):
        return num / denom if denom else 0.0

    precision_s = ratio(tp, tp + fp)
    recall_s = ratio(tp, tp + fn)
    f1 = ratio(2 * precision_s * recall_s, precision_s + recall_s)
    p_true = np.maximum(probs[np.arange(total), labels], textcnn.PROB_FLOOR)
    return EvalReport(
        accuracy=(tn + tp) / total,
        f1_sarcastic=f1,
        precision_sarcastic=precision_s,
        recall_sarcastic=recall_s,
        precision_non_sarcastic=ratio(tn, tn + fn),
        recall_non_sarcastic=ratio(tn, tn + fp),
        confusion=[[tn, fp], [fn, tp]],
        loss_bits=float(-np.log2(p_true).mean()),
    )
