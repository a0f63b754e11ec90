"""Synthetic corpora with known structure, for tests and benchmarks.

Three generators:

* two-topic documents with disjoint vocabularies (document-vector separation),
* trait-separable essays (personality pretraining),
* a contextual comment corpus where the sarcasm label is a noisy function of
  user identity, forum identity, and one lexical cue. Users and forums leak
  their identity into text only distributionally (style/topic token pools),
  so a single comment carries weak context while a user's or forum's history
  aggregates to a strong signal -- the regime where context features help.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CommentRecord, EntityDocument, Vocabulary, build_vocabulary
from .personality import EssayRecord

CUE_TOKEN = "yeahright"

_FILLERS = [f"word{i:02d}" for i in range(30)]
_STYLE_A = [f"stylea{i:02d}" for i in range(20)]
_STYLE_B = [f"styleb{i:02d}" for i in range(20)]
_TOPIC_POS = [f"topicp{i:02d}" for i in range(16)]
_TOPIC_NEG = [f"topicn{i:02d}" for i in range(16)]
_TRAIT_CUES = ("party", "tidy", "travel", "gentle", "worry")


def two_topic_documents(n_docs_per_topic: int = 100, vocab_per_topic: int = 50,
                        tokens_per_doc: int = 200, seed: int = 0):
    """Documents drawn from two disjoint vocabularies.

    Returns ``(docs, vocab, topics)`` where ``topics[i]`` is 0 or 1.
    """
    rng = np.random.default_rng(seed)
    words = [[f"t{k}w{i:03d}" for i in range(vocab_per_topic)] for k in (0, 1)]
    texts, topics = [], []
    for k in (0, 1):
        for _ in range(n_docs_per_topic):
            draw = rng.integers(0, vocab_per_topic, tokens_per_doc)
            texts.append(" ".join(words[k][i] for i in draw))
            topics.append(k)
    vocab = build_vocabulary(texts, min_count=1)
    docs = [EntityDocument(entity_id=f"doc{i:04d}", tokens=vocab.encode(t.split()))
            for i, t in enumerate(texts)]
    return docs, vocab, topics


def separable_essays(n_essays: int = 120, seed: int = 0, cue_copies: int = 3,
                     filler_count: int = 6) -> list[EssayRecord]:
    """Essays where trait ``i`` is present iff its cue token appears.

    Longest essay is ``filler_count + 5*cue_copies`` tokens; encode with a
    max_len at least that large or truncation turns labels into noise.
    """
    rng = np.random.default_rng(seed)
    essays = []
    for _ in range(n_essays):
        traits = tuple(int(b) for b in rng.integers(0, 2, len(_TRAIT_CUES)))
        words = [_FILLERS[i] for i in rng.integers(0, len(_FILLERS), filler_count)]
        for i, flag in enumerate(traits):
            if flag:
                words.extend([_TRAIT_CUES[i]] * cue_copies)
        rng.shuffle(words)
        essays.append(EssayRecord(text=" ".join(words), traits=traits))
    return essays


@dataclass
class ContextualCorpus:
    train: list[CommentRecord]
    test: list[CommentRecord]
    essays: list[EssayRecord]
    user_bias: dict[str, int]
    forum_bias: dict[str, int]


def contextual_corpus(n_users: int = 200, n_forums: int = 20, n_comments: int = 5000,
                      seed: int = 0, test_fraction: float = 0.2,
                      style_fidelity: float = 0.75, topic_fidelity: float = 0.75,
                      style_tokens: int = 2, topic_tokens: int = 2,
                      filler_tokens: int = 3,
                      cue_weight: float = 0.8, user_weight: float = 1.2,
                      forum_weight: float = 0.6, noise: float = 0.4,
                      n_essays: int = 300) -> ContextualCorpus:
    """Comments whose label mixes a lexical cue with user and forum bias.

    Each comment holds ``style_tokens`` draws from the author's preferred
    pool (with probability ``style_fidelity``, else the other pool),
    ``topic_tokens`` draws likewise for the forum, the cue token with
    probability 1/2, and filler. The label is
    ``sign(cue_weight*x_c + user_weight*b_u + forum_weight*b_f + noise)``.
    A single comment therefore identifies its author's bias only weakly
    while the author's aggregated history identifies it almost surely.
    Essays reuse the style pools so the personality encoder transfers: the
    first trait marks pool-A-styled writing.
    """
    rng = np.random.default_rng(seed)
    users = [f"u{i:03d}" for i in range(n_users)]
    forums = [f"f{i:02d}" for i in range(n_forums)]
    user_bias = {u: 1 if i < n_users // 2 else -1 for i, u in enumerate(users)}
    forum_bias = {f: 1 if i < n_forums // 2 else -1 for i, f in enumerate(forums)}

    def pool_token(bias: int, fidelity: float, pos_pool, neg_pool) -> str:
        own = rng.random() < fidelity
        pool = pos_pool if (bias > 0) == own else neg_pool
        return pool[rng.integers(0, len(pool))]

    records = []
    for i in range(n_comments):
        user = users[rng.integers(0, n_users)]
        forum = forums[rng.integers(0, n_forums)]
        has_cue = rng.random() < 0.5
        score = (cue_weight * (1.0 if has_cue else -1.0)
                 + user_weight * user_bias[user]
                 + forum_weight * forum_bias[forum]
                 + noise * rng.normal())
        words = [_FILLERS[j] for j in rng.integers(0, len(_FILLERS), filler_tokens)]
        words.extend(pool_token(user_bias[user], style_fidelity, _STYLE_A, _STYLE_B)
                     for _ in range(style_tokens))
        words.extend(pool_token(forum_bias[forum], topic_fidelity, _TOPIC_POS, _TOPIC_NEG)
                     for _ in range(topic_tokens))
        if has_cue:
            words.append(CUE_TOKEN)
        rng.shuffle(words)
        records.append(CommentRecord(
            id=f"c{i:05d}", user_id=user, forum_id=forum,
            text=" ".join(words), label=int(score > 0)))

    n_test = int(round(test_fraction * n_comments))
    train, test = records[:-n_test], records[-n_test:]

    essays = []
    for _ in range(n_essays):
        pool_a = bool(rng.integers(0, 2))
        pool = _STYLE_A if pool_a else _STYLE_B
        words = [pool[j] for j in rng.integers(0, len(pool), 10)]
        words.extend(_FILLERS[j] for j in rng.integers(0, len(_FILLERS), 4))
        rng.shuffle(words)
        traits = (int(pool_a),) + tuple(int(b) for b in rng.integers(0, 2, 4))
        essays.append(EssayRecord(text=" ".join(words), traits=traits))

    return ContextualCorpus(train=train, test=test, essays=essays,
                            user_bias=user_bias, forum_bias=forum_bias)


def write_jsonl(path, records: list[CommentRecord]) -> None:
    import json
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {"id": rec.id, "user": rec.user_id, "forum": rec.forum_id, "text": rec.text}
            if rec.label is not None:
                obj["label"] = rec.label
            fh.write(json.dumps(obj) + "\n")


def write_essays_jsonl(path, essays: list[EssayRecord]) -> None:
    import json
    from .personality import TRAITS
    with open(path, "w", encoding="utf-8") as fh:
        for essay in essays:
            obj = {"text": essay.text}
            obj.update({t: flag for t, flag in zip(TRAITS, essay.traits)})
            fh.write(json.dumps(obj) + "\n")
