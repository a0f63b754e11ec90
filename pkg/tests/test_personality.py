import numpy as np
import pytest

from cascade import personality, synthetic, textcnn
from cascade.corpus import TokenizedComment, build_vocabulary, tokenize
from cascade.errors import CascadeWarning, ContractError, ParseError
from cascade.numerics import AdamState
from cascade.personality import EssayRecord, load_essays, pretrain, user_personality

CFG = textcnn.CnnConfig(embed_dim=12, heights=(1, 2), maps_per_height=6,
                        dense_dim=10, classes=5, head="sigmoid", max_len=24)


def essays_vocab(essays):
    return build_vocabulary((e.text for e in essays), min_count=1)


class TestEssayRecords:
    def test_wrong_trait_count_rejected(self):
        with pytest.raises(ContractError):
            EssayRecord(text="x", traits=(1, 0, 1))

    def test_empty_text_rejected(self):
        with pytest.raises(ContractError):
            EssayRecord(text="", traits=(0, 0, 0, 0, 0))

    def test_load_jsonl(self, tmp_path):
        path = tmp_path / "essays.jsonl"
        path.write_text('{"text":"hello there","O":1,"C":0,"E":1,"A":0,"N":1}\n')
        (rec,) = load_essays(path)
        assert rec.traits == (1, 0, 1, 0, 1)

    def test_missing_trait_key_reports_line(self, tmp_path):
        path = tmp_path / "essays.jsonl"
        path.write_text('{"text":"hi","O":1,"C":0,"E":1,"A":0}\n')
        with pytest.raises(ParseError, match="line 1.*'N'"):
            load_essays(path)


class TestPretrain:
    def test_single_essay_rejected(self):
        essays = synthetic.separable_essays(1, seed=0)
        with pytest.raises(ContractError):
            pretrain(essays, essays_vocab(essays), CFG)

    def test_wrong_head_rejected(self):
        essays = synthetic.separable_essays(10, seed=0)
        cfg = textcnn.CnnConfig(embed_dim=8, heights=(1, 2), maps_per_height=4,
                                dense_dim=8, classes=5, head="softmax", max_len=16)
        with pytest.raises(ContractError):
            pretrain(essays, essays_vocab(essays), cfg)

    def test_degenerate_trait_warns(self):
        essays = [EssayRecord(text=f"essay number {i}", traits=(1, i % 2, 0, 1, i % 2))
                  for i in range(8)]
        with pytest.warns(CascadeWarning, match="single label"):
            pretrain(essays, essays_vocab(essays), CFG,
                     optimizer=AdamState(learning_rate=0.01),
                     batch_size=4, max_epochs=1, seed=0)

    def test_identical_seeds_identical_checkpoints(self):
        essays = synthetic.separable_essays(24, seed=1)
        vocab = essays_vocab(essays)
        models = []
        for _ in range(2):
            model, _ = pretrain(essays, vocab, CFG,
                                optimizer=AdamState(learning_rate=0.01),
                                batch_size=8, max_epochs=3, seed=5)
            models.append(model)
        for name in models[0].params():
            assert np.array_equal(models[0].params()[name], models[1].params()[name])

    def test_separable_traits_learnable(self):
        # trains reliably only with enough width and data relative to the
        # trait count; this regime is verified stable across seeds
        essays = synthetic.separable_essays(240, seed=2)
        vocab = essays_vocab(essays)
        wide = textcnn.CnnConfig(embed_dim=16, heights=(1, 2), maps_per_height=24,
                                 dense_dim=24, classes=5, head="sigmoid", max_len=24)
        model, _ = pretrain(essays[:180], vocab, wide,
                            optimizer=AdamState(learning_rate=0.002),
                            patience=25, batch_size=16, max_epochs=80, seed=0)
        held = essays[180:]
        hits = total = 0
        for essay in held:
            probs = personality.predict_traits(model, vocab.encode(tokenize(essay.text)))
            hits += int(np.sum((probs > 0.5) == np.array(essay.traits, dtype=bool)))
            total += 5
        assert hits / total >= 0.9


class TestUserPersonality:
    def make_model(self):
        essays = synthetic.separable_essays(24, seed=3)
        vocab = essays_vocab(essays)
        model, _ = pretrain(essays, vocab, CFG, optimizer=AdamState(learning_rate=0.01),
                            batch_size=8, max_epochs=2, seed=1)
        return model, vocab

    def comment(self, vocab, text, cid="c1"):
        tokens = vocab.encode(tokenize(text))
        return TokenizedComment(cid, tokens, len(tokens))

    def test_single_comment_equals_its_hidden_vector(self):
        model, vocab = self.make_model()
        c = self.comment(vocab, "party worry travel")
        expected = textcnn.forward(model, c.tokens).hidden
        assert np.allclose(user_personality(model, [c]), expected)

    def test_two_comments_average(self):
        model, vocab = self.make_model()
        c1 = self.comment(vocab, "party plan", "c1")
        c2 = self.comment(vocab, "worry gentle tidy", "c2")
        q1 = textcnn.forward(model, c1.tokens).hidden
        q2 = textcnn.forward(model, c2.tokens).hidden
        assert np.allclose(user_personality(model, [c1, c2]),
                           ((q1 + q2) / 2).astype(np.float32), atol=1e-7)

    def test_permutation_invariance(self):
        model, vocab = self.make_model()
        comments = [self.comment(vocab, t, str(i)) for i, t in
                    enumerate(["party time", "worry a lot", "travel plan", "tidy room"])]
        fwd = user_personality(model, comments)
        rev = user_personality(model, comments[::-1])
        assert np.allclose(fwd, rev)

    def test_duplicating_comment_multiset_is_invariant(self):
        model, vocab = self.make_model()
        comments = [self.comment(vocab, t, str(i)) for i, t in
                    enumerate(["party time", "worry a lot"])]
        once = user_personality(model, comments)
        thrice = user_personality(model, comments * 3)
        assert np.allclose(once, thrice, atol=1e-6)

    def test_no_comments_zero_vector_with_warning(self):
        model, _ = self.make_model()
        with pytest.warns(CascadeWarning):
            vec = user_personality(model, [])
        assert np.array_equal(vec, np.zeros(CFG.dense_dim, dtype=np.float32))

    def test_output_nonnegative_with_relu(self):
        model, vocab = self.make_model()
        c = self.comment(vocab, "party worry plan travel")
        vec = user_personality(model, [c])
        assert np.all(vec >= 0) and np.all(np.isfinite(vec))
