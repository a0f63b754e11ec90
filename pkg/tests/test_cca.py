import numpy as np
import pytest

from cascade import cca
from cascade.embeddings import EmbeddingTable
from cascade.errors import ContractError, DimensionError, SingularMatrixError


def tables(n=300, d1=6, d2=4, seed=0, dependence=0.7):
    rng = np.random.default_rng(seed)
    shared = rng.normal(size=(n, max(d1, d2)))
    x1 = dependence * shared[:, :d1] + (1 - dependence) * rng.normal(size=(n, d1))
    x2 = dependence * shared[:, :d2] + (1 - dependence) * rng.normal(size=(n, d2))
    ids = [f"u{i:04d}" for i in range(n)]
    return EmbeddingTable(ids, x1), EmbeddingTable(ids, x2)


def standardized_views(model, styl, pers):
    order = sorted(styl.ids)
    z1 = (np.stack([styl.get(u) for u in order]).astype(np.float64) - model.mean1) / model.std1
    z2 = (np.stack([pers.get(u) for u in order]).astype(np.float64) - model.mean2) / model.std2
    return z1, z2


class TestFit:
    def test_identical_views_all_correlations_one(self):
        t1, _ = tables(d1=5, d2=5)
        t2 = EmbeddingTable(list(t1.ids), t1.vectors.copy())
        model = cca.fit(t1, t2, k=5, ridge=0.0)
        assert np.all(model.correlations >= 1 - 1e-6)

    def test_independent_views_near_zero(self):
        rng = np.random.default_rng(1)
        ids = [f"u{i}" for i in range(2000)]
        t1 = EmbeddingTable(ids, rng.normal(size=(2000, 5)))
        t2 = EmbeddingTable(ids, rng.normal(size=(2000, 5)))
        model = cca.fit(t1, t2, k=5, ridge=0.0)
        assert np.all(model.correlations < 0.1)

    def test_orthonormal_projections(self):
        t1, t2 = tables()
        model = cca.fit(t1, t2, k=4, ridge=0.0)
        z1, z2 = standardized_views(model, t1, t2)
        n = z1.shape[0]
        r11 = z1.T @ z1 / (n - 1)
        r22 = z2.T @ z2 / (n - 1)
        r12 = z1.T @ z2 / (n - 1)
        assert np.allclose(model.a1.T @ r11 @ model.a1, np.eye(4), atol=1e-6)
        assert np.allclose(model.a2.T @ r22 @ model.a2, np.eye(4), atol=1e-6)
        assert np.allclose(model.a1.T @ r12 @ model.a2,
                           np.diag(model.correlations), atol=1e-6)

    def test_grid_search_oracle_two_dims(self):
        # brute-force maximization of corr(a1.x1, a2.x2) over unit directions
        rng = np.random.default_rng(2)
        n = 400
        latent = rng.normal(size=n)
        x1 = np.stack([latent + 0.3 * rng.normal(size=n),
                       rng.normal(size=n)], axis=1)
        x2 = np.stack([rng.normal(size=n),
                       -latent + 0.3 * rng.normal(size=n)], axis=1)
        ids = [f"u{i}" for i in range(n)]
        t1, t2 = EmbeddingTable(ids, x1), EmbeddingTable(ids, x2)
        model = cca.fit(t1, t2, k=2, ridge=0.0)
        z1, z2 = standardized_views(model, t1, t2)

        best = 0.0
        angles = np.linspace(0, np.pi, 2001)  # directions modulo sign
        p1 = np.stack([z1 @ np.array([np.cos(a), np.sin(a)]) for a in angles])
        p2 = np.stack([z2 @ np.array([np.cos(a), np.sin(a)]) for a in angles])
        p1 = (p1 - p1.mean(1, keepdims=True)) / p1.std(1, keepdims=True)
        p2 = (p2 - p2.mean(1, keepdims=True)) / p2.std(1, keepdims=True)
        corr = np.abs(p1 @ p2.T / n)
        best = corr.max()
        assert model.correlations[0] == pytest.approx(best, abs=1e-3)

    def test_scale_invariance_of_correlations(self):
        t1, t2 = tables(seed=3)
        base = cca.fit(t1, t2, k=3, ridge=0.0)
        scaled = cca.fit(EmbeddingTable(list(t1.ids), t1.vectors * 37.5), t2,
                         k=3, ridge=0.0)
        assert np.allclose(base.correlations, scaled.correlations, atol=1e-8)

    def test_correlation_normalization_invariance(self):
        # lambda must not depend on the 1/(N-1) factor: compare against a
        # from-scratch solve without any normalization
        t1, t2 = tables(seed=4, n=200, d1=4, d2=3)
        model = cca.fit(t1, t2, k=3, ridge=0.0)
        z1, z2 = standardized_views(model, t1, t2)
        from cascade.numerics import inv_sqrt_sym, svd
        r11, r22, r12 = z1.T @ z1, z2.T @ z2, z1.T @ z2  # no 1/(N-1)
        _, lam, _ = svd(inv_sqrt_sym(r11, 0.0) @ r12 @ inv_sqrt_sym(r22, 0.0))
        assert np.allclose(model.correlations, np.clip(lam[:3], 0, 1), atol=1e-8)

    def test_deterministic_bit_identical(self):
        t1, t2 = tables(seed=5)
        m1 = cca.fit(t1, t2, k=4, ridge=0.0)
        m2 = cca.fit(t1, t2, k=4, ridge=0.0)
        assert np.array_equal(m1.a1, m2.a1)
        assert np.array_equal(m1.a2, m2.a2)
        assert np.array_equal(m1.correlations, m2.correlations)

    def test_k_beyond_rank_names_bound(self):
        t1, t2 = tables(n=50, d1=6, d2=4)
        with pytest.raises(ContractError, match=r"\[1, 4\]"):
            cca.fit(t1, t2, k=5, ridge=0.0)

    def test_singular_view_without_ridge_raises(self):
        rng = np.random.default_rng(6)
        n = 40
        col = rng.normal(size=(n, 1))
        x1 = np.concatenate([col, col], axis=1)  # rank deficient
        ids = [f"u{i}" for i in range(n)]
        with pytest.raises(SingularMatrixError):
            cca.fit(EmbeddingTable(ids, x1),
                    EmbeddingTable(ids, rng.normal(size=(n, 2))), k=2, ridge=0.0)

    def test_mismatched_user_sets_rejected(self):
        t1, t2 = tables(n=20)
        t2b = EmbeddingTable([f"x{i}" for i in range(20)], t2.vectors)
        with pytest.raises(ContractError):
            cca.fit(t1, t2b, k=2)

    def test_zero_personality_users_excluded(self):
        t1, t2 = tables(n=50, d1=4, d2=4, seed=7)
        vecs = t2.vectors.copy()
        vecs[:10] = 0.0
        t2z = EmbeddingTable(list(t2.ids), vecs)
        from cascade.errors import CascadeWarning
        with pytest.warns(CascadeWarning, match="zero-personality"):
            model = cca.fit(t1, t2z, k=3)
        assert np.all(np.isfinite(model.a1))

    def test_too_few_users_rejected(self):
        t1, t2 = tables(n=2, d1=2, d2=2)
        with pytest.raises(ContractError):
            cca.fit(t1, t2, k=1, ridge=0.0)


class TestFuse:
    def test_view_means_map_to_zero(self):
        t1, t2 = tables(seed=8)
        model = cca.fit(t1, t2, k=3, ridge=0.0)
        fused = cca.fuse(model, model.mean1, model.mean2)
        assert np.allclose(fused, 0.0, atol=1e-12)

    def test_linearity_at_standardized_level(self):
        t1, t2 = tables(seed=9)
        model = cca.fit(t1, t2, k=3, ridge=0.0)
        rng = np.random.default_rng(0)
        d1, d2 = rng.normal(size=6), rng.normal(size=4)
        e1, e2 = rng.normal(size=6), rng.normal(size=4)
        lhs = cca.fuse(model, model.mean1 + d1 + e1, model.mean2 + d2 + e2)
        rhs = (cca.fuse(model, model.mean1 + d1, model.mean2 + d2)
               + cca.fuse(model, model.mean1 + e1, model.mean2 + e2))
        assert np.allclose(lhs, rhs, atol=1e-10)

    def test_projected_training_view_is_orthonormal(self):
        t1, t2 = tables(seed=10)
        model = cca.fit(t1, t2, k=4, ridge=0.0)
        z1, _ = standardized_views(model, t1, t2)
        w = z1 @ model.a1
        n = z1.shape[0]
        assert np.allclose(w.T @ w / (n - 1), np.eye(4), atol=1e-6)

    def test_dimension_mismatch_rejected(self):
        t1, t2 = tables(seed=11)
        model = cca.fit(t1, t2, k=2, ridge=0.0)
        with pytest.raises(DimensionError):
            cca.fuse(model, np.zeros(7), np.zeros(4))

    def test_checkpoint_tensor_roundtrip(self, tmp_path):
        from cascade import checkpoint
        t1, t2 = tables(seed=12)
        model = cca.fit(t1, t2, k=3)
        checkpoint.save(tmp_path / "cca.ckpt", model.to_tensors())
        loaded = cca.CcaModel.from_tensors(checkpoint.load(tmp_path / "cca.ckpt"))
        assert np.allclose(loaded.a1, model.a1, atol=1e-6)
        assert loaded.k == model.k
