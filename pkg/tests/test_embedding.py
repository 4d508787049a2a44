"""Tokenizer, hashed embedder, and vector-math contracts."""

import numpy as np
import pytest

from riskrank.embedding import (
    HashEmbedder,
    cosine,
    exact_dot,
    exact_norm,
    hash_embed,
    l2_normalize,
    tokenize,
)

from reference import fraction_dot


class TestTokenize:
    def test_basic(self):
        assert tokenize("Credit exposure!") == ["credit", "exposure"]

    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_and_digits(self):
        assert tokenize("VaR-99.5%") == ["var", "99", "5"]

    def test_underscore_splits(self):
        assert tokenize("loss_given_default") == ["loss", "given", "default"]


class TestL2Normalize:
    def test_three_four_five(self):
        out = l2_normalize(np.array([3.0, 4.0]))
        np.testing.assert_allclose(out, [0.6, 0.8], rtol=1e-7)
        assert out.dtype == np.float32

    def test_zero_vector_unchanged(self):
        out = l2_normalize(np.zeros(2))
        assert np.array_equal(out, np.zeros(2, dtype=np.float32))

    def test_symmetry(self):
        out = l2_normalize(np.ones(4))
        np.testing.assert_allclose(out, [0.5, 0.5, 0.5, 0.5], rtol=0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            l2_normalize(np.array([1.0, np.nan]))
        with pytest.raises(ValueError):
            l2_normalize(np.array([np.inf, 0.0]))

    def test_norm_is_zero_or_one(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            dim = int(rng.integers(1, 64))
            v = rng.normal(scale=rng.uniform(1e-3, 1e3), size=dim)
            norm = float(np.linalg.norm(l2_normalize(v).astype(np.float64)))
            assert norm == pytest.approx(1.0, abs=1e-6) or norm == 0.0


class TestCosine:
    def test_self_similarity(self):
        v = np.array([0.2, -1.5, 3.0])
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_45_degrees(self):
        assert cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.70710678, abs=1e-8)

    def test_zero_vector_convention(self):
        assert cosine([0.0, 0.0], [1.0, 2.0]) == 0.0
        assert cosine([1.0, 2.0], [0.0, 0.0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_symmetry_is_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            dim = int(rng.integers(1, 40))
            u = rng.normal(size=dim)
            v = rng.normal(size=dim)
            assert cosine(u, v) == cosine(v, u)

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            dim = int(rng.integers(1, 40))
            u = rng.normal(size=dim)
            v = rng.normal(size=dim)
            alpha = float(rng.uniform(1e-4, 1e4))
            assert cosine(alpha * u, v) == pytest.approx(cosine(u, v), abs=1e-6)

    def test_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            u = rng.normal(size=8)
            v = rng.normal(size=8)
            assert -1.0 <= cosine(u, v) <= 1.0


class TestExactArithmetic:
    """The canonical score arithmetic matches exact rational rounding."""

    def test_exact_dot_equals_fraction_dot(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            dim = int(rng.integers(1, 50))
            u = rng.normal(scale=rng.uniform(0.01, 100), size=dim)
            v = rng.normal(scale=rng.uniform(0.01, 100), size=dim)
            assert exact_dot(u, v) == fraction_dot(u, v)

    def test_exact_norm_definition(self):
        v = np.array([3.0, 4.0])
        assert exact_norm(v) == 5.0


class TestHashEmbed:
    def test_empty_tokens_zero_vector(self):
        out = hash_embed([], dim=16)
        assert np.array_equal(out, np.zeros(16, dtype=np.float32))

    def test_deterministic(self):
        tokens = ["credit", "risk", "credit"]
        a = hash_embed(tokens, dim=32, seed=9)
        b = hash_embed(tokens, dim=32, seed=9)
        assert np.array_equal(a, b)

    def test_single_token_unit_coordinate(self):
        out = hash_embed(["risk"], dim=8, seed=0)
        nonzero = np.nonzero(out)[0]
        assert len(nonzero) == 1
        assert abs(out[nonzero[0]]) == 1.0

    def test_seed_changes_layout(self):
        a = hash_embed(["risk", "capital"], dim=64, seed=0)
        b = hash_embed(["risk", "capital"], dim=64, seed=1)
        assert not np.array_equal(a, b)

    def test_invalid_dim(self):
        with pytest.raises(ValueError):
            hash_embed(["x"], dim=0)

    def test_purity_over_random_token_lists(self):
        rng = np.random.default_rng(23)
        words = [f"w{i}" for i in range(200)]
        for _ in range(1000):
            tokens = [words[i] for i in rng.integers(0, len(words), size=rng.integers(0, 12))]
            dim = int(rng.integers(1, 48))
            seed = int(rng.integers(0, 2**63))
            first = hash_embed(tokens, dim, seed)
            again = hash_embed(tokens, dim, seed)
            assert first.dtype == again.dtype == np.float32
            assert np.array_equal(first, again)


class TestHashEmbedder:
    def test_batch_matches_single(self):
        embedder = HashEmbedder(dim=32, seed=2)
        texts = ["credit exposure", "stress testing", ""]
        matrix = embedder.embed(texts)
        assert matrix.shape == (3, 32)
        for row, text in zip(matrix, texts):
            assert np.array_equal(row, embedder(text))

    def test_model_id_carries_parameters(self):
        assert HashEmbedder(dim=8, seed=3).model_id == "hash-d8-s3"

    def test_invalid_dim(self):
        with pytest.raises(ValueError):
            HashEmbedder(dim=0)
