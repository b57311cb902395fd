import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphbridge import model as M
from graphbridge import numkernel as nk
from graphbridge.errors import DimensionError
from graphbridge.graphstore import symmetric_normalize
from graphbridge.losses import loss_clf
from graphbridge.numkernel import SparseMatrix

from conftest import random_sparse


def _graph(seed, n=7, d=5):
    rng = np.random.default_rng(seed)
    s, dense = random_sparse(rng, n, 0.4)
    return symmetric_normalize(s), rng.normal(size=(n, d))


def test_param_shapes_default_architecture():
    p = M.init_params(10, 3)
    shapes = {k: v.shape for k, v in p.items()}
    assert shapes == {"W1": (10, 128), "W2": (128, 64), "P1": (64, 64), "P2": (64, 64), "Wc": (64, 3), "bc": (3,)}
    assert np.all(p["bc"] == 0)
    assert np.abs(p["W1"]).max() <= np.sqrt(6 / (10 + 128))


def test_init_deterministic():
    a, b = M.init_params(4, 2, seed=3), M.init_params(4, 2, seed=3)
    assert M.params_digest(a) == M.params_digest(b)
    assert M.params_digest(a) != M.params_digest(M.init_params(4, 2, seed=4))


class TestEncoder:
    def test_zero_w1(self):
        adj, x = _graph(0)
        p = M.init_params(5, 2)
        p["W1"] = np.zeros_like(p["W1"])
        assert np.all(M.encoder_forward(p, adj, x).value == 0)

    def test_output_width(self):
        adj, x = _graph(1)
        assert M.encoder_forward(M.init_params(5, 2), adj, x).shape == (7, 64)

    def test_matches_dense_formula(self):
        adj, x = _graph(2)
        p = M.init_params(5, 2, hidden=(6, 4))
        a = adj.to_dense()
        expected = a @ np.maximum(a @ x @ p["W1"], 0) @ p["W2"]
        np.testing.assert_allclose(M.encoder_forward(p, adj, x).value, expected, atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        s, dense = random_sparse(rng, 8, 0.35)
        x = rng.normal(size=(8, 3))
        perm = rng.permutation(8)
        pd = dense[np.ix_(perm, perm)]
        r, c = np.nonzero(pd)
        sp = SparseMatrix.from_triplets(r, c, pd[r, c], (8, 8))
        p = M.init_params(3, 2, hidden=(5, 4), seed=seed % 1000)
        h = M.encoder_forward(p, symmetric_normalize(s), x).value
        hp = M.encoder_forward(p, symmetric_normalize(sp), x[perm]).value
        np.testing.assert_allclose(hp, h[perm], atol=1e-12)

    def test_width_mismatch(self):
        adj, x = _graph(3)
        with pytest.raises(DimensionError):
            M.encoder_forward(M.init_params(4, 2), adj, x)


class TestPredictor:
    def test_zero_p1(self):
        p = M.init_params(3, 2, hidden=(4, 4))
        p["P1"] = np.zeros((4, 4))
        assert np.all(M.predictor_embed(p, np.ones((3, 4))).value == 0)

    def test_identity_weights(self):
        p = M.init_params(3, 2, hidden=(4, 4))
        p["P1"], p["P2"] = np.eye(4), np.eye(4)
        h = np.abs(np.random.default_rng(0).normal(size=(5, 4)))
        np.testing.assert_array_equal(M.predictor_embed(p, h).value, h)

    def test_dense_oracle(self):
        rng = np.random.default_rng(1)
        p = M.init_params(3, 2, hidden=(4, 6))
        h = rng.normal(size=(5, 6))
        np.testing.assert_allclose(M.predictor_embed(p, h).value, np.maximum(h @ p["P1"], 0) @ p["P2"], atol=1e-14)

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            M.predictor_embed(M.init_params(3, 2, hidden=(4, 6)), np.ones((2, 5)))


class TestEdgeScore:
    def test_zero_vector(self):
        assert M.edge_score(np.zeros(3), np.array([1.0, 2.0, 3.0])) == 0.5

    def test_orthogonal(self):
        assert M.edge_score(np.array([1.0, 0.0]), np.array([0.0, 5.0])) == 0.5

    def test_log_three(self):
        assert abs(M.edge_score(np.array([np.log(3.0)]), np.array([1.0])) - 0.75) < 1e-15

    @settings(max_examples=50)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
    def test_symmetric(self, a, b):
        assert M.edge_score(np.array(a), np.array(b)) == M.edge_score(np.array(b), np.array(a))

    def test_extreme_dots_stay_finite(self):
        assert M.edge_score(np.array([100.0]), np.array([100.0])) == 1.0
        assert M.edge_score(np.array([100.0]), np.array([-100.0])) >= 0.0

    def test_pair_scores_match(self):
        z = np.random.default_rng(0).normal(size=(4, 3))
        got = M.pair_scores(z, np.array([[0, 1], [2, 3]]), np.array([[3, 2], [1, 0]])).value
        assert got.shape == (2, 2)
        assert abs(got[0, 1] - M.edge_score(z[1], z[2])) < 1e-15


class TestClassify:
    def test_zero_weights_uniform(self):
        p = M.init_params(3, 4, hidden=(4, 5))
        p["Wc"] = np.zeros((5, 4))
        np.testing.assert_allclose(M.classify(p, np.ones((3, 5))).value, 0.25)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        p = M.init_params(3, 3, hidden=(4, 5))
        probs = M.classify(p, 30 * rng.normal(size=(20, 5))).value
        assert np.all(np.abs(probs.sum(axis=1) - 1) < 1e-12)
        assert np.all(probs >= 0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=(4, 3))
        a = nk.softmax_rows(z).value
        b = nk.softmax_rows(z + rng.normal(size=(4, 1)) * 50).value
        np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_forward_gradient_check(seed):
    adj, x = _graph(seed, n=6, d=3)
    labels = np.array([0, 1, 0, 1, 1, 0])
    p = M.init_params(3, 2, hidden=(5, 4), seed=seed)

    def f(ps):
        return loss_clf(M.classify(ps, M.encoder_forward(ps, adj, x)), labels)

    assert nk.finite_diff_check(f, {k: p[k] for k in ("W1", "W2", "Wc", "bc")}) < 1e-4
