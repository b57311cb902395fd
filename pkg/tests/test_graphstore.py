import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphbridge.bridger import CandidateTable
from graphbridge.errors import DimensionError, ValidationError
from graphbridge.graphstore import apply_insertions, build_graph, combine, symmetric_normalize
from graphbridge.numkernel import SparseMatrix

from conftest import random_sparse
from oracles import adjacency_violations, gcn_normalize_dense


def _pair(n_s=3, n_t=2, d=2):
    s = build_graph(n_s, [(0, 1)] if n_s > 1 else [], np.ones((n_s, d)), np.zeros(n_s, int))
    t = build_graph(n_t, [(0, 1)] if n_t > 1 else [], np.ones((n_t, d)), domain="target")
    return s, t


class TestBuildGraph:
    def test_edgeless(self):
        g = build_graph(3, [], np.zeros((3, 2)))
        np.testing.assert_array_equal(g.adjacency.to_dense(), np.zeros((3, 3)))

    def test_single_edge_symmetric(self):
        a = build_graph(2, [(0, 1)], np.zeros((2, 1))).adjacency.to_dense()
        assert a[0, 1] == a[1, 0] == 1.0

    def test_both_orientations_dedup(self):
        g = build_graph(3, [(0, 1), (1, 0), (1, 2)], np.zeros((3, 1)))
        assert g.adjacency.nnz == 4
        np.testing.assert_array_equal(g.edge_list(), [[0, 1], [1, 2]])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)).filter(lambda e: e[0] != e[1]), max_size=30, unique=True))
    def test_dedup_matches_set_oracle(self, edges):
        g = build_graph(8, edges, np.zeros((8, 1)))
        expected = {(min(u, v), max(u, v)) for u, v in edges}
        assert {tuple(e) for e in g.edge_list().tolist()} == expected
        assert g.adjacency.is_symmetric()

    def test_same_orientation_twice_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            build_graph(3, [(0, 1), (0, 1)], np.zeros((3, 1)))

    def test_self_loop_rejected(self):
        with pytest.raises(ValidationError, match="self-loop"):
            build_graph(3, [(1, 1)], np.zeros((3, 1)))

    @pytest.mark.parametrize("edge", [(0, 3), (-1, 0)])
    def test_out_of_range_rejected(self, edge):
        with pytest.raises(ValidationError, match="out of range"):
            build_graph(3, [edge], np.zeros((3, 1)))

    def test_feature_rows_checked(self):
        with pytest.raises(DimensionError):
            build_graph(3, [], np.zeros((2, 1)))

    def test_label_length_checked(self):
        with pytest.raises(DimensionError):
            build_graph(3, [], np.zeros((3, 1)), [0, 1])


class TestCombine:
    def test_block_diagonal(self):
        s = build_graph(2, [(0, 1)], np.ones((2, 3)))
        t = build_graph(2, [(0, 1)], 2 * np.ones((2, 3)))
        cg = combine(s, t)
        expected = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], float)
        np.testing.assert_array_equal(cg.combined_adjacency.to_dense(), expected)
        np.testing.assert_array_equal(cg.features, np.vstack([s.features, t.features]))
        assert cg.offset == 2 and cg.num_inserted == 0

    def test_edgeless(self):
        cg = combine(build_graph(2, [], np.ones((2, 1))), build_graph(3, [], np.ones((3, 1))))
        assert cg.combined_adjacency.nnz == 0

    def test_feature_mismatch(self):
        with pytest.raises(ValidationError):
            combine(build_graph(2, [], np.ones((2, 1))), build_graph(2, [], np.ones((2, 2))))

    def test_domains_tagged(self):
        cg = combine(*_pair())
        assert (cg.source.domain, cg.target.domain) == ("source", "target")


class TestNormalize:
    def test_isolated_node(self):
        out = symmetric_normalize(SparseMatrix.empty((3, 3))).to_dense()
        np.testing.assert_array_equal(out, np.eye(3))

    def test_unit_edge(self):
        a = SparseMatrix.from_triplets([0, 1], [1, 0], [1.0, 1.0], (2, 2))
        np.testing.assert_allclose(symmetric_normalize(a).to_dense(), np.full((2, 2), 0.5), atol=1e-15)

    @pytest.mark.parametrize("w", [0.2, 0.5, 0.95])
    def test_weighted_edge(self, w):
        a = SparseMatrix.from_triplets([0, 1], [1, 0], [w, w], (2, 2))
        out = symmetric_normalize(a).to_dense()
        assert abs(out[0, 1] - w / (1 + w)) < 1e-15
        assert abs(out[0, 0] - 1 / (1 + w)) < 1e-15

    def test_asymmetric_rejected(self):
        with pytest.raises(ValidationError):
            symmetric_normalize(SparseMatrix.from_triplets([0], [1], [1.0], (2, 2)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 10), st.floats(0.0, 1.0), st.integers(0, 2**31))
    def test_matches_dense_oracle_and_spectrum(self, n, density, seed):
        s, dense = random_sparse(np.random.default_rng(seed), n, density)
        out = symmetric_normalize(s).to_dense()
        np.testing.assert_allclose(out, gcn_normalize_dense(dense), atol=1e-14)
        np.testing.assert_array_equal(out, out.T)
        eig = np.linalg.eigvalsh(out)
        assert eig.min() >= -1 - 1e-12 and eig.max() <= 1 + 1e-12


class TestApplyInsertions:
    def test_empty_round_trip(self):
        cg = combine(*_pair())
        before = cg.combined_adjacency
        apply_insertions(cg, [])
        assert cg.combined_adjacency == before

    def test_one_pair(self):
        cg = combine(*_pair())
        apply_insertions(cg, [(1, 2, 0.95)], 0.94)
        a = cg.combined_adjacency.to_dense()
        cross = a[:3, 3:]
        assert np.count_nonzero(cross) == 1 and cross[2, 1] == 0.95
        assert a[2, 4] == a[4, 2] == 0.95

    def test_original_edges_keep_weight_one(self):
        cg = combine(*_pair())
        apply_insertions(cg, [(0, 0, 0.99), (0, 1, 0.97)], 0.94)
        a = cg.combined_adjacency.to_dense()
        assert a[0, 1] == a[1, 0] == 1.0 and a[3, 4] == 1.0

    def test_replaces_previous_set(self):
        cg = combine(*_pair())
        apply_insertions(cg, [(0, 0, 0.99)], 0.94)
        apply_insertions(cg, [(1, 2, 0.96)], 0.94)
        assert [(e.source, e.target, e.weight) for e in cg.inserted_edges] == [(2, 4, 0.96)]

    def test_accumulate_keeps_previous(self):
        cg = combine(*_pair())
        apply_insertions(cg, [(0, 0, 0.99)], 0.94)
        apply_insertions(cg, [(1, 2, 0.96), (0, 0, 0.95)], 0.94, accumulate=True)
        got = {(e.source, e.target): e.weight for e in cg.inserted_edges}
        assert got == {(0, 3): 0.95, (2, 4): 0.96}

    @pytest.mark.parametrize("score", [0.94, 0.5, 1.2])
    def test_score_outside_range(self, score):
        with pytest.raises(ValidationError):
            apply_insertions(combine(*_pair()), [(0, 0, score)], 0.94)

    @pytest.mark.parametrize("pair", [(2, 0), (0, 3), (-1, 0)])
    def test_pair_outside_domains(self, pair):
        with pytest.raises(ValidationError, match="does not join"):
            apply_insertions(combine(*_pair()), [(pair[0], pair[1], 0.99)], 0.94)

    def test_candidate_membership(self):
        table = CandidateTable(np.array([[0, 1], [2, 1]]), 2)
        cg = combine(*_pair())
        apply_insertions(cg, [(1, 2, 0.99)], 0.94, candidates=table)
        with pytest.raises(ValidationError, match="not a candidate"):
            apply_insertions(cg, [(0, 2, 0.99)], 0.94, candidates=table)

    def test_duplicate_pair_rejected(self):
        with pytest.raises(ValidationError, match="twice"):
            apply_insertions(combine(*_pair()), [(0, 0, 0.99), (0, 0, 0.98)], 0.94)

    def test_array_form_matches_tuple_form(self):
        a, b = combine(*_pair()), combine(*_pair())
        apply_insertions(a, [(1, 2, 0.96), (0, 1, 0.99)], 0.94)
        apply_insertions(b, (np.array([1, 0]), np.array([2, 1]), np.array([0.96, 0.99])), 0.94)
        assert a.combined_adjacency == b.combined_adjacency

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(0, 12))
    def test_adjacency_entrywise(self, seed, n_pick):
        rng = np.random.default_rng(seed)
        ns, nt = 5, 4
        s = build_graph(ns, [(0, 1), (1, 2), (3, 4)], rng.normal(size=(ns, 2)))
        t = build_graph(nt, [(0, 1), (2, 3)], rng.normal(size=(nt, 2)), domain="target")
        table = CandidateTable(np.array([rng.permutation(ns)[:3] for _ in range(nt)]), 3)
        cg = combine(s, t)
        base = cg.base_adjacency.to_dense()
        pool = [(i, int(j)) for i in range(nt) for j in table.candidates[i]]
        chosen = [pool[k] for k in rng.choice(len(pool), size=min(n_pick, len(pool)), replace=False)]
        accepted = [(i, j, float(rng.uniform(0.9401, 1.0))) for i, j in chosen]
        apply_insertions(cg, accepted, 0.94, candidates=table)
        recorded = {(j, ns + i): w for i, j, w in accepted}
        cands = [set(row.tolist()) for row in table.candidates]
        dense = cg.combined_adjacency.to_dense()
        assert adjacency_violations(dense, base, ns, recorded, cands, 0.94) == []
        np.testing.assert_array_equal(dense[:ns, :ns], s.adjacency.to_dense())
        np.testing.assert_array_equal(dense[ns:, ns:], t.adjacency.to_dense())
