"""Single-domain graphs, the combined source+target graph, and GCN normalisation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ValidationError
from .numkernel import DTYPE, SparseMatrix

SOURCE = "source"
TARGET = "target"


@dataclass(frozen=True, eq=False)
class Graph:
    node_count: int
    adjacency: SparseMatrix
    features: np.ndarray
    labels: np.ndarray | None = None
    label_mask: np.ndarray | None = None
    domain: str = SOURCE

    def __post_init__(self):
        n = self.node_count
        if self.adjacency.shape != (n, n):
            raise DimensionError(f"adjacency shape {self.adjacency.shape} does not match {n} nodes")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DimensionError(f"features must have {n} rows, got shape {self.features.shape}")
        if self.labels is not None and self.labels.shape != (n,):
            raise DimensionError("labels length must equal node count")
        if self.label_mask is not None and self.label_mask.shape != (n,):
            raise DimensionError("label mask length must equal node count")
        if self.domain not in (SOURCE, TARGET):
            raise ValidationError(f"unknown domain tag {self.domain!r}")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an (M, 2) array with u < v."""
        rows, cols, _ = self.adjacency.triplets()
        keep = rows < cols
        return np.stack([rows[keep], cols[keep]], axis=1)

    def with_label_mask(self, mask) -> "Graph":
        return Graph(self.node_count, self.adjacency, self.features, self.labels, np.asarray(mask, dtype=bool), self.domain)

    def with_domain(self, domain: str) -> "Graph":
        return Graph(self.node_count, self.adjacency, self.features, self.labels, self.label_mask, domain)


def build_graph(num_nodes: int, edges: Iterable[Sequence[int]], features, labels=None, *, domain=SOURCE, label_mask=None) -> Graph:
    """Validate an undirected edge list and build a symmetric graph.

    An undirected edge may be listed once or in both orientations; listing the
    same orientation twice is rejected, as are self-loops.
    """
    features = np.array(features, dtype=DTYPE, ndmin=2)
    if num_nodes == 0:
        features = features.reshape(0, features.shape[-1] if features.size else 0)
    edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        if edges.min() < 0 or edges.max() >= num_nodes:
            bad = edges[(edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1)][0]
            raise ValidationError(f"edge endpoint out of range: ({bad[0]}, {bad[1]}) for {num_nodes} nodes")
        loops = edges[:, 0] == edges[:, 1]
        if loops.any():
            raise ValidationError(f"self-loop on node {edges[loops][0, 0]}")
        directed = {}
        for u, v in edges.tolist():
            if (u, v) in directed:
                raise ValidationError(f"duplicate edge ({u}, {v})")
            directed[(u, v)] = True
        undirected = sorted({(min(u, v), max(u, v)) for u, v in directed})
        und = np.array(undirected, dtype=np.int64).reshape(-1, 2)
    else:
        und = np.zeros((0, 2), dtype=np.int64)
    rows = np.concatenate([und[:, 0], und[:, 1]])
    cols = np.concatenate([und[:, 1], und[:, 0]])
    adjacency = SparseMatrix.from_triplets(rows, cols, np.ones(rows.size), (num_nodes, num_nodes))
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and labels.min() < 0:
            raise ValidationError("labels must be non-negative class ids")
    if label_mask is None and labels is not None:
        label_mask = np.ones(num_nodes, dtype=bool)
    elif label_mask is not None:
        label_mask = np.asarray(label_mask, dtype=bool)
    return Graph(num_nodes, adjacency, features, labels, label_mask, domain)


def symmetric_normalize(adj: SparseMatrix) -> SparseMatrix:
    """D̃^{-1/2} (A + I) D̃^{-1/2} with D̃ the weighted degree of A + I."""
    if not adj.is_symmetric():
        raise ValidationError("adjacency must be symmetric")
    n = adj.shape[0]
    a = adj.to_scipy() + sp.identity(n, dtype=DTYPE, format="csr")
    a = sp.csr_matrix(a)
    a.sort_indices()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    out = sp.csr_matrix(d @ a @ d)
    out.sort_indices()
    # symmetrise exactly so the stored matrix is bitwise symmetric
    out = sp.csr_matrix(0.5 * (out + out.T))
    out.sort_indices()
    data = np.minimum(out.data, 1.0)
    return SparseMatrix((n, n), out.indptr, out.indices, data)


@dataclass(frozen=True)
class InsertedEdge:
    source: int  # global id in [0, N^S)
    target: int  # global id in [N^S, N^S + N^T)
    weight: float


class CombinedGraph:
    """Disjoint union of source and target plus a mutable cross-domain edge set.

    Inserted edges are kept as parallel arrays (source global id, target
    global id, weight), sorted by (source, target).
    """

    def __init__(self, source: Graph, target: Graph):
        self.source = source
        self.target = target
        self._base = _block_diagonal(source.adjacency, target.adjacency)
        self._set_inserted(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    def _set_inserted(self, src, tgt, w):
        self.inserted_source = np.asarray(src, dtype=np.int64)
        self.inserted_target = np.asarray(tgt, dtype=np.int64)
        self.inserted_weight = np.asarray(w, dtype=DTYPE)
        self._cache = None

    @property
    def offset(self) -> int:
        return self.source.node_count

    @property
    def node_count(self) -> int:
        return self.source.node_count + self.target.node_count

    @property
    def num_inserted(self) -> int:
        return int(self.inserted_source.size)

    @property
    def features(self) -> np.ndarray:
        return np.vstack([self.source.features, self.target.features])

    @property
    def inserted_edges(self) -> list:
        return [
            InsertedEdge(int(u), int(v), float(w))
            for u, v, w in zip(self.inserted_source, self.inserted_target, self.inserted_weight)
        ]

    @property
    def base_adjacency(self) -> SparseMatrix:
        return self._base

    @property
    def combined_adjacency(self) -> SparseMatrix:
        if self._cache is None:
            self._cache = self._rebuild()
        return self._cache

    def _rebuild(self) -> SparseMatrix:
        if self.num_inserted == 0:
            return self._base
        n = self.node_count
        br, bc, bw = self._base.triplets()
        src, tgt, w = self.inserted_source, self.inserted_target, self.inserted_weight
        rows = np.concatenate([br, src, tgt])
        cols = np.concatenate([bc, tgt, src])
        vals = np.concatenate([bw, w, w])
        return SparseMatrix.from_triplets(rows, cols, vals, (n, n))

    def inserted_array(self) -> np.ndarray:
        """(E, 3) array of (source global, target global, weight)."""
        return np.column_stack([self.inserted_source, self.inserted_target, self.inserted_weight]).reshape(-1, 3)


def _block_diagonal(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    n_a = a.shape[0]
    n = n_a + b.shape[0]
    indptr = np.concatenate([a.indptr, a.indptr[-1] + b.indptr[1:]])
    indices = np.concatenate([a.indices, b.indices + n_a])
    data = np.concatenate([a.data, b.data])
    return SparseMatrix((n, n), indptr, indices, data)


def combine(source: Graph, target: Graph) -> CombinedGraph:
    if source.feature_dim != target.feature_dim:
        raise ValidationError(f"feature dimensions differ: {source.feature_dim} vs {target.feature_dim}")
    return CombinedGraph(source.with_domain(SOURCE), target.with_domain(TARGET))


def apply_insertions(cg: CombinedGraph, accepted, threshold: float = 0.94, *, candidates=None, accumulate: bool = False) -> CombinedGraph:
    """Replace (or with ``accumulate`` extend) the cross-domain edge set.

    ``accepted`` is either a sequence of decisions (objects with ``target``
    local target id, ``source`` id and ``score``, or 3-tuples in that order)
    or a tuple of three parallel arrays. With a candidate table every source
    must lie in its target's candidate list.
    """
    targets, sources, scores = _as_arrays(accepted)
    n_s, n_t = cg.source.node_count, cg.target.node_count
    bad = (targets < 0) | (targets >= n_t) | (sources < 0) | (sources >= n_s)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"pair (target {targets[k]}, source {sources[k]}) does not join the two domains")
    low = ~(scores > threshold) | (scores > 1.0)
    if low.any():
        k = int(np.flatnonzero(low)[0])
        raise ValidationError(f"score {scores[k]} for (target {targets[k]}, source {sources[k]}) is not in ({threshold}, 1]")
    if candidates is not None:
        member = (candidates.candidates[targets] == sources[:, None]).any(axis=1)
        if not member.all():
            k = int(np.flatnonzero(~member)[0])
            raise ValidationError(f"source {sources[k]} is not a candidate of target {targets[k]}")
    src = sources
    tgt = targets + cg.offset
    if accumulate and cg.num_inserted:
        # newer scores win for pairs present in both sets
        src = np.concatenate([sources, cg.inserted_source])
        tgt = np.concatenate([targets + cg.offset, cg.inserted_target])
        scores = np.concatenate([scores, cg.inserted_weight])
    keys = src * cg.node_count + tgt
    _, first = np.unique(keys, return_index=True)  # sorted by key, first occurrence kept
    if first.size != keys.size and not accumulate:
        raise ValidationError("the same cross-domain pair was accepted twice")
    cg._set_inserted(src[first], tgt[first], scores[first])
    return cg


def _as_arrays(accepted):
    if isinstance(accepted, tuple) and len(accepted) == 3 and all(isinstance(a, np.ndarray) for a in accepted):
        t, s, w = accepted
    else:
        items = list(accepted)
        rows = [it if isinstance(it, tuple) else (it.target, it.source, it.score) for it in items]
        arr = np.array(rows, dtype=DTYPE).reshape(-1, 3)
        t, s, w = arr[:, 0], arr[:, 1], arr[:, 2]
    return np.asarray(t, dtype=np.int64), np.asarray(s, dtype=np.int64), np.asarray(w, dtype=DTYPE)
