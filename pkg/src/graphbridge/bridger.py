"""Cross-domain candidate selection, thresholded edge acceptance and negative sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .errors import SamplingError, ValidationError
from .numkernel import SparseMatrix


@dataclass(frozen=True)
class InsertionDecision:
    target: int  # local target id
    source: int  # source id (source ids are global ids)
    score: float
    accepted: bool


@dataclass(frozen=True, eq=False)
class CandidateTable:
    """Per-target-node top-K source ids ordered by decreasing similarity."""

    candidates: np.ndarray  # (N_T, K_eff) int64
    k: int
    built_from: str = ""
    similarity_evaluations: int = 0

    def __post_init__(self):
        self.candidates.setflags(write=False)

    @property
    def num_targets(self) -> int:
        return self.candidates.shape[0]

    def candidate_set(self, i: int) -> set:
        return set(self.candidates[i].tolist())

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(self.candidates.tobytes()).hexdigest()[:16]


@dataclass
class ScoredCandidates:
    """Every (target, candidate) score computed in one selection pass."""

    targets: np.ndarray
    sources: np.ndarray
    scores: np.ndarray
    threshold: float
    evaluations: int = 0
    accepted_mask: np.ndarray = field(init=False)

    def __post_init__(self):
        self.accepted_mask = self.scores > self.threshold

    def decisions(self) -> list:
        return [
            InsertionDecision(int(i), int(j), float(s), bool(a))
            for i, j, s, a in zip(self.targets, self.sources, self.scores, self.accepted_mask)
        ]

    def accepted(self) -> list:
        m = self.accepted_mask
        return [
            InsertionDecision(int(i), int(j), float(s), True)
            for i, j, s in zip(self.targets[m], self.sources[m], self.scores[m])
        ]

    def accepted_arrays(self):
        m = self.accepted_mask
        return self.targets[m], self.sources[m], self.scores[m]

    @property
    def num_accepted(self) -> int:
        return int(self.accepted_mask.sum())


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity of every row of ``a`` with every row of ``b``.

    Zero-norm rows of ``b`` give -inf; zero-norm rows of ``a`` give nan.
    """
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = (a @ b.T) / np.outer(na, nb)
    sim[:, nb == 0] = -np.inf
    sim[na == 0, :] = np.nan
    return sim


def build_candidate_table(h_source, h_target, k: int = 50, *, built_from: str = "", chunk: int = 1024) -> CandidateTable:
    """Top-k most cosine-similar source nodes for every target node.

    Ties break toward the lower source id. Zero-norm source embeddings are
    never selected; a zero-norm target embedding is an error.
    """
    h_source = np.asarray(h_source, dtype=np.float64)
    h_target = np.asarray(h_target, dtype=np.float64)
    if k < 1:
        raise ValidationError("candidate size K must be at least 1")
    if h_source.shape[1] != h_target.shape[1]:
        raise ValidationError("source and target embeddings differ in width")
    t_norm = np.linalg.norm(h_target, axis=1)
    if np.any(t_norm == 0):
        raise ValidationError(f"target node {int(np.flatnonzero(t_norm == 0)[0])} has an all-zero embedding")
    valid_sources = int(np.count_nonzero(np.linalg.norm(h_source, axis=1)))
    k_eff = min(k, valid_sources)
    n_t, n_s = h_target.shape[0], h_source.shape[0]
    out = np.empty((n_t, k_eff), dtype=np.int64)
    evaluations = 0
    for lo in range(0, n_t, chunk):
        sim = cosine_matrix(h_target[lo : lo + chunk], h_source)
        evaluations += sim.size
        out[lo : lo + chunk] = np.argsort(-sim, axis=1, kind="stable")[:, :k_eff]
    assert evaluations == n_s * n_t
    return CandidateTable(out, k, built_from, evaluations)


def score_and_select(z_combined, table: CandidateTable, threshold: float = 0.94, offset: int | None = None) -> ScoredCandidates:
    """Score every (target, candidate) pair with sigmoid(z_i · z_j) and threshold.

    ``offset`` is the global index of the first target node (defaults to
    ``len(z) - N_T``). Exactly ``table.candidates.size`` scores are computed.
    """
    z = np.asarray(getattr(z_combined, "value", z_combined), dtype=np.float64)
    n_t, k_eff = table.candidates.shape
    if offset is None:
        offset = z.shape[0] - n_t
    targets = np.repeat(np.arange(n_t), k_eff)
    sources = table.candidates.reshape(-1)
    dots = np.einsum("ij,ij->i", z[offset + targets], z[sources])
    scores = nk.sigmoid_array(dots)
    return ScoredCandidates(targets, sources.copy(), scores, threshold, evaluations=int(scores.size))


# ---------------------------------------------------------------------------
# Negative sampling
# ---------------------------------------------------------------------------


def _edge_keys(adj: SparseMatrix) -> np.ndarray:
    rows, cols, _ = adj.triplets()
    return rows * adj.shape[1] + cols  # sorted, since CSR rows/cols are sorted


def _rows_distinct(draw: np.ndarray) -> np.ndarray:
    if draw.shape[1] == 1:
        return np.ones(draw.shape[0], dtype=bool)
    s = np.sort(draw, axis=1)
    return np.all(np.diff(s, axis=1) != 0, axis=1)


def sample_edge_negatives_batch(adj: SparseMatrix, anchors, m: int, rng: np.random.Generator, *, max_rounds: int = 32) -> np.ndarray:
    """For each anchor, m distinct nodes outside its neighbourhood and itself.

    Returns an (len(anchors), m) array. Rows are drawn by whole-row rejection,
    which is uniform over valid m-subsets; stragglers fall back to an explicit
    draw from the allowed set.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    n = adj.shape[0]
    if m < 1:
        raise SamplingError("need at least one negative per anchor")
    # graphs never store self-loops
    avail = n - 1 - np.diff(adj.indptr)
    short = anchors[avail[anchors] < m]
    if short.size:
        raise SamplingError(f"node {int(short[0])} has only {int(avail[short[0]])} non-neighbours, need {m}")
    keys = _edge_keys(adj)
    out = np.empty((anchors.size, m), dtype=np.int64)
    pending = np.arange(anchors.size)
    for _ in range(max_rounds):
        if pending.size == 0:
            break
        draw = rng.integers(0, n, size=(pending.size, m))
        a = anchors[pending][:, None]
        probe = (a * n + draw).reshape(-1)
        pos = np.searchsorted(keys, probe)
        if keys.size:
            hit = (pos < keys.size) & (keys[np.minimum(pos, keys.size - 1)] == probe)
        else:
            hit = np.zeros(probe.shape, dtype=bool)
        bad = hit.reshape(draw.shape) | (draw == a)
        ok = ~bad.any(axis=1) & _rows_distinct(draw)
        out[pending[ok]] = draw[ok]
        pending = pending[~ok]
    for r in pending:
        a = anchors[r]
        nbrs, _ = adj.row(a)
        allowed = np.setdiff1d(np.arange(n), np.append(nbrs, a))
        out[r] = rng.choice(allowed, size=m, replace=False)
    return out


def sample_edge_negatives(adj: SparseMatrix, anchor: int, neighbor: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """m negatives for the positive pair (anchor, neighbor); depends only on the anchor's neighbourhood."""
    return sample_edge_negatives_batch(adj, [anchor], m, rng)[0]


def sample_node_negatives_batch(n_target: int, anchors, m: int, rng: np.random.Generator) -> np.ndarray:
    """For each anchor, m distinct target ids different from the anchor."""
    anchors = np.asarray(anchors, dtype=np.int64)
    if m < 1 or m > n_target - 1:
        raise SamplingError(f"cannot draw {m} non-self negatives from {n_target} target nodes")
    out = np.empty((anchors.size, m), dtype=np.int64)
    pending = np.arange(anchors.size)
    while pending.size:
        draw = rng.integers(0, n_target - 1, size=(pending.size, m))
        draw = draw + (draw >= anchors[pending][:, None])
        ok = _rows_distinct(draw)
        out[pending[ok]] = draw[ok]
        pending = pending[~ok]
    return out


def sample_node_negatives(n_target: int, anchor: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return sample_node_negatives_batch(n_target, [anchor], m, rng)[0]


def random_insert_baseline(h_source, h_target, t_sim: float, rng: np.random.Generator, *, budget: int | None = None, candidates: CandidateTable | None = None):
    """Random cross-domain pairs whose cosine similarity exceeds ``t_sim``, weight 1.

    With a ``budget`` a uniform subset of that size is drawn from the eligible
    pairs (all of them if fewer); without one every eligible pair is returned.
    Returns parallel arrays (target ids, source ids, weights), the form
    :func:`apply_insertions` accepts; use :func:`as_decisions` for objects.
    """
    sim = cosine_matrix(np.asarray(h_target, dtype=np.float64), np.asarray(h_source, dtype=np.float64))
    eligible = np.nan_to_num(sim, nan=-np.inf) > t_sim
    if candidates is not None:
        mask = np.zeros_like(eligible)
        rows = np.repeat(np.arange(candidates.num_targets), candidates.candidates.shape[1])
        mask[rows, candidates.candidates.reshape(-1)] = True
        eligible &= mask
    ti, sj = np.nonzero(eligible)
    if budget is not None and budget < ti.size:
        pick = np.sort(rng.choice(ti.size, size=max(int(budget), 0), replace=False))
        ti, sj = ti[pick], sj[pick]
    return ti, sj, np.ones(ti.size)


def as_decisions(arrays) -> list:
    t, s, w = arrays
    return [InsertionDecision(int(i), int(j), float(x), True) for i, j, x in zip(t, s, w)]
