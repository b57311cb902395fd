"""Slow, loop-based reference implementations used to cross-check the package.

Nothing here imports the code under test except plain data containers.
"""

from __future__ import annotations

import math

import numpy as np


def matmul_loops(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def gcn_normalize_dense(a):
    """D̃^{-1/2}(A+I)D̃^{-1/2} entry by entry."""
    a = np.asarray(a, float)
    n = a.shape[0]
    at = a + np.eye(n)
    deg = at.sum(axis=1)
    out = np.zeros_like(at)
    for i in range(n):
        for j in range(n):
            if at[i, j]:
                out[i, j] = at[i, j] / math.sqrt(deg[i] * deg[j])
    return out


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def loss_ra_loops(z, adjacency_lists, negatives):
    """Edge reconstruction loss with explicit loops.

    ``adjacency_lists[i]`` lists the neighbours of i; ``negatives[(i, j)]`` the
    pinned negative ids for pair (i, j).
    """
    per_node = []
    for i, nbrs in enumerate(adjacency_lists):
        if not nbrs:
            continue
        acc = 0.0
        for j in nbrs:
            s_ij = sigmoid(float(np.dot(z[i], z[j])))
            neg = negatives[(i, j)]
            neg_term = 0.0
            for k in neg:
                neg_term += sigmoid(float(np.dot(z[i], z[k]))) ** 2
            acc += (s_ij - 1.0) ** 2 + neg_term / len(neg)
        per_node.append(acc / len(nbrs))
    return sum(per_node) / len(per_node) if per_node else 0.0


def loss_mi_loops(hc, ht, negatives, tau):
    """−mean_i log[e^{p_i} / (e^{p_i} + mean_k e^{n_ik})], written with plain exponentials."""
    total = 0.0
    n = len(hc)
    for i in range(n):
        pos = math.exp(float(np.dot(hc[i], ht[i])) / tau)
        neg = 0.0
        for k in negatives[i]:
            neg += math.exp(float(np.dot(hc[i], ht[k])) / tau)
        neg /= len(negatives[i])
        total += -math.log(pos / (pos + neg))
    return total / n


def auroc_pairs(scores, labels):
    """P(score of random positive > score of random negative), ties one half."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def cosine_topk(h_source, h_target, k):
    """Top-k source ids per target by cosine, lower id first on ties."""
    out = []
    for t in h_target:
        sims = []
        for j, s in enumerate(h_source):
            ns, nt = np.linalg.norm(s), np.linalg.norm(t)
            sims.append((-(float(s @ t) / (ns * nt)) if ns > 0 else math.inf, j))
        sims.sort()
        out.append([j for _, j in sims[:k]])
    return out


def adjacency_violations(dense, base_dense, n_source, inserted, candidates, threshold):
    """Entrywise check of the combined adjacency; returns a list of problems (empty if fine).

    ``inserted`` maps (source global, target global) to the recorded score and
    ``candidates[i]`` is the candidate set of local target i.
    """
    problems = []
    n = dense.shape[0]
    for u in range(n):
        for v in range(n):
            cross = (u < n_source) != (v < n_source)
            w = dense[u, v]
            if not cross:
                if w != base_dense[u, v]:
                    problems.append(("intra-domain entry changed", u, v))
                elif w not in (0.0, 1.0):
                    problems.append(("original edge weight is not 1", u, v))
                continue
            s, t = (u, v) if u < n_source else (v, u)
            rec = inserted.get((s, t))
            if rec is None:
                if w != 0.0:
                    problems.append(("unrecorded cross-domain entry", u, v))
            else:
                if w != rec:
                    problems.append(("weight differs from recorded score", u, v))
                if not rec > threshold:
                    problems.append(("score not above threshold", u, v))
                if s not in candidates[t - n_source]:
                    problems.append(("source outside candidate set", u, v))
    return problems
