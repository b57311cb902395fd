"""Training losses: source cross-entropy, target entropy, edge reconstruction, contrastive MI."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .errors import ValidationError
from .numkernel import Tensor

PROB_FLOOR = 1e-12

# number of probabilities that hit PROB_FLOOR, keyed by loss name
clamp_events: Counter = Counter()


def loss_clf(probs, labels, mask=None) -> Tensor:
    """Mean negative log-likelihood of the true class over the masked rows."""
    probs = nk.as_tensor(probs)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(labels.size) if mask is None else np.flatnonzero(np.asarray(mask, dtype=bool))
    if rows.size == 0:
        raise ValidationError("classification loss needs at least one labelled node")
    picked = nk.pick(probs, rows, labels[rows])
    clamp_events["clf"] += int(np.count_nonzero(picked.value <= PROB_FLOOR))
    return nk.scale(nk.mean_all(nk.log_clamped(picked, PROB_FLOOR)), -1.0)


def loss_entropy(probs) -> Tensor:
    """Mean Shannon entropy of the rows (0·log 0 = 0)."""
    probs = nk.as_tensor(probs)
    n = probs.value.shape[0]
    if n == 0:
        raise ValidationError("entropy loss needs at least one row")
    return nk.scale(nk.sum_all(nk.xlogx(probs, PROB_FLOOR)), -1.0 / n)


def ra_weights(anchors) -> np.ndarray:
    """Per-pair weight 1 / (|N(i)| · #nodes with neighbours)."""
    anchors = np.asarray(anchors, dtype=np.int64)
    if anchors.size == 0:
        return np.zeros(0)
    nodes, inverse, counts = np.unique(anchors, return_inverse=True, return_counts=True)
    return 1.0 / (counts[inverse] * nodes.size)


def loss_ra(pos_scores, neg_scores, anchors) -> Tensor:
    """Edge reconstruction loss.

    ``pos_scores[p]`` is S_ij for the p-th (anchor, neighbour) pair,
    ``neg_scores[p]`` holds the m scores S_ik of its sampled negatives and
    ``anchors[p]`` is the anchor id i. Each node averages over its own pairs,
    then nodes are averaged uniformly; isolated nodes contribute nothing.
    """
    pos = nk.as_tensor(pos_scores)
    neg = nk.as_tensor(neg_scores)
    anchors = np.asarray(anchors, dtype=np.int64)
    if pos.value.size == 0:
        return Tensor(0.0)
    if neg.value.ndim != 2 or neg.value.shape[0] != pos.value.shape[0]:
        raise ValidationError("need one row of negative scores per positive pair")
    per_pair = nk.add(nk.square(nk.shift(pos, -1.0)), nk.row_mean(nk.square(neg)))
    return nk.weighted_sum(per_pair, ra_weights(anchors))


def loss_mi(h_combined_target, h_target, negatives, tau: float = 0.3, *, stop_gradient: bool = False) -> Tensor:
    """Contrastive loss between a node's combined-graph and target-graph embeddings.

    ``negatives`` is an (N_T, m) array of target ids; the expectation over
    negatives is the arithmetic mean of their exponentials. Computed as
    logsumexp([pos, neg_k - log m]) - pos, which never overflows.
    """
    if tau <= 0:
        raise ValidationError("temperature must be positive")
    hc = nk.as_tensor(h_combined_target)
    ht = nk.as_tensor(h_target)
    if stop_gradient:
        ht = nk.detach(ht)
    negatives = np.asarray(negatives, dtype=np.int64)
    n, m = negatives.shape
    if hc.value.shape[0] != n or ht.value.shape[0] != n:
        raise ValidationError("one row of negatives per target node is required")
    pos = nk.scale(nk.rowdot(hc, ht), 1.0 / tau)
    anchor_rows = nk.take_rows(hc, np.repeat(np.arange(n), m))
    neg = nk.scale(nk.rowdot(anchor_rows, nk.take_rows(ht, negatives.reshape(-1))), 1.0 / tau)
    neg = nk.shift(nk.reshape(neg, (n, m)), -np.log(m))
    lse = nk.logsumexp_rows(nk.hstack([nk.reshape(pos, (n, 1)), neg]))
    return nk.mean_all(nk.sub(lse, pos))


@dataclass
class LossBundle:
    l_clf: float
    l_entropy: float
    l_ra: float
    l_mi: float
    lambda1: float
    lambda2: float
    lambda3: float
    total: float
    total_tensor: Tensor | None = None

    def as_dict(self) -> dict:
        return {
            "l_clf": self.l_clf,
            "l_entropy": self.l_entropy,
            "l_ra": self.l_ra,
            "l_mi": self.l_mi,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "total": self.total,
        }


def total_objective(l_clf, l_entropy=None, l_ra=None, l_mi=None, lambda1=1.0, lambda2=1.0, lambda3=1.0) -> LossBundle:
    """clf + λ1·entropy + λ2·ra + λ3·mi. Components given as None are left out of the graph."""
    for name, lam in (("lambda1", lambda1), ("lambda2", lambda2), ("lambda3", lambda3)):
        if lam < 0:
            raise ValidationError(f"{name} must be non-negative, got {lam}")
    total = nk.as_tensor(l_clf)
    for comp, lam in ((l_entropy, lambda1), (l_ra, lambda2), (l_mi, lambda3)):
        if comp is not None:
            total = nk.add(total, nk.scale(comp, lam))

    def val(x):
        return 0.0 if x is None else float(nk.as_tensor(x).value)

    return LossBundle(
        val(l_clf), val(l_entropy), val(l_ra), val(l_mi),
        float(lambda1), float(lambda2), float(lambda3),
        float(total.value), total,
    )
