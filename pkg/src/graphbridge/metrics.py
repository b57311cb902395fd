"""Evaluation quantities. None of these ever feed back into training."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError


def accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValidationError("prediction and label vectors differ in length")
    if predicted.size == 0:
        raise ValidationError("accuracy of an empty vector")
    return float(np.mean(predicted == truth))


def auroc(scores, labels) -> float:
    """Mann-Whitney estimate; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUROC needs both classes present")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def center_distance(h_source, labels_source, h_target, labels_target, num_classes: int | None = None) -> list:
    """Per-class ‖mean target embedding − mean source embedding‖₂; None where a side lacks the class."""
    h_source = np.asarray(h_source, dtype=np.float64)
    h_target = np.asarray(h_target, dtype=np.float64)
    ls = np.asarray(labels_source)
    lt = np.asarray(labels_target)
    if num_classes is None:
        num_classes = int(max(ls.max(initial=-1), lt.max(initial=-1))) + 1
    out = []
    for c in range(num_classes):
        s, t = ls == c, lt == c
        if not s.any() or not t.any():
            out.append(None)
            continue
        out.append(float(np.linalg.norm(h_target[t].mean(axis=0) - h_source[s].mean(axis=0))))
    return out


def intra_class_edge_ratio(inserted, source_labels, target_labels, offset: int) -> float | None:
    """Fraction of inserted (source global, target global, ...) edges joining equal classes."""
    inserted = np.asarray(inserted)
    if inserted.size == 0:
        return None
    src = inserted[:, 0].astype(np.int64)
    tgt = inserted[:, 1].astype(np.int64) - offset
    same = np.asarray(source_labels)[src] == np.asarray(target_labels)[tgt]
    return float(same.mean())


def _cos(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return None
    return float(a @ b / (na * nb))


def domain_similarity(h_source, h_target, inserted, h_combined) -> tuple:
    """(cosine of domain mean embeddings, mean cosine over inserted endpoint pairs)."""
    h_source = np.asarray(h_source, dtype=np.float64)
    h_target = np.asarray(h_target, dtype=np.float64)
    dom = _cos(h_source.mean(axis=0), h_target.mean(axis=0))
    inserted = np.asarray(inserted)
    if inserted.size == 0:
        return dom, None
    hc = np.asarray(h_combined, dtype=np.float64)
    a = hc[inserted[:, 0].astype(np.int64)]
    b = hc[inserted[:, 1].astype(np.int64)]
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    ok = (na > 0) & (nb > 0)
    if not ok.any():
        return dom, None
    pair = float(np.mean(np.einsum("ij,ij->i", a[ok], b[ok]) / (na[ok] * nb[ok])))
    return dom, pair


@dataclass
class MetricsRecord:
    epoch: int
    target_accuracy: float | None
    target_auroc: float | None
    losses: dict
    inserted_edge_count: int
    inserted_edges_per_node: float
    intra_class_edge_ratio: float | None
    center_distance: list = field(default_factory=list)
    domain_similarity: float | None = None
    inserted_pair_similarity: float | None = None
    predictor_evaluations: int = 0

    def __post_init__(self):
        if self.intra_class_edge_ratio is not None and not 0.0 <= self.intra_class_edge_ratio <= 1.0:
            raise ValidationError("intra-class ratio outside [0, 1]")
        if self.inserted_edge_count < 0:
            raise ValidationError("negative edge count")
        if self.target_accuracy is not None and not 0.0 <= self.target_accuracy <= 1.0:
            raise ValidationError("accuracy outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)
