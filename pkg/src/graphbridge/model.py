"""Shared GCN encoder, link-predictor MLP and softmax classifier.

Parameters live in a flat ``dict[str, ndarray]``:

======  ===========  ==============================
key     shape        role
======  ===========  ==============================
W1      d x h1       encoder layer 1
W2      h1 x h2      encoder layer 2
P1      h2 x h2      predictor layer 1
P2      h2 x h2      predictor layer 2
Wc      h2 x C       classifier weights
bc      C            classifier bias
======  ===========  ==============================
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .errors import DimensionError
from .numkernel import SparseMatrix, Tensor

ENCODER_KEYS = ("W1", "W2")
PREDICTOR_KEYS = ("P1", "P2")
CLASSIFIER_KEYS = ("Wc", "bc")
PARAM_KEYS = ENCODER_KEYS + PREDICTOR_KEYS + CLASSIFIER_KEYS


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(feature_dim: int, num_classes: int, hidden=(128, 64), seed: int = 0) -> dict:
    h1, h2 = hidden
    rng = np.random.default_rng(seed)
    return {
        "W1": _glorot(rng, feature_dim, h1),
        "W2": _glorot(rng, h1, h2),
        "P1": _glorot(rng, h2, h2),
        "P2": _glorot(rng, h2, h2),
        "Wc": _glorot(rng, h2, num_classes),
        "bc": np.zeros(num_classes),
    }


def params_digest(params) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        a = np.ascontiguousarray(params[k], dtype=np.float64)
        h.update(k.encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


@dataclass
class EmbeddingSet:
    """Encoder outputs for one epoch: per-domain, combined, and predictor views."""

    h_source: Tensor
    h_target: Tensor
    h_combined: Tensor
    z_combined: Tensor | None = None

    @property
    def offset(self) -> int:
        return self.h_source.value.shape[0]

    def combined_target_rows(self) -> Tensor:
        n_s = self.offset
        n_c = self.h_combined.value.shape[0]
        return nk.take_rows(self.h_combined, np.arange(n_s, n_c))


def encoder_forward(params, normalized_adj: SparseMatrix, features) -> Tensor:
    """H = Â · relu(Â · X · W1) · W2."""
    x = nk.as_tensor(features)
    w1, w2 = nk.as_tensor(params["W1"]), nk.as_tensor(params["W2"])
    if x.value.shape[1] != w1.value.shape[0]:
        raise DimensionError(f"features have {x.value.shape[1]} columns, encoder expects {w1.value.shape[0]}")
    h = nk.relu(nk.matmul(nk.spmm(normalized_adj, x), w1))
    return nk.spmm(normalized_adj, nk.matmul(h, w2))


def predictor_embed(params, h) -> Tensor:
    """Z = relu(H · P1) · P2."""
    h = nk.as_tensor(h)
    p1 = nk.as_tensor(params["P1"])
    if h.value.shape[1] != p1.value.shape[0]:
        raise DimensionError(f"embeddings have {h.value.shape[1]} columns, predictor expects {p1.value.shape[0]}")
    return nk.matmul(nk.relu(nk.matmul(h, p1)), params["P2"])


def edge_score(z_i, z_j) -> float:
    z_i, z_j = np.asarray(z_i, dtype=np.float64), np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise DimensionError("edge_score needs equal-length vectors")
    return float(nk.sigmoid_array(np.array([z_i @ z_j]))[0])


def pair_scores(z, rows, cols) -> Tensor:
    """sigmoid(z_r · z_c) for index arrays of equal shape; result has that shape."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    shape = rows.shape
    dots = nk.rowdot(nk.take_rows(z, rows.reshape(-1)), nk.take_rows(z, cols.reshape(-1)))
    return nk.reshape(nk.sigmoid(dots), shape)


def logits(params, h) -> Tensor:
    h = nk.as_tensor(h)
    wc = nk.as_tensor(params["Wc"])
    if h.value.shape[1] != wc.value.shape[0]:
        raise DimensionError(f"embeddings have {h.value.shape[1]} columns, classifier expects {wc.value.shape[0]}")
    return nk.add_bias(nk.matmul(h, wc), params["bc"])


def classify(params, h) -> Tensor:
    """Row-wise softmax class probabilities."""
    return nk.softmax_rows(logits(params, h))
