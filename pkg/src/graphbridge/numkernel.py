"""Dense/sparse primitives with a small reverse-mode tape, plus Adam.

Only the operations needed by the encoder, predictor, classifier and the four
training losses are provided. Every op works on :class:`Tensor`; plain arrays
are promoted to constants. When any input belongs to a :class:`Tape` the op
records a backward closure on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, NumericError, ValidationError

DTYPE = np.float64


# ---------------------------------------------------------------------------
# Sparse matrix
# ---------------------------------------------------------------------------


class SparseMatrix:
    """Immutable CSR matrix with weights in (0, 1].

    Column indices are strictly increasing within each row. The scipy mirror
    is built once and used for products (rows are reduced sequentially, so
    results are reproducible bit for bit).
    """

    __slots__ = ("shape", "indptr", "indices", "data", "_csr")

    def __init__(self, shape, indptr, indices, data, *, check=True):
        self.shape = (int(shape[0]), int(shape[1]))
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        if check:
            self._validate()
        for arr in (self.indptr, self.indices, self.data):
            arr.setflags(write=False)
        self._csr = sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def _validate(self):
        n_rows, n_cols = self.shape
        if self.indptr.shape != (n_rows + 1,) or self.indptr[0] != 0:
            raise ValidationError("row offsets must have length rows+1 and start at 0")
        if np.any(np.diff(self.indptr) < 0):
            raise ValidationError("row offsets must be non-decreasing")
        nnz = int(self.indptr[-1])
        if self.indices.shape != (nnz,) or self.data.shape != (nnz,):
            raise ValidationError("indices/data length must equal the last row offset")
        if nnz:
            if self.indices.min() < 0 or self.indices.max() >= n_cols:
                raise ValidationError("column index out of range")
            if not np.all(np.isfinite(self.data)) or self.data.min() <= 0 or self.data.max() > 1:
                raise ValidationError("weights must lie in (0, 1]")
            steps = np.diff(self.indices)
            row_starts = self.indptr[1:-1]
            inside = np.ones(nnz - 1, dtype=bool) if nnz > 1 else np.zeros(0, dtype=bool)
            inside[row_starts[(row_starts > 0) & (row_starts < nnz)] - 1] = False
            if np.any(steps[inside] <= 0):
                raise ValidationError("column indices must be strictly increasing within a row")

    @classmethod
    def from_triplets(cls, rows, cols, weights, shape) -> "SparseMatrix":
        """Build from coordinate triplets; repeated coordinates are an error."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        weights = np.asarray(weights, dtype=DTYPE)
        n_rows, n_cols = int(shape[0]), int(shape[1])
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
            raise ValidationError("triplet index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, weights = rows[order], cols[order], weights[order]
        if rows.size > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if np.any(dup):
                k = int(np.flatnonzero(dup)[0])
                raise ValidationError(f"duplicate entry at ({rows[k]}, {cols[k]})")
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls((n_rows, n_cols), np.cumsum(indptr), cols, weights)

    @classmethod
    def empty(cls, shape) -> "SparseMatrix":
        return cls(shape, np.zeros(shape[0] + 1, dtype=np.int64), [], [])

    @classmethod
    def identity(cls, n) -> "SparseMatrix":
        return cls((n, n), np.arange(n + 1), np.arange(n), np.ones(n))

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def triplets(self):
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        return rows, self.indices.copy(), self.data.copy()

    def row(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def is_symmetric(self) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        diff = self._csr - self._csr.T
        return diff.count_nonzero() == 0

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


# ---------------------------------------------------------------------------
# Tape and tensors
# ---------------------------------------------------------------------------


class Tensor:
    """A float64 array, optionally tracked on a tape."""

    __slots__ = ("value", "tape", "name")

    def __init__(self, value, tape: "Tape | None" = None, name: str | None = None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.value.shape}, traced={self.tape is not None})"


@dataclass
class _Record:
    out: Tensor
    parents: tuple
    backward: Callable


class Tape:
    """Ordered log of differentiable ops; ``backward`` replays it in reverse."""

    def __init__(self):
        self.records: list[_Record] = []
        self.params: dict[str, Tensor] = {}

    def param(self, name: str, value) -> Tensor:
        t = Tensor(np.array(value, dtype=DTYPE), tape=self, name=name)
        self.params[name] = t
        return t

    def watch(self, params: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
        return {k: self.param(k, v) for k, v in params.items()}

    def record(self, out: Tensor, parents, backward):
        self.records.append(_Record(out, tuple(parents), backward))

    def backward(self, out: Tensor) -> dict[str, np.ndarray]:
        """Gradients of scalar ``out`` w.r.t. every registered parameter.

        Parameters not reachable from ``out`` get an exact zero array.
        """
        if out.value.size != 1:
            raise DimensionError("backward requires a scalar output")
        grads: dict[int, np.ndarray] = {id(out): np.ones_like(out.value)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.out), None)
            if g is None:
                continue
            parent_grads = rec.backward(g)
            for p, pg in zip(rec.parents, parent_grads):
                if pg is None or p.tape is not self:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return {
            name: grads.get(id(t), np.zeros_like(t.value)).reshape(t.value.shape)
            for name, t in self.params.items()
        }


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(value, parents, backward) -> Tensor:
    tape = None
    for p in parents:
        if p.tape is not None:
            tape = p.tape
            break
    out = Tensor(value, tape=tape)
    if tape is not None:
        tape.record(out, parents, backward)
    return out


def detach(x) -> Tensor:
    return Tensor(as_tensor(x).value)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def dense_matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(f"cannot multiply {a.value.shape} by {b.value.shape}")
    av, bv = a.value, b.value
    return _op(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


matmul = dense_matmul


def spmm(s: SparseMatrix, d) -> Tensor:
    """Sparse times dense; the sparse operand is a constant."""
    d = as_tensor(d)
    if d.value.ndim != 2 or s.shape[1] != d.value.shape[0]:
        raise DimensionError(f"cannot multiply sparse {s.shape} by {d.value.shape}")
    csr = s.to_scipy()
    out = np.asarray(csr @ d.value, dtype=DTYPE)
    return _op(out, (d,), lambda g: (np.asarray(csr.T @ g, dtype=DTYPE),))


def add_bias(x, b) -> Tensor:
    x, b = as_tensor(x), as_tensor(b)
    if b.value.shape != (x.value.shape[1],):
        raise DimensionError(f"bias {b.value.shape} does not match {x.value.shape}")
    return _op(x.value + b.value, (x, b), lambda g: (g, g.sum(axis=0)))


# ---------------------------------------------------------------------------
# Element-wise
# ---------------------------------------------------------------------------


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0
    return _op(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = sigmoid_array(x.value)
    return _op(s, (x,), lambda g: (g * s * (1.0 - s),))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"shape mismatch {a.value.shape} vs {b.value.shape}")
    return _op(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"shape mismatch {a.value.shape} vs {b.value.shape}")
    return _op(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"shape mismatch {a.value.shape} vs {b.value.shape}")
    av, bv = a.value, b.value
    return _op(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _op(x.value * c, (x,), lambda g: (g * c,))


def shift(x, c) -> Tensor:
    """x + c with c a constant (scalar or broadcastable array)."""
    x = as_tensor(x)
    return _op(x.value + c, (x,), lambda g: (g,))


def square(x) -> Tensor:
    x = as_tensor(x)
    v = x.value
    return _op(v * v, (x,), lambda g: (2.0 * g * v,))


def log_clamped(x, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)); the gradient is zero where the floor is active."""
    x = as_tensor(x)
    v = x.value
    live = v > floor
    safe = np.where(live, v, floor)
    return _op(np.log(safe), (x,), lambda g: (np.where(live, g / safe, 0.0),))


def xlogx(x, floor: float = 1e-12) -> Tensor:
    """x·log x with 0·log 0 = 0."""
    x = as_tensor(x)
    v = x.value
    live = v > 0
    safe = np.where(live, v, 1.0)
    out = np.where(live, v * np.log(safe), 0.0)
    dlog = np.log(np.maximum(v, floor)) + 1.0
    return _op(out, (x,), lambda g: (g * dlog,))


# ---------------------------------------------------------------------------
# Reductions and indexing
# ---------------------------------------------------------------------------


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.value.shape
    return _op(np.array(x.value.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    n = x.value.size
    if n == 0:
        raise ValidationError("mean of an empty tensor")
    return scale(sum_all(x), 1.0 / n)


def weighted_sum(x, w) -> Tensor:
    """Σ w·x for a constant weight array of the same shape."""
    x = as_tensor(x)
    w = np.asarray(w, dtype=DTYPE)
    if w.shape != x.value.shape:
        raise DimensionError(f"weights {w.shape} do not match {x.value.shape}")
    return _op(np.array((x.value * w).sum()), (x,), lambda g: (float(g) * w,))


def row_mean(x) -> Tensor:
    x = as_tensor(x)
    n_cols = x.value.shape[1]
    return _op(x.value.mean(axis=1), (x,), lambda g: (np.repeat(g[:, None] / n_cols, n_cols, axis=1),))


def scatter_rows(idx: np.ndarray, g: np.ndarray, n: int) -> np.ndarray:
    """out[r] = Σ_{k: idx[k] = r} g[k], summed in index order."""
    sel = sp.csr_matrix((np.ones(idx.size), (idx, np.arange(idx.size))), shape=(n, idx.size))
    return np.asarray(sel @ g.reshape(idx.size, -1), dtype=DTYPE).reshape((n,) + g.shape[1:])


def take_rows(x, idx) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.value.shape

    def back(g):
        return (scatter_rows(idx, g, shape[0]),)

    return _op(x.value[idx], (x,), back)


def pick(x, rows, cols) -> Tensor:
    """Gather x[rows[k], cols[k]] into a vector."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    shape = x.value.shape

    def back(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, (rows, cols), g)
        return (out,)

    return _op(x.value[rows, cols], (x,), back)


def rowdot(a, b) -> Tensor:
    """Row-wise inner products of two equally shaped matrices."""
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape != b.value.shape:
        raise DimensionError(f"shape mismatch {a.value.shape} vs {b.value.shape}")
    av, bv = a.value, b.value
    return _op(
        np.einsum("ij,ij->i", av, bv),
        (a, b),
        lambda g: (g[:, None] * bv, g[:, None] * av),
    )


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.value.shape
    return _op(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def hstack(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = [p.value.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[:, bounds[k] : bounds[k + 1]] for k in range(len(parts)))

    return _op(np.hstack([p.value for p in parts]), tuple(parts), back)


def vstack(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    heights = [p.value.shape[0] for p in parts]
    bounds = np.cumsum([0] + heights)

    def back(g):
        return tuple(g[bounds[k] : bounds[k + 1]] for k in range(len(parts)))

    return _op(np.vstack([p.value for p in parts]), tuple(parts), back)


def softmax_rows(x) -> Tensor:
    x = as_tensor(x)
    z = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _op(p, (x,), back)


def logsumexp_rows(x) -> Tensor:
    x = as_tensor(x)
    m = x.value.max(axis=1, keepdims=True)
    e = np.exp(x.value - m)
    s = e.sum(axis=1, keepdims=True)
    out = (m + np.log(s))[:, 0]
    w = e / s
    return _op(out, (x,), lambda g: (g[:, None] * w,))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update. Returns (new params, state); ``state`` is advanced in place."""
    for name, g in grads.items():
        if name not in params:
            raise ValidationError(f"gradient for unknown parameter {name!r}")
        if np.shape(g) != np.shape(params[name]):
            raise DimensionError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(params[name])} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    new = {}
    for name, p in params.items():
        g = np.asarray(grads.get(name, np.zeros_like(p)), dtype=DTYPE)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p, dtype=DTYPE)
            v = np.zeros_like(p, dtype=DTYPE)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name], state.v[name] = m, v
        m_hat = m / bc1
        v_hat = v / bc2
        new[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, state


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def analytic_grad(f: Callable[[dict], Tensor], params: Mapping[str, np.ndarray]):
    tape = Tape()
    out = f(tape.watch(params))
    return float(out.value), tape.backward(out)


def finite_diff_check(f: Callable[[dict], Tensor], params: Mapping[str, np.ndarray], h: float = 1e-4) -> float:
    """Max over all coordinates of |g_analytic - g_fd| / max(1, |g_fd|).

    ``f`` maps a dict of tensors to a scalar tensor; it is called once on a tape
    and twice per coordinate on constants (central differences).
    """
    if h <= 0:
        raise ValidationError("step h must be positive")
    params = {k: np.array(v, dtype=DTYPE) for k, v in params.items()}
    base, grads = analytic_grad(f, params)
    if not np.isfinite(base):
        raise NumericError("objective is not finite at the base point")

    def value(ps):
        out = float(f({k: Tensor(v) for k, v in ps.items()}).value)
        if not np.isfinite(out):
            raise NumericError("objective is not finite at a perturbed point")
        return out

    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        g_an = grads[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = value(params)
            flat[k] = orig - h
            down = value(params)
            flat[k] = orig
            g_fd = (up - down) / (2.0 * h)
            worst = max(worst, abs(g_an[k] - g_fd) / max(1.0, abs(g_fd)))
    return worst
