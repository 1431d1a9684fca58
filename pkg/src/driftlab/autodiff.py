"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tape records operations in execution order (so inputs always precede the
ops that consume them); backward() walks it once in reverse.  The op set is
deliberately small: elementwise math, matrix-vector products, gather/scatter,
softmax, and two fused recurrent ops (gru_cell, additive_attention) whose
hand-derived backward rules are pinned by finite-difference tests.

Broadcasting is limited to matrix-vector and tensor-with-python-scalar; all
storage is row-major float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError, UsageError

try:
    from scipy.linalg.blas import dger as _dger
except ImportError:  # pragma: no cover - scipy is a hard dependency
    _dger = None

_F64 = np.float64


class Tensor:
    """A dense float64 array plus autodiff bookkeeping.

    `grad` is filled lazily by backward(); it stays None for tensors no
    gradient ever reached (callers treat None as zero).
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_F64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations for one forward pass.

    Each entry is (output tensor, backward closure).  Append order is the
    topological order of the graph, so a single reverse sweep visits every
    node exactly once.
    """

    __slots__ = ("entries",)

    def __init__(self):
        self.entries = []

    def append(self, out: Tensor, bw) -> None:
        self.entries.append((out, bw))

    def __len__(self):
        return len(self.entries)


_TAPE: Tape | None = None


class record:
    """Context manager activating a fresh (or given) tape."""

    def __init__(self, tape: Tape | None = None):
        self.tape = tape if tape is not None else Tape()
        self._prev = None

    def __enter__(self) -> Tape:
        global _TAPE
        self._prev = _TAPE
        _TAPE = self.tape
        return self.tape

    def __exit__(self, *exc):
        global _TAPE
        _TAPE = self._prev
        return False


class no_grad:
    """Context manager suspending tape recording (evaluation mode)."""

    def __init__(self):
        self._prev = None

    def __enter__(self):
        global _TAPE
        self._prev = _TAPE
        _TAPE = None

    def __exit__(self, *exc):
        global _TAPE
        _TAPE = self._prev
        return False


def active_tape() -> Tape | None:
    return _TAPE


def _acc(t: Tensor, g: np.ndarray) -> None:
    """Accumulate gradient g into t.grad (copy-on-first to avoid aliasing)."""
    if t.grad is None:
        t.grad = np.array(g, dtype=_F64)
    else:
        t.grad += g


def _acc_outer(t: Tensor, g: np.ndarray, x: np.ndarray) -> None:
    """t.grad += outer(g, x), using BLAS ger on the transposed view."""
    if t.grad is None:
        t.grad = np.zeros(t.data.shape, dtype=_F64)
    if _dger is not None:
        _dger(1.0, x, g, a=t.grad.T, overwrite_a=1)
    else:
        t.grad += np.multiply.outer(g, x)


def backward(loss: Tensor, tape: Tape) -> None:
    """Backpropagate from a scalar loss through the tape.

    Populates .grad on every requires_grad tensor the loss depends on;
    parameters that did not participate keep grad None (read as zero via
    grad_of).
    """
    if loss.data.shape != ():
        raise UsageError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    _acc(loss, np.ones((), dtype=_F64))
    for out, bw in reversed(tape.entries):
        g = out.grad
        if g is not None:
            bw(g)


def grad_of(t: Tensor) -> np.ndarray:
    """Gradient of t after backward(); zeros if no gradient reached it."""
    if t.grad is None:
        return np.zeros(t.data.shape, dtype=_F64)
    return t.grad


def param(shape, rng: np.random.Generator, scale: float = 0.08) -> Tensor:
    """Trainable tensor initialized uniformly in [-scale, scale]."""
    data = rng.uniform(-scale, scale, size=shape)
    return Tensor(data, requires_grad=True)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_F64), requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    t = _TAPE
    if t is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True

        def bw(g):
            if a.requires_grad:
                _acc(a, g)
            if b.requires_grad:
                _acc(b, g)

        t.append(out, bw)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    t = _TAPE
    if t is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True

        def bw(g):
            if a.requires_grad:
                _acc(a, g)
            if b.requires_grad:
                _acc(b, -g)

        t.append(out, bw)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    t = _TAPE
    if t is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True
        ad, bd = a.data, b.data

        def bw(g):
            if a.requires_grad:
                _acc(a, g * bd)
            if b.requires_grad:
                _acc(b, g * ad)

        t.append(out, bw)
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(a, -g)

        t.append(out, bw)
    return out


def add_const(a: Tensor, c) -> Tensor:
    out = Tensor(a.data + c)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(a, g)

        t.append(out, bw)
    return out


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a python scalar or a constant ndarray (e.g. dropout mask)."""
    out = Tensor(a.data * c)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(a, g * c)

        t.append(out, bw)
    return out


def scale(a: Tensor, s: Tensor) -> Tensor:
    """Tensor times scalar-tensor, differentiable in both."""
    if s.data.shape != ():
        raise ShapeError("scale: s must be a scalar tensor")
    out = Tensor(a.data * s.data)
    t = _TAPE
    if t is not None and (a.requires_grad or s.requires_grad):
        out.requires_grad = True
        sd = float(s.data)
        ad = a.data

        def bw(g):
            if a.requires_grad:
                _acc(a, g * sd)
            if s.requires_grad:
                _acc(s, np.asarray(np.sum(g * ad)))

        t.append(out, bw)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum()))
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True
        shp = a.data.shape

        def bw(g):
            _acc(a, np.full(shp, float(g), dtype=_F64))

        t.append(out, bw)
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ShapeError("dot expects vectors")
    _same_shape(a, b, "dot")
    out = Tensor(np.asarray(a.data @ b.data))
    t = _TAPE
    if t is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True
        ad, bd = a.data, b.data

        def bw(g):
            gf = float(g)
            if a.requires_grad:
                _acc(a, gf * bd)
            if b.requires_grad:
                _acc(b, gf * ad)

        t.append(out, bw)
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(a, g * (1.0 - y * y))

        t.append(out, bw)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(a, g * y * (1.0 - y))

        t.append(out, bw)
    return out


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    out = Tensor(y)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True
        mask = a.data > 0.0

        def bw(g):
            _acc(a, g * mask)

        t.append(out, bw)
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(a, g * y)

        t.append(out, bw)
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericError("log of non-positive value")
    out = Tensor(np.log(a.data))
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True
        ad = a.data

        def bw(g):
            _acc(a, g / ad)

        t.append(out, bw)
    return out


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0.0):
        raise NumericError("sqrt of negative value")
    y = np.sqrt(a.data)
    out = Tensor(y)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(a, g * (0.5 / y))

        t.append(out, bw)
    return out


def recip(a: Tensor) -> Tensor:
    if np.any(a.data == 0.0):
        raise NumericError("reciprocal of zero")
    y = 1.0 / a.data
    out = Tensor(y)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(a, -g * y * y)

        t.append(out, bw)
    return out


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data)
    t = _TAPE
    if t is not None and a.requires_grad:
        out.requires_grad = True
        ad = a.data

        def bw(g):
            _acc(a, g * (2.0 * ad))

        t.append(out, bw)
    return out


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if w.data.ndim != 2 or x.data.ndim != 1 or w.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"matvec: {w.data.shape} @ {x.data.shape}")
    out = Tensor(w.data @ x.data)
    t = _TAPE
    if t is not None and (w.requires_grad or x.requires_grad):
        out.requires_grad = True
        wd, xd = w.data, x.data

        def bw(g):
            if w.requires_grad:
                _acc_outer(w, g, xd)
            if x.requires_grad:
                _acc(x, wd.T @ g)

        t.append(out, bw)
    return out


def vecmat(x: Tensor, a: Tensor) -> Tensor:
    """Row vector times matrix: (T,) @ (T,h) -> (h,)."""
    if x.data.ndim != 1 or a.data.ndim != 2 or a.data.shape[0] != x.data.shape[0]:
        raise ShapeError(f"vecmat: {x.data.shape} @ {a.data.shape}")
    out = Tensor(x.data @ a.data)
    t = _TAPE
    if t is not None and (x.requires_grad or a.requires_grad):
        out.requires_grad = True
        xd, ad = x.data, a.data

        def bw(g):
            if x.requires_grad:
                _acc(x, ad @ g)
            if a.requires_grad:
                _acc_outer(a, xd, g)

        t.append(out, bw)
    return out


def matmul_nt(a: Tensor, b: Tensor) -> Tensor:
    """A @ B.T for 2-d tensors: (T,h) @ (k,h).T -> (T,k)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(f"matmul_nt: {a.data.shape} @ {b.data.shape}.T")
    out = Tensor(a.data @ b.data.T)
    t = _TAPE
    if t is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True
        ad, bd = a.data, b.data

        def bw(g):
            if a.requires_grad:
                _acc(a, g @ bd)
            if b.requires_grad:
                _acc(b, g.T @ ad)

        t.append(out, bw)
    return out


def stack_rows(vectors) -> Tensor:
    """Stack 1-d tensors into a (T, d) matrix."""
    vecs = list(vectors)
    if not vecs:
        raise UsageError("stack_rows of empty list")
    out = Tensor(np.stack([v.data for v in vecs]))
    t = _TAPE
    if t is not None and any(v.requires_grad for v in vecs):
        out.requires_grad = True

        def bw(g):
            for i, v in enumerate(vecs):
                if v.requires_grad:
                    _acc(v, g[i])

        t.append(out, bw)
    return out


def concat(vectors) -> Tensor:
    """Concatenate 1-d tensors."""
    vecs = list(vectors)
    if not vecs:
        raise UsageError("concat of empty list")
    out = Tensor(np.concatenate([v.data for v in vecs]))
    t = _TAPE
    if t is not None and any(v.requires_grad for v in vecs):
        out.requires_grad = True
        sizes = [v.data.shape[0] for v in vecs]

        def bw(g):
            off = 0
            for v, n in zip(vecs, sizes):
                if v.requires_grad:
                    _acc(v, g[off:off + n])
                off += n

        t.append(out, bw)
    return out


def pick(x: Tensor, i: int) -> Tensor:
    """Scalar element x[i] of a vector."""
    if x.data.ndim != 1:
        raise ShapeError("pick expects a vector")
    out = Tensor(np.asarray(x.data[i]))
    t = _TAPE
    if t is not None and x.requires_grad:
        out.requires_grad = True
        n = x.data.shape[0]

        def bw(g):
            if x.grad is None:
                x.grad = np.zeros(n, dtype=_F64)
            x.grad[i] += float(g)

        t.append(out, bw)
    return out


def row(m: Tensor, i: int) -> Tensor:
    """Row m[i] of a matrix (embedding lookup)."""
    if m.data.ndim != 2:
        raise ShapeError("row expects a matrix")
    out = Tensor(m.data[i].copy())
    t = _TAPE
    if t is not None and m.requires_grad:
        out.requires_grad = True
        shp = m.data.shape

        def bw(g):
            if m.grad is None:
                m.grad = np.zeros(shp, dtype=_F64)
            m.grad[i] += g

        t.append(out, bw)
    return out


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------


def softmax_values(x: np.ndarray) -> np.ndarray:
    """Stable softmax of a plain 1-d array."""
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax input is not finite")
    z = x - x.max()
    e = np.exp(z)
    return e / e.sum()


def softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeError("softmax expects a vector")
    y = softmax_values(x.data)
    out = Tensor(y)
    t = _TAPE
    if t is not None and x.requires_grad:
        out.requires_grad = True

        def bw(g):
            _acc(x, (g - g @ y) * y)

        t.append(out, bw)
    return out


def log_softmax(x: Tensor) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeError("log_softmax expects a vector")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("log_softmax input is not finite")
    z = x.data - x.data.max()
    ls = z - np.log(np.exp(z).sum())
    out = Tensor(ls)
    t = _TAPE
    if t is not None and x.requires_grad:
        out.requires_grad = True
        p = np.exp(ls)

        def bw(g):
            _acc(x, g - p * g.sum())

        t.append(out, bw)
    return out


def entropy_of_logits(logits: Tensor) -> Tensor:
    """Shannon entropy (nats) of softmax(logits), differentiable in logits."""
    ls = log_softmax(logits)
    p = exp(ls)
    return neg(dot(p, ls))


# ---------------------------------------------------------------------------
# fused recurrent ops
# ---------------------------------------------------------------------------


@dataclass
class GRUCell:
    """Parameters of one gated recurrent cell.

    Update equations (h' for state h, input x):
        z  = sigmoid(Wz x + Uz h + bz)
        r  = sigmoid(Wr x + Ur h + br)
        n  = tanh(Wn x + Un (r*h) + bn)
        h' = (1 - z)*h + z*n
    """

    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wn: Tensor
    un: Tensor
    bn: Tensor

    @classmethod
    def init(cls, in_dim: int, hidden: int, rng: np.random.Generator) -> "GRUCell":
        return cls(
            wz=param((hidden, in_dim), rng), uz=param((hidden, hidden), rng),
            bz=param((hidden,), rng),
            wr=param((hidden, in_dim), rng), ur=param((hidden, hidden), rng),
            br=param((hidden,), rng),
            wn=param((hidden, in_dim), rng), un=param((hidden, hidden), rng),
            bn=param((hidden,), rng),
        )

    @property
    def hidden(self) -> int:
        return self.bz.data.shape[0]

    @property
    def in_dim(self) -> int:
        return self.wz.data.shape[1]

    def tensors(self, prefix: str) -> dict:
        names = ("wz", "uz", "bz", "wr", "ur", "br", "wn", "un", "bn")
        return {f"{prefix}.{n}": getattr(self, n) for n in names}


def gru_cell(x: Tensor, h: Tensor, p: GRUCell) -> Tensor:
    """One GRU step; fused forward/backward (single tape entry)."""
    if x.data.shape != (p.in_dim,) or h.data.shape != (p.hidden,):
        raise ShapeError(
            f"gru_cell: x{x.data.shape} h{h.data.shape} vs cell({p.in_dim},{p.hidden})"
        )
    xd, hd = x.data, h.data
    z = 1.0 / (1.0 + np.exp(-(p.wz.data @ xd + p.uz.data @ hd + p.bz.data)))
    r = 1.0 / (1.0 + np.exp(-(p.wr.data @ xd + p.ur.data @ hd + p.br.data)))
    rh = r * hd
    n = np.tanh(p.wn.data @ xd + p.un.data @ rh + p.bn.data)
    out = Tensor((1.0 - z) * hd + z * n)
    t = _TAPE
    if t is None:
        return out
    any_param = p.wz.requires_grad  # cells are all-trainable or all-frozen
    if not (any_param or x.requires_grad or h.requires_grad):
        return out
    out.requires_grad = True

    def bw(g):
        dz = g * (n - hd)
        dn = g * z
        dh = g * (1.0 - z)
        dan = dn * (1.0 - n * n)
        daz = dz * z * (1.0 - z)
        drh = p.un.data.T @ dan
        dr = drh * hd
        dar = dr * r * (1.0 - r)
        dh += drh * r
        dh += p.uz.data.T @ daz
        dh += p.ur.data.T @ dar
        if any_param:
            _acc_outer(p.wn, dan, xd)
            _acc_outer(p.un, dan, rh)
            _acc(p.bn, dan)
            _acc_outer(p.wz, daz, xd)
            _acc_outer(p.uz, daz, hd)
            _acc(p.bz, daz)
            _acc_outer(p.wr, dar, xd)
            _acc_outer(p.ur, dar, hd)
            _acc(p.br, dar)
        if x.requires_grad:
            _acc(x, p.wn.data.T @ dan + p.wz.data.T @ daz + p.wr.data.T @ dar)
        if h.requires_grad:
            _acc(h, dh)

    t.append(out, bw)
    return out


def additive_attention(state: Tensor, annotations: Tensor, proj: Tensor,
                       att_w: Tensor, att_v: Tensor):
    """Additive attention over encoder annotations; fused single tape entry.

    scores_j = att_v . tanh(proj_j + att_w @ state), weights = softmax(scores),
    context  = weights @ annotations.

    `annotations` is the (T, h) stacked encoder states, `proj` the precomputed
    (T, h) = annotations @ att_u.T.  Returns (context node, weights ndarray).
    """
    if annotations.data.ndim != 2 or proj.data.shape != annotations.data.shape:
        raise ShapeError("additive_attention: annotation/projection mismatch")
    if annotations.data.shape[0] == 0:
        raise UsageError("additive_attention: empty annotations")
    sd = state.data
    q = att_w.data @ sd
    zmat = np.tanh(proj.data + q)
    scores = zmat @ att_v.data
    w = softmax_values(scores)
    ctx = w @ annotations.data
    out = Tensor(ctx)
    t = _TAPE
    if t is not None and (state.requires_grad or annotations.requires_grad
                          or proj.requires_grad or att_w.requires_grad
                          or att_v.requires_grad):
        out.requires_grad = True
        ad = annotations.data

        def bw(g):
            dw = ad @ g
            if annotations.requires_grad:
                _acc_outer(annotations, w, g)
            de = (dw - dw @ w) * w
            dzmat = np.multiply.outer(de, att_v.data)
            if att_v.requires_grad:
                _acc(att_v, zmat.T @ de)
            dpq = dzmat * (1.0 - zmat * zmat)
            if proj.requires_grad:
                _acc(proj, dpq)
            dq = dpq.sum(axis=0)
            if att_w.requires_grad:
                _acc_outer(att_w, dq, sd)
            if state.requires_grad:
                _acc(state, att_w.data.T @ dq)

        t.append(out, bw)
    return out, w


def mlp2_scalar(x: np.ndarray, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Two-layer ReLU perceptron mapping a constant input vector to a scalar.

    The input is a plain ndarray by design: baseline-value regression must not
    leak gradient into the network that produced the state.
    """
    a = w1.data @ x + b1.data
    hpos = np.maximum(a, 0.0)
    out = Tensor(np.asarray(w2.data @ hpos + float(b2.data)))
    t = _TAPE
    if t is not None and w1.requires_grad:
        out.requires_grad = True
        mask = a > 0.0

        def bw(g):
            gf = float(g)
            _acc(w2, gf * hpos)
            _acc(b2, np.asarray(gf))
            da = (gf * w2.data) * mask
            _acc_outer(w1, da, x)
            _acc(b1, da)

        t.append(out, bw)
    return out


def weighted_sum_scalars(nodes, coeffs) -> Tensor:
    """Sum of coeff_i * node_i over scalar nodes, as one tape entry."""
    nodes = list(nodes)
    coeffs = [float(c) for c in coeffs]
    if len(nodes) != len(coeffs):
        raise ShapeError("weighted_sum_scalars: length mismatch")
    total = 0.0
    for nd, c in zip(nodes, coeffs):
        total += c * float(nd.data)
    out = Tensor(np.asarray(total))
    t = _TAPE
    if t is not None and any(nd.requires_grad for nd in nodes):
        out.requires_grad = True

        def bw(g):
            gf = float(g)
            for nd, c in zip(nodes, coeffs):
                if nd.requires_grad:
                    _acc(nd, np.asarray(gf * c))

        t.append(out, bw)
    return out


def squared_error_to_consts(nodes, targets) -> Tensor:
    """Sum of (node_i - target_i)^2 for scalar nodes against constants."""
    nodes = list(nodes)
    targets = [float(v) for v in targets]
    if len(nodes) != len(targets):
        raise ShapeError("squared_error_to_consts: length mismatch")
    diffs = [float(nd.data) - tv for nd, tv in zip(nodes, targets)]
    out = Tensor(np.asarray(sum(d * d for d in diffs)))
    t = _TAPE
    if t is not None and any(nd.requires_grad for nd in nodes):
        out.requires_grad = True

        def bw(g):
            gf = float(g)
            for nd, d in zip(nodes, diffs):
                if nd.requires_grad:
                    _acc(nd, np.asarray(gf * 2.0 * d))

        t.append(out, bw)
    return out
