"""Reverse-mode automatic differentiation on dense float64 matrices.

Every value in the graph is a 2-D numpy array: scalars are (1, 1), row
vectors (1, n).  A :class:`Node` records a value, an accumulated gradient
and a vector-Jacobian callback; :func:`backward` walks the tape in reverse
topological order.  Tapes are built per forward pass and dropped with the
nodes; parameters are long-lived leaves whose ``grad`` the optimizer
consumes and resets.

Elementwise ops support the limited broadcasting the encoders need:
(m, n) against (m, 1), (1, n) or (1, 1).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy.special import erf

# Debug switch: when True every produced value is checked for NaN/Inf.
CHECK_FINITE = False

DEFAULT_NORM_EPS = 1e-12

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def as_matrix(x) -> np.ndarray:
    """Coerce scalars / 1-D / 2-D array-likes to a float64 2-D array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ValueError(f"only 2-D values are supported, got shape {a.shape}")
    return a


class Node:
    """One vertex of the differentiation graph.

    Leaves (parameters, constants) have no parents.  ``grad`` is allocated
    lazily by :func:`backward` and accumulates across calls until reset.
    """

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, _parents=(), _vjp=None):
        self.value = as_matrix(value)
        if CHECK_FINITE and not np.all(np.isfinite(self.value)):
            raise FloatingPointError("non-finite value entered the graph")
        self.grad = None
        self._parents = tuple(_parents)
        self._vjp = _vjp

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Node(shape={self.value.shape})"

    # arithmetic sugar; scalars are promoted to constant nodes
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return smul(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return smul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _coerce(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _check_broadcast(a: Node, b: Node, op: str):
    sa, sb = a.value.shape, b.value.shape
    for da, db in zip(sa, sb):
        if da != db and da != 1 and db != 1:
            raise ValueError(f"{op} shape mismatch: {sa} vs {sb}")


# ---------------------------------------------------------------------------
# elementwise primitives
# ---------------------------------------------------------------------------

def add(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "add")
    return Node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
    )


def sub(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "sub")
    return Node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
    )


def mul(a: Node, b: Node) -> Node:
    _check_broadcast(a, b, "mul")
    return Node(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def smul(a: Node, c: float) -> Node:
    c = float(c)
    return Node(a.value * c, (a,), lambda g: (g * c,))


def add_const(a: Node, c: float) -> Node:
    c = float(c)
    return Node(a.value + c, (a,), lambda g: (g,))


def exp(a: Node) -> Node:
    y = np.exp(a.value)
    return Node(y, (a,), lambda g: (g * y,))


def log(a: Node) -> Node:
    return Node(np.log(a.value), (a,), lambda g: (g / a.value,))


def power(a: Node, p: float) -> Node:
    p = float(p)
    y = a.value ** p
    return Node(y, (a,), lambda g: (g * p * a.value ** (p - 1.0),))


def sqrt(a: Node) -> Node:
    return power(a, 0.5)


def gelu(a: Node) -> Node:
    """Exact Gaussian-error-function GELU (smooth, finite-difference safe)."""
    x = a.value
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return Node(x * cdf, (a,), lambda g: (g * (cdf + x * pdf),))


# ---------------------------------------------------------------------------
# structural primitives
# ---------------------------------------------------------------------------

def matmul(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {a.value.shape} x {b.value.shape}"
        )
    return Node(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def transpose(a: Node) -> Node:
    return Node(a.value.T, (a,), lambda g: (g.T,))


def reshape(a: Node, rows: int, cols: int) -> Node:
    if rows * cols != a.value.size:
        raise ValueError(f"cannot reshape {a.value.shape} to ({rows}, {cols})")
    shape = a.value.shape
    return Node(a.value.reshape(rows, cols), (a,), lambda g: (g.reshape(shape),))


def concat_rows(parts: Sequence[Node]) -> Node:
    parts = list(parts)
    if not parts:
        raise ValueError("concat_rows needs at least one part")
    widths = {p.value.shape[1] for p in parts}
    if len(widths) != 1:
        raise ValueError(f"concat_rows column mismatch: {sorted(widths)}")
    sizes = [p.value.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return Node(np.concatenate([p.value for p in parts], axis=0), parts, vjp)


def gather_rows(a: Node, indices) -> Node:
    """Row lookup (embedding gather); backward scatter-adds, so repeated
    indices accumulate."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("gather_rows expects a flat index list")
    if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[0]):
        raise IndexError(f"row index out of range for shape {a.value.shape}")

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return Node(a.value[idx], (a,), vjp)


def gather_cols(a: Node, indices) -> Node:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("gather_cols expects a flat index list")
    if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[1]):
        raise IndexError(f"column index out of range for shape {a.value.shape}")

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, (slice(None), idx), g)
        return (out,)

    return Node(a.value[:, idx], (a,), vjp)


def sum_all(a: Node) -> Node:
    shape = a.value.shape
    return Node(
        a.value.sum().reshape(1, 1),
        (a,),
        lambda g: (np.broadcast_to(g, shape).copy(),),
    )


def sum_axis(a: Node, axis: int) -> Node:
    """Sum along one axis, keeping it as a broadcastable singleton."""
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    shape = a.value.shape
    return Node(
        a.value.sum(axis=axis, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g, shape).copy(),),
    )


def mean_all(a: Node) -> Node:
    return smul(sum_all(a), 1.0 / a.value.size)


# ---------------------------------------------------------------------------
# row-structured primitives
# ---------------------------------------------------------------------------

def softmax_rows(a: Node) -> Node:
    """Row softmax with max-subtraction; every output row sums to 1."""
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return ((g - (g * y).sum(axis=1, keepdims=True)) * y,)

    return Node(y, (a,), vjp)


def l2_normalize_rows(a: Node, eps: float = DEFAULT_NORM_EPS) -> Node:
    """Scale each row to unit Euclidean norm.

    Rows with norm below ``eps`` are scaled by 1/eps instead of being
    normalized, keeping the map smooth near zero.
    """
    x = a.value
    norm = np.sqrt((x * x).sum(axis=1, keepdims=True))
    big = norm > eps
    denom = np.where(big, norm, eps)
    y = x / denom

    def vjp(g):
        inv = 1.0 / denom
        radial = (x * g).sum(axis=1, keepdims=True) * inv ** 3
        return (g * inv - x * radial * big,)

    return Node(y, (a,), vjp)


# ---------------------------------------------------------------------------
# compositions used by the encoders
# ---------------------------------------------------------------------------

def masked_mean_rows(a: Node, mask) -> Node:
    """Mean over the rows selected by a boolean/0-1 mask, as a (1, n) row."""
    m = np.asarray(mask, dtype=np.float64).reshape(1, -1)
    if m.shape[1] != a.value.shape[0]:
        raise ValueError(
            f"mask length {m.shape[1]} does not match {a.value.shape[0]} rows"
        )
    total = m.sum()
    if total <= 0:
        raise ValueError("masked_mean_rows needs at least one selected row")
    return matmul(Node(m / total), a)


def dot_rows(a: Node, b: Node) -> Node:
    """Row-wise dot products of two (m, n) nodes, as an (m, 1) column."""
    return sum_axis(mul(a, b), axis=1)


def layer_norm_rows(a: Node, gain: Node, bias: Node, eps: float = 1e-5) -> Node:
    """Per-row standardization followed by a learned affine map."""
    n = a.value.shape[1]
    mu = smul(sum_axis(a, axis=1), 1.0 / n)
    xc = sub(a, mu)
    var = smul(sum_axis(mul(xc, xc), axis=1), 1.0 / n)
    inv_std = power(add_const(var, eps), -0.5)
    return add(mul(mul(xc, inv_std), gain), bias)


def l2_normalize_pairs(a: Node, eps: float = DEFAULT_NORM_EPS) -> Node:
    """Normalize each (even, odd) column pair of every row to unit modulus."""
    m, n = a.value.shape
    if n % 2 != 0:
        raise ValueError(f"pair normalization needs an even width, got {n}")
    flat = reshape(a, m * n // 2, 2)
    return reshape(l2_normalize_rows(flat, eps), m, n)


def paired_complex_mul(a: Node, b: Node) -> Node:
    """Complex product of (even=real, odd=imag) column pairs, elementwise."""
    m, n = a.value.shape
    if b.value.shape != (m, n):
        raise ValueError(
            f"paired product shape mismatch: {a.value.shape} vs {b.value.shape}"
        )
    if n % 2 != 0:
        raise ValueError(f"paired product needs an even width, got {n}")
    evens = np.arange(0, n, 2)
    odds = np.arange(1, n, 2)
    a_re, a_im = gather_cols(a, evens), gather_cols(a, odds)
    b_re, b_im = gather_cols(b, evens), gather_cols(b, odds)
    out_re = sub(mul(a_re, b_re), mul(a_im, b_im))
    out_im = add(mul(a_re, b_im), mul(a_im, b_re))
    stacked = concat_rows([transpose(out_re), transpose(out_im)])
    # columns of `stacked`^T are [re..., im...]; restore interleaved order
    perm = np.empty(n, dtype=np.intp)
    perm[evens] = np.arange(n // 2)
    perm[odds] = np.arange(n // 2) + n // 2
    return gather_cols(transpose(stacked), perm)


def paired_rotation(h: Node, phases: Node, eps: float = DEFAULT_NORM_EPS) -> Node:
    """Rotate each complex pair of ``h`` by the phase pairs of ``phases``.

    The phase pairs are renormalized to unit modulus first, so the rotation
    is an isometry regardless of the stored parameter scale.
    """
    return paired_complex_mul(h, l2_normalize_pairs(phases, eps))


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order  # parents before consumers


def backward(root: Node) -> None:
    """Accumulate d(root)/d(node) into ``grad`` for every reachable node.

    The root must be scalar-shaped.  Calling backward twice without
    resetting grads adds the same contribution again.
    """
    if root.value.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
    order = _toposort(root)
    # pass-local gradients keep repeated backward() calls additive
    pending: dict[int, np.ndarray] = {id(root): np.ones((1, 1))}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg


def zero_grads(nodes: Iterable[Node]) -> None:
    for n in nodes:
        n.grad = None
