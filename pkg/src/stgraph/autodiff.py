"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. :func:`gradient`
walks the recorded graph backwards from a scalar loss.

Broadcasting is deliberately narrow: elementwise binary ops accept equal
shapes, or a right operand whose shape equals the left operand's shape minus
its leading (batch) axis. Anything else raises :class:`ShapeError`.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradientTape",
    "ShapeError",
    "NonFiniteError",
    "checked",
    "inject_fault",
    "tensor",
    "constant",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "transpose",
    "reshape",
    "concat",
    "row_sum",
    "total",
    "leaky_relu",
    "relu",
    "exp",
    "log",
    "softplus",
    "gather_rows",
    "scatter_add",
    "scale_rows",
    "segment_softmax",
    "log_softmax_rows",
    "block_diag_apply",
    "gradient",
]

_CHECKED = True
_FAULTS: set[str] = set()


class ShapeError(ValueError):
    """Operand shapes do not conform for an op."""

    def __init__(self, op: str, *shapes: tuple[int, ...], detail: str = ""):
        self.op = op
        self.shapes = shapes
        msg = f"{op}: incompatible shapes " + " and ".join(str(tuple(s)) for s in shapes)
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(FloatingPointError):
    """A tensor containing NaN or Inf was created while checking is on."""

    def __init__(self, op: str, shape: tuple[int, ...]):
        self.op = op
        self.shape = shape
        super().__init__(f"non-finite values produced by '{op}' (shape {tuple(shape)})")


@contextlib.contextmanager
def checked(enabled: bool = True) -> Iterator[None]:
    """Temporarily toggle NaN/Inf rejection at tensor creation."""
    global _CHECKED
    prev = _CHECKED
    _CHECKED = enabled
    try:
        yield
    finally:
        _CHECKED = prev


@contextlib.contextmanager
def inject_fault(op: str) -> Iterator[None]:
    # Test-only: flips the sign of the backward pass of `op`.
    _FAULTS.add(op)
    try:
        yield
    finally:
        _FAULTS.discard(op)


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "op", "_parents", "_backward", "__weakref__")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        _op: str = "leaf",
    ):
        arr = np.asarray(data, dtype=np.float64)
        if _CHECKED and arr.size and not np.isfinite(arr).all():
            raise NonFiniteError(name or _op, arr.shape)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.op = _op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def tensor(data, name: str | None = None) -> Tensor:
    """A leaf that participates in differentiation."""
    return Tensor(data, requires_grad=True, name=name)


def constant(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if op in _FAULTS and needs:
        inner = backward

        def backward(g, _inner=inner):
            return [None if x is None else -x for x in _inner(g)]

    return Tensor(data, requires_grad=needs, _parents=parents if needs else (),
                  _backward=backward if needs else None, _op=op)


def _batch_compatible(op: str, a: Tensor, b: Tensor) -> bool:
    """True when b broadcasts over a's leading axis; raises if nothing fits."""
    if a.shape == b.shape:
        return False
    if a.ndim >= 1 and b.shape == a.shape[1:]:
        return True
    raise ShapeError(op, a.shape, b.shape, detail="only leading-axis broadcasting is allowed")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D @ 2-D or 2-D @ 1-D operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data
    with np.errstate(over="ignore", invalid="ignore"):  # checked mode reports these
        out = ad @ bd

    if b.ndim == 2:
        def backward(g):
            return (g @ bd.T, ad.T @ g)
    else:
        def backward(g):
            return (np.outer(g, bd), ad.T @ g)

    return _make(out, (a, b), backward, "matmul")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    bcast = _batch_compatible("add", a, b)

    def backward(g):
        return (g, g.sum(axis=0) if bcast else g)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    bcast = _batch_compatible("sub", a, b)

    def backward(g):
        return (g, -(g.sum(axis=0) if bcast else g))

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    bcast = _batch_compatible("mul", a, b)
    ad, bd = a.data, b.data

    def backward(g):
        gb = g * ad
        return (g * bd, gb.sum(axis=0) if bcast else gb)

    return _make(ad * bd, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError("transpose", a.shape, detail="expects a matrix")
    return _make(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", src, tuple(shape)) from None
    return _make(out, (a,), lambda g: (g.reshape(src),), "reshape")


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis; leading axes must agree."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat", detail="no operands")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.ndim != parts[0].ndim or p.shape[:-1] != lead:
            raise ShapeError("concat", parts[0].shape, p.shape)
    widths = [p.shape[-1] for p in parts]
    cuts = np.cumsum(widths)[:-1]
    out = np.concatenate([p.data for p in parts], axis=-1)

    def backward(g):
        return tuple(np.split(g, cuts, axis=-1))

    return _make(out, tuple(parts), backward, "concat")


def row_sum(a: Tensor) -> Tensor:
    """Sum over the last axis."""
    shape = a.shape

    def backward(g):
        return (np.broadcast_to(g[..., None], shape).copy(),)

    return _make(a.data.sum(axis=-1), (a,), backward, "row_sum")


def total(a: Tensor) -> Tensor:
    """Sum of all entries, as a 0-d tensor."""
    shape = a.shape
    return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),), "total")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    pos = a.data >= 0
    out = np.where(pos, a.data, slope * a.data)
    return _make(out, (a,), lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    out = np.where(pos, a.data, 0.0)
    return _make(out, (a,), lambda g: (np.where(pos, g, 0.0),), "relu")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return _make(out, (a,), lambda g: (g / ad,), "log")


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), evaluated without overflow."""
    ad = a.data
    out = np.logaddexp(0.0, ad)
    sig = 0.5 * (1.0 + np.tanh(0.5 * ad))
    return _make(out, (a,), lambda g: (g * sig,), "softplus")


def gather_rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.intp)
    if index.ndim != 1:
        raise ShapeError("gather_rows", a.shape, index.shape, detail="index must be 1-D")
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ShapeError("gather_rows", a.shape, index.shape, detail="index out of range")
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _make(a.data[index], (a,), backward, "gather_rows")


def scatter_add(a: Tensor, index, num_rows: int) -> Tensor:
    """out[index[k]] += a[k], accumulated in ascending k (deterministic)."""
    index = np.asarray(index, dtype=np.intp)
    if index.ndim != 1 or index.shape[0] != a.shape[0]:
        raise ShapeError("scatter_add", a.shape, index.shape)
    if index.size and (index.min() < 0 or index.max() >= num_rows):
        raise ShapeError("scatter_add", a.shape, index.shape, detail="index out of range")
    out = np.zeros((num_rows,) + a.shape[1:])
    np.add.at(out, index, a.data)
    return _make(out, (a,), lambda g: (g[index],), "scatter_add")


def scale_rows(a: Tensor, w: Tensor) -> Tensor:
    """Multiply row k of a matrix by the scalar w[k]."""
    a, w = _as_tensor(a), _as_tensor(w)
    if a.ndim != 2 or w.shape != (a.shape[0],):
        raise ShapeError("scale_rows", a.shape, w.shape)
    ad, wd = a.data, w.data

    def backward(g):
        return (g * wd[:, None], (g * ad).sum(axis=1))

    return _make(ad * wd[:, None], (a, w), backward, "scale_rows")


def _segment_softmax_values(x: np.ndarray, seg: np.ndarray, n: int) -> np.ndarray:
    if x.size == 0:
        return np.zeros(0)
    top = np.full(n, -np.inf)
    np.maximum.at(top, seg, x)
    e = np.exp(x - top[seg])
    denom = np.zeros(n)
    np.add.at(denom, seg, e)
    return e / denom[seg]


def segment_softmax(logits: Tensor, segment_ids, num_segments: int | None = None) -> Tensor:
    """Softmax of `logits` computed independently within each segment.

    The per-segment maximum is subtracted before exponentiation. Segment ids
    must be non-negative integers; ids need not be contiguous or sorted.
    """
    logits = _as_tensor(logits)
    seg = np.asarray(segment_ids, dtype=np.intp)
    if logits.ndim != 1 or seg.shape != logits.shape:
        raise ShapeError("segment_softmax", logits.shape, seg.shape)
    n = int(num_segments if num_segments is not None else (seg.max() + 1 if seg.size else 0))
    y = _segment_softmax_values(logits.data, seg, n)

    def backward(g):
        gy = g * y
        acc = np.zeros(n)
        np.add.at(acc, seg, gy)
        return (gy - y * acc[seg],)

    return _make(y, (logits,), backward, "segment_softmax")


def log_softmax_rows(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError("log_softmax_rows", a.shape)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return _make(out, (a,), backward, "log_softmax_rows")


def block_diag_apply(matrix: np.ndarray, a: Tensor) -> Tensor:
    """Left-multiply each consecutive block of rows of `a` by a fixed matrix.

    Equivalent to ``kron(eye(G), matrix) @ a`` where G = rows(a) / size(matrix),
    without materializing the block-diagonal operator.
    """
    m = np.asarray(matrix, dtype=np.float64)
    c = m.shape[0]
    if m.ndim != 2 or m.shape[1] != c or a.ndim != 2 or (c and a.shape[0] % c):
        raise ShapeError("block_diag_apply", m.shape, a.shape)
    groups = a.shape[0] // c if c else 0
    f = a.shape[1]
    blocks = a.data.reshape(groups, c, f)
    out = np.einsum("cd,gdf->gcf", m, blocks).reshape(a.shape)

    def backward(g):
        return (np.einsum("dc,gdf->gcf", m, g.reshape(groups, c, f)).reshape(a.shape),)

    return _make(out, (a,), backward, "block_diag_apply")


class GradientTape:
    """Accumulated partial derivatives of one scalar loss, keyed by leaf."""

    def __init__(self, grads: dict[int, np.ndarray], leaves: dict[int, Tensor]):
        self._grads = grads
        self._leaves = leaves

    def __getitem__(self, leaf: Tensor) -> np.ndarray:
        g = self._grads.get(id(leaf))
        if g is None:
            return np.zeros(leaf.shape)
        return g

    def __contains__(self, leaf: Tensor) -> bool:
        return id(leaf) in self._grads

    def items(self) -> Iterator[tuple[Tensor, np.ndarray]]:
        for key, leaf in self._leaves.items():
            yield leaf, self[leaf]


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def gradient(loss: Tensor, leaves: Iterable[Tensor] = ()) -> GradientTape:
    """Reverse-mode partials of a scalar `loss` w.r.t. every leaf it touches.

    Leaves listed in `leaves` but not reached report zero gradients.
    """
    if loss.data.size != 1:
        raise ShapeError("gradient", loss.shape, detail="loss must be a scalar")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    found: dict[int, Tensor] = {id(t): t for t in leaves}
    if loss.requires_grad:
        for node in reversed(_topological(loss)):
            g = grads.get(id(node))
            if node._backward is None:
                if g is not None:
                    found.setdefault(id(node), node)
                continue
            if g is None:
                continue
            # intermediates are released once propagated
            if node is not loss:
                del grads[id(node)]
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    leaf_grads = {k: grads[k] for k in found if k in grads}
    return GradientTape(leaf_grads, found)
