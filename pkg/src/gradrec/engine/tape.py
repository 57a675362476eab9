"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation records a node holding its output and references to its
inputs; creation order is a topological order of the resulting DAG, so
``backward`` simply walks nodes in reverse creation order accumulating
vector-Jacobian products. Graphs are cheap and meant to be rebuilt for
every training step.

Shape rules are strict: the only implicit broadcast is scalar-with-tensor
for the elementwise ops. Everything else raises :class:`ShapeError`.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from gradrec.errors import ShapeError, UnknownOpError

Array = np.ndarray

_ids = itertools.count()


def _as_value(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    return a


class Node:
    """One tape entry: cached output plus enough context to backpropagate.

    Leaves have ``op is None``; interior nodes name the op that produced
    them. ``value`` is treated as immutable once the node exists.
    """

    __slots__ = ("value", "op", "inputs", "attrs", "requires_grad", "grad", "name", "cache", "_id")

    def __init__(self, value, op=None, inputs=(), attrs=None, requires_grad=False, name=None):
        self.value = _as_value(value)
        self.op = op
        self.inputs: tuple[Node, ...] = tuple(inputs)
        self.attrs = attrs or {}
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self.name = name
        self.cache: dict = {}
        self._id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        tag = self.name or self.op or "const"
        return f"Node({tag}, shape={self.value.shape})"

    # -- operator sugar; everything routes through forward() ------------

    def _coerce(self, other) -> "Node":
        return other if isinstance(other, Node) else const(other)

    def __add__(self, other):
        return forward("add", [self, self._coerce(other)])

    def __radd__(self, other):
        return forward("add", [self._coerce(other), self])

    def __sub__(self, other):
        return forward("sub", [self, self._coerce(other)])

    def __rsub__(self, other):
        return forward("sub", [self._coerce(other), self])

    def __mul__(self, other):
        return forward("mul", [self, self._coerce(other)])

    def __rmul__(self, other):
        return forward("mul", [self._coerce(other), self])

    def __neg__(self):
        return forward("mul", [const(-1.0), self])

    def __matmul__(self, other):
        return forward("matmul", [self, self._coerce(other)])

    def sum(self, axis: int | None = None):
        return forward("sum", [self], axis=axis)

    def mean(self, axis: int | None = None):
        return forward("mean", [self], axis=axis)

    def dot(self, other):
        return forward("dot", [self, self._coerce(other)])

    def sigmoid(self):
        return forward("sigmoid", [self])

    def tanh(self):
        return forward("tanh", [self])

    def relu(self):
        return forward("relu", [self])

    def log(self):
        return forward("log", [self])

    def softplus(self):
        return forward("softplus", [self])

    def reshape(self, shape: Sequence[int]):
        return forward("reshape", [self], shape=tuple(shape))

    @property
    def T(self):
        return forward("transpose", [self])


def param(value, name: str | None = None) -> Node:
    """Leaf that accumulates gradients."""
    return Node(value, requires_grad=True, name=name)


def const(value, name: str | None = None) -> Node:
    """Leaf treated as a constant; backward never flows into it."""
    return Node(value, requires_grad=False, name=name)


# ---------------------------------------------------------------------------
# op registry
# ---------------------------------------------------------------------------

# forward: (values, attrs, cache) -> output array
# vjp:     (node, upstream grad) -> per-input gradient list (None = no flow)
_FORWARD: dict[str, Callable] = {}
_VJP: dict[str, Callable] = {}


def _op(name):
    def wrap(fn):
        _FORWARD[name] = fn
        return fn

    return wrap


def _vjp(name):
    def wrap(fn):
        _VJP[name] = fn
        return fn

    return wrap


def forward(op_kind: str, inputs: Iterable, **attrs) -> Node:
    """Apply ``op_kind`` to ``inputs`` and append the result to the tape.

    Inputs may be nodes, arrays or scalars; non-nodes become constants.
    """
    fn = _FORWARD.get(op_kind)
    if fn is None:
        raise UnknownOpError(op_kind)
    nodes = [x if isinstance(x, Node) else const(x) for x in inputs]
    cache: dict = {}
    value = fn([n.value for n in nodes], attrs, cache)
    out = Node(
        value,
        op=op_kind,
        inputs=nodes,
        attrs=attrs,
        requires_grad=any(n.requires_grad for n in nodes),
    )
    out.cache = cache
    return out


def backward(loss: Node, wrt: Iterable[Node] | None = None) -> dict[Node, Array]:
    """Reverse-accumulate gradients of a scalar ``loss``.

    Returns a map from gradient-bearing leaves to their gradients. When
    ``wrt`` is given, exactly those leaves are reported and unreachable
    ones get zeros. ``.grad`` is also set on every visited node.
    """
    if loss.value.shape != ():
        raise ShapeError("backward", "scalar loss of shape ()", str(loss.value.shape))

    # Reachable sub-DAG that can influence a gradient-bearing leaf.
    visited: set[int] = set()
    ordered: list[Node] = []
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        ordered.append(node)
        stack.extend(node.inputs)
    # Creation order is topological; reverse it for accumulation.
    ordered.sort(key=lambda n: n._id, reverse=True)

    grads: dict[int, Array] = {id(loss): np.ones(())}
    result: dict[Node, Array] = {}
    for node in ordered:
        g = grads.get(id(node))
        if g is None:
            continue
        node.grad = g
        if node.op is None:
            result[node] = g
            continue
        contribs = _VJP[node.op](node, g)
        for inp, contrib in zip(node.inputs, contribs):
            if contrib is None or not inp.requires_grad:
                continue
            prev = grads.get(id(inp))
            grads[id(inp)] = contrib if prev is None else prev + contrib

    if wrt is not None:
        filled: dict[Node, Array] = {}
        for leaf in wrt:
            filled[leaf] = result.get(leaf, np.zeros_like(leaf.value))
            if leaf not in result:
                leaf.grad = filled[leaf]
        return filled
    return result


# ---------------------------------------------------------------------------
# shape helpers
# ---------------------------------------------------------------------------


def _check(cond: bool, op: str, expected: str, actual):
    if not cond:
        raise ShapeError(op, expected, str(actual))


def _binary_shapes(op: str, a: Array, b: Array) -> None:
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    raise ShapeError(op, "equal shapes or a scalar operand", f"{a.shape} vs {b.shape}")


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    # Only the scalar-with-tensor broadcast exists, so reducing to a
    # scalar is the single case to undo.
    if shape == () and g.shape != ():
        return np.asarray(g.sum())
    return g


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------


@_op("add")
def _add(values, attrs, cache):
    a, b = values
    _binary_shapes("add", a, b)
    return a + b


@_vjp("add")
def _add_vjp(node, g):
    a, b = (i.value for i in node.inputs)
    return [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)]


@_op("sub")
def _sub(values, attrs, cache):
    a, b = values
    _binary_shapes("sub", a, b)
    return a - b


@_vjp("sub")
def _sub_vjp(node, g):
    a, b = (i.value for i in node.inputs)
    return [_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)]


@_op("mul")
def _mul(values, attrs, cache):
    a, b = values
    _binary_shapes("mul", a, b)
    return a * b


@_vjp("mul")
def _mul_vjp(node, g):
    a, b = (i.value for i in node.inputs)
    return [_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)]


@_op("dot")
def _dot(values, attrs, cache):
    a, b = values
    _check(a.ndim == 1 and b.ndim == 1 and a.shape == b.shape, "dot",
           "two vectors of equal length", f"{a.shape} vs {b.shape}")
    return np.asarray(a @ b)


@_vjp("dot")
def _dot_vjp(node, g):
    a, b = (i.value for i in node.inputs)
    return [g * b, g * a]


@_op("sum")
def _sum(values, attrs, cache):
    (x,) = values
    axis = attrs.get("axis")
    if axis is not None:
        _check(-x.ndim <= axis < x.ndim, "sum", f"axis within rank {x.ndim}", axis)
    return np.asarray(x.sum(axis=axis))


@_vjp("sum")
def _sum_vjp(node, g):
    x = node.inputs[0].value
    axis = node.attrs.get("axis")
    if axis is None:
        return [np.broadcast_to(g, x.shape)]
    return [np.broadcast_to(np.expand_dims(g, axis), x.shape)]


@_op("mean")
def _mean(values, attrs, cache):
    (x,) = values
    axis = attrs.get("axis")
    if axis is not None:
        _check(-x.ndim <= axis < x.ndim, "mean", f"axis within rank {x.ndim}", axis)
    return np.asarray(x.mean(axis=axis))


@_vjp("mean")
def _mean_vjp(node, g):
    x = node.inputs[0].value
    axis = node.attrs.get("axis")
    if axis is None:
        return [np.broadcast_to(g / x.size, x.shape)]
    return [np.broadcast_to(np.expand_dims(g / x.shape[axis], axis), x.shape)]


@_op("sigmoid")
def _sigmoid(values, attrs, cache):
    (x,) = values
    # exp(-softplus(-x)) is stable on both tails.
    return np.exp(-np.logaddexp(0.0, -x))


@_vjp("sigmoid")
def _sigmoid_vjp(node, g):
    s = node.value
    return [g * s * (1.0 - s)]


@_op("tanh")
def _tanh(values, attrs, cache):
    return np.tanh(values[0])


@_vjp("tanh")
def _tanh_vjp(node, g):
    return [g * (1.0 - node.value * node.value)]


@_op("relu")
def _relu(values, attrs, cache):
    return np.maximum(values[0], 0.0)


@_vjp("relu")
def _relu_vjp(node, g):
    return [g * (node.inputs[0].value > 0.0)]


@_op("log")
def _log(values, attrs, cache):
    return np.log(values[0])


@_vjp("log")
def _log_vjp(node, g):
    return [g / node.inputs[0].value]


@_op("softplus")
def _softplus(values, attrs, cache):
    return np.logaddexp(0.0, values[0])


@_vjp("softplus")
def _softplus_vjp(node, g):
    x = node.inputs[0].value
    return [g * np.exp(-np.logaddexp(0.0, -x))]


@_op("softmax_rows")
def _softmax_rows(values, attrs, cache):
    (x,) = values
    _check(x.ndim == 2, "softmax_rows", "a rank-2 input", x.shape)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@_vjp("softmax_rows")
def _softmax_rows_vjp(node, g):
    s = node.value
    return [s * (g - (g * s).sum(axis=1, keepdims=True))]


# ---------------------------------------------------------------------------
# linear algebra and structural ops
# ---------------------------------------------------------------------------


@_op("matmul")
def _matmul(values, attrs, cache):
    a, b = values
    if a.ndim == 2 and b.ndim == 2:
        _check(a.shape[1] == b.shape[0], "matmul", "(m,n) @ (n,p)", f"{a.shape} @ {b.shape}")
    elif a.ndim == 2 and b.ndim == 1:
        _check(a.shape[1] == b.shape[0], "matmul", "(m,n) @ (n,)", f"{a.shape} @ {b.shape}")
    elif a.ndim == 1 and b.ndim == 2:
        _check(a.shape[0] == b.shape[0], "matmul", "(n,) @ (n,p)", f"{a.shape} @ {b.shape}")
    else:
        raise ShapeError("matmul", "rank-2 with rank-1 or rank-2 operands (use dot for two vectors)",
                         f"{a.shape} @ {b.shape}")
    return a @ b


@_vjp("matmul")
def _matmul_vjp(node, g):
    a, b = (i.value for i in node.inputs)
    if a.ndim == 2 and b.ndim == 2:
        return [g @ b.T, a.T @ g]
    if a.ndim == 2 and b.ndim == 1:
        return [np.outer(g, b), a.T @ g]
    # (n,) @ (n,p)
    return [b @ g, np.outer(a, g)]


@_op("transpose")
def _transpose(values, attrs, cache):
    (x,) = values
    _check(x.ndim == 2, "transpose", "a rank-2 input", x.shape)
    return x.T


@_vjp("transpose")
def _transpose_vjp(node, g):
    return [g.T]


@_op("reshape")
def _reshape(values, attrs, cache):
    (x,) = values
    shape = attrs["shape"]
    _check(int(np.prod(shape, dtype=np.int64)) == x.size, "reshape",
           f"shape with {x.size} elements", shape)
    return x.reshape(shape)


@_vjp("reshape")
def _reshape_vjp(node, g):
    return [g.reshape(node.inputs[0].value.shape)]


@_op("concat")
def _concat(values, attrs, cache):
    ranks = {v.ndim for v in values}
    _check(len(values) >= 1 and len(ranks) == 1, "concat", "inputs of equal rank",
           [v.shape for v in values])
    ndim = values[0].ndim
    axis = attrs.get("axis", 0)
    _check(-ndim <= axis < ndim, "concat", f"axis within rank {ndim}", axis)
    axis %= ndim
    attrs["axis"] = axis
    rest = lambda s: s[:axis] + s[axis + 1:]
    for v in values[1:]:
        _check(rest(v.shape) == rest(values[0].shape), "concat",
               "matching extents off the concat axis", [tuple(v.shape) for v in values])
    return np.concatenate(values, axis=axis)


@_vjp("concat")
def _concat_vjp(node, g):
    axis = node.attrs.get("axis", 0)
    sizes = [i.value.shape[axis] for i in node.inputs]
    offsets = np.cumsum([0] + sizes)
    index = [slice(None)] * g.ndim
    out = []
    for k in range(len(sizes)):
        index[axis] = slice(offsets[k], offsets[k + 1])
        out.append(g[tuple(index)])
    return out


@_op("embedding_lookup")
def _embedding_lookup(values, attrs, cache):
    (table,) = values
    indices = np.asarray(attrs["indices"], dtype=np.int64)
    _check(table.ndim in (1, 2), "embedding_lookup", "a rank-1 or rank-2 table", table.shape)
    _check(indices.ndim == 1, "embedding_lookup", "a flat index list", indices.shape)
    if indices.size:
        lo, hi = indices.min(), indices.max()
        _check(lo >= 0 and hi < table.shape[0], "embedding_lookup",
               f"indices in [0, {table.shape[0]})", f"[{lo}, {hi}]")
    cache["indices"] = indices
    return table[indices]


@_vjp("embedding_lookup")
def _embedding_lookup_vjp(node, g):
    table = node.inputs[0].value
    grad = np.zeros_like(table)
    np.add.at(grad, node.cache["indices"], g)
    return [grad]


# ---------------------------------------------------------------------------
# sequence ops
# ---------------------------------------------------------------------------


@_op("conv_h")
def _conv_h(values, attrs, cache):
    # Full-width 1-D convolution: input (L, d), filters (n_f, h, d) and an
    # optional per-filter bias (n_f,). Valid positions only: output is
    # (L - h + 1, n_f).
    x, f = values[0], values[1]
    _check(x.ndim == 2, "conv_h", "input of shape (L, d)", x.shape)
    _check(f.ndim == 3 and f.shape[2] == x.shape[1], "conv_h",
           f"filters of shape (n_f, h, {x.shape[1]})", f.shape)
    h = f.shape[1]
    _check(1 <= h <= x.shape[0], "conv_h", f"filter height within 1..{x.shape[0]}", h)
    windows = np.lib.stride_tricks.sliding_window_view(x, (h, x.shape[1]))[:, 0]
    out = np.einsum("thd,fhd->tf", windows, f)
    if len(values) == 3:
        b = values[2]
        _check(b.shape == (f.shape[0],), "conv_h", f"bias of shape ({f.shape[0]},)", b.shape)
        out = out + b
    return out


@_vjp("conv_h")
def _conv_h_vjp(node, g):
    x, f = node.inputs[0].value, node.inputs[1].value
    h = f.shape[1]
    windows = np.lib.stride_tricks.sliding_window_view(x, (h, x.shape[1]))[:, 0]
    df = np.einsum("tf,thd->fhd", g, windows)
    dx = np.zeros_like(x)
    for a in range(h):
        dx[a:a + g.shape[0]] += g @ f[:, a, :]
    grads = [dx, df]
    if len(node.inputs) == 3:
        grads.append(g.sum(axis=0))
    return grads


@_op("max_over_time")
def _max_over_time(values, attrs, cache):
    (x,) = values
    _check(x.ndim == 2 and x.shape[0] >= 1, "max_over_time", "a non-empty (T, n) input", x.shape)
    cache["argmax"] = x.argmax(axis=0)
    return x.max(axis=0)


@_vjp("max_over_time")
def _max_over_time_vjp(node, g):
    x = node.inputs[0].value
    grad = np.zeros_like(x)
    grad[node.cache["argmax"], np.arange(x.shape[1])] = g
    return [grad]


@_op("dropout")
def _dropout(values, attrs, cache):
    (x,) = values
    keep = float(attrs["keep_prob"])
    _check(0.0 < keep <= 1.0, "dropout", "keep_prob in (0, 1]", keep)
    if not attrs.get("training", True) or keep == 1.0:
        cache["mask"] = None
        return x
    rng = np.random.default_rng(attrs["seed"])
    mask = rng.random(x.shape) < keep
    cache["mask"] = mask
    return x * mask / keep


@_vjp("dropout")
def _dropout_vjp(node, g):
    mask = node.cache["mask"]
    if mask is None:
        return [g]
    return [g * mask / float(node.attrs["keep_prob"])]


@_op("sq_l2_dist")
def _sq_l2_dist(values, attrs, cache):
    a, b = values
    _check(a.shape == b.shape and a.ndim in (1, 2), "sq_l2_dist",
           "two vectors or two row-batches of equal shape", f"{a.shape} vs {b.shape}")
    d = a - b
    if a.ndim == 1:
        return np.asarray((d * d).sum())
    return (d * d).sum(axis=1)


@_vjp("sq_l2_dist")
def _sq_l2_dist_vjp(node, g):
    a, b = (i.value for i in node.inputs)
    d = a - b
    scale = g if a.ndim == 1 else g[:, None]
    da = 2.0 * scale * d
    return [da, -da]


# module-level aliases for the multi-input / attr-carrying ops


def matmul(a: Node, b: Node) -> Node:
    return forward("matmul", [a, b])


def embedding_lookup(table: Node, indices) -> Node:
    return forward("embedding_lookup", [table], indices=np.asarray(indices, dtype=np.int64))


def concat(nodes: Sequence[Node], axis: int = 0) -> Node:
    return forward("concat", list(nodes), axis=axis)


def softmax_rows(x: Node) -> Node:
    return forward("softmax_rows", [x])


def conv_h(x: Node, filters: Node, bias: Node | None = None) -> Node:
    inputs = [x, filters] if bias is None else [x, filters, bias]
    return forward("conv_h", inputs)


def max_over_time(x: Node) -> Node:
    return forward("max_over_time", [x])


def dropout(x: Node, keep_prob: float, training: bool, seed: int) -> Node:
    return forward("dropout", [x], keep_prob=keep_prob, training=training, seed=seed)


def sq_l2_dist(a: Node, b: Node) -> Node:
    return forward("sq_l2_dist", [a, b])


OP_KINDS = tuple(sorted(_FORWARD))
