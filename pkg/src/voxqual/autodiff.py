"""Reverse-mode automatic differentiation over small dense float tensors.

Every model computation runs through :func:`forward_primitive`, which
evaluates one primitive and, when a graph is active and any input requires
gradients, records the step on that graph's tape. :func:`backward` replays
the tape in reverse and accumulates gradients additively across fan-out.

Tensors are rank <= 3 and float32 by default. float64 is supported so that
numerical gradient checks can run in higher precision; primitives preserve
the dtype of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

MAX_RANK = 3

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """Dense float array plus an optional same-shape gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim > MAX_RANK:
            raise ValueError(
                f"tensor rank {arr.ndim} exceeds the supported rank {MAX_RANK}"
            )
        # ascontiguousarray would promote 0-d scalars to 1-d; keep rank 0 intact
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x, requires_grad: bool = False) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=requires_grad)


@dataclass
class TapeNode:
    kind: str
    inputs: tuple
    out: Tensor
    attrs: dict
    ctx: tuple


class Graph:
    """Append-only tape of executed primitives.

    Nodes are stored in execution order, which is already topological:
    every input of a node was produced (or existed as a leaf) before the
    node ran, so the tape is acyclic by construction. Use as a context
    manager to make the graph active for recording.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def __enter__(self) -> "Graph":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False

    def __len__(self):
        return len(self.nodes)


_ACTIVE: list[Graph] = []


def active_graph() -> Optional[Graph]:
    return _ACTIVE[-1] if _ACTIVE else None


# ---------------------------------------------------------------------------
# primitive registry
#
# forward(datas, attrs) -> (out_array, ctx); ctx holds whatever backward
# needs beyond the raw inputs. backward(ctx, datas, attrs, gout) returns one
# gradient array per input (None for inputs that get no gradient).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Op:
    forward: Callable
    backward: Callable


_OPS: dict[str, _Op] = {}


def _shape_error(kind: str, a, b) -> ValueError:
    return ValueError(f"{kind}: incompatible shapes {tuple(a)} and {tuple(b)}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape` by summing stretched axes."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# matmul: strict 2-D contraction, (m, k) @ (k, n) -> (m, n)

def _matmul_fwd(xs, attrs):
    a, b = xs
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a.shape, b.shape)
    return a @ b, ()


def _matmul_bwd(ctx, xs, attrs, g):
    a, b = xs
    return [g @ b.T, a.T @ g]


# add / mul: elementwise with numpy broadcasting

def _add_fwd(xs, attrs):
    a, b = xs
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error("add", a.shape, b.shape) from None
    return a + b, ()


def _add_bwd(ctx, xs, attrs, g):
    a, b = xs
    return [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)]


def _mul_fwd(xs, attrs):
    a, b = xs
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error("mul", a.shape, b.shape) from None
    return a * b, ()


def _mul_bwd(ctx, xs, attrs, g):
    a, b = xs
    return [_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)]


# concat: along one axis, all other dims equal; axis defaults to the last

def _concat_fwd(xs, attrs):
    axis = attrs.get("axis", -1)
    ref = xs[0].shape
    for x in xs[1:]:
        ok = x.ndim == len(ref) and all(
            x.shape[i] == ref[i] for i in range(x.ndim) if i != axis % x.ndim
        )
        if not ok:
            raise _shape_error("concat", ref, x.shape)
    return np.concatenate(xs, axis=axis), ()


def _concat_bwd(ctx, xs, attrs, g):
    axis = attrs.get("axis", -1)
    widths = [x.shape[axis] for x in xs]
    splits = np.cumsum(widths)[:-1]
    return list(np.split(g, splits, axis=axis))


# elementwise nonlinearities

def _tanh_fwd(xs, attrs):
    out = np.tanh(xs[0])
    return out, (out,)


def _tanh_bwd(ctx, xs, attrs, g):
    (out,) = ctx
    return [g * (1.0 - out * out)]


def _sigmoid_fwd(xs, attrs):
    x = xs[0]
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, (out,)


def _sigmoid_bwd(ctx, xs, attrs, g):
    (out,) = ctx
    return [g * out * (1.0 - out)]


def _leaky_relu_fwd(xs, attrs):
    x = xs[0]
    slope = attrs["slope"]
    return np.where(x >= 0, x, x * slope), ()


def _leaky_relu_bwd(ctx, xs, attrs, g):
    x = xs[0]
    slope = attrs["slope"]
    # gradient at exactly 0 uses the positive-side slope 1.0
    return [g * np.where(x >= 0, 1.0, slope).astype(x.dtype)]


# layer_norm: pure normalization over one axis (affine handled by mul/add)

def _layer_norm_fwd(xs, attrs):
    x = xs[0]
    axis = attrs.get("axis", -1)
    eps = attrs.get("epsilon", 1e-5)
    mu = x.mean(axis=axis, keepdims=True)
    var = x.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x - mu) * inv
    return y, (y, inv)


def _layer_norm_bwd(ctx, xs, attrs, g):
    y, inv = ctx
    axis = attrs.get("axis", -1)
    gm = g.mean(axis=axis, keepdims=True)
    gym = (g * y).mean(axis=axis, keepdims=True)
    return [inv * (g - gm - y * gym)]


def _softmax_fwd(xs, attrs):
    x = xs[0]
    axis = attrs.get("axis", -1)
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)
    return y, (y,)


def _softmax_bwd(ctx, xs, attrs, g):
    (y,) = ctx
    axis = attrs.get("axis", -1)
    dot = (g * y).sum(axis=axis, keepdims=True)
    return [y * (g - dot)]


def _log_fwd(xs, attrs):
    return np.log(xs[0]), ()


def _log_bwd(ctx, xs, attrs, g):
    return [g / xs[0]]


# mean: over one axis, or over all elements (axis=None -> scalar output)

def _mean_fwd(xs, attrs):
    axis = attrs.get("axis", None)
    return xs[0].mean(axis=axis), ()


def _mean_bwd(ctx, xs, attrs, g):
    x = xs[0]
    axis = attrs.get("axis", None)
    if axis is None:
        return [np.full(x.shape, g / x.size, dtype=x.dtype)]
    n = x.shape[axis]
    return [np.broadcast_to(np.expand_dims(g / n, axis), x.shape).copy()]


# absolute difference |a - b|; sign(0) contributes zero gradient

def _absdiff_fwd(xs, attrs):
    a, b = xs
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error("absdiff", a.shape, b.shape) from None
    d = a - b
    return np.abs(d), (np.sign(d),)


def _absdiff_bwd(ctx, xs, attrs, g):
    a, b = xs
    (s,) = ctx
    return [_unbroadcast(g * s, a.shape), _unbroadcast(-g * s, b.shape)]


# transpose: 2-D axis swap

def _transpose_fwd(xs, attrs):
    x = xs[0]
    if x.ndim != 2:
        raise ValueError(f"transpose: expected rank 2, got shape {x.shape}")
    return x.T.copy(), ()


def _transpose_bwd(ctx, xs, attrs, g):
    return [g.T]


# slice: contiguous [start, stop) range along one axis

def _slice_fwd(xs, attrs):
    x = xs[0]
    axis, start, stop = attrs["axis"], attrs["start"], attrs["stop"]
    n = x.shape[axis]
    if not (0 <= start < stop <= n):
        raise ValueError(
            f"slice: range [{start}, {stop}) invalid for axis {axis} of shape {x.shape}"
        )
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    return x[tuple(idx)].copy(), ()


def _slice_bwd(ctx, xs, attrs, g):
    x = xs[0]
    axis, start, stop = attrs["axis"], attrs["start"], attrs["stop"]
    out = np.zeros_like(x)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    out[tuple(idx)] = g
    return [out]


_OPS.update(
    {
        "matmul": _Op(_matmul_fwd, _matmul_bwd),
        "add": _Op(_add_fwd, _add_bwd),
        "mul": _Op(_mul_fwd, _mul_bwd),
        "concat": _Op(_concat_fwd, _concat_bwd),
        "tanh": _Op(_tanh_fwd, _tanh_bwd),
        "sigmoid": _Op(_sigmoid_fwd, _sigmoid_bwd),
        "leaky_relu": _Op(_leaky_relu_fwd, _leaky_relu_bwd),
        "layer_norm": _Op(_layer_norm_fwd, _layer_norm_bwd),
        "softmax": _Op(_softmax_fwd, _softmax_bwd),
        "log": _Op(_log_fwd, _log_bwd),
        "mean": _Op(_mean_fwd, _mean_bwd),
        "absdiff": _Op(_absdiff_fwd, _absdiff_bwd),
        "transpose": _Op(_transpose_fwd, _transpose_bwd),
        "slice": _Op(_slice_fwd, _slice_bwd),
    }
)


def forward_primitive(kind: str, inputs: Sequence, attrs: Optional[dict] = None) -> Tensor:
    """Evaluate one primitive and record it on the active graph if tracked.

    The output requires gradients iff any input does; recording happens only
    when that holds and a graph is currently active.
    """
    op = _OPS.get(kind)
    if op is None:
        raise ValueError(f"unknown primitive kind '{kind}'")
    attrs = dict(attrs) if attrs else {}
    ts = tuple(as_tensor(t) for t in inputs)
    out_data, ctx = op.forward([t.data for t in ts], attrs)
    requires = any(t.requires_grad for t in ts)
    out = Tensor(out_data, requires_grad=requires)
    graph = active_graph()
    if requires and graph is not None:
        graph.nodes.append(TapeNode(kind, ts, out, attrs, ctx))
    return out


# thin wrappers; shape and broadcasting rules are documented on each primitive

def matmul(a, b) -> Tensor:
    return forward_primitive("matmul", (a, b))


def add(a, b) -> Tensor:
    return forward_primitive("add", (a, b))


def mul(a, b) -> Tensor:
    return forward_primitive("mul", (a, b))


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    return forward_primitive("concat", tuple(parts), {"axis": axis})


def tanh(x) -> Tensor:
    return forward_primitive("tanh", (x,))


def sigmoid(x) -> Tensor:
    return forward_primitive("sigmoid", (x,))


def leaky_relu(x, slope: float) -> Tensor:
    return forward_primitive("leaky_relu", (x,), {"slope": slope})


def layer_norm(x, axis: int = -1, epsilon: float = 1e-5) -> Tensor:
    return forward_primitive("layer_norm", (x,), {"axis": axis, "epsilon": epsilon})


def softmax(x, axis: int = -1) -> Tensor:
    return forward_primitive("softmax", (x,), {"axis": axis})


def log(x) -> Tensor:
    return forward_primitive("log", (x,))


def mean(x, axis: Optional[int] = None) -> Tensor:
    return forward_primitive("mean", (x,), {"axis": axis})


def absdiff(a, b) -> Tensor:
    return forward_primitive("absdiff", (a, b))


def transpose(x) -> Tensor:
    return forward_primitive("transpose", (x,))


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    return forward_primitive("slice", (x,), {"axis": axis, "start": start, "stop": stop})


def backward(graph: Graph, loss: Tensor) -> None:
    """Populate `.grad` for every requires_grad tensor reachable from `loss`.

    Gradients accumulate additively across fan-out within one call, and
    across calls until the tensors are zeroed. Deterministic: the tape is
    replayed in strict reverse execution order.
    """
    if loss.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    stop = None
    for i in range(len(graph.nodes) - 1, -1, -1):
        if graph.nodes[i].out is loss:
            stop = i
            break
    if stop is None and graph.nodes and loss.requires_grad:
        raise ValueError("backward: loss tensor was not produced on this graph")

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}

    def settle(t: Tensor, g: np.ndarray):
        g = np.ascontiguousarray(g, dtype=t.data.dtype).reshape(t.shape)
        t.grad = g if t.grad is None else t.grad + g

    for node in reversed(graph.nodes[: stop + 1] if stop is not None else []):
        g = pending.pop(id(node.out), None)
        if g is None:
            continue
        holders.pop(id(node.out), None)
        settle(node.out, g)
        in_grads = _OPS[node.kind].backward(
            node.ctx, [t.data for t in node.inputs], node.attrs, g
        )
        for t, ig in zip(node.inputs, in_grads):
            if ig is None or not t.requires_grad:
                continue
            key = id(t)
            if key in pending:
                pending[key] = pending[key] + ig
            else:
                pending[key] = ig
                holders[key] = t
    for key, t in holders.items():
        settle(t, pending[key])


@dataclass
class GradCheckReport:
    """Per-element comparison of analytic vs central-difference gradients."""

    rel_err: np.ndarray
    indices: np.ndarray
    max_rel_err: float
    rtol: float
    passed: bool

    def __str__(self):
        tag = "pass" if self.passed else "FAIL"
        return f"grad_check {tag}: max_rel_err={self.max_rel_err:.3e} (rtol={self.rtol:g})"


def grad_check(
    function: Callable[[Tensor], Tensor],
    point: Tensor,
    rtol: float = 1e-3,
    step: float = 1e-3,
    sample: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Check analytic gradients of a scalar-valued tensor function.

    Both the analytic pass and the central differences run in float64
    regardless of the point's storage dtype, so the comparison isolates
    genuine gradient errors from single-precision forward noise. The
    relative error uses a 1e-3 absolute scale guard in its denominator:
    near-zero gradients are compared at an effective absolute tolerance of
    rtol * 1e-3. Non-finite values always count as failures.

    `function` must be smooth at `point`; points within `step` of a
    non-smooth locus (kinks of leaky_relu or absdiff) produce spurious
    mismatches by construction. `sample`, when set, checks a seeded random
    subset of elements instead of all of them.
    """
    base = np.asarray(point.data, dtype=np.float64)
    x = Tensor(base.copy(), requires_grad=True, dtype=np.float64)
    g = Graph()
    with g:
        out = function(x)
    if out.size != 1:
        raise ValueError(f"grad_check: function output must be scalar, got {out.shape}")
    backward(g, out)
    analytic = x.grad if x.grad is not None else np.zeros_like(base)

    n = base.size
    if sample is not None and sample < n:
        idx = np.random.default_rng(seed).choice(n, size=sample, replace=False)
        idx.sort()
    else:
        idx = np.arange(n)

    def scalar_eval(arr: np.ndarray) -> float:
        return float(function(Tensor(arr, dtype=np.float64)).data.reshape(()))

    numeric = np.empty(len(idx), dtype=np.float64)
    flat = base.reshape(-1)
    for j, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + step
        hi = scalar_eval(base)
        flat[i] = orig - step
        lo = scalar_eval(base)
        flat[i] = orig
        numeric[j] = (hi - lo) / (2.0 * step)

    a = analytic.reshape(-1)[idx]
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-3)
    rel = np.abs(a - numeric) / denom
    bad = ~(np.isfinite(a) & np.isfinite(numeric))
    rel[bad] = np.inf
    max_err = float(rel.max()) if len(rel) else 0.0
    return GradCheckReport(
        rel_err=rel,
        indices=idx,
        max_rel_err=max_err,
        rtol=rtol,
        passed=bool(max_err < rtol),
    )


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()


PRIMITIVE_KINDS = tuple(sorted(_OPS))
