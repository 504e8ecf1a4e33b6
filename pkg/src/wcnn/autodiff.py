"""Reverse-mode automatic differentiation over tensor values.

Forward evaluation is eager.  Every operation records a `Variable` node that
remembers its parents and a backward closure, and carries a global creation
rank; the tape is this creation-ordered node sequence.  `backward()` replays
the closures in exact reverse creation order, so gradient accumulation on
fan-out is plain addition in recording order and 64-bit runs are
bit-reproducible.

Each forward pass supports exactly one backward pass: the closures (which
hold the saved activations) are dropped once consumed, and reusing a spent
subgraph raises.
"""

from __future__ import annotations

import itertools

import numpy as np

from .tensor import ShapeError, Tensor

_creation_rank = itertools.count()


class Variable:
    """A tensor value in the computation record.

    `requires_grad` marks leaves whose gradient should be materialized; it is
    populated as a `Tensor` of the same shape by `backward()`.
    """

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward_fn",
                 "_rank", "_live")

    def __init__(self, value, requires_grad: bool = False, name: str = ""):
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.grad: Tensor | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Variable, ...] = ()
        self._backward_fn = None
        self._rank = next(_creation_rank)
        self._live = self.requires_grad

    def __repr__(self) -> str:
        tag = self.name or "var"
        return f"Variable({tag}: {self.value!r}, requires_grad={self.requires_grad})"


def record(op: str, value, parents: tuple[Variable, ...], backward_fn) -> Variable:
    """Append an operation result to the tape.

    `backward_fn(output_grad: ndarray) -> tuple[ndarray | None, ...]` returns
    one gradient per parent (None for parents that need none).
    """
    out = Variable(value, name=op)
    out._parents = tuple(parents)
    out._live = any(p._live for p in out._parents)
    if out._live:
        out._backward_fn = backward_fn
    return out


def backward(loss: Variable) -> list[Variable]:
    """Accumulate d(loss)/d(leaf) into every reachable requires-grad leaf.

    Returns the list of requires-grad variables that received a gradient
    (empty when nothing in the graph requires one).  The loss must hold a
    single scalar.  Raises if any part of the subgraph was already consumed
    by a previous backward pass.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")

    if not loss._live:
        return []

    # Reachable live nodes, then reverse creation order = reverse tape order.
    visited: dict[int, Variable] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in visited:
            continue
        visited[id(node)] = node
        for p in node._parents:
            if p._live and id(p) not in visited:
                stack.append(p)
    order = sorted(visited.values(), key=lambda n: n._rank, reverse=True)

    buffers: dict[int, np.ndarray] = {
        id(loss): np.ones(loss.value.shape, dtype=loss.value.data.dtype)
    }
    touched: list[Variable] = []
    for node in order:
        out_grad = buffers.get(id(node))
        if out_grad is None:
            continue
        if node.requires_grad:
            node.grad = Tensor(out_grad)
            touched.append(node)
        if not node._parents:
            continue
        if node._backward_fn is None:
            raise RuntimeError(
                f"backward already consumed node {node.name!r}; "
                "rerun the forward pass before differentiating again"
            )
        parent_grads = node._backward_fn(out_grad)
        node._backward_fn = None
        for parent, g in zip(node._parents, parent_grads):
            if g is None or not parent._live:
                continue
            if g.shape != parent.value.shape:
                raise ShapeError(
                    f"{node.name}: gradient shape {g.shape} does not match "
                    f"parent shape {parent.value.shape}"
                )
            buf = buffers.get(id(parent))
            if buf is None:
                buffers[id(parent)] = g.astype(parent.value.data.dtype, copy=True)
            else:
                buf += g
    return touched


# --- primitive recorded ops -------------------------------------------------


def _as_variable(x) -> Variable:
    return x if isinstance(x, Variable) else Variable(x)


def add(a: Variable, b: Variable) -> Variable:
    a, b = _as_variable(a), _as_variable(b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")
    value = a.value.data + b.value.data
    return record("add", value, (a, b), lambda g: (g, g))


def sub(a: Variable, b: Variable) -> Variable:
    a, b = _as_variable(a), _as_variable(b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"sub shape mismatch: {a.value.shape} vs {b.value.shape}")
    value = a.value.data - b.value.data
    return record("sub", value, (a, b), lambda g: (g, -g))


def mul(a: Variable, b: Variable) -> Variable:
    a, b = _as_variable(a), _as_variable(b)
    if a.value.shape != b.value.shape:
        raise ShapeError(f"mul shape mismatch: {a.value.shape} vs {b.value.shape}")
    ad, bd = a.value.data, b.value.data
    return record("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Variable, s: float) -> Variable:
    a = _as_variable(a)
    s = a.value.data.dtype.type(s)
    return record("scale", a.value.data * s, (a,), lambda g: (g * s,))


def total(a: Variable) -> Variable:
    """Sum all elements into a scalar."""
    a = _as_variable(a)
    shape, dt = a.value.shape, a.value.data.dtype
    value = np.asarray(a.value.data.sum(), dtype=dt)
    return record("total", value, (a,), lambda g: (np.full(shape, g.reshape(-1)[0], dtype=dt),))


def reshape(a: Variable, shape) -> Variable:
    a = _as_variable(a)
    from . import tensor as T

    value = T.reshape(a.value, shape)
    orig = a.value.shape
    return record("reshape", value, (a,), lambda g: (g.reshape(orig),))


def concat_channels(parts: list[Variable]) -> Variable:
    from . import tensor as T

    parts = [_as_variable(p) for p in parts]
    value = T.concat_channels([p.value for p in parts])
    sizes = [p.value.shape[1] for p in parts]

    def backward_fn(g):
        grads, at = [], 0
        for c in sizes:
            grads.append(g[:, at:at + c])
            at += c
        return tuple(grads)

    return record("concat_channels", value, tuple(parts), backward_fn)


# --- finite-difference verification ----------------------------------------


def finite_difference_check(f, x, eps: float = 1e-5, coords=None) -> float:
    """Compare analytic and central-difference gradients of a scalar function.

    `f` maps a leaf Variable to a scalar Variable and must be deterministic.
    Returns the worst relative error over the checked coordinates:

        |numeric - analytic| / (|analytic| + |numeric| + 1e-12)

    `coords` restricts the sweep to the given flat indices (all by default).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = x if isinstance(x, Tensor) else Tensor(x)
    leaf = Variable(x, requires_grad=True, name="fd-probe")
    out = f(leaf)
    if out.value.size != 1:
        raise ShapeError(f"finite_difference_check needs a scalar function, got {out.value.shape}")
    backward(out)
    if leaf.grad is None:
        analytic = np.zeros(x.shape, dtype=x.data.dtype)
    else:
        analytic = leaf.grad.data
    analytic = analytic.reshape(-1)

    flat = x.data.reshape(-1)
    indices = range(flat.size) if coords is None else coords
    worst = 0.0
    for i in indices:
        probe = flat.copy()
        probe[i] += eps
        fp = f(Variable(Tensor(probe.reshape(x.shape)))).value.item()
        probe[i] -= 2 * eps
        fm = f(Variable(Tensor(probe.reshape(x.shape)))).value.item()
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite output while probing coordinate {i}")
        numeric = (fp - fm) / (2 * eps)
        err = abs(numeric - analytic[i]) / (abs(analytic[i]) + abs(numeric) + 1e-12)
        worst = max(worst, err)
    return worst
