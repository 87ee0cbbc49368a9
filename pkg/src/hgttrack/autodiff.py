"""Dense float64 tensors with a reverse-mode tape.

Every network computation in the package is expressed with the small set of
kinds registered in ``OPS``. Each op checks shapes strictly (there is no
broadcasting apart from scalar multiplication) and, when any input takes part
in differentiation, records a node with its backward rule.

``backward`` sorts the recorded nodes topologically into a :class:`Tape` and
replays it in reverse, accumulating gradients additively.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)
# When set, piecewise ops append their branch pattern here (see grad_check).
_branch_log: contextvars.ContextVar[list | None] = contextvars.ContextVar("branch_log", default=None)


class ShapeError(ValueError):
    pass


class SamplingError(ValueError):
    pass


class GraphError(RuntimeError):
    """Raised by backward on non-scalar or detached losses."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_backward", "_inputs", "_kind", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._backward: Callable | None = None
        self._inputs: tuple[Tensor, ...] = ()
        self._kind = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self.shape)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{rg}, kind={self._kind})"

    # operator sugar; all route through the registered ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return mul_scalar(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _raise_item(shape):
    raise ShapeError(f"item() needs a single-element tensor, got shape {shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@contextlib.contextmanager
def no_grad():
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled() -> bool:
    return _grad_enabled.get()


def _log_branch(pattern: np.ndarray) -> None:
    log = _branch_log.get()
    if log is not None:
        log.append(np.asarray(pattern).tobytes())


def _make(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable, kind: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._kind = kind
    needs = _grad_enabled.get() and any(t.requires_grad for t in inputs)
    out.requires_grad = needs
    if needs:
        out._inputs = tuple(inputs)
        out._backward = backward
    else:
        out._inputs = ()
        out._backward = None
    return out


def _check_same(a: Tensor, b: Tensor, kind: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


# ---------------------------------------------------------------------------
# the thirteen core kinds


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(n,k)@(k,m), or batched (B,n,k)@(B,k,m) with equal batch extents."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise ShapeError(f"matmul: need two 2-D or two 3-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _make(ad @ bd, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Row-wise affine map: x (n, in) @ weight (in, out) + bias (out,)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear: x {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias {bias.shape} must be ({weight.shape[1]},)")
    xd, wd = x.data, weight.data
    out = xd @ wd
    if bias is not None:
        out = out + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        grads = [g @ wd.T, xd.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    return _make(out, inputs, backward, "linear")


def conv1x1(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Pointwise convolution of an (H, W, Cin) map with weight (Cin, Cout)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 3 or weight.data.ndim != 2 or x.shape[2] != weight.shape[0]:
        raise ShapeError(f"conv1x1: map {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"conv1x1: bias {bias.shape} must be ({weight.shape[1]},)")
    h, w, cin = x.shape
    flat = x.data.reshape(h * w, cin)
    wd = weight.data
    out = flat @ wd
    if bias is not None:
        out = out + bias.data
    out = out.reshape(h, w, wd.shape[1])
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(h * w, -1)
        grads = [(g2 @ wd.T).reshape(h, w, cin), flat.T @ g2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return _make(out, inputs, backward, "conv1x1")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    _log_branch(mask)

    def backward(g):
        return (g * mask,)

    return _make(np.where(mask, x.data, 0.0), (x,), backward, "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    # split form keeps exp from overflowing on either tail
    e = np.exp(-np.abs(xd))
    out = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), backward, "sigmoid")


def softmax_lastdim(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim == 0:
        raise ShapeError("softmax_lastdim: needs at least one axis")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (x,), backward, "softmax_lastdim")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")

    def backward(g):
        return g, g

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "sub")

    def backward(g):
        return g, -g

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul_scalar(x: Tensor, s: float) -> Tensor:
    x = as_tensor(x)
    s = float(s)

    def backward(g):
        return (g * s,)

    return _make(x.data * s, (x,), backward, "mul_scalar")


def concat_lastdim(xs: Sequence[Tensor]) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat_lastdim: empty input list")
    lead = xs[0].shape[:-1]
    for x in xs:
        if x.data.ndim == 0 or x.shape[:-1] != lead:
            raise ShapeError(f"concat_lastdim: leading shapes differ: {[t.shape for t in xs]}")
    widths = [x.shape[-1] for x in xs]
    splits = np.cumsum(widths)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=-1))

    return _make(np.concatenate([x.data for x in xs], axis=-1), xs, backward, "concat_lastdim")


def bilinear_sample(fmap: Tensor, coords: Tensor) -> Tensor:
    """Sample an (H, W, C) map at (M, 2) continuous (x, y) locations -> (M, C).

    Coordinates up to half a cell beyond the outer lattice points are clamped
    onto the border; anything further out raises :class:`SamplingError`.
    Gradients flow to both the map and the coordinates.
    """
    fmap, coords = as_tensor(fmap), as_tensor(coords)
    if fmap.data.ndim != 3 or coords.data.ndim != 2 or coords.shape[1] != 2:
        raise ShapeError(f"bilinear_sample: map {fmap.shape}, coords {coords.shape}")
    h, w, c = fmap.shape
    xy = coords.data
    if xy.size:
        bad = (xy[:, 0] < -0.5) | (xy[:, 0] > w - 0.5) | (xy[:, 1] < -0.5) | (xy[:, 1] > h - 0.5)
        bad |= ~np.isfinite(xy).all(axis=1)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise SamplingError(
                f"bilinear_sample: coordinate ({xy[i, 0]:.6g}, {xy[i, 1]:.6g}) outside "
                f"extent width={w} height={h} (tolerance 0.5)"
            )
    x = np.clip(xy[:, 0], 0.0, w - 1.0)
    y = np.clip(xy[:, 1], 0.0, h - 1.0)
    inside_x = (xy[:, 0] >= 0.0) & (xy[:, 0] <= w - 1.0)
    inside_y = (xy[:, 1] >= 0.0) & (xy[:, 1] <= h - 1.0)
    # lower corner at most extent-2 so the upper corner stays in range;
    # at the last lattice point the fraction is exactly 1
    x0 = np.minimum(np.floor(x), max(w - 2, 0)).astype(np.int64)
    y0 = np.minimum(np.floor(y), max(h - 2, 0)).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    _log_branch(np.stack([x0, y0, inside_x, inside_y]))
    m = fmap.data
    v00, v01, v10, v11 = m[y0, x0], m[y0, x1], m[y1, x0], m[y1, x1]
    out = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)

    def backward(g):
        gm = np.zeros_like(m)
        np.add.at(gm, (y0, x0), g * (1 - fy) * (1 - fx))
        np.add.at(gm, (y0, x1), g * (1 - fy) * fx)
        np.add.at(gm, (y1, x0), g * fy * (1 - fx))
        np.add.at(gm, (y1, x1), g * fy * fx)
        dx = ((1 - fy) * (v01 - v00) + fy * (v11 - v10)) * g
        dy = ((1 - fx) * (v10 - v00) + fx * (v11 - v01)) * g
        gc = np.stack([dx.sum(axis=1) * inside_x, dy.sum(axis=1) * inside_y], axis=1)
        return gm, gc

    return _make(out, (fmap, coords), backward, "bilinear_sample")


def gather_rows(x: Tensor, index) -> Tensor:
    """Select rows of ``x`` along axis 0; index -1 yields a zero row."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64).reshape(-1)
    if x.data.ndim == 0:
        raise ShapeError("gather_rows: needs at least one axis")
    n = x.shape[0]
    if idx.size and (idx.min() < -1 or idx.max() >= n):
        raise ShapeError(f"gather_rows: index out of range for {n} rows")
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    if n == 0:
        out = np.zeros((idx.size,) + x.shape[1:], dtype=DTYPE)
    else:
        out = x.data[safe]
        if not valid.all():
            out[~valid] = 0.0

    def backward(g):
        gx = np.zeros_like(x.data)
        if valid.any():
            np.add.at(gx, idx[valid], g[valid])
        return (gx,)

    return _make(out, (x,), backward, "gather_rows")


def scatter_weighted_sum(values: Tensor, weights: Tensor, index, num_out: int) -> Tensor:
    """out[index[e]] += weights[e] * values[e]; weights has values' shape minus the last axis."""
    values, weights = as_tensor(values), as_tensor(weights)
    idx = np.asarray(index, dtype=np.int64).reshape(-1)
    if values.data.ndim < 2 or weights.shape != values.shape[:-1] or idx.shape[0] != values.shape[0]:
        raise ShapeError(
            f"scatter_weighted_sum: values {values.shape}, weights {weights.shape}, index {idx.shape}"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= num_out):
        raise ShapeError(f"scatter_weighted_sum: index out of range for {num_out} outputs")
    vd, wd = values.data, weights.data
    out = np.zeros((num_out,) + values.shape[1:], dtype=DTYPE)
    np.add.at(out, idx, vd * wd[..., None])

    def backward(g):
        ge = g[idx]
        return ge * wd[..., None], (ge * vd).sum(axis=-1)

    return _make(out, (values, weights), backward, "scatter_weighted_sum")


# ---------------------------------------------------------------------------
# elementwise math and structural views needed by the losses and by
# multi-head attention (see README "Tensor primitives")


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return g * bd, g * ad

    return _make(ad * bd, (a, b), backward, "mul")


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return _make(out, (x,), backward, "exp")


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if (x.data <= 0).any():
        raise ValueError("log: non-positive input; clip first")
    xd = x.data

    def backward(g):
        return (g / xd,)

    return _make(np.log(xd), (x,), backward, "log")


def abs_(x: Tensor) -> Tensor:
    x = as_tensor(x)
    sign = np.sign(x.data)
    _log_branch(sign)

    def backward(g):
        return (g * sign,)

    return _make(np.abs(x.data), (x,), backward, "abs")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    _log_branch(inside)

    def backward(g):
        return (g * inside,)

    return _make(np.clip(x.data, lo, hi), (x,), backward, "clip")


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    """Sum over all elements (scalar result) or over one axis."""
    x = as_tensor(x)
    shape = x.shape
    if axis is None:
        out = np.array(x.data.sum())

        def backward(g):
            return (np.full(shape, float(g), dtype=DTYPE),)

    else:
        ax = axis % x.data.ndim
        out = x.data.sum(axis=ax)

        def backward(g):
            return (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),)

    return _make(out, (x,), backward, "sum")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from exc
    old = x.shape

    def backward(g):
        return (g.reshape(old),)

    return _make(out, (x,), backward, "reshape")


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {x.data.ndim} axes")
    inv = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inv),)

    return _make(np.transpose(x.data, axes).copy(), (x,), backward, "permute")


OPS: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "linear": linear,
    "conv1x1": conv1x1,
    "relu": relu,
    "sigmoid": sigmoid,
    "softmax_lastdim": softmax_lastdim,
    "add": add,
    "sub": sub,
    "mul_scalar": mul_scalar,
    "concat_lastdim": concat_lastdim,
    "bilinear_sample": bilinear_sample,
    "gather_rows": gather_rows,
    "scatter_weighted_sum": scatter_weighted_sum,
    "mul": mul,
    "exp": exp,
    "log": log,
    "abs": abs_,
    "clip": clip,
    "sum": sum_,
    "reshape": reshape,
    "permute": permute,
}

CORE_KINDS = tuple(list(OPS)[:13])


def forward_op(kind: str, inputs: Sequence[Tensor], **attrs) -> Tensor:
    """Dispatch by kind name; list-valued kinds (concat) take ``inputs`` whole."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    if kind == "concat_lastdim":
        return fn(list(inputs), **attrs)
    return fn(*inputs, **attrs)


# ---------------------------------------------------------------------------
# composed helpers


def stack_rows(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along axis 0, composed from scatter_weighted_sum and add."""
    xs = [as_tensor(x) for x in xs]
    total = sum(x.shape[0] for x in xs)
    out = None
    offset = 0
    for x in xs:
        n = x.shape[0]
        if n == 0:
            continue
        ones = Tensor(np.ones(x.shape[:-1]))
        part = scatter_weighted_sum(x, ones, np.arange(offset, offset + n), total)
        out = part if out is None else add(out, part)
        offset += n
    if out is None:
        return Tensor(np.zeros((0,) + xs[0].shape[1:]))
    return out


def mean(x: Tensor) -> Tensor:
    return mul_scalar(sum_(x), 1.0 / max(x.size, 1))


# ---------------------------------------------------------------------------
# tape and backward


@dataclass
class Tape:
    """Recorded nodes in topological order (every node after its inputs)."""

    nodes: list[Tensor] = field(default_factory=list)

    def kinds(self) -> list[str]:
        return [n._kind for n in self.nodes]


def build_tape(root: Tensor) -> Tape:
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
        for parent in node._inputs:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return Tape(order)


def backward(loss: Tensor, leaves: Iterable[Tensor] | None = None) -> Tape:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    Leaves listed in ``leaves`` that the loss does not depend on get a zero
    gradient.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("backward: loss is not on a tape (no input requires grad)")
    tape = build_tape(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._inputs, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    if leaves is not None:
        for leaf in leaves:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)
    return tape


# ---------------------------------------------------------------------------
# finite-difference oracle


@dataclass
class GradCheckReport:
    max_relative_error: float
    passed: bool
    checked: int
    skipped_kinks: int = 0
    oracle_valid: bool = True
    worst: tuple | None = None
    max_abs_error: float = 0.0
    max_raw_relative_error: float = 0.0  # without the absolute guard

    def __bool__(self) -> bool:
        return self.passed


def grad_check(
    f: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-5,
    floor: float = 1e-8,
    max_per_leaf: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients of ``f()`` with central differences.

    ``f`` closes over ``leaves`` and is re-evaluated after in-place
    perturbation of single entries. With ``max_per_leaf`` only that many
    entries per leaf (drawn with ``seed``) are probed. Entries whose two
    perturbed evaluations take a different branch of a piecewise op (relu,
    abs, clip, bilinear cell) than the unperturbed one straddle a kink where
    the derivative is undefined; they are counted in ``skipped_kinks`` rather
    than compared.

    The error of an entry is |a - n| / max(|a|, |n|), except that
    discrepancies no larger than ``floor`` in absolute terms count as
    agreement: the round-off of a central difference alone is of order
    |f| * 1e-16 / eps, so tiny gradients cannot be resolved relatively.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")

    def evaluate() -> tuple[float, list]:
        log: list = []
        token = _branch_log.set(log)
        try:
            with no_grad():
                val = float(f().data)
        finally:
            _branch_log.reset(token)
        return val, log

    base, base_pattern = evaluate()
    again, _ = evaluate()
    if base != again:
        return GradCheckReport(float("inf"), False, 0, oracle_valid=False)

    for leaf in leaves:
        leaf.grad = None
    loss = f()
    backward(loss, leaves)
    analytic = [leaf.grad.copy() for leaf in leaves]

    rng = np.random.default_rng(seed)
    worst_err, worst = 0.0, None
    max_abs = max_raw = 0.0
    checked = skipped = 0
    for li, leaf in enumerate(leaves):
        flat = leaf.data.reshape(-1)
        n = flat.size
        if max_per_leaf is not None and n > max_per_leaf:
            entries = np.sort(rng.choice(n, size=max_per_leaf, replace=False))
        else:
            entries = np.arange(n)
        for j in entries:
            orig = flat[j]
            flat[j] = orig + eps
            fp, pat_p = evaluate()
            flat[j] = orig - eps
            fm, pat_m = evaluate()
            flat[j] = orig
            if pat_p != base_pattern or pat_m != base_pattern:
                skipped += 1
                continue
            numeric = (fp - fm) / (2 * eps)
            a = analytic[li].reshape(-1)[j]
            diff = abs(a - numeric)
            raw = diff / max(abs(a), abs(numeric)) if diff > 0 else 0.0
            err = raw if diff > floor else 0.0
            max_abs, max_raw = max(max_abs, diff), max(max_raw, raw)
            checked += 1
            if err > worst_err:
                worst_err, worst = err, (li, int(j), float(a), float(numeric))
    passed = worst_err < tol and (checked > 0 or skipped == 0)
    return GradCheckReport(worst_err, passed, checked, skipped, True, worst, max_abs, max_raw)
