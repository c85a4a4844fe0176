"""Reverse-mode automatic differentiation with second-order support.

Tensors are immutable float64 arrays that remember how they were computed.
Backward passes are themselves expressed with Tensor operations, so the
adjoints returned by `grad` live on a fresh tape and can be differentiated
again (re-recording). That is exactly what `unrolled_grad` needs: the
derivative of a loss through one gradient-descent parameter update.

Conventions fixed here and relied on by the rest of the package:
  * relu'(0) = 0 (the flat side of the hinge wins at the kink),
  * d|x|/dx = sign(x) with sign(0) = 0,
  * sign() itself has zero derivative everywhere.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NonFiniteError, ParameterError
from .rng import RngStream

Shape = tuple[int, ...]


class Tensor:
    """Dense float64 array plus tape bookkeeping."""

    __slots__ = ("data", "_parents", "_vjp")

    def __init__(self, data, _parents=(), _vjp=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor contains NaN or Inf")
        self.data = arr
        self._parents: tuple[Tensor, ...] = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> Shape:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor({self.data!r})"

    # arithmetic sugar; scalars and ndarrays are promoted to constant tensors
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return mul(self, power(_as_tensor(other), -1.0))

    def __rtruediv__(self, other):
        return mul(_as_tensor(other), power(self, -1.0))

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        return power(self, k)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """A tensor with no tape history (gradients do not flow into it)."""
    return Tensor(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def _unbroadcast(g: Tensor, shape: Shape) -> Tensor:
    """Reduce a broadcasted adjoint back to `shape` (sums stay on the tape)."""
    if g.shape == shape:
        return g
    extra = g.data.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g: Tensor):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.data + b.data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: (neg(g),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g: Tensor):
        return _unbroadcast(mul(g, b), a.shape), _unbroadcast(mul(g, a), b.shape)

    return Tensor(a.data * b.data, (a, b), vjp)


def power(a: Tensor, k: float) -> Tensor:
    k = float(k)

    def vjp(g: Tensor):
        return (mul(g, mul(constant(k), power(a, k - 1.0))),)

    with np.errstate(divide="ignore", invalid="ignore"):
        return Tensor(a.data**k, (a,), vjp)


def texp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = Tensor(np.exp(a.data), (a,), None)
    out._vjp = lambda g: (mul(g, out),)
    return out


def tlog(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        return Tensor(np.log(a.data), (a,), lambda g: (mul(g, power(a, -1.0)),))


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(np.float64)  # strict: subgradient 0 at the kink
    return Tensor(a.data * mask, (a,), lambda g: (mul(g, constant(mask)),))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    ma = (a.data > b.data).astype(np.float64)
    mb = (b.data > a.data).astype(np.float64)

    def vjp(g: Tensor):
        return (
            _unbroadcast(mul(g, constant(ma)), a.shape),
            _unbroadcast(mul(g, constant(mb)), b.shape),
        )

    return Tensor(np.maximum(a.data, b.data), (a, b), vjp)


def tabs(a: Tensor) -> Tensor:
    s = np.sign(a.data)
    return Tensor(np.abs(a.data), (a,), lambda g: (mul(g, constant(s)),))


def sign(a: Tensor) -> Tensor:
    """Elementwise sign with sign(0) = 0; derivative is zero everywhere."""
    return Tensor(np.sign(a.data), (a,), lambda g: (None,))


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def vjp(g: Tensor):
        if axis is None:
            return (broadcast_to(reshape(g, (1,) * a.data.ndim), a.shape),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        if keepdims:
            gk = g
        else:
            kshape = list(a.shape)
            for ax in axes:
                kshape[ax % a.data.ndim] = 1
            gk = reshape(g, tuple(kshape))
        return (broadcast_to(gk, a.shape),)

    return Tensor(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    total = tsum(a, axis=axis, keepdims=keepdims)
    return mul(total, constant(total.size / a.size))


def broadcast_to(a: Tensor, shape: Shape) -> Tensor:
    def vjp(g: Tensor):
        return (_unbroadcast(g, a.shape),)

    return Tensor(np.broadcast_to(a.data, shape).copy(), (a,), vjp)


def reshape(a: Tensor, shape: Shape) -> Tensor:
    old = a.shape
    return Tensor(a.data.reshape(shape), (a,), lambda g: (reshape(g, old),))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ContractError("transpose expects a 2-D tensor")
    return Tensor(a.data.T.copy(), (a,), lambda g: (transpose(g),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    na, nb = a.data.ndim, b.data.ndim
    if na == 2 and nb == 2:
        vjp = lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g))
    elif na == 2 and nb == 1:
        vjp = lambda g: (outer(g, b), matmul(transpose(a), g))
    elif na == 1 and nb == 2:
        vjp = lambda g: (matmul(b, g), outer(a, g))
    elif na == 1 and nb == 1:
        vjp = lambda g: (mul(g, b), mul(g, a))
    else:
        raise ContractError(f"matmul supports 1-D/2-D operands, got ndim {na} and {nb}")
    return Tensor(a.data @ b.data, (a, b), vjp)


def outer(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g: Tensor):
        return (matmul(g, b), matmul(transpose(g), a))

    return Tensor(np.outer(a.data, b.data), (a, b), vjp)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor, inputs: Sequence[Tensor]) -> list[Tensor]:
    """Adjoints of a scalar output w.r.t. `inputs`.

    The returned tensors carry their own tape, so expressions built from
    them can be differentiated again.
    """
    if output.shape != ():
        raise ContractError(f"objective must be scalar, got shape {output.shape}")
    adjoint: dict[int, Tensor] = {id(output): constant(1.0)}
    for node in reversed(_topo_order(output)):
        g = adjoint.get(id(node))
        if g is None or node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None:
                continue
            prev = adjoint.get(id(parent))
            adjoint[id(parent)] = pg if prev is None else add(prev, pg)
    return [adjoint.get(id(t), constant(np.zeros(t.shape))) for t in inputs]


def grad(objective: Callable[..., Tensor], inputs: Sequence[Tensor]) -> list[Tensor]:
    """Evaluate `objective(*inputs)` and return d(objective)/d(input) for each input."""
    out = objective(*inputs)
    if not isinstance(out, Tensor):
        raise ContractError("objective must return a Tensor")
    return backward(out, inputs)


def unrolled_grad(
    train_loss: Callable[[Sequence[Tensor], Tensor], Tensor],
    adv_loss: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    data: Tensor,
    lr: float,
) -> Tensor:
    """Gradient of adv_loss(params - lr * d(train_loss)/d(params)) w.r.t. data.

    Computed as -lr * d/d(data) < d(train_loss)/d(params), g > where
    g = d(adv_loss)/d(params) evaluated at the one-step-updated parameters
    and treated as constant. The train-loss gradient is kept on the tape,
    which is where the second-order dependence on `data` lives.
    """
    if lr <= 0:
        raise ParameterError(f"lr must be positive, got {lr}")
    train_out = train_loss(params, data)
    param_grads = backward(train_out, params)

    updated = [Tensor(p.data - lr * g.data) for p, g in zip(params, param_grads)]
    g_at_updated = backward(adv_loss(updated), updated)

    inner = constant(0.0)
    for pg, g in zip(param_grads, g_at_updated):
        inner = add(inner, tsum(mul(pg, constant(g.data))))
    meta = backward(inner, [data])[0]
    return Tensor(-lr * meta.data)


# ---------------------------------------------------------------------------
# numerical checking
# ---------------------------------------------------------------------------


class FiniteDiffReport:
    """Outcome of a central-difference check of `grad` at one point."""

    def __init__(self, max_rel_error: float, rel_errors: np.ndarray, non_comparable: np.ndarray):
        self.max_rel_error = max_rel_error
        self.rel_errors = rel_errors
        self.non_comparable = non_comparable

    @property
    def n_non_comparable(self) -> int:
        return int(self.non_comparable.sum())

    def __repr__(self):
        return (
            f"FiniteDiffReport(max_rel_error={self.max_rel_error:.3e},"
            f" non_comparable={self.n_non_comparable})"
        )


def finite_diff_check(objective: Callable[[Tensor], Tensor], point: Tensor, step: float) -> FiniteDiffReport:
    """Compare grad(objective) against central finite differences at `point`.

    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    Coordinates where forward and backward one-sided differences disagree
    (a kink under the stencil) are flagged non-comparable and excluded
    from the reported maximum.
    """
    if step <= 0:
        raise ParameterError(f"step must be positive, got {step}")
    analytic = grad(objective, [point])[0].data

    flat = point.data.reshape(-1)
    numeric = np.zeros_like(flat)
    non_comparable = np.zeros(flat.shape, dtype=bool)
    f0 = float(objective(Tensor(point.data)).data)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = step
        shaped = e.reshape(point.shape)
        fp = float(objective(Tensor(point.data + shaped)).data)
        fm = float(objective(Tensor(point.data - shaped)).data)
        numeric[i] = (fp - fm) / (2 * step)
        fwd = (fp - f0) / step
        bwd = (f0 - fm) / step
        scale = max(abs(fwd), abs(bwd), 1.0)
        if abs(fwd - bwd) > 0.1 * scale:
            non_comparable[i] = True

    numeric = numeric.reshape(point.shape)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    mask = non_comparable.reshape(point.shape)
    comparable = rel[~mask]
    max_err = float(comparable.max()) if comparable.size else 0.0
    return FiniteDiffReport(max_err, rel, mask)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_gaussian(rng: RngStream, mean: float, std: float, shape) -> Tensor:
    """I.i.d. normal draws as a constant tensor; advances the stream once."""
    return Tensor(rng.normal(mean, std, shape))
