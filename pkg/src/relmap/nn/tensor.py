"""Array-valued reverse-mode automatic differentiation on top of numpy.

Only the operations the imputation network needs are provided. Every
operation records its parents and a closure mapping the output gradient
to parent gradients; :meth:`Tensor.backward` replays them in reverse
topological order.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "concat",
    "stack",
    "where",
    "conv_time",
    "gradient",
    "NonFiniteError",
]


class NonFiniteError(FloatingPointError):
    """Raised when a forward or backward pass produces NaN or inf."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        parents = tuple(parents)
        if any(p.requires_grad for p in parents):
            return Tensor(data, True, parents, backward)
        return Tensor(data)

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data

        need_x, need_y = self.requires_grad, other.requires_grad

        def back(g):
            return (
                _unbroadcast(g * y, x.shape) if need_x else None,
                _unbroadcast(g * x, y.shape) if need_y else None,
            )

        return Tensor._make(x * y, (self, other), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        out = x / y

        need_x, need_y = self.requires_grad, other.requires_grad

        def back(g):
            return (
                _unbroadcast(g / y, x.shape) if need_x else None,
                _unbroadcast(-g * out / y, y.shape) if need_y else None,
            )

        return Tensor._make(out, (self, other), back)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        x = self.data
        out = x**exponent
        return Tensor._make(out, (self,), lambda g: (g * exponent * x ** (exponent - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        need_x, need_y = self.requires_grad, other.requires_grad
        if y.ndim == 2 and x.ndim > 2:
            # fold leading axes so BLAS sees one large 2-D product
            lead = x.shape[:-1]
            flat = x.reshape(-1, x.shape[-1])

            def back2(g):
                g2 = g.reshape(-1, g.shape[-1])
                return (
                    (g2 @ y.T).reshape(x.shape) if need_x else None,
                    flat.T @ g2 if need_y else None,
                )

            return Tensor._make((flat @ y).reshape(lead + (y.shape[1],)), (self, other), back2)

        def back(g):
            gx = gy = None
            if need_x:
                gx = g @ np.swapaxes(y, -1, -2) if y.ndim > 1 else np.multiply.outer(g, y)
                gx = _unbroadcast(gx, x.shape)
            if need_y:
                gy = np.swapaxes(x, -1, -2) @ g if x.ndim > 1 else np.multiply.outer(x, g)
                gy = _unbroadcast(gy, y.shape)
            return gx, gy

        return Tensor._make(x @ y, (self, other), back)

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    def __getitem__(self, index):
        x = self.data
        fancy = isinstance(index, (list, np.ndarray)) or (
            isinstance(index, tuple) and any(isinstance(i, (list, np.ndarray)) for i in index)
        )

        def back(g):
            full = np.zeros_like(x)
            if fancy:
                np.add.at(full, index, g)
            else:
                full[index] += g
            return (full,)

        return Tensor._make(x[index], (self,), back)

    # -- elementwise -------------------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,))

    def log(self):
        x = self.data
        return Tensor._make(np.log(x), (self,), lambda g: (g / x,))

    def sqrt(self):
        out = np.sqrt(self.data)
        return Tensor._make(out, (self,), lambda g: (g * 0.5 / out,))

    def relu(self):
        pos = self.data > 0
        return Tensor._make(np.where(pos, self.data, 0.0), (self,), lambda g: (g * pos,))

    def sigmoid(self):
        out = _sigmoid(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out * (1.0 - out),))

    def abs(self):
        sign = np.sign(self.data)
        return Tensor._make(np.abs(self.data), (self,), lambda g: (g * sign,))

    # -- reductions and reshaping -----------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        x = self.data

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape).copy(),)

        return Tensor._make(x.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis, keepdims) / float(count)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        x = self.data
        return Tensor._make(x.reshape(shape), (self,), lambda g: (g.reshape(x.shape),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        return Tensor._make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    @property
    def T(self):
        return self.transpose()

    def broadcast_to(self, shape):
        x = self.data
        return Tensor._make(
            np.broadcast_to(x, shape).copy(), (self,), lambda g: (_unbroadcast(g, x.shape),)
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._make(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)
    return Tensor._make(
        out, tensors, lambda g: tuple(np.take(g, i, axis=axis) for i in range(n))
    )


def where(cond, a, b) -> Tensor:
    """Select from ``a`` where the constant boolean ``cond`` holds, else ``b``."""
    cond = np.asarray(cond, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)
    out = np.where(cond, a.data, b.data)
    return Tensor._make(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(np.where(cond, g, 0.0), a.shape),
            _unbroadcast(np.where(cond, 0.0, g), b.shape),
        ),
    )


def conv_time(x, weight, bias=None) -> Tensor:
    """SAME-padded convolution along the time axis.

    ``x`` is ``(..., p, c_in)``, ``weight`` is ``(width, c_in, c_out)`` with
    odd ``width``; the result is ``(..., p, c_out)``. Output step ``t`` sees
    inputs ``t - width//2 .. t + width//2`` (cross-correlation, as in most
    deep-learning libraries).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    width, c_in, c_out = weight.shape
    if width % 2 != 1:
        raise ValueError("kernel width must be odd for symmetric SAME padding")
    half = width // 2
    xd = x.data
    p = xd.shape[-2]
    pad = [(0, 0)] * (xd.ndim - 2) + [(half, half), (0, 0)]
    xp = np.pad(xd, pad)
    cols = np.concatenate([xp[..., k : k + p, :] for k in range(width)], axis=-1)
    wmat = weight.data.reshape(width * c_in, c_out)
    out = cols @ wmat
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)

    need_x = x.requires_grad

    def back(g):
        gx = None
        if need_x:
            gcols = g @ wmat.T
            gxp = np.zeros_like(xp)
            for k in range(width):
                gxp[..., k : k + p, :] += gcols[..., k * c_in : (k + 1) * c_in]
            gx = gxp[..., half : half + p, :]
        gw = (cols.reshape(-1, width * c_in).T @ g.reshape(-1, c_out)).reshape(weight.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.reshape(-1, c_out).sum(axis=0).reshape(bias.shape))
        return tuple(grads)

    return Tensor._make(out, parents, back)


def gradient(loss_fn, params: dict, check_finite: bool = True):
    """Evaluate ``loss_fn(tensors)`` and return ``(loss, grads)``.

    ``params`` maps names to arrays; ``loss_fn`` receives a dict of leaf
    tensors with the same keys and must return a scalar :class:`Tensor`.
    """
    leaves = {k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True) for k, v in params.items()}
    loss = loss_fn(leaves)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("loss_fn must return a scalar Tensor")
    if check_finite and not np.isfinite(loss.data).all():
        raise NonFiniteError("non-finite loss")
    loss.backward()
    grads = {}
    for k, leaf in leaves.items():
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        if check_finite and not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for {k}")
        grads[k] = g
    return float(loss.data), grads
