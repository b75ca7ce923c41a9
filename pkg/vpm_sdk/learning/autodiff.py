"""
Minimal reverse-mode automatic differentiation over numpy arrays.

Each operation records its parents and a closure mapping the output
gradient to one gradient per parent. ``Tensor.backward`` walks the graph in
reverse topological order and accumulates into ``.grad``.
"""

import threading
from contextlib import contextmanager
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import GradientError

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, 'enabled', True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra < 0:
        raise GradientError(f"Cannot reduce gradient {grad.shape} to {shape}")
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    if grad.shape != shape:
        raise GradientError(f"Cannot reduce gradient {grad.shape} to {shape}")
    return grad


def as_tensor(value: Union['Tensor', ArrayLike]) -> 'Tensor':
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """N-dimensional float64 value with an optional gradient."""

    # make ndarray <op> Tensor defer to the reflected Tensor method
    __array_priority__ = 1000

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = ''

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence['Tensor'],
        backward: BackwardFn,
        op: str,
    ) -> 'Tensor':
        out = cls(data)
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
            out._op = op
        return out

    # Introspection

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, op={self._op!r})"

    # Backpropagation

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable tensor's ``grad``."""
        if grad is None:
            if self.size != 1:
                raise GradientError(
                    f"backward() without a gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones(self.shape)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise GradientError(f"Gradient shape {grad.shape} does not match {self.shape}")

        order: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        grads = {id(self): grad}
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
                if pg.shape != parent.shape:
                    raise GradientError(
                        f"{node._op}: gradient {pg.shape} for parent {parent.shape}"
                    )
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # Arithmetic

    def __add__(self, other) -> 'Tensor':
        other = as_tensor(other)
        a, b = self, other
        return Tensor.from_op(
            a.data + b.data, (a, b),
            lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
            'add'
        )

    def __radd__(self, other) -> 'Tensor':
        return as_tensor(other) + self

    def __neg__(self) -> 'Tensor':
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,), 'neg')

    def __sub__(self, other) -> 'Tensor':
        other = as_tensor(other)
        a, b = self, other
        return Tensor.from_op(
            a.data - b.data, (a, b),
            lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
            'sub'
        )

    def __rsub__(self, other) -> 'Tensor':
        return as_tensor(other) - self

    def __mul__(self, other) -> 'Tensor':
        other = as_tensor(other)
        a, b = self, other
        return Tensor.from_op(
            a.data * b.data, (a, b),
            lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
            'mul'
        )

    def __rmul__(self, other) -> 'Tensor':
        return as_tensor(other) * self

    def __truediv__(self, other) -> 'Tensor':
        other = as_tensor(other)
        a, b = self, other
        return Tensor.from_op(
            a.data / b.data, (a, b),
            lambda g: (
                unbroadcast(g / b.data, a.shape),
                unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
            'div'
        )

    def __rtruediv__(self, other) -> 'Tensor':
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> 'Tensor':
        if isinstance(exponent, Tensor):
            raise GradientError("Only constant exponents are supported")
        a = self
        return Tensor.from_op(
            a.data ** exponent, (a,),
            lambda g: (g * exponent * a.data ** (exponent - 1),),
            'pow'
        )

    def __matmul__(self, other) -> 'Tensor':
        other = as_tensor(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise GradientError(
                f"matmul needs operands with at least 2 dimensions, got {a.shape} and {b.shape}"
            )
        try:
            data = np.matmul(a.data, b.data)
        except ValueError as e:
            raise GradientError(f"matmul shape mismatch {a.shape} @ {b.shape}: {e}")
        return Tensor.from_op(
            data, (a, b),
            lambda g: (
                unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape),
                unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape),
            ),
            'matmul'
        )

    # Reductions

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return Tensor.from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, 'sum')

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # Elementwise

    def exp(self) -> 'Tensor':
        out_data = np.exp(self.data)
        return Tensor.from_op(out_data, (self,), lambda g: (g * out_data,), 'exp')

    def log(self) -> 'Tensor':
        a = self
        return Tensor.from_op(np.log(a.data), (a,), lambda g: (g / a.data,), 'log')

    def relu(self) -> 'Tensor':
        a = self
        return Tensor.from_op(
            np.maximum(a.data, 0.0), (a,),
            lambda g: (g * (a.data > 0),),
            'relu'
        )

    def leaky_relu(self, slope: float = 0.2) -> 'Tensor':
        a = self
        factor = np.where(a.data > 0, 1.0, slope)
        return Tensor.from_op(a.data * factor, (a,), lambda g: (g * factor,), 'leaky_relu')

    def clip(self, low: float, high: float) -> 'Tensor':
        """Clamp to [low, high]; gradient flows only inside the band."""
        a = self
        inside = (a.data >= low) & (a.data <= high)
        return Tensor.from_op(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), 'clip')

    # Shape

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor.from_op(
            a.data.reshape(shape), (a,),
            lambda g: (g.reshape(a.shape),),
            'reshape'
        )

    def swapaxes(self, axis1: int, axis2: int) -> 'Tensor':
        return Tensor.from_op(
            np.swapaxes(self.data, axis1, axis2), (self,),
            lambda g: (np.swapaxes(g, axis1, axis2),),
            'swapaxes'
        )

    def __getitem__(self, index) -> 'Tensor':
        a = self

        def backward(g):
            full = np.zeros(a.shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor.from_op(a.data[index], (a,), backward, 'getitem')


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return Tensor.from_op(
        np.where(pick_a, a.data, b.data), (a, b),
        lambda g: (
            unbroadcast(np.where(pick_a, g, 0.0), a.shape),
            unbroadcast(np.where(pick_a, 0.0, g), b.shape),
        ),
        'minimum'
    )


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor.from_op(
        np.concatenate([t.data for t in tensors], axis=axis), tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
        'concat'
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return Tensor.from_op(
        np.stack([t.data for t in tensors], axis=axis), tensors,
        lambda g: tuple(np.moveaxis(g, axis, 0)),
        'stack'
    )


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax along ``axis``; entries where ``mask`` is False get probability 0.

    Every slice must keep at least one unmasked entry.
    """
    logits = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), backward, 'softmax')


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), backward, 'log_softmax')
