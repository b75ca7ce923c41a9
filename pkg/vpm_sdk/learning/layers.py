"""
Layer primitives on top of the autodiff Tensor: 2D convolution, dense
layers and parameter initialisation.
"""

from typing import Dict, Iterator, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core.exceptions import GradientError
from .autodiff import Tensor, as_tensor


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Cross-correlation of ``x`` (B, C, H, W) with ``weight`` (O, C, k, k).

    Returns (B, O, H_out, W_out).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise GradientError(f"conv2d shape mismatch: input {x.shape}, weight {weight.shape}")
    k = weight.shape[2]
    _, _, height, width = x.shape

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.einsum('bchwij,ocij->bohw', windows, weight.data) + bias.data[None, :, None, None]

    def backward(g):
        grad_w = np.einsum('bohw,bchwij->ocij', g, windows)
        grad_b = g.sum(axis=(0, 2, 3))
        if not x.requires_grad:
            return None, grad_w, grad_b
        grad_windows = np.einsum('bohw,ocij->bchwij', g, weight.data)
        grad_xp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                grad_xp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += \
                    grad_windows[..., i, j]
        grad_x = grad_xp[:, :, padding:padding + height, padding:padding + width]
        return grad_x, grad_w, grad_b

    return Tensor.from_op(out, (x, weight, bias), backward, 'conv2d')


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` over the last axis; ``weight`` is (out, in)."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise GradientError(f"linear shape mismatch: input {x.shape}, weight {weight.shape}")
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1]) if x.ndim != 2 else x
    out = flat @ weight.swapaxes(0, 1) + bias
    return out.reshape(*lead, weight.shape[0]) if x.ndim != 2 else out


def he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParameterSet:
    """Ordered, named collection of trainable tensors."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        tensor = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params.keys())

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if missing or unexpected:
            raise GradientError(
                "Parameter names do not match",
                {'missing': sorted(missing), 'unexpected': sorted(unexpected)}
            )
        for name, tensor in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise GradientError(
                    f"Parameter {name} has shape {value.shape}, expected {tensor.shape}"
                )
            tensor.data = value.copy()
