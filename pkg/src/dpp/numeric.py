"""Small deterministic numeric engine: 1-D convolution, activations, losses, SGD.

Arrays are plain ``numpy.ndarray``. Feature maps are ``(C, T)`` or batched
``(N, C, T)``; every function below accepts either form and returns the same
rank it was given.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError, StateError

BASE_LR = 1e-4
MOMENTUM = 0.9
WEIGHT_DECAY = 1e-4
LR_MILESTONES = (7, 10)


class Conv1DLayer:
    """Weights ``(c_out, c_in, k)`` and bias ``(c_out,)`` of a 1-D convolution.

    Storage is tap-major ``(k, c_out, c_in)``; ``weight`` is a view onto it, so
    in-place updates through either name are shared.
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0):
        weight = np.asarray(weight)
        if weight.ndim != 3:
            raise ShapeError(f"conv weight must be rank 3, got shape {weight.shape}")
        c_out, _, k = weight.shape
        if k % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {k}")
        if np.shape(bias) != (c_out,):
            raise ShapeError(f"bias shape {np.shape(bias)} does not match c_out={c_out}")
        if stride < 1 or padding < 0:
            raise ShapeError("stride must be positive and padding non-negative")
        self.taps = np.ascontiguousarray(weight.transpose(2, 0, 1))
        self.bias = np.asarray(bias)
        self.stride = stride
        self.padding = padding

    @property
    def weight(self) -> np.ndarray:
        return self.taps.transpose(1, 2, 0)

    def __repr__(self) -> str:
        return (f"Conv1DLayer(c_in={self.in_channels}, c_out={self.out_channels}, "
                f"k={self.kernel_size}, stride={self.stride}, padding={self.padding})")

    @property
    def in_channels(self) -> int:
        return self.taps.shape[2]

    @property
    def out_channels(self) -> int:
        return self.taps.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.taps.shape[0]

    def output_length(self, length: int) -> int:
        return conv_output_length(length, self.kernel_size, self.stride, self.padding)

    @classmethod
    def init(cls, rng: np.random.Generator, c_in: int, c_out: int, kernel_size: int = 3,
             stride: int = 1, padding: int | None = None, dtype=np.float32) -> "Conv1DLayer":
        """Kaiming fan-in normal weights, zero bias. ``padding=None`` means "same"."""
        if padding is None:
            padding = kernel_size // 2
        std = np.sqrt(2.0 / (c_in * kernel_size))
        weight = (rng.standard_normal((c_out, c_in, kernel_size)) * std).astype(dtype)
        return cls(weight, np.zeros(c_out, dtype=dtype), stride, padding)


def conv_output_length(length: int, kernel_size: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel_size) // stride + 1


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected a (C, T) or (N, C, T) array, got shape {x.shape}")


def _padded(x: np.ndarray, padding: int) -> np.ndarray:
    if not padding:
        return x
    n, c, t = x.shape
    out = np.zeros((n, c, t + 2 * padding), dtype=x.dtype)
    out[:, :, padding:padding + t] = x
    return out


def _tap(xp: np.ndarray, j: int, stride: int, t_out: int) -> np.ndarray:
    """Inputs seen by kernel tap ``j`` at every output position, as ``(C, N * T')``."""
    n, c, _ = xp.shape
    view = xp[:, :, j:j + stride * (t_out - 1) + 1:stride]
    return np.ascontiguousarray(view.transpose(1, 0, 2)).reshape(c, n * t_out)


def conv1d_forward(x: np.ndarray, layer: Conv1DLayer) -> np.ndarray:
    xb, squeeze = _as_batch(x)
    n, c, t = xb.shape
    if c != layer.in_channels:
        raise ShapeError(f"input has {c} channels, layer expects {layer.in_channels}")
    t_out = layer.output_length(t)
    if t_out < 1:
        raise ShapeError(f"input length {t} too short for kernel {layer.kernel_size}")
    xp = _padded(xb, layer.padding)
    taps = layer.taps
    out = taps[0] @ _tap(xp, 0, layer.stride, t_out)
    for j in range(1, layer.kernel_size):
        out += taps[j] @ _tap(xp, j, layer.stride, t_out)
    out += layer.bias[:, None]
    out = out.reshape(layer.out_channels, n, t_out).transpose(1, 0, 2)
    return out[0] if squeeze else out


def conv1d_backward(grad_out: np.ndarray, cached_input: np.ndarray | None,
                    layer: Conv1DLayer) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`conv1d_forward` w.r.t. its input, weights and bias."""
    if cached_input is None:
        raise StateError("conv1d_backward needs the input cached from the forward pass")
    xb, squeeze = _as_batch(cached_input)
    gb, _ = _as_batch(grad_out)
    n, c, t = xb.shape
    k, s, p = layer.kernel_size, layer.stride, layer.padding
    c_out = layer.out_channels
    t_out = layer.output_length(t)
    if gb.shape != (n, c_out, t_out):
        raise ShapeError(
            f"grad_out shape {gb.shape} does not match forward output {(n, c_out, t_out)}")

    xp = _padded(xb, p)
    g2 = np.ascontiguousarray(gb.transpose(1, 0, 2)).reshape(c_out, n * t_out)
    taps = layer.taps
    grad_taps = np.empty((k, c_out, c), dtype=np.result_type(gb, xb))
    gx = np.zeros((n, c, t + 2 * p), dtype=np.result_type(gb, layer.weight))
    span = s * (t_out - 1) + 1
    for j in range(k):
        np.matmul(g2, _tap(xp, j, s, t_out).T, out=grad_taps[j])
        gx[:, :, j:j + span:s] += (taps[j].T @ g2).reshape(c, n, t_out).transpose(1, 0, 2)
    grad_b = g2.sum(axis=1)
    if p:
        gx = gx[:, :, p:p + t]
    return (gx[0] if squeeze else gx), grad_taps.transpose(1, 2, 0), grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pass ``grad`` where the forward input was strictly positive."""
    return np.where(x > 0, grad, 0).astype(grad.dtype, copy=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_ce(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean two-class cross entropy and its gradient w.r.t. ``logits`` (N, 2).

    An empty batch yields zero loss and a zero gradient.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(logits)
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, (grad / n).astype(logits.dtype, copy=False)


def smooth_l1(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Smooth L1 summed over the last axis and averaged over rows (positives)."""
    pred = np.asarray(pred)
    n = pred.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(pred)
    x = pred - target
    ax = np.abs(x)
    small = ax < 1
    loss = np.where(small, 0.5 * x * x, ax - 0.5)
    grad = np.where(small, x, np.sign(x)) / n
    return float(loss.sum() / n), grad.astype(pred.dtype, copy=False)


@dataclass
class OptimizerState:
    """Momentum buffers keyed by parameter name."""

    momentum: float = MOMENTUM
    weight_decay: float = WEIGHT_DECAY
    velocity: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             state: OptimizerState, lr: float) -> dict[str, np.ndarray]:
    """In-place momentum SGD with weight decay folded into the gradient.

    ``v <- mu * v + (g + wd * w)``, then ``w <- w - lr * v``.
    """
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {w.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise NumericalError(f"non-finite gradient in {name!r} ({bad} of {g.size} entries)")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(w)
            state.velocity[name] = v
        v *= state.momentum
        v += g
        if state.weight_decay:
            v += state.weight_decay * w
        w -= lr * v
    return params


def lr_at_epoch(epoch: int, base_lr: float = BASE_LR,
                milestones: tuple[int, ...] = LR_MILESTONES) -> float:
    """Multi-step schedule: divide by 10 at each milestone epoch (1-based)."""
    if epoch < 1:
        raise ValueError(f"epoch is 1-based, got {epoch}")
    drops = sum(1 for m in milestones if epoch >= m)
    return base_lr / 10 ** drops
