"""Central finite-difference checks for every differentiable piece of the engine.

All checks run in double precision. A tensor passes when every checked entry
has relative error ``|a - n| / max(|a|, |n|, floor)`` at most ``tol``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .assignment import Status
from .model import DPPNet, ForwardCache
from .numeric import Conv1DLayer, conv1d_backward, conv1d_forward, relu, relu_backward, \
    smooth_l1, softmax_ce
from .training import joint_loss

STEP = 1e-5
TOLERANCE = 1e-4
ERROR_FLOOR = 1e-8


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    checked: int
    tol: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol

    def line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"{self.name:<28} entries={self.checked:<6d} max_rel_err={self.max_rel_err:.3e}  {status}"


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ERROR_FLOOR) -> np.ndarray:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_grad(loss: Callable[[], float], arr: np.ndarray, indices: Iterable[tuple] | None = None,
                 h: float = STEP) -> tuple[list[tuple], np.ndarray]:
    """Central differences of ``loss()`` w.r.t. entries of ``arr`` (perturbed in place)."""
    idx = list(np.ndindex(arr.shape)) if indices is None else list(indices)
    out = np.empty(len(idx))
    for i, ix in enumerate(idx):
        orig = arr[ix]
        arr[ix] = orig + h
        up = loss()
        arr[ix] = orig - h
        down = loss()
        arr[ix] = orig
        out[i] = (up - down) / (2 * h)
    return idx, out


def _compare(name: str, loss, arr, grad, indices=None, corrupt=None) -> CheckResult:
    grad = np.array(grad, dtype=np.float64)
    if corrupt == name:
        grad = grad * 1.5 + 1e-3
    idx, num = numeric_grad(loss, arr, indices)
    ana = np.array([grad[ix] for ix in idx])
    err = float(rel_error(ana, num).max()) if len(idx) else 0.0
    return CheckResult(name, err, len(idx))


def _merge(name: str, results: list[CheckResult]) -> CheckResult:
    return CheckResult(name, max(r.max_rel_err for r in results), sum(r.checked for r in results))


# ---- individual suites -----------------------------------------------------

CONV_CASES = [  # (c_in, c_out, T, k, stride, padding)
    (1, 1, 8, 3, 1, 1),
    (3, 4, 9, 3, 2, 1),
    (2, 3, 10, 5, 1, 2),
    (3, 2, 7, 1, 1, 0),
    (2, 2, 12, 3, 2, 0),
]


def check_conv1d(rng: np.random.Generator, instances: int = 20, corrupt=None) -> list[CheckResult]:
    per = {"conv1d.input": [], "conv1d.weight": [], "conv1d.bias": []}
    for i in range(instances):
        c_in, c_out, t, k, s, p = CONV_CASES[i % len(CONV_CASES)]
        layer = Conv1DLayer(rng.standard_normal((c_out, c_in, k)), rng.standard_normal(c_out), s, p)
        x = rng.standard_normal((c_in, t))
        r = rng.standard_normal((c_out, layer.output_length(t)))

        def loss():
            return float(np.sum(conv1d_forward(x, layer) * r))

        gx, gw, gb = conv1d_backward(r, x, layer)
        per["conv1d.input"].append(_compare("conv1d.input", loss, x, gx, corrupt=corrupt))
        per["conv1d.weight"].append(_compare("conv1d.weight", loss, layer.weight, gw, corrupt=corrupt))
        per["conv1d.bias"].append(_compare("conv1d.bias", loss, layer.bias, gb, corrupt=corrupt))
    return [_merge(k, v) for k, v in per.items()]


def check_relu(rng: np.random.Generator, instances: int = 20, corrupt=None) -> list[CheckResult]:
    out = []
    for _ in range(instances):
        x = rng.standard_normal((3, 8))
        x[np.abs(x) < 1e-2] = 0.5  # keep clear of the kink
        r = rng.standard_normal(x.shape)
        out.append(_compare("relu", lambda: float(np.sum(relu(x) * r)), x,
                            relu_backward(r, x), corrupt=corrupt))
    return [_merge("relu", out)]


def check_softmax_ce(rng: np.random.Generator, instances: int = 20, corrupt=None) -> list[CheckResult]:
    out = []
    for _ in range(instances):
        n = int(rng.integers(1, 9))
        logits = rng.standard_normal((n, 2)) * 2
        labels = rng.integers(0, 2, n)
        _, g = softmax_ce(logits, labels)
        out.append(_compare("softmax_ce", lambda: softmax_ce(logits, labels)[0], logits, g,
                            corrupt=corrupt))
    return [_merge("softmax_ce", out)]


def check_smooth_l1(rng: np.random.Generator, instances: int = 20, corrupt=None) -> list[CheckResult]:
    out = []
    for _ in range(instances):
        n = int(rng.integers(1, 9))
        pred = rng.standard_normal((n, 2)) * 2
        target = rng.standard_normal((n, 2))
        near_kink = np.abs(np.abs(pred - target) - 1) < 1e-3
        pred[near_kink] += 0.01
        _, g = smooth_l1(pred, target)
        out.append(_compare("smooth_l1", lambda: smooth_l1(pred, target)[0], pred, g,
                            corrupt=corrupt))
    return [_merge("smooth_l1", out)]


def check_heads(rng: np.random.Generator, width: int = 256, length: int = 4, samples: int = 64,
                corrupt=None) -> list[CheckResult]:
    """Both prediction heads on a ``(width, length)`` feature map."""
    net = DPPNet(4, width, 1, seed=int(rng.integers(1 << 31)), dtype=np.float64)
    for layer in (net.cls_head, net.loc_head):
        layer.bias[...] = rng.standard_normal(layer.bias.shape) * 0.1
    f = rng.standard_normal((width, length))
    rq = rng.standard_normal((2, length))
    rr = rng.standard_normal((2, length))

    def loss():
        q, r = net.heads_forward(f)
        return float(np.sum(q * rq) + np.sum(r * rr))

    results = []
    gf_total = np.zeros_like(f)
    for name, layer, upstream in (("head.cls", net.cls_head, rq), ("head.loc", net.loc_head, rr)):
        gf, gw, gb = conv1d_backward(upstream, f, layer)
        gf_total += gf
        idx = _sample_indices(rng, layer.weight.shape, samples)
        results.append(_compare(f"heads.{name}.weight", loss, layer.weight, gw, idx, corrupt))
        results.append(_compare(f"heads.{name}.bias", loss, layer.bias, gb, corrupt=corrupt))
    results.append(_compare("heads.input", loss, f, gf_total,
                            _sample_indices(rng, f.shape, samples), corrupt))
    return results


def _sample_indices(rng: np.random.Generator, shape, count: int) -> list[tuple] | None:
    size = int(np.prod(shape))
    if size <= count:
        return None
    flat = rng.choice(size, size=count, replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def check_model(rng: np.random.Generator, width: int = 8, in_channels: int = 4, clip_len: int = 32,
                levels: int = 2, samples: int | None = None, corrupt=None,
                prefix: str = "model") -> list[CheckResult]:
    """Total joint loss of the whole network against every (or ``samples``) parameter entries."""
    net = DPPNet(in_channels, width, levels, seed=int(rng.integers(1 << 31)), dtype=np.float64)
    for name, p in net.params().items():
        if name.endswith(".bias"):
            p[...] = rng.standard_normal(p.shape) * 0.05
    x = rng.standard_normal((in_channels, clip_len))
    npts = sum(clip_len // 2 ** (l + 1) for l in range(1, levels + 1))
    status = rng.choice([Status.POSITIVE, Status.NEGATIVE, Status.IGNORED], size=npts).astype(np.int8)
    status[0], status[1] = Status.POSITIVE, Status.NEGATIVE
    targets = rng.uniform(-3, 3, (npts, 2))
    sample = np.flatnonzero(status != Status.IGNORED)

    def total(grad: bool = False):
        cache = ForwardCache() if grad else None
        out = net.forward(x, cache)
        l_act, l_loc, gq, gr = joint_loss(out, [status], [targets], [sample])
        if grad:
            return net.backward(gq, gr, cache)
        return l_act + l_loc

    grads = total(grad=True)
    results = []
    for name, p in net.params().items():
        idx = None if samples is None else _sample_indices(rng, p.shape, samples)
        results.append(_compare(f"{prefix}.{name}", total, p, grads[name], idx, corrupt))
    return results


def run_gradcheck(seed: int = 0, corrupt: str | None = None, full_width: int = 256) -> list[CheckResult]:
    """Every suite; ``corrupt`` names a tensor whose analytic gradient is falsified (test hook)."""
    rng = np.random.default_rng(seed)
    results = []
    results += check_conv1d(rng, corrupt=corrupt)
    results += check_relu(rng, corrupt=corrupt)
    results += check_softmax_ce(rng, corrupt=corrupt)
    results += check_smooth_l1(rng, corrupt=corrupt)
    results += check_heads(rng, width=full_width, corrupt=corrupt)
    results += check_model(rng, width=8, corrupt=corrupt)
    results += check_model(rng, width=full_width, samples=16, corrupt=corrupt,
                           prefix=f"model{full_width}")
    return results


def worst(results: list[CheckResult]) -> CheckResult:
    return max(results, key=lambda r: r.max_rel_err)
