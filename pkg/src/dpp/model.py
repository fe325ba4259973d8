"""Pyramid network: feature stem, weight-shared temporal reduction unit, heads.

The stem maps a ``(D_in, T)`` feature sequence to the first pyramid level of
shape ``(width, T/4)``. One temporal reduction unit (four convs, strides
1, 1, 1, 2) is applied repeatedly to build the coarser levels, and the same
classification and offset heads run on every level.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArchitectureMismatch, FormatError, ShapeError, StateError
from .geometry import level_lengths
from .numeric import Conv1DLayer, conv1d_backward, conv1d_forward, relu, relu_backward

TRU_STRIDES = (1, 1, 1, 2)
CHECKPOINT_MAGIC = b"DPPW"
CHECKPOINT_VERSION = 1


@dataclass
class ModelOutput:
    """Per-level predictions, each ``(N, 2A, T_l)`` with ``A`` candidates per point."""

    logits: list[np.ndarray]
    offsets: list[np.ndarray]
    anchors: int = 1

    @property
    def num_levels(self) -> int:
        return len(self.logits)

    def flat_logits(self) -> np.ndarray:
        """``(N, P*A, 2)`` in (level, index, anchor) order."""
        return np.concatenate([_flatten(x, self.anchors) for x in self.logits], axis=1)

    def flat_offsets(self) -> np.ndarray:
        return np.concatenate([_flatten(x, self.anchors) for x in self.offsets], axis=1)


def _flatten(x: np.ndarray, anchors: int) -> np.ndarray:
    n, _, t = x.shape
    return x.reshape(n, anchors, 2, t).transpose(0, 3, 1, 2).reshape(n, t * anchors, 2)


def _unflatten(flat: np.ndarray, anchors: int, lengths) -> list[np.ndarray]:
    out, start = [], 0
    n = flat.shape[0]
    for t in lengths:
        chunk = flat[:, start:start + t * anchors]
        start += t * anchors
        out.append(chunk.reshape(n, t, anchors, 2).transpose(0, 2, 3, 1).reshape(n, 2 * anchors, t))
    return out


@dataclass
class ForwardCache:
    stem: list[np.ndarray] = field(default_factory=list)
    tru: list[list[np.ndarray]] = field(default_factory=list)
    features: list[np.ndarray] = field(default_factory=list)


class DPPNet:
    """The point-wise prediction network.

    ``anchors > 1`` widens both heads to predict several candidates per point,
    which is how the sliding-window baseline reuses the same trunk.
    """

    def __init__(self, in_channels: int, width: int = 256, num_levels: int = 6,
                 anchors: int = 1, kernel_size: int = 3, seed: int = 0, dtype=np.float32):
        if num_levels < 1:
            raise ValueError("num_levels must be >= 1")
        self.in_channels = in_channels
        self.width = width
        self.num_levels = num_levels
        self.anchors = anchors
        self.kernel_size = kernel_size
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng([seed, 0])
        k = kernel_size
        self.stem = [Conv1DLayer.init(rng, in_channels, width, k, stride=2, dtype=dtype),
                     Conv1DLayer.init(rng, width, width, k, stride=2, dtype=dtype)]
        self.tru = [Conv1DLayer.init(rng, width, width, k, stride=s, dtype=dtype)
                    for s in TRU_STRIDES]
        self.cls_head = Conv1DLayer.init(rng, width, 2 * anchors, k, dtype=dtype)
        self.loc_head = Conv1DLayer.init(rng, width, 2 * anchors, k, dtype=dtype)

    # ---- parameters -------------------------------------------------------

    def layers(self) -> dict[str, Conv1DLayer]:
        named = {f"stem.{i}": layer for i, layer in enumerate(self.stem)}
        named.update({f"tru.{i}": layer for i, layer in enumerate(self.tru)})
        named["head.cls"] = self.cls_head
        named["head.loc"] = self.loc_head
        return named

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers().items():
            out[f"{name}.weight"] = layer.weight
            out[f"{name}.bias"] = layer.bias
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params().values())

    def architecture(self) -> str:
        return (f"dpp-net|in={self.in_channels}|width={self.width}|k={self.kernel_size}"
                f"|levels={self.num_levels}|anchors={self.anchors}")

    def architecture_hash(self) -> int:
        return int.from_bytes(hashlib.sha256(self.architecture().encode()).digest()[:8], "little")

    # ---- forward ----------------------------------------------------------

    def stem_forward(self, x: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        if x.shape[-1] % 4:
            raise ShapeError(f"input length {x.shape[-1]} is not divisible by 4")
        acts = [x]
        for layer in self.stem:
            acts.append(relu(conv1d_forward(acts[-1], layer)))
        if cache is not None:
            cache.stem = acts
        return acts[-1]

    def tru_forward(self, f: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        t = f.shape[-1]
        if t < 2 or t % 2:
            raise ShapeError(f"reduction unit needs an even length >= 2, got {t}")
        acts = [f]
        for layer in self.tru:
            acts.append(relu(conv1d_forward(acts[-1], layer)))
        if cache is not None:
            cache.tru.append(acts)
        return acts[-1]

    def heads_forward(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return conv1d_forward(f, self.cls_head), conv1d_forward(f, self.loc_head)

    def forward(self, x: np.ndarray, cache: ForwardCache | None = None) -> ModelOutput:
        """Run on ``(D_in, T)`` or ``(N, D_in, T)``; outputs are always batched."""
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"expected (N, {self.in_channels}, T) input, got {x.shape}")
        level_lengths(x.shape[-1], self.num_levels)  # divisibility check
        x = x.astype(self.dtype, copy=False)
        f = self.stem_forward(x, cache)
        feats = [f]
        for _ in range(self.num_levels - 1):
            f = self.tru_forward(f, cache)
            feats.append(f)
        if cache is not None:
            cache.features = feats
        logits, offsets = [], []
        for f in feats:
            q, r = self.heads_forward(f)
            logits.append(q)
            offsets.append(r)
        return ModelOutput(logits, offsets, self.anchors)

    __call__ = forward

    # ---- backward ---------------------------------------------------------

    def backward(self, grad_logits: np.ndarray, grad_offsets: np.ndarray,
                 cache: ForwardCache) -> dict[str, np.ndarray]:
        """Parameter gradients given flat ``(N, P*A, 2)`` output gradients."""
        if not cache.features or not cache.stem:
            raise StateError("backward needs the cache filled by a forward pass")
        lengths = [f.shape[-1] for f in cache.features]
        gq = _unflatten(grad_logits.astype(self.dtype, copy=False), self.anchors, lengths)
        gr = _unflatten(grad_offsets.astype(self.dtype, copy=False), self.anchors, lengths)
        grads = {name: np.zeros_like(p) for name, p in self.params().items()}

        def conv_back(name, layer, g, x):
            gx, gw, gb = conv1d_backward(g, x, layer)
            grads[f"{name}.weight"] += gw
            grads[f"{name}.bias"] += gb
            return gx

        g_feat = None
        for level in reversed(range(len(lengths))):
            f = cache.features[level]
            g = conv_back("head.cls", self.cls_head, gq[level], f)
            g += conv_back("head.loc", self.loc_head, gr[level], f)
            if g_feat is not None:
                g += g_feat
            if level == 0:
                g_feat = g
                break
            acts = cache.tru[level - 1]
            for i in reversed(range(len(self.tru))):
                g = relu_backward(g, acts[i + 1])
                g = conv_back(f"tru.{i}", self.tru[i], g, acts[i])
            g_feat = g

        acts = cache.stem
        g = g_feat
        for i in reversed(range(len(self.stem))):
            g = relu_backward(g, acts[i + 1])
            g = conv_back(f"stem.{i}", self.stem[i], g, acts[i])
        return grads

    # ---- checkpoints ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        params = self.params()
        buf = bytearray(CHECKPOINT_MAGIC)
        buf += struct.pack("<IQI", CHECKPOINT_VERSION, self.architecture_hash(), len(params))
        for name, p in params.items():
            raw = name.encode("utf-8")
            buf += struct.pack("<I", len(raw)) + raw
            buf += struct.pack(f"<I{p.ndim}I", p.ndim, *p.shape)
            buf += np.ascontiguousarray(p, dtype="<f4").tobytes()
        Path(path).write_bytes(bytes(buf))

    def load(self, path: str | Path) -> "DPPNet":
        data = Path(path).read_bytes()
        if data[:4] != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {data[:4]!r}")
        try:
            version, arch, count = struct.unpack_from("<IQI", data, 4)
            if version != CHECKPOINT_VERSION:
                raise FormatError(f"{path}: unsupported checkpoint version {version}")
            if arch != self.architecture_hash():
                raise ArchitectureMismatch(
                    f"{path}: checkpoint architecture does not match {self.architecture()}")
            pos = 20
            params = self.params()
            seen = set()
            for _ in range(count):
                (n,) = struct.unpack_from("<I", data, pos)
                name = data[pos + 4:pos + 4 + n].decode("utf-8")
                pos += 4 + n
                (rank,) = struct.unpack_from("<I", data, pos)
                shape = struct.unpack_from(f"<{rank}I", data, pos + 4)
                pos += 4 + 4 * rank
                size = int(np.prod(shape, dtype=np.int64))
                if pos + 4 * size > len(data):
                    raise FormatError(f"{path}: truncated tensor {name!r}")
                values = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
                pos += 4 * size
                if name not in params or params[name].shape != tuple(shape):
                    raise ArchitectureMismatch(f"{path}: unexpected tensor {name!r} {shape}")
                params[name][...] = values
                seen.add(name)
        except struct.error as exc:
            raise FormatError(f"{path}: truncated checkpoint") from exc
        if seen != set(params):
            raise ArchitectureMismatch(f"{path}: missing tensors {sorted(set(params) - seen)}")
        return self


def model_forward(model: DPPNet, features: np.ndarray) -> ModelOutput:
    return model.forward(features)
