"""1-D convolutional encoder and MLP heads with explicit backward passes.

Activations are laid out (batch, time, channels). Convolutions are 'valid'
with stride 1; each is computed as K shifted matrix products so nothing
larger than one input-sized slab is materialized.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ShapeMismatch


def conv1d_forward(x, W, b):
    # x: (B, L, Cin); W: (K, Cin, Cout); b: (Cout,)
    K, cin, cout = W.shape
    B, L, _ = x.shape
    lo = L - K + 1
    if lo < 1:
        raise ShapeMismatch(f"input length {L} shorter than kernel {K}")
    out = np.broadcast_to(b, (B * lo, cout)).copy()
    for k in range(K):
        out += x[:, k:k + lo, :].reshape(B * lo, cin) @ W[k]
    return out.reshape(B, lo, cout)


def conv1d_backward(dout, x, W):
    K, cin, cout = W.shape
    B, lo, _ = dout.shape
    d2 = dout.reshape(B * lo, cout)
    dW = np.empty_like(W)
    dx = np.zeros_like(x)
    for k in range(K):
        xs = x[:, k:k + lo, :].reshape(B * lo, cin)
        dW[k] = xs.T @ d2
        dx[:, k:k + lo, :] += (d2 @ W[k].T).reshape(B, lo, cin)
    return dx, dW, d2.sum(axis=0)


def avgpool_forward(x, size):
    B, L, C = x.shape
    lo = L // size
    return x[:, :lo * size, :].reshape(B, lo, size, C).mean(axis=2)


def avgpool_backward(dout, in_len, size):
    B, lo, C = dout.shape
    dx = np.zeros((B, in_len, C))
    dx[:, :lo * size, :] = np.repeat(dout / size, size, axis=1)
    return dx


@dataclass
class EncoderConfig:
    window_len: int = 128
    in_channels: int = 3
    kernel_sizes: tuple = (24, 16, 8)
    channels: tuple = (32, 64, 96)
    pool: int = 2
    head_hidden: int = 96
    output_dim: int = 96
    seed: int = 0

    def __post_init__(self):
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        self.channels = tuple(int(c) for c in self.channels)
        if len(self.kernel_sizes) != len(self.channels):
            raise ValueError("kernel_sizes and channels must have equal length")
        if self.output_dim < 1:
            raise ValueError("output_dim must be positive")
        if self.feature_len() < 1:
            raise ValueError(f"window_len {self.window_len} too short for kernels {self.kernel_sizes}")

    def feature_len(self) -> int:
        n = self.window_len
        for i, k in enumerate(self.kernel_sizes):
            n = n - k + 1
            if i < len(self.kernel_sizes) - 1:
                n //= self.pool
        return n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_sizes"] = list(self.kernel_sizes)
        d["channels"] = list(self.channels)
        return d


def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class MLP:
    """Linear -> ReLU -> ... -> Linear; parameters ``{prefix}{i}.W/.b``."""

    def __init__(self, sizes, rng, prefix="fc"):
        self.sizes = tuple(sizes)
        self.prefix = prefix
        self.params = {}
        for i, (a, z) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.params[f"{prefix}{i}.W"] = _he(rng, (a, z), a)
            self.params[f"{prefix}{i}.b"] = np.zeros(z)

    def forward(self, h):
        acts = [h]
        n = len(self.sizes) - 1
        for i in range(n):
            h = h @ self.params[f"{self.prefix}{i}.W"] + self.params[f"{self.prefix}{i}.b"]
            if i < n - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, dout, acts):
        grads = {}
        n = len(self.sizes) - 1
        for i in reversed(range(n)):
            if i < n - 1:
                dout = dout * (acts[i + 1] > 0)
            grads[f"{self.prefix}{i}.W"] = acts[i].T @ dout
            grads[f"{self.prefix}{i}.b"] = dout.sum(axis=0)
            dout = dout @ self.params[f"{self.prefix}{i}.W"].T
        return dout, grads


class ConvEncoder:
    """Conv-ReLU-pool blocks, global average pooling, 2-layer projection head.

    ``forward`` maps (B, L, C) windows to (B, output_dim) embeddings.
    """

    def __init__(self, config: EncoderConfig | None = None, params: dict | None = None):
        self.config = config or EncoderConfig()
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        cin = cfg.in_channels
        self.params = {}
        for i, (k, c) in enumerate(zip(cfg.kernel_sizes, cfg.channels)):
            self.params[f"conv{i}.W"] = _he(rng, (k, cin, c), k * cin)
            self.params[f"conv{i}.b"] = np.zeros(c)
            cin = c
        self.head = MLP((cin, cfg.head_hidden, cfg.output_dim), rng, prefix="head")
        self.params.update(self.head.params)
        if params is not None:
            self.set_params(params)

    def set_params(self, params: dict) -> None:
        for name, value in params.items():
            if name not in self.params:
                continue
            if np.shape(value) != self.params[name].shape:
                raise ShapeMismatch(f"{name}: {np.shape(value)} vs {self.params[name].shape}")
            self.params[name] = np.asarray(value, dtype=np.float64)
        for name in self.head.params:
            self.head.params[name] = self.params[name]

    def forward(self, x):
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (cfg.window_len, cfg.in_channels):
            raise ShapeMismatch(f"expected (B, {cfg.window_len}, {cfg.in_channels}), got {x.shape}")
        cache = {"blocks": []}
        h = x
        nblocks = len(cfg.kernel_sizes)
        for i in range(nblocks):
            z = conv1d_forward(h, self.params[f"conv{i}.W"], self.params[f"conv{i}.b"])
            a = np.maximum(z, 0.0)
            pooled = i < nblocks - 1
            out = avgpool_forward(a, cfg.pool) if pooled else a
            cache["blocks"].append((h, z, pooled))
            h = out
        cache["feat_len"] = h.shape[1]
        g = h.mean(axis=1)
        y, acts = self.head.forward(g)
        cache["head"] = acts
        return y, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, dy, cache) -> dict:
        cfg = self.config
        dg, grads = self.head.backward(dy, cache["head"])
        T = cache["feat_len"]
        dh = np.repeat(dg[:, None, :] / T, T, axis=1)
        for i in reversed(range(len(cfg.kernel_sizes))):
            h_in, z, pooled = cache["blocks"][i]
            if pooled:
                dh = avgpool_backward(dh, z.shape[1], cfg.pool)
            dz = dh * (z > 0)
            dh, dW, db = conv1d_backward(dz, h_in, self.params[f"conv{i}.W"])
            grads[f"conv{i}.W"] = dW
            grads[f"conv{i}.b"] = db
        return grads

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())
