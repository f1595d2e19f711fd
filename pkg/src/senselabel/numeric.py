"""Vector math, spectra, optimizers and gradient checking.

Everything here works on float64 numpy arrays. Parameter sets are plain
``dict[str, np.ndarray]`` mappings so optimizers and serializers can walk
them by name.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import NonFiniteLoss, ShapeMismatch, ZeroVector

METRICS = ("euclidean", "manhattan", "cosine")


def _as_vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(-1)


def cosine_similarity(u, v) -> float:
    u, v = _as_vec(u), _as_vec(v)
    if u.shape != v.shape:
        raise ShapeMismatch(f"length {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def distance(u, v, metric: str = "euclidean") -> float:
    u, v = _as_vec(u), _as_vec(v)
    if u.shape != v.shape:
        raise ShapeMismatch(f"length {u.size} vs {v.size}")
    if metric == "euclidean":
        return float(np.sqrt(np.sum((u - v) ** 2)))
    if metric == "manhattan":
        return float(np.sum(np.abs(u - v)))
    if metric == "cosine":
        return max(0.0, 1.0 - cosine_similarity(u, v))
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def distances_to(query, points, metric: str = "euclidean") -> np.ndarray:
    """Distance from one query vector to each row of ``points``."""
    q = _as_vec(query)
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != q.size:
        raise ShapeMismatch(f"points {P.shape} vs query length {q.size}")
    if metric == "euclidean":
        return np.sqrt(np.sum((P - q) ** 2, axis=1))
    if metric == "manhattan":
        return np.sum(np.abs(P - q), axis=1)
    if metric == "cosine":
        nq = np.linalg.norm(q)
        nP = np.linalg.norm(P, axis=1)
        if nq == 0.0 or np.any(nP == 0.0):
            raise ZeroVector("cosine distance with a zero vector")
        sim = np.clip(P @ q / (nP * nq), -1.0, 1.0)
        return np.maximum(0.0, 1.0 - sim)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def fft_magnitude(signal, axis: int = 0) -> np.ndarray:
    """Unnormalized DFT magnitude, same length as the input along ``axis``."""
    x = np.asarray(signal, dtype=np.float64)
    if x.shape[axis] < 1:
        raise ValueError("empty signal")
    return np.abs(np.fft.fft(x, axis=axis))


# --------------------------------------------------------------------------
# optimizers


def cosine_lr(base_lr: float, t: float, total: float) -> float:
    """Cosine-decayed learning rate; reaches zero at ``t == total``."""
    if total <= 0:
        return base_lr
    t = min(max(t, 0.0), total)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * t / total))


@dataclass
class OptimizerState:
    """Optimizer bookkeeping.

    ``kind`` is ``"sgd-cosine"`` or ``"adam"``. For the cosine schedule the
    decay clock is ``epoch`` (set by the training loop), with
    ``total_steps`` holding the total number of epochs.
    """

    kind: str
    base_lr: float
    total_steps: int = 1
    beta1: float = 0.9
    # written as 0.99 in the reference hyperparameters, not the usual 0.999
    beta2: float = 0.99
    eps: float = 1e-8
    momentum: float = 0.0
    weight_decay: float = 0.0
    step_count: int = 0
    epoch: int = 0
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd-cosine", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")

    @property
    def lr(self) -> float:
        if self.kind == "sgd-cosine":
            return cosine_lr(self.base_lr, self.epoch, self.total_steps)
        return self.base_lr


def sgd_cosine(base_lr=0.1, total_epochs=200, momentum=0.0, weight_decay=0.0) -> OptimizerState:
    return OptimizerState("sgd-cosine", base_lr, total_epochs, momentum=momentum,
                          weight_decay=weight_decay)


def adam(base_lr=3e-4, beta1=0.9, beta2=0.99, eps=1e-8) -> OptimizerState:
    return OptimizerState("adam", base_lr, beta1=beta1, beta2=beta2, eps=eps)


def optimizer_step(state: OptimizerState, params: Mapping[str, np.ndarray],
                   grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Return updated parameters; ``state`` buffers are advanced in place."""
    if set(params) != set(grads):
        raise ShapeMismatch(f"parameter/gradient keys differ: {sorted(set(params) ^ set(grads))}")
    for name, p in params.items():
        if np.shape(grads[name]) != np.shape(p):
            raise ShapeMismatch(f"{name}: grad {np.shape(grads[name])} vs param {np.shape(p)}")

    state.step_count += 1
    lr = state.lr
    out = {}
    if state.kind == "sgd-cosine":
        for name, p in params.items():
            g = grads[name]
            if state.weight_decay:
                g = g + state.weight_decay * p
            if state.momentum:
                buf = state.buffers.get(name)
                buf = g.copy() if buf is None else state.momentum * buf + g
                state.buffers[name] = buf
                g = buf
            out[name] = p - lr * g
        return out

    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m, v = state.buffers.get(name, (np.zeros_like(p), np.zeros_like(p)))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.buffers[name] = (m, v)
        out[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return out


# --------------------------------------------------------------------------
# gradient checking


def grad_check(func: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
               x0, h: float = 1e-5, indices=None) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``indices`` restricts the check to a subset of flat coordinates.
    """
    if h <= 0:
        raise ValueError("perturbation must be positive")
    x = np.array(x0, dtype=np.float64)
    analytic = np.asarray(grad(x.copy()), dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(analytic)):
        raise NonFiniteLoss("analytic gradient is not finite")
    flat = x.reshape(-1)
    coords = range(flat.size) if indices is None else indices
    worst = 0.0
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        fp = func(x)
        flat[i] = orig - h
        fm = func(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteLoss(f"loss not finite at coordinate {i}")
        numeric = (fp - fm) / (2.0 * h)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst
