"""Exact t-SNE and PCA down to the prompt dimension.

Train-split examples and test-split queries are projected jointly in a
single fit; t-SNE has no out-of-sample transform, so this is the only way
both sides land in the same low-dimensional space.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, PerplexityTooLarge

MIN_DIM, MAX_DIM = 2, 15


@dataclass
class ProjectionResult:
    method: str
    dim: int
    points: np.ndarray
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)


def _sq_distances(X):
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def conditional_affinities(X, perplexity: float = 30.0, tol: float = 1e-5, max_iter: int = 100):
    """Row-stochastic Gaussian affinities whose entropies match log(perplexity)."""
    D = _sq_distances(np.asarray(X, dtype=np.float64))
    n = D.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            w = np.exp(-d * beta)
            sw = w.sum()
            H = np.log(sw) + beta * np.sum(d * w) / sw
            if abs(H - target) < tol:
                break
            if H > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        P[i, np.arange(n) != i] = w / sw
    return P


def joint_affinities(X, perplexity: float = 30.0):
    P = conditional_affinities(X, perplexity)
    P = (P + P.T) / (2.0 * P.shape[0])
    return np.maximum(P, 1e-12)


def _student_q(Y):
    num = 1.0 / (1.0 + _sq_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num, np.maximum(num / num.sum(), 1e-12)


def kl_divergence(P, Y) -> float:
    _, Q = _student_q(Y)
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def tsne_fit(embeddings, dim: int = 2, perplexity: float = 30.0, iterations: int = 1000,
             seed: int = 0, learning_rate: float = 200.0, early_exaggeration: float = 12.0,
             exaggeration_iters: int = 250, kl_every: int = 50) -> ProjectionResult:
    """Exact t-SNE with early exaggeration, momentum and adaptive gains.

    Points are processed in a canonical (lexicographic) order so the result
    depends on the set of inputs, not on their order: permuting the input
    permutes the output identically.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    n = X.shape[0]
    if dim < MIN_DIM:
        raise ValueError(f"dim must be >= {MIN_DIM}")
    if n <= 3 * perplexity:
        raise PerplexityTooLarge(f"{n} points need perplexity < {n / 3:.2f}, got {perplexity}")
    if np.all(X == X[0]):
        raise DegenerateInput("all points are identical")

    order = np.lexsort(X.T[::-1])
    inverse = np.empty_like(order)
    inverse[order] = np.arange(n)
    Xc = X[order]

    P = joint_affinities(Xc, perplexity)
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, dim))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_trace = []
    for it in range(iterations):
        exaggerating = it < exaggeration_iters
        Pe = P * early_exaggeration if exaggerating else P
        num, Q = _student_q(Y)
        W = (Pe - Q) * num
        grad = 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y
        momentum = 0.5 if it < exaggeration_iters else 0.8
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if (it + 1) % kl_every == 0 or it + 1 == iterations:
            kl_trace.append((it + 1, kl_divergence(P, Y)))
    kl = kl_divergence(P, Y)
    return ProjectionResult("tsne", dim, Y[inverse], seed, {
        "kl_divergence": kl,
        "kl_trace": kl_trace,
        "perplexity": perplexity,
        "iterations": iterations,
        "exaggeration_iters": exaggeration_iters,
    })


def pca_fit_transform(embeddings, dim: int = 2) -> ProjectionResult:
    """Mean-centred projection on the top ``dim`` principal directions."""
    X = np.asarray(embeddings, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise DegenerateInput("PCA needs at least two points")
    if dim > d:
        raise ValueError(f"dim {dim} exceeds input dimension {d}")
    Xc = X - X.mean(axis=0)
    _, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    var = S ** 2 / (n - 1)
    total = var.sum()
    if total == 0:
        raise DegenerateInput("all points are identical")
    comps = Vt[:dim]
    # fix the sign so the largest-magnitude loading is positive
    flip = np.sign(comps[np.arange(dim), np.argmax(np.abs(comps), axis=1)])
    comps = comps * flip[:, None]
    return ProjectionResult("pca", dim, Xc @ comps.T, None, {
        "explained_variance": var[:dim].tolist(),
        "explained_variance_ratio": (var[:dim] / total).tolist(),
        "components": comps,
        "mean": X.mean(axis=0),
    })


def project(embeddings, method: str = "tsne", dim: int = 2, seed: int = 0, **kwargs) -> ProjectionResult:
    if not MIN_DIM <= dim <= MAX_DIM:
        raise ValueError(f"dim must lie in [{MIN_DIM}, {MAX_DIM}]")
    if method == "tsne":
        return tsne_fit(embeddings, dim, seed=seed, **kwargs)
    if method == "pca":
        return pca_fit_transform(embeddings, dim)
    raise ValueError(f"unknown projection method {method!r}")


# --------------------------------------------------------------------------
# line-delimited projected records: id, split, label (train only), values


def write_projection(path, ids, splits, labels, points) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, s, lab, p in zip(ids, splits, labels, np.asarray(points)):
            rec = {"id": i, "split": s, "label": lab if s == "train" else None,
                   "values": [float(v) for v in p]}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_projection(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
