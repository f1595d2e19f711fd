"""NT-Xent and time-frequency consistency losses with analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch, ZeroVector


def _normalize(z):
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVector("zero embedding in batch")
    return z / norms, norms


def _normalize_backward(dzn, zn, norms):
    return (dzn - zn * np.sum(zn * dzn, axis=1, keepdims=True)) / norms


def nt_xent_loss(z, tau: float = 0.5):
    """Mean NT-Xent over 2N anchors; rows i and i+N are positive pairs.

    Returns ``(loss, dloss/dz)``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] % 2 or z.shape[0] == 0:
        raise ShapeMismatch(f"expected an even number of embedding rows, got {z.shape}")
    if not tau > 0:
        raise ValueError("temperature must be positive")
    M = z.shape[0]
    N = M // 2
    zn, norms = _normalize(z)
    S = zn @ zn.T / tau
    np.fill_diagonal(S, -np.inf)
    pos = (np.arange(M) + N) % M
    m = S.max(axis=1, keepdims=True)
    E = np.exp(S - m)
    denom = E.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(denom[:, 0])
    per_anchor = lse - S[np.arange(M), pos]
    loss = float(per_anchor.mean())
    if not np.isfinite(loss):
        raise NonFiniteLoss("NT-Xent loss is not finite")

    G = E / denom
    G[np.arange(M), pos] -= 1.0
    G /= M
    dzn = (G + G.T) @ zn / tau
    return loss, _normalize_backward(dzn, zn, norms)


def pair_distance(u, v, kind: str = "cosine"):
    """Row-wise distance between matched rows, with gradients for both sides."""
    if kind == "cosine":
        un, nu = _normalize(u)
        vn, nv = _normalize(v)
        cos = np.sum(un * vn, axis=1)
        d = 1.0 - cos
        du = -(vn - un * cos[:, None]) / nu
        dv = -(un - vn * cos[:, None]) / nv
        return d, du, dv
    if kind == "euclidean":
        diff = u - v
        d = np.linalg.norm(diff, axis=1)
        safe = np.where(d > 0, d, 1.0)[:, None]
        du = np.where(d[:, None] > 0, diff / safe, 0.0)
        return d, du, -du
    raise ValueError(f"unknown distance {kind!r}")


@dataclass
class TfcTerms:
    time: float
    freq: float
    consistency: float
    total: float
    grads: dict  # keys hT, hT_aug, hF, hF_aug, zT, zT_aug, zF, zF_aug


def tfc_loss_terms(hT, hT_aug, hF, hF_aug, zT, zT_aug, zF, zF_aug,
                   tau: float = 0.5, delta: float = 1.0, lam: float = 0.5,
                   distance: str = "cosine") -> TfcTerms:
    """Time, frequency, consistency and combined losses for one batch.

    ``h*`` are encoder outputs (N, d); ``z*`` their cross projections into
    the joint space. The consistency term is
    ``mean_i sum_pair (|S_TF - S_pair| + delta)`` over the three pairings
    that involve an augmented view.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    N = hT.shape[0]
    lT, gT = nt_xent_loss(np.concatenate([hT, hT_aug]), tau)
    lF, gF = nt_xent_loss(np.concatenate([hF, hF_aug]), tau)

    s_tf, d_zT, d_zF = pair_distance(zT, zF, distance)
    pairs = {
        "T~F": pair_distance(zT, zF_aug, distance),
        "~TF": pair_distance(zT_aug, zF, distance),
        "~T~F": pair_distance(zT_aug, zF_aug, distance),
    }
    lc = np.zeros(N)
    g = {k: np.zeros_like(v) for k, v in
         (("zT", zT), ("zT_aug", zT_aug), ("zF", zF), ("zF_aug", zF_aug))}
    sides = {"T~F": ("zT", "zF_aug"), "~TF": ("zT_aug", "zF"), "~T~F": ("zT_aug", "zF_aug")}
    for name, (s_pair, du, dv) in pairs.items():
        diff = s_tf - s_pair
        lc += np.abs(diff) + delta
        sgn = (np.sign(diff) / N)[:, None]
        g["zT"] += sgn * d_zT
        g["zF"] += sgn * d_zF
        a, b = sides[name]
        g[a] -= sgn * du
        g[b] -= sgn * dv
    lC = float(lc.mean())
    total = lam * (lT + lF) + (1.0 - lam) * lC
    if not np.isfinite(total):
        raise NonFiniteLoss("TFC loss is not finite")

    grads = {
        "hT": lam * gT[:N], "hT_aug": lam * gT[N:],
        "hF": lam * gF[:N], "hF_aug": lam * gF[N:],
    }
    for k, v in g.items():
        grads[k] = (1.0 - lam) * v
    return TfcTerms(lT, lF, lC, total, grads)
