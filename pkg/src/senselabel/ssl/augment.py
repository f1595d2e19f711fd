"""Time- and frequency-domain augmentations."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..ingest import Window
from ..numeric import fft_magnitude


@dataclass(frozen=True)
class AugmentationSpec:
    gaussian_noise_sigma: float = 0.05
    scale_range: tuple = (0.8, 1.2)

    def __post_init__(self):
        lo, hi = self.scale_range
        if self.gaussian_noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        if not (0 < lo <= hi):
            raise ValueError("scale_range must satisfy 0 < lo <= hi")
        object.__setattr__(self, "scale_range", (float(lo), float(hi)))


def augment_values(x, spec: AugmentationSpec, rng: np.random.Generator):
    """Jitter and scale a (L, C) array or a (B, L, C) batch (one factor per window)."""
    x = np.asarray(x, dtype=np.float64)
    batch = x if x.ndim == 3 else x[None]
    lo, hi = spec.scale_range
    noise = rng.normal(0.0, 1.0, size=batch.shape) * spec.gaussian_noise_sigma
    scale = rng.uniform(lo, hi, size=(batch.shape[0], 1, 1))
    out = (batch + noise) * scale
    return out if x.ndim == 3 else out[0]


def augment(window: Window, spec: AugmentationSpec, rng: np.random.Generator) -> Window:
    return replace(window, values=augment_values(window.values, spec, rng))


def frequency_view(x):
    """Per-axis DFT magnitude of (..., L, C) windows, scaled by 1/sqrt(L)."""
    x = np.asarray(x, dtype=np.float64)
    L = x.shape[-2]
    return fft_magnitude(x, axis=-2) / np.sqrt(L)


def augment_spectrum(f, rng: np.random.Generator, jitter: float = 0.1, bin_fraction: float = 0.1):
    """Multiply a random subset of spectral bins by factors in [1 - jitter, 1 + jitter]."""
    f = np.asarray(f, dtype=np.float64)
    mask = rng.random(f.shape) < bin_fraction
    factor = rng.uniform(1.0 - jitter, 1.0 + jitter, size=f.shape)
    return np.where(mask, f * factor, f)
