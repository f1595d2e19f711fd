"""Synthetic accelerometer recordings with known class structure.

The generators stand in for the public datasets in tests, demos and dry
runs. Each class is a dominant oscillation frequency. Recordings differ in
amplitude, oscillation axis and, above all, broadband noise level, which
varies from nearly clean to swamping the signal. Class identity therefore
lives in a narrow spectral peak that an untrained encoder does not single
out, while noise augmentation during pre-training teaches it to.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .adapters import GENERIC_HEADER
from .ingest import RawRecording

GRAVITY = 9.80665


@dataclass(frozen=True)
class SyntheticClass:
    name: str
    frequency_hz: float
    harmonic: float = 0.3  # relative amplitude of the second harmonic


TWO_CLASS = (SyntheticClass("walking", 2.0), SyntheticClass("running", 8.0))

# two pairs sit close together in frequency, the rest are well apart
SIX_CLASS = (
    SyntheticClass("walking", 1.6),
    SyntheticClass("walking upstairs", 1.75),
    SyntheticClass("running", 4.5),
    SyntheticClass("cycling", 7.5),
    SyntheticClass("jumping", 11.0),
    SyntheticClass("jogging", 11.25),
)
OVERLAPPING_PAIRS = (("walking", "walking upstairs"), ("jumping", "jogging"))


def _unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def make_recordings(classes: Sequence[SyntheticClass] = TWO_CLASS, n_subjects: int = 30,
                    seconds: float = 12.0, rate_hz: float = 50.0, seed: int = 0,
                    amplitude_range: tuple[float, float] = (0.5, 2.0),
                    noise_range: tuple[float, float] = (0.1, 2.0), gravity_tilt: float = 0.0,
                    axis_jitter: float | None = 0.2,
                    dataset_id: str = "synthetic") -> list[RawRecording]:
    """One recording per (subject, class), subjects numbered from 1.

    The oscillation axis is random per recording when ``axis_jitter`` is
    None, otherwise a shared diagonal axis perturbed by ``axis_jitter``.
    The noise level of each recording is drawn from ``noise_range``.
    """
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate_hz))
    t = np.arange(n) / rate_hz
    out = []
    for s in range(1, n_subjects + 1):
        down = np.array([0.0, 0.0, -1.0]) + gravity_tilt * rng.normal(size=3)
        down = GRAVITY * down / np.linalg.norm(down)
        for c in classes:
            if axis_jitter is None:
                axis = _unit(rng)
            else:
                axis = np.ones(3) / np.sqrt(3.0) + axis_jitter * rng.normal(size=3)
                axis /= np.linalg.norm(axis)
            sigma = rng.uniform(*noise_range)
            amp = rng.uniform(*amplitude_range)
            # slow drift of frequency and amplitude within the recording
            f = c.frequency_hz * (1.0 + 0.03 * np.sin(2 * np.pi * t / rng.uniform(5, 15)))
            phase = 2 * np.pi * np.cumsum(f) / rate_hz + rng.uniform(0, 2 * np.pi)
            env = amp * (1.0 + 0.2 * np.sin(2 * np.pi * t / rng.uniform(4, 12) + rng.uniform(0, 6.3)))
            wave = env * (np.sin(phase) + c.harmonic * np.sin(2 * phase + rng.uniform(0, 6.3)))
            x = down[None, :] + wave[:, None] * axis[None, :]
            x = x + sigma * rng.normal(size=(n, 3))
            out.append(RawRecording(dataset_id, str(s), c.name, "synthetic wrist", rate_hz, x))
    return out


def write_generic_csv(path, recordings: Sequence[RawRecording]) -> None:
    """Write recordings in the generic CSV schema (one row per sample)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GENERIC_HEADER)
        for rec in recordings:
            t = np.arange(rec.samples.shape[0]) / rec.sampling_rate_hz
            for ti, (ax, ay, az) in zip(t, rec.samples):
                w.writerow([rec.subject_id, rec.activity_label, f"{ti:.4f}",
                            f"{ax:.6f}", f"{ay:.6f}", f"{az:.6f}"])
