"""Recordings, windows and subject-held-out splits."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyRecording, EmptySplit, MalformedFile

DEFAULT_RATE_HZ = 50.0
DEFAULT_WINDOW_LEN = 128
DEFAULT_STRIDE = 64


@dataclass(frozen=True, eq=False)
class RawRecording:
    dataset_id: str
    subject_id: str
    activity_label: str
    device_position: str
    sampling_rate_hz: float
    samples: np.ndarray  # (n, 3) m/s^2
    trial: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != 3:
            raise ValueError(f"samples must have shape (n, 3), got {s.shape}")
        if s.shape[0] == 0:
            raise EmptyRecording(f"{self.dataset_id}/{self.subject_id}/{self.activity_label} has no samples")
        if not self.sampling_rate_hz > 0:
            raise ValueError("sampling_rate_hz must be positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "samples", s)

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.sampling_rate_hz


@dataclass(frozen=True, eq=False)
class Window:
    values: np.ndarray  # (L, 3)
    subject_id: str
    label: str | None
    dataset_id: str
    window_index: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"window values must have shape (L, 3), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("window contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def id(self) -> str:
        return f"{self.dataset_id}:{self.subject_id}:{self.window_index}"


@dataclass(frozen=True)
class SplitSpec:
    dataset_id: str
    test_subject_ids: frozenset
    chosen_classes: tuple

    def __init__(self, dataset_id: str, test_subject_ids: Iterable, chosen_classes: Sequence[str]):
        object.__setattr__(self, "dataset_id", dataset_id)
        object.__setattr__(self, "test_subject_ids", frozenset(str(s) for s in test_subject_ids))
        object.__setattr__(self, "chosen_classes", tuple(chosen_classes))
        if not self.chosen_classes:
            raise ValueError("chosen_classes must be non-empty")
        if len(set(self.chosen_classes)) != len(self.chosen_classes):
            raise ValueError("chosen_classes must be unique")


def resample(recording: RawRecording, target_hz: float) -> RawRecording:
    """Linear-interpolation resampling that keeps the recording duration."""
    if not target_hz > 0:
        raise ValueError("target_hz must be positive")
    src = recording.samples
    n = src.shape[0]
    if n == 0:
        raise EmptyRecording("cannot resample an empty recording")
    if target_hz == recording.sampling_rate_hz:
        return replace(recording, samples=src.copy())
    n_out = max(1, int(round(n * target_hz / recording.sampling_rate_hz)))
    # sample k of the output sits at source index k * src_rate / target_rate
    pos = np.arange(n_out) * (recording.sampling_rate_hz / target_hz)
    idx = np.arange(n)
    out = np.column_stack([np.interp(pos, idx, src[:, c]) for c in range(3)])
    return replace(recording, samples=out, sampling_rate_hz=float(target_hz))


def window_count(n: int, window_len: int, stride: int) -> int:
    return (n - window_len) // stride + 1 if n >= window_len else 0


def windowize(recording: RawRecording, window_len: int = DEFAULT_WINDOW_LEN,
              stride: int = DEFAULT_STRIDE, start_index: int = 0) -> list[Window]:
    if window_len < 1 or stride < 1:
        raise ValueError("window_len and stride must be >= 1")
    x = recording.samples
    count = window_count(x.shape[0], window_len, stride)
    return [
        Window(
            values=x[i * stride:i * stride + window_len].copy(),
            subject_id=recording.subject_id,
            label=recording.activity_label,
            dataset_id=recording.dataset_id,
            window_index=start_index + i,
        )
        for i in range(count)
    ]


def windowize_all(recordings: Sequence[RawRecording], window_len: int = DEFAULT_WINDOW_LEN,
                  stride: int = DEFAULT_STRIDE, target_hz: float | None = DEFAULT_RATE_HZ) -> list[Window]:
    """Resample (optionally) and window every recording with unique indices."""
    windows: list[Window] = []
    for rec in recordings:
        if target_hz is not None:
            rec = resample(rec, target_hz)
        windows.extend(windowize(rec, window_len, stride, start_index=len(windows)))
    return windows


def split(windows: Sequence[Window], spec: SplitSpec) -> tuple[list[Window], list[Window]]:
    """Hold out test subjects; the train side keeps every activity class."""
    if not spec.test_subject_ids:
        raise ValueError("test_subject_ids must be non-empty")
    chosen = set(spec.chosen_classes)
    train = [w for w in windows if w.subject_id not in spec.test_subject_ids]
    test = [w for w in windows if w.subject_id in spec.test_subject_ids and w.label in chosen]
    if not train:
        raise EmptySplit("train split is empty")
    if not test:
        raise EmptySplit("test split is empty")
    return train, test


@dataclass
class Normalizer:
    """Per-channel z-score with statistics from the train split only."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    std: np.ndarray = field(default_factory=lambda: np.ones(3))

    @classmethod
    def fit(cls, windows: Sequence[Window]) -> "Normalizer":
        stacked = np.concatenate([w.values for w in windows], axis=0)
        std = stacked.std(axis=0)
        std[std == 0] = 1.0
        return cls(stacked.mean(axis=0), std)

    def apply(self, windows: Sequence[Window]) -> list[Window]:
        return [replace(w, values=(w.values - self.mean) / self.std) for w in windows]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def stack(windows: Sequence[Window]) -> np.ndarray:
    """(B, L, 3) array of window values."""
    return np.stack([w.values for w in windows]) if windows else np.zeros((0, 0, 3))


# --------------------------------------------------------------------------
# line-delimited window records


def window_to_record(w: Window) -> dict:
    return {
        "id": w.id,
        "dataset_id": w.dataset_id,
        "subject_id": w.subject_id,
        "label": w.label,
        "window_index": w.window_index,
        "values": w.values.tolist(),
    }


def write_windows(path, windows: Iterable[Window]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in windows:
            fh.write(json.dumps(window_to_record(w), separators=(",", ":")) + "\n")


def read_windows(path) -> list[Window]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(Window(
                    values=np.asarray(rec["values"], dtype=np.float64),
                    subject_id=str(rec["subject_id"]),
                    label=rec.get("label"),
                    dataset_id=rec["dataset_id"],
                    window_index=int(rec["window_index"]),
                ))
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedFile(Path(path), lineno, str(exc)) from exc
    return out
