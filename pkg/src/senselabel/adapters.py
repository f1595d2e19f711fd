"""Readers for the public HAR dataset layouts plus a generic CSV schema.

Each adapter returns one :class:`RawRecording` per contiguous
(subject, activity, trial) run of triaxial accelerometer samples in m/s^2.
"""
from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, MalformedFile, UnknownAdapter
from .ingest import RawRecording, SplitSpec

log = logging.getLogger(__name__)

GRAVITY = 9.80665
ADAPTERS = ("motionsense", "pamap2", "ucihar", "hhar", "generic-csv")
GENERIC_HEADER = ("subject", "activity", "timestamp_s", "ax", "ay", "az")


@dataclass(frozen=True)
class DatasetInfo:
    dataset_id: str
    device_position: str
    sampling_rate_hz: float | None  # None: varies per device
    chosen_classes: tuple
    test_subject_ids: tuple
    position_text: str  # phrase used by raw-reading prompts

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.dataset_id, self.test_subject_ids, self.chosen_classes)


DATASETS = {
    "motionsense": DatasetInfo(
        "motionsense", "Trousers' front pocket", 50.0, ("Jogging", "Upstairs"),
        ("1", "6", "14", "19", "23"),
        "the smartphone stored in the user's trousers' front pocket"),
    "pamap2": DatasetInfo(
        "pamap2", "Hand", 100.0, ("Running", "Walking"), ("101", "108"),
        "the wearable worn by the user on their dominant hand"),
    "ucihar": DatasetInfo(
        "ucihar", "Waist", 50.0, ("Standing", "Walk upstairs"),
        ("1", "3", "5", "7", "9", "11", "13", "15", "17"),
        "the smartphone worn by the user around their waist"),
    "hhar": DatasetInfo(
        "hhar", "Arm", None, ("Standing", "Stairs up"), ("3", "9"),
        "the smartwatch worn by the user on their arm"),
}

MOTIONSENSE_CODES = {
    "dws": "Downstairs", "ups": "Upstairs", "wlk": "Walking",
    "jog": "Jogging", "sit": "Sitting", "std": "Standing",
}
# the 12 protocol activities; 0 marks transients and is dropped
PAMAP2_ACTIVITIES = {
    1: "Lying", 2: "Sitting", 3: "Standing", 4: "Walking", 5: "Running",
    6: "Cycling", 7: "Nordic walking", 12: "Ascending stairs",
    13: "Descending stairs", 16: "Vacuum cleaning", 17: "Ironing", 24: "Rope jumping",
}
PAMAP2_HAND_ACC = (4, 5, 6)  # +-16g hand accelerometer columns, already m/s^2
UCIHAR_LABELS = {
    "WALKING": "Walking", "WALKING_UPSTAIRS": "Walk upstairs",
    "WALKING_DOWNSTAIRS": "Walk downstairs", "SITTING": "Sitting",
    "STANDING": "Standing", "LAYING": "Laying",
}
HHAR_LABELS = {
    "stand": "Standing", "sit": "Sitting", "walk": "Walking",
    "stairsup": "Stairs up", "stairsdown": "Stairs down", "bike": "Biking",
}


def parse_dataset(path, adapter: str, **kwargs) -> list[RawRecording]:
    readers = {
        "motionsense": _read_motionsense,
        "pamap2": _read_pamap2,
        "ucihar": _read_ucihar,
        "hhar": _read_hhar,
        "generic-csv": _read_generic_csv,
    }
    if adapter not in readers:
        raise UnknownAdapter(f"unknown adapter {adapter!r}; expected one of {ADAPTERS}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    recordings = readers[adapter](path, **kwargs)
    if not recordings:
        raise EmptyDataset(f"no recordings found under {path} with adapter {adapter}")
    return recordings


def _float(cell: str, path, lineno: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise MalformedFile(path, lineno, f"non-numeric value {cell!r}") from None
    if not math.isfinite(value):
        raise MalformedFile(path, lineno, f"non-finite value {cell!r}")
    return value


def _runs(keys: list) -> list[tuple[int, int]]:
    """[start, end) index ranges of consecutive equal keys."""
    out = []
    start = 0
    for i in range(1, len(keys) + 1):
        if i == len(keys) or keys[i] != keys[start]:
            out.append((start, i))
            start = i
    return out


def _rate_from_timestamps(t: np.ndarray, default: float) -> float:
    if t.size < 2:
        return default
    dt = np.diff(t)
    dt = dt[dt > 0]
    if dt.size == 0:
        return default
    return float(1.0 / np.median(dt))


# --------------------------------------------------------------------------


def _read_generic_csv(path: Path, dataset_id: str | None = None,
                      sampling_rate_hz: float | None = None,
                      device_position: str = "unknown") -> list[RawRecording]:
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    recordings = []
    for f in files:
        ds = dataset_id or f.stem
        rows = []
        with open(f, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                continue
            if tuple(h.strip() for h in header) != GENERIC_HEADER:
                raise MalformedFile(f, 1, f"expected header {','.join(GENERIC_HEADER)}")
            for lineno, row in enumerate(reader, 2):
                if not row:
                    continue
                if len(row) != 6:
                    raise MalformedFile(f, lineno, f"expected 6 fields, got {len(row)}")
                subject, activity = row[0].strip(), row[1].strip()
                values = [_float(c, f, lineno) for c in row[2:]]
                rows.append((subject, activity, values))
        keys = [(s, a) for s, a, _ in rows]
        for trial, (lo, hi) in enumerate(_runs(keys)):
            block = np.array([v for _, _, v in rows[lo:hi]])
            rate = sampling_rate_hz or _rate_from_timestamps(block[:, 0], 50.0)
            subject, activity = keys[lo]
            recordings.append(RawRecording(ds, subject, activity, device_position, rate,
                                           block[:, 1:], trial=str(trial)))
    return recordings


def _read_motionsense(path: Path, last_trial_only: bool = True) -> list[RawRecording]:
    info = DATASETS["motionsense"]
    root = path / "B_Accelerometer_data" if (path / "B_Accelerometer_data").is_dir() else path
    trials = {}
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        m = re.fullmatch(r"([a-z]{3})_(\d+)", d.name)
        if not m or m.group(1) not in MOTIONSENSE_CODES:
            continue
        trials.setdefault(m.group(1), []).append((int(m.group(2)), d))
    recordings = []
    for code, dirs in sorted(trials.items()):
        dirs.sort()
        if last_trial_only:
            dirs = dirs[-1:]
        for trial, d in dirs:
            for f in sorted(d.glob("sub_*.csv"), key=lambda p: int(p.stem.split("_")[1])):
                subject = f.stem.split("_")[1]
                with open(f, newline="", encoding="utf-8") as fh:
                    reader = csv.reader(fh)
                    header = [h.strip() for h in next(reader)]
                    try:
                        cols = [header.index(c) for c in ("x", "y", "z")]
                    except ValueError:
                        raise MalformedFile(f, 1, "missing x/y/z columns") from None
                    data = [[_float(row[c], f, lineno) for c in cols]
                            for lineno, row in enumerate(reader, 2) if row]
                if not data:
                    continue
                recordings.append(RawRecording(
                    "motionsense", subject, MOTIONSENSE_CODES[code], info.device_position,
                    info.sampling_rate_hz, np.array(data) * GRAVITY, trial=str(trial)))
    return recordings


def _read_pamap2(path: Path) -> list[RawRecording]:
    info = DATASETS["pamap2"]
    if path.is_file():
        files = [path]
    else:
        root = path / "Protocol" if (path / "Protocol").is_dir() else path
        files = sorted(root.glob("subject*.dat"))
    recordings = []
    for f in files:
        subject = re.sub(r"\D", "", f.stem)
        labels, samples, dropped = [], [], 0
        with open(f, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                cells = line.split()
                if not cells:
                    continue
                if len(cells) < 7:
                    raise MalformedFile(f, lineno, f"expected >= 7 columns, got {len(cells)}")
                try:
                    activity = int(float(cells[1]))
                except ValueError:
                    raise MalformedFile(f, lineno, f"bad activity id {cells[1]!r}") from None
                if activity not in PAMAP2_ACTIVITIES:
                    continue
                acc = [cells[c] for c in PAMAP2_HAND_ACC]
                # the format marks wireless packet loss with a literal NaN
                if any(c.lower() == "nan" for c in acc):
                    dropped += 1
                    continue
                samples.append([_float(c, f, lineno) for c in acc])
                labels.append(activity)
        if dropped:
            log.info("%s: dropped %d rows with missing hand accelerometer readings", f.name, dropped)
        arr = np.array(samples)
        for trial, (lo, hi) in enumerate(_runs(labels)):
            recordings.append(RawRecording(
                "pamap2", subject, PAMAP2_ACTIVITIES[labels[lo]], info.device_position,
                info.sampling_rate_hz, arr[lo:hi], trial=str(trial)))
    return recordings


def _load_matrix(f: Path) -> np.ndarray:
    rows = []
    with open(f, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            cells = line.split()
            if cells:
                rows.append([_float(c, f, lineno) for c in cells])
    return np.array(rows)


def _read_ucihar(path: Path) -> list[RawRecording]:
    """Stitch the pre-windowed (128 samples, 50% overlap) signals back into runs."""
    info = DATASETS["ucihar"]
    root = path / "UCI HAR Dataset" if (path / "UCI HAR Dataset").is_dir() else path
    names = {}
    for row in _load_matrix_text(root / "activity_labels.txt"):
        names[int(row[0])] = UCIHAR_LABELS.get(row[1], row[1])
    recordings = []
    for part in ("train", "test"):
        sig_dir = root / part / "Inertial Signals"
        if not sig_dir.is_dir():
            continue
        axes = [_load_matrix(sig_dir / f"total_acc_{a}_{part}.txt") for a in "xyz"]
        subjects = [str(int(v)) for v in _load_matrix(root / part / f"subject_{part}.txt")[:, 0]]
        labels = [int(v) for v in _load_matrix(root / part / f"y_{part}.txt")[:, 0]]
        win = np.stack(axes, axis=-1) * GRAVITY  # (n_windows, 128, 3)
        if not (len(win) == len(subjects) == len(labels)):
            raise MalformedFile(sig_dir, 0, "signal/subject/label row counts differ")
        half = win.shape[1] // 2
        keys = list(zip(subjects, labels))
        for trial, (lo, hi) in enumerate(_runs(keys)):
            parts = [win[lo]] + [w[half:] for w in win[lo + 1:hi]]
            recordings.append(RawRecording(
                "ucihar", subjects[lo], names[labels[lo]], info.device_position,
                info.sampling_rate_hz, np.concatenate(parts), trial=f"{part}{trial}"))
    return recordings


def _load_matrix_text(f: Path) -> list[list[str]]:
    with open(f, encoding="utf-8") as fh:
        return [line.split() for line in fh if line.strip()]


def _read_hhar(path: Path, filename: str = "Watch_accelerometer.csv") -> list[RawRecording]:
    info = DATASETS["hhar"]
    f = path if path.is_file() else path / filename
    rows = []
    with open(f, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        try:
            ix = {k: header.index(k) for k in ("Creation_Time", "x", "y", "z", "User", "Device", "gt")}
        except ValueError as exc:
            raise MalformedFile(f, 1, str(exc)) from None
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            gt = row[ix["gt"]]
            if gt not in HHAR_LABELS:
                continue
            t = _float(row[ix["Creation_Time"]], f, lineno) * 1e-9
            xyz = [_float(row[ix[k]], f, lineno) for k in "xyz"]
            # users are lettered a..i; number them 1..9
            subject = str(ord(row[ix["User"]].strip().lower()) - ord("a") + 1)
            rows.append(((subject, row[ix["Device"]], gt), t, xyz))
    recordings = []
    keys = [k for k, _, _ in rows]
    for trial, (lo, hi) in enumerate(_runs(keys)):
        t = np.array([r[1] for r in rows[lo:hi]])
        subject, device, gt = keys[lo]
        rate = _rate_from_timestamps(t, 50.0)
        recordings.append(RawRecording(
            "hhar", subject, HHAR_LABELS[gt], info.device_position, rate,
            np.array([r[2] for r in rows[lo:hi]]), trial=f"{device}-{trial}"))
    return recordings
