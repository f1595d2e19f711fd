"""Accuracy, confusion, response bias, consistency curves and cost accounting.

Records are anything with ``query_id``, ``outcome`` ("label", "refusal" or
"ambiguous") and ``predicted`` attributes, which is what the annotation log
yields. Refusals and ambiguous answers always count as incorrect.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import AllRefusals, MissingGroundTruth

EXTRA_COLUMNS = ("refusal", "ambiguous")
MICRO = 1_000_000


def _truths(records, ground_truth: Mapping[str, str]) -> list[str]:
    missing = [r.query_id for r in records if r.query_id not in ground_truth]
    if missing:
        raise MissingGroundTruth(f"no ground truth for {len(missing)} record(s), first {missing[0]!r}")
    return [ground_truth[r.query_id] for r in records]


def accuracy(records, ground_truth: Mapping[str, str]) -> float:
    truths = _truths(records, ground_truth)
    if not records:
        return 0.0
    correct = sum(r.outcome == "label" and r.predicted == t for r, t in zip(records, truths))
    return correct / len(records)


def confusion_matrix(records, ground_truth: Mapping[str, str], class_names: Sequence[str]) -> np.ndarray:
    """Counts with rows = truth, columns = predicted classes then refusal, ambiguous."""
    truths = _truths(records, ground_truth)
    names = list(class_names)
    col = {c: i for i, c in enumerate(names)}
    n = len(names)
    M = np.zeros((n, n + len(EXTRA_COLUMNS)), dtype=np.int64)
    for r, t in zip(records, truths):
        if t not in col:
            raise ValueError(f"ground truth {t!r} is not a configured class")
        if r.outcome == "refusal":
            j = n
        elif r.outcome == "label" and r.predicted in col:
            j = col[r.predicted]
        else:
            j = n + 1
        M[col[t], j] += 1
    return M


def accuracy_from_confusion(M: np.ndarray) -> float:
    n = M.shape[0]
    total = M.sum()
    return float(np.trace(M[:, :n]) / total) if total else 0.0


def off_diagonal_share(M: np.ndarray, groups: Sequence[Sequence[int]]) -> float:
    """Fraction of misclassified class-column mass that stays inside ``groups``."""
    n = M.shape[0]
    C = M[:, :n].astype(float)
    off = C.sum() - np.trace(C)
    if off == 0:
        return 1.0
    inside = 0.0
    for g in groups:
        g = list(g)
        block = C[np.ix_(g, g)]
        inside += block.sum() - np.trace(block)
    return float(inside / off)


def response_bias(records, class_names: Sequence[str]) -> dict[str, float]:
    """Share of labelled predictions going to each class; shares sum to 1."""
    if not records:
        raise ValueError("records must be non-empty")
    names = list(class_names)
    counts = dict.fromkeys(names, 0)
    for r in records:
        if r.outcome == "label" and r.predicted in counts:
            counts[r.predicted] += 1
    total = sum(counts.values())
    if total == 0:
        raise AllRefusals("no record carries a class prediction")
    return {c: counts[c] / total for c in names}


@dataclass
class ConsistencyCurve:
    points: dict  # example count -> accuracy
    monotonic: bool

    def to_dict(self) -> dict:
        return {"points": {str(k): v for k, v in self.points.items()}, "monotonic": self.monotonic}


def consistency_curve(runs: Mapping[int, Sequence], ground_truth: Mapping[str, str]) -> ConsistencyCurve:
    if len(runs) < 2:
        raise ValueError("a consistency curve needs at least two example counts")
    points = {int(k): accuracy(runs[k], ground_truth) for k in sorted(runs)}
    acc = list(points.values())
    return ConsistencyCurve(points, all(b >= a for a, b in zip(acc, acc[1:])))


# --------------------------------------------------------------------------
# cost and time


@dataclass(frozen=True)
class PriceTable:
    """Prices in integer micro-units of ``currency`` per 1000 tokens."""

    prompt_per_1k: int
    completion_per_1k: int
    per_request: int = 0
    currency: str = "USD"

    def __post_init__(self):
        for name in ("prompt_per_1k", "completion_per_1k", "per_request"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer of micro-units")

    @classmethod
    def from_amounts(cls, prompt_per_1k: float, completion_per_1k: float,
                     per_request: float = 0.0, currency: str = "USD") -> "PriceTable":
        return cls(round(prompt_per_1k * MICRO), round(completion_per_1k * MICRO),
                   round(per_request * MICRO), currency)

    def to_dict(self) -> dict:
        return {"currency": self.currency, "prompt_per_1k_micro": self.prompt_per_1k,
                "completion_per_1k_micro": self.completion_per_1k,
                "per_request_micro": self.per_request}


@dataclass(frozen=True)
class Cost:
    """Exact cost held as an integer count of 1e-9 currency units.

    Token prices are micro-units per 1000 tokens, so every token contributes
    a whole number of these units and the total is exactly linear in the
    token counts.
    """

    nano: int
    currency: str = "USD"

    @property
    def micro(self) -> int:
        return round(Fraction(self.nano, 1000))

    @property
    def amount(self) -> float:
        return self.nano / 1e9

    def __add__(self, other: "Cost") -> "Cost":
        if other.currency != self.currency:
            raise ValueError("cannot add costs in different currencies")
        return Cost(self.nano + other.nano, self.currency)


def token_totals(records) -> tuple[int, int, int]:
    """(prompt tokens, completion tokens, request count) over records with a response."""
    answered = [r for r in records if getattr(r, "response_text", "") is not None]
    return (sum(int(r.prompt_tokens) for r in answered),
            sum(int(r.completion_tokens) for r in answered), len(answered))


def cost_from_totals(prompt_tokens: int, completion_tokens: int, requests: int,
                     prices: PriceTable) -> Cost:
    if min(prompt_tokens, completion_tokens, requests) < 0:
        raise ValueError("token and request counts must be non-negative")
    nano = (prompt_tokens * prices.prompt_per_1k + completion_tokens * prices.completion_per_1k
            + requests * prices.per_request * 1000)
    return Cost(nano, prices.currency)


def cost_estimate(records, prices: PriceTable) -> Cost:
    return cost_from_totals(*token_totals(records), prices)


def time_estimate(query_count: int, rate_per_minute: float) -> float:
    """Minutes needed to issue ``query_count`` requests at the rate cap."""
    if query_count < 0 or rate_per_minute <= 0:
        raise ValueError("query_count must be >= 0 and rate positive")
    return query_count / rate_per_minute


def calibrate_price_table(records, target_amount: float, target_queries: int,
                          completion_ratio: int = 2, currency: str = "USD") -> PriceTable:
    """Prices that make ``target_queries`` queries like ``records`` cost ``target_amount``.

    The completion price is fixed at ``completion_ratio`` times the prompt
    price, and the per-query token load is the mean over ``records``.
    """
    pt, ct, n = token_totals(records)
    if n == 0:
        raise ValueError("calibration needs at least one answered record")
    weighted_per_query = Fraction(pt + completion_ratio * ct, n)
    # target micro-units = target_queries * weighted_per_query * p / 1000
    p = Fraction(round(target_amount * MICRO) * 1000) / (target_queries * weighted_per_query)
    p_int = round(p)
    return PriceTable(p_int, completion_ratio * p_int, 0, currency)


# --------------------------------------------------------------------------
# reports


def read_ground_truth(path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["query_id"]: row["label"] for row in csv.DictReader(fh)}


def write_ground_truth(path, truths: Mapping[str, str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "label"])
        for q, lab in truths.items():
            w.writerow([q, lab])


@dataclass
class EvalReport:
    class_names: list
    accuracy: float
    confusion: np.ndarray
    bias: dict | None
    consistency: ConsistencyCurve | None = None
    cost: Cost | None = None
    wall_time_minutes: float | None = None
    query_count: int = 0
    outcomes: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "class_names": list(self.class_names),
            "query_count": self.query_count,
            "accuracy": self.accuracy,
            "confusion_matrix": {
                "rows": list(self.class_names),
                "columns": list(self.class_names) + list(EXTRA_COLUMNS),
                "counts": self.confusion.tolist(),
            },
            "outcomes": self.outcomes,
            "bias_index": self.bias,
            "consistency_curve": self.consistency.to_dict() if self.consistency else None,
            "cost": None if self.cost is None else {
                "currency": self.cost.currency, "micro_units": self.cost.micro,
                "amount": round(self.cost.micro / MICRO, 6)},
            "wall_time_minutes": self.wall_time_minutes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["truth"] + list(self.class_names) + list(EXTRA_COLUMNS))
        for c, row in zip(self.class_names, self.confusion.tolist()):
            w.writerow([c] + row)
        return buf.getvalue()

    def confusion_svg(self, cell: int = 48) -> str:
        return confusion_svg(self.confusion, self.class_names, cell)

    def write(self, directory, stem: str = "report") -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        out = {"json": d / f"{stem}.json", "csv": d / f"{stem}_confusion.csv",
               "svg": d / f"{stem}_confusion.svg"}
        out["json"].write_text(self.to_json(), encoding="utf-8")
        out["csv"].write_text(self.confusion_csv(), encoding="utf-8")
        out["svg"].write_text(self.confusion_svg(), encoding="utf-8")
        return out


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def confusion_svg(M: np.ndarray, class_names: Sequence[str], cell: int = 48) -> str:
    """Static heatmap; darker cells hold a larger share of their row."""
    cols = list(class_names) + list(EXTRA_COLUMNS)
    rows = list(class_names)
    left, top = 140, 120
    width, height = left + cell * len(cols) + 10, top + cell * len(rows) + 10
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">']
    for j, c in enumerate(cols):
        x = left + j * cell + cell // 2
        parts.append(f'<text x="{x}" y="{top - 6}" transform="rotate(-45 {x} {top - 6})">{_escape(c)}</text>')
    for i, r in enumerate(rows):
        y = top + i * cell
        parts.append(f'<text x="{left - 6}" y="{y + cell // 2 + 4}" text-anchor="end">{_escape(r)}</text>')
        total = M[i].sum()
        for j in range(len(cols)):
            share = M[i, j] / total if total else 0.0
            shade = int(round(255 * (1 - share)))
            fill = f"rgb({shade},{shade},255)"
            ink = "white" if share > 0.5 else "black"
            x = left + j * cell
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#888"/>')
            parts.append(f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" text-anchor="middle" '
                         f'fill="{ink}">{int(M[i, j])}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def build_report(records, ground_truth: Mapping[str, str], class_names: Sequence[str],
                 prices: PriceTable | None = None, rate_per_minute: float | None = None,
                 consistency_runs: Mapping[int, Sequence] | None = None,
                 config: dict | None = None) -> EvalReport:
    M = confusion_matrix(records, ground_truth, class_names)
    try:
        bias = response_bias(records, class_names)
    except (AllRefusals, ValueError):
        bias = None
    outcomes = {k: sum(r.outcome == k for r in records) for k in ("label", "refusal", "ambiguous")}
    return EvalReport(
        class_names=list(class_names),
        accuracy=accuracy(records, ground_truth),
        confusion=M,
        bias=bias,
        consistency=consistency_curve(consistency_runs, ground_truth) if consistency_runs else None,
        cost=cost_estimate(records, prices) if prices is not None else None,
        wall_time_minutes=time_estimate(len(records), rate_per_minute) if rate_per_minute else None,
        query_count=len(records),
        outcomes=outcomes,
        config=config or {},
    )
