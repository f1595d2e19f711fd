"""Few-shot prompt rendering, response parsing and the nearest-example oracle."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientExamples, ShapeMismatch
from .numeric import METRICS, distances_to

DEFAULT_REFUSAL_PHRASES = (
    "as an ai",
    "not able to classify",
    "not possible to accurately determine",
)


def format_number(x: float, decimal_places: int) -> str:
    # adding 0.0 turns -0.0 into 0.0; f-strings always use a '.' separator
    s = f"{float(x) + 0.0:.{decimal_places}f}"
    if s.startswith("-") and float(s) == 0.0:
        s = s[1:]
    return s


def format_vector(v, decimal_places: int) -> str:
    return "[" + " ".join(format_number(x, decimal_places) for x in np.ravel(v)) + "]"


def _either(names: Sequence[str], quote: bool) -> str:
    q = '"' if quote else ""
    return "either " + " or ".join(f"{q}{c}{q}" for c in names)


@dataclass
class RawPromptSpec:
    """Raw triaxial reading query with optional per-class example readings."""

    class_names: Sequence[str]
    query: Sequence[float]
    examples: Mapping[str, Sequence[Sequence[float]]] = field(default_factory=dict)
    body_position_text: str = "the wearable worn by the user on their dominant hand"
    metric_name: str | None = None
    decimal_places: int = 4

    def __post_init__(self):
        self.class_names = list(self.class_names)
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        q = np.asarray(self.query, dtype=np.float64)
        if q.shape != (3,) or not np.all(np.isfinite(q)):
            raise ValueError("query must be three finite readings")
        for c, rows in self.examples.items():
            if c not in self.class_names:
                raise ValueError(f"examples for unknown class {c!r}")
            arr = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
            if not np.all(np.isfinite(arr)):
                raise ValueError("example readings must be finite")
        if self.examples and any(len(self.examples.get(c, ())) == 0 for c in self.class_names):
            raise ValueError("every class needs at least one example when examples are given")
        if self.metric_name is not None and self.metric_name not in METRICS:
            raise ValueError(f"unknown metric {self.metric_name!r}")


def render_raw_prompt(spec: RawPromptSpec) -> str:
    dp = spec.decimal_places
    pos = spec.body_position_text
    parts = []
    for c in spec.class_names:
        for row in spec.examples.get(c, ()):
            parts.append(
                f"Given the following triaxial accelerometer data in meter per second square "
                f"coming from {pos} corresponds to {c} :\n{format_vector(row, dp)}\n")
    either = _either(spec.class_names, quote=False)
    query = (f"Classify the following triaxial accelerometer data in meters per second square "
             f"as {either} provided that this data is coming from {pos}: "
             f"{format_vector(spec.query, dp)}")
    if spec.metric_name:
        query += (" considering the minimum distance to the example triaxial accelerometer data "
                  f"provided that the distance metric chosen is {spec.metric_name} distance")
    query += f". Answer in one word, {either}."
    return "".join(parts) + query


@dataclass
class EmbeddingPromptSpec:
    """Per-class example embeddings (v x u each) and one query embedding (u)."""

    class_names: Sequence[str]
    examples: Sequence[np.ndarray]  # aligned with class_names
    query: np.ndarray
    metric_name: str = "euclidean"
    decimal_places: int = 7
    answer_in_one_word: bool = True

    def __post_init__(self):
        self.class_names = list(self.class_names)
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        if len(self.examples) != len(self.class_names):
            raise ValueError("need one example block per class")
        self.query = np.asarray(self.query, dtype=np.float64).reshape(-1)
        u = self.query.size
        blocks = []
        for c, ex in zip(self.class_names, self.examples):
            ex = np.asarray(ex, dtype=np.float64)
            if ex.ndim == 1:
                ex = ex[None, :]
            if ex.shape[0] < 1:
                raise ValueError(f"class {c!r} has no examples")
            if ex.shape[1] != u:
                raise ShapeMismatch(f"class {c!r} examples have dim {ex.shape[1]}, query has {u}")
            blocks.append(ex)
        self.examples = blocks
        if self.metric_name not in METRICS:
            raise ValueError(f"unknown metric {self.metric_name!r}")
        if self.decimal_places < 1:
            raise ValueError("decimal_places must be positive")

    @property
    def dim(self) -> int:
        return self.query.size


def render_embedding_prompt(spec: EmbeddingPromptSpec) -> str:
    dp = spec.decimal_places
    n = len(spec.class_names)
    text = ""
    for i, (c, ex) in enumerate(zip(spec.class_names, spec.examples)):
        block = "[" + " ".join(format_vector(row, dp) for row in ex) + "]"
        if i == 0:
            text += f'The following given embeddings correspond to "{c}": {block}'
        elif i == n - 1:
            text += f' and the following given embeddings corresponds to "{c}": {block}'
        else:
            text += f', the following given embeddings correspond to "{c}": {block}'
    text += (f" classify the embedding {format_vector(spec.query, dp)} as "
             f"{_either(spec.class_names, quote=True)} considering the minimum distance to the "
             f"example embeddings provided that the distance metric chosen is "
             f"{spec.metric_name} distance.")
    if spec.answer_in_one_word:
        text += " Answer in one word."
    return text


def oracle_annotate(spec: EmbeddingPromptSpec) -> str:
    """Class of the nearest example; ties go to the earlier class, then example."""
    best_class, best = None, np.inf
    for c, ex in zip(spec.class_names, spec.examples):
        d = distances_to(spec.query, ex, spec.metric_name)
        j = int(np.argmin(d))
        if d[j] < best:
            best_class, best = c, d[j]
    return best_class


# --------------------------------------------------------------------------
# response parsing


@dataclass(frozen=True)
class ParsedResponse:
    outcome: str  # "label" | "refusal" | "ambiguous"
    label: str | None
    matched_span: str
    raw_text: str

    def to_dict(self) -> dict:
        return {"outcome": self.outcome, "label": self.label,
                "matched_span": self.matched_span, "raw_text": self.raw_text}

    @classmethod
    def from_dict(cls, d: dict) -> "ParsedResponse":
        return cls(d["outcome"], d.get("label"), d.get("matched_span", ""), d.get("raw_text", ""))


def _class_pattern(name: str) -> re.Pattern:
    words = re.split(r"[\s_]+", name.strip().lower())
    body = r"[\s_]+".join(re.escape(w) for w in words)
    return re.compile(rf"(?<![a-z0-9]){body}(?![a-z0-9])")


def parse_response(text: str, class_names: Sequence[str],
                   refusal_phrases: Sequence[str] = DEFAULT_REFUSAL_PHRASES) -> ParsedResponse:
    """Map free text to one configured class, a refusal, or ambiguous.

    Matching is case-insensitive with spaces and underscores treated alike.
    A match lying inside a longer class-name match ("walking" inside
    "walking upstairs") does not count.
    """
    if not class_names:
        raise ValueError("class_names must be non-empty")
    lowered = text.lower()
    squashed = " ".join(lowered.replace("’", "'").split())
    for phrase in refusal_phrases:
        if phrase.lower() in squashed:
            return ParsedResponse("refusal", None, phrase, text)

    spans = []
    for c in class_names:
        for m in _class_pattern(c).finditer(lowered):
            spans.append((m.start(), m.end(), c))
    kept = [s for s in spans
            if not any(o is not s and o[0] <= s[0] and s[1] <= o[1] and (o[1] - o[0]) > (s[1] - s[0])
                       for o in spans)]
    found = sorted({c for _, _, c in kept}, key=list(class_names).index)
    if len(found) == 1:
        first = min((s for s in kept if s[2] == found[0]), key=lambda s: s[0])
        return ParsedResponse("label", found[0], text[first[0]:first[1]], text)
    span = ", ".join(found)
    return ParsedResponse("ambiguous", None, span, text)


# --------------------------------------------------------------------------
# example selection


@dataclass
class ExampleSelection:
    seed: int
    k: int
    indices: dict  # class -> list of row indices into the train points

    def manifest_records(self) -> list[dict]:
        return [{"class": c, "index": int(i), "seed": self.seed}
                for c, idx in self.indices.items() for i in idx]

    def write_manifest(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.manifest_records():
                fh.write(json.dumps(rec) + "\n")


def select_examples(labels: Sequence[str], k: int, class_names: Sequence[str],
                    seed: int, strategy: str = "uniform-random") -> ExampleSelection:
    """Draw exactly ``k`` train indices per class uniformly without replacement."""
    if strategy != "uniform-random":
        raise ValueError(f"unknown selection strategy {strategy!r}")
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    chosen = {}
    for c in class_names:
        pool = np.flatnonzero(labels == c)
        if k < 1 or pool.size < k:
            raise InsufficientExamples(c, int(pool.size), k)
        chosen[c] = [int(i) for i in rng.choice(pool, size=k, replace=False)]
    return ExampleSelection(seed, k, chosen)


def build_embedding_spec(points, selection: ExampleSelection, query, metric: str = "euclidean",
                         decimal_places: int = 7, answer_in_one_word: bool = True) -> EmbeddingPromptSpec:
    points = np.asarray(points, dtype=np.float64)
    names = list(selection.indices)
    return EmbeddingPromptSpec(names, [points[selection.indices[c]] for c in names], query,
                               metric, decimal_places, answer_in_one_word)


_CLAUSE = re.compile(r'correspond(?:s)? to "([^"]+)": (\[(?:\[[^\]]*\] ?)+\])')
_QUERY = re.compile(r"classify the embedding (\[[^\]]*\])")
_METRIC = re.compile(r"distance metric chosen is (\w+) distance")


def _numbers(s: str) -> list[float]:
    return [float(x) for x in re.findall(r"-?\d+(?:\.\d+)?(?:e[-+]?\d+)?", s)]


def parse_embedding_prompt(text: str) -> EmbeddingPromptSpec:
    """Recover the spec from a rendered embedding prompt (inverse of rendering)."""
    clauses = _CLAUSE.findall(text)
    q = _QUERY.search(text)
    m = _METRIC.search(text)
    if not clauses or q is None or m is None:
        raise ValueError("text is not a rendered embedding prompt")
    query = np.array(_numbers(q.group(1)))
    names, blocks = [], []
    for name, block in clauses:
        rows = re.findall(r"\[([^\[\]]*)\]", block)
        names.append(name)
        blocks.append(np.array([_numbers(r) for r in rows]))
    decimals = len(q.group(1).split()[0].strip("[]").partition(".")[2]) or 1
    return EmbeddingPromptSpec(names, blocks, query, m.group(1), decimals,
                               text.rstrip().endswith("Answer in one word."))
