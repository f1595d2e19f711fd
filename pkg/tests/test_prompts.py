from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from golden_specs import GOLDEN_SPECS
from senselabel.errors import InsufficientExamples, ShapeMismatch, ZeroVector
from senselabel.prompts import (EmbeddingPromptSpec, RawPromptSpec, build_embedding_spec,
                                format_number, format_vector, oracle_annotate,
                                parse_embedding_prompt, parse_response, render_embedding_prompt,
                                render_raw_prompt, select_examples)

GOLDEN = Path(__file__).parent / "golden"
TABLE3_RESPONSE = ('The embedding [ 14.239516 , 7.1703763 ] is classified as "walking_upstairs" '
                   "based on the minimum distance to the example embeddings, using the Euclidean "
                   "distance metric.")
REFUSAL = ("Sorry, as an AI model, I'm not able to classify real-time activities based on raw "
           "accelerometer data instantly. This type of classification typically involves training "
           "a machine learning model on large datasets to recognize the patterns associated with "
           "different activities. If you've trained such a model, you should input this data there.")


def render(spec):
    return render_raw_prompt(spec) if isinstance(spec, RawPromptSpec) else render_embedding_prompt(spec)


@pytest.mark.parametrize("name", sorted(GOLDEN_SPECS))
def test_golden_files(name):
    expected = (GOLDEN / f"{name}.txt").read_bytes()
    assert render(GOLDEN_SPECS[name]).encode("utf-8") == expected


def test_template_phrases():
    raw = render(GOLDEN_SPECS["raw_zero_examples"])
    assert raw.startswith("Classify the following triaxial accelerometer data")
    assert raw.endswith("Answer in one word, either walking or running.")
    assert "Given the following triaxial accelerometer data" in render(GOLDEN_SPECS["raw_with_examples"])
    emb = render(GOLDEN_SPECS["embedding_two_class"])
    assert "considering the minimum distance to the example embeddings" in emb
    assert "distance metric chosen is euclidean distance" in emb
    three = render(GOLDEN_SPECS["embedding_three_class"])
    assert three.count("given embeddings correspond") == 3
    assert 'or "class 3" considering' in three


@pytest.mark.parametrize("x, dp, expected", [
    (0.1, 4, "0.1000"), (-0.00001, 4, "0.0000"), (-0.0, 2, "0.00"), (2.5, 0, "2"),
    (14.239516, 7, "14.2395160"), (-9.81, 3, "-9.810"),
])
def test_format_number(x, dp, expected):
    assert format_number(x, dp) == expected


def test_format_vector():
    assert format_vector([1, -2.5], 2) == "[1.00 -2.50]"


# ---------------------------------------------------------------- oracle


def test_oracle_examples():
    spec = EmbeddingPromptSpec(["A", "B"], [[[1.0, 0.0]], [[5.0, 0.0]]], [0.0, 0.0])
    assert oracle_annotate(spec) == "A"
    tie = EmbeddingPromptSpec(["A", "B"], [[[1.0, 0.0]], [[-1.0, 0.0]]], [0.0, 0.0])
    assert oracle_annotate(tie) == "A"
    tie_rev = EmbeddingPromptSpec(["B", "A"], [[[-1.0, 0.0]], [[1.0, 0.0]]], [0.0, 0.0])
    assert oracle_annotate(tie_rev) == "B"


def test_oracle_metric_flip():
    # A lies on the query's ray but far away; B is close but off-angle
    blocks = [[[1.0, 1.0]], [[9.0, 8.0]]]
    table = {m: oracles.nearest_example([10.0, 10.0], ["A", "B"], blocks, m)
             for m in ("euclidean", "manhattan", "cosine")}
    assert table == {"euclidean": "B", "manhattan": "B", "cosine": "A"}
    for m, expected in table.items():
        assert oracle_annotate(EmbeddingPromptSpec(["A", "B"], blocks, [10.0, 10.0], m)) == expected


def test_oracle_cosine_zero_query():
    with pytest.raises(ZeroVector):
        oracle_annotate(EmbeddingPromptSpec(["A", "B"], [[[1.0, 0.0]], [[0.0, 1.0]]], [0.0, 0.0], "cosine"))


@st.composite
def embedding_specs(draw, max_n=6, max_v=25, max_u=15):
    n = draw(st.integers(2, max_n))
    v = draw(st.integers(1, max_v))
    u = draw(st.integers(2, max_u))
    metric = draw(st.sampled_from(["euclidean", "manhattan", "cosine"]))
    rng = np.random.default_rng(draw(st.integers(0, 2**31)))
    # integer grids make exact ties common, which exercises the tie-break rule
    grid = draw(st.booleans())
    make = (lambda *s: rng.integers(-3, 4, size=s).astype(float)) if grid else (lambda *s: rng.normal(size=s))
    examples = [make(v, u) for _ in range(n)]
    query = make(u)
    if metric == "cosine":
        query[0] = query[0] if np.any(query) else 1.0
        for ex in examples:
            ex[~ex.any(axis=1), 0] = 1.0
    return EmbeddingPromptSpec([f"class {i}" for i in range(n)], examples, query, metric)


@given(embedding_specs())
def test_oracle_equals_brute_force(spec):
    expected = oracles.nearest_example(spec.query.tolist(), spec.class_names,
                                       [e.tolist() for e in spec.examples], spec.metric_name)
    assert oracle_annotate(spec) == expected


# ---------------------------------------------------------------- rendering properties


@given(embedding_specs(max_n=4, max_v=4, max_u=5), st.integers(1, 8))
def test_every_value_appears_in_prompt(spec, dp):
    spec.decimal_places = dp
    text = render_embedding_prompt(spec)
    for x in np.concatenate([spec.query] + [e.ravel() for e in spec.examples]):
        assert format_number(x, dp) in text
    assert render_embedding_prompt(spec) == text


@given(embedding_specs(max_n=4, max_v=4, max_u=5), st.integers(1, 8), st.booleans())
def test_embedding_prompt_parse_roundtrip(spec, dp, one_word):
    spec.decimal_places = dp
    spec.answer_in_one_word = one_word
    text = render_embedding_prompt(spec)
    back = parse_embedding_prompt(text)
    assert back.class_names == spec.class_names
    assert back.metric_name == spec.metric_name
    assert back.answer_in_one_word == one_word
    assert render_embedding_prompt(back) == text


def test_parse_embedding_prompt_rejects_other_text():
    with pytest.raises(ValueError):
        parse_embedding_prompt(render(GOLDEN_SPECS["raw_zero_examples"]))


def test_spec_validation():
    with pytest.raises(ValueError):
        RawPromptSpec(["a", "a"], [0, 0, 0])
    with pytest.raises(ValueError):
        RawPromptSpec(["a", "b"], [0, 0])
    with pytest.raises(ValueError):
        RawPromptSpec(["a", "b"], [0, 0, 0], examples={"a": [[1, 2, 3]]})
    with pytest.raises(ShapeMismatch):
        EmbeddingPromptSpec(["a", "b"], [[[1.0, 2.0]], [[1.0, 2.0, 3.0]]], [0.0, 0.0])
    with pytest.raises(ValueError):
        EmbeddingPromptSpec(["a", "b"], [[[1.0, 2.0]], [[1.0, 2.0]]], [0.0, 0.0], "chebyshev")


# ---------------------------------------------------------------- response parsing


def test_parse_table3_response():
    r = parse_response(TABLE3_RESPONSE, ["walking upstairs", "jogging"])
    assert (r.outcome, r.label, r.matched_span) == ("label", "walking upstairs", "walking_upstairs")


def test_parse_refusal():
    r = parse_response(REFUSAL, ["walking", "running"])
    assert r.outcome == "refusal" and r.label is None
    assert parse_response("It is not possible to accurately determine this.", ["a", "b"]).outcome == "refusal"


@pytest.mark.parametrize("text, expected", [
    ("walking", ("label", "walking")),
    ("WALKING.", ("label", "walking")),
    ("walking upstairs", ("label", "walking upstairs")),
    ("Walking_Upstairs", ("label", "walking upstairs")),
    ("walking or walking upstairs", ("ambiguous", None)),
    ("cycling", ("ambiguous", None)),
    ("sleepwalking", ("ambiguous", None)),
    ("", ("ambiguous", None)),
])
def test_parse_cases(text, expected):
    r = parse_response(text, ["walking", "walking upstairs", "jogging"])
    assert (r.outcome, r.label) == expected


def test_parse_requires_classes():
    with pytest.raises(ValueError):
        parse_response("walking", [])


@given(st.lists(st.from_regex(r"[a-z]{3,8}( [a-z]{3,8})?", fullmatch=True), min_size=1, max_size=5,
                unique=True))
def test_one_word_answers_roundtrip(names):
    # a name contained in another as a whole word makes the shorter one ambiguous by design
    for c in names:
        r = parse_response(c, names)
        assert r.outcome == "label" and r.label == c
        r2 = parse_response(f"The answer is {c.upper().replace(' ', '_')}.", names)
        assert r2.label == c


def test_raw_prompt_response_roundtrip():
    spec = GOLDEN_SPECS["raw_zero_examples"]
    render_raw_prompt(spec)
    for c in spec.class_names:
        assert parse_response(c.capitalize(), spec.class_names).label == c
    assert parse_response(REFUSAL, spec.class_names).outcome == "refusal"


# ---------------------------------------------------------------- example selection


def test_select_examples():
    labels = ["a"] * 30 + ["b"] * 40 + ["c"] * 5
    sel = select_examples(labels, 25, ["a", "b"], seed=4)
    assert sum(len(v) for v in sel.indices.values()) == 50
    assert all(labels[i] == c for c, idx in sel.indices.items() for i in idx)
    assert all(len(set(idx)) == 25 for idx in sel.indices.values())
    assert select_examples(labels, 25, ["a", "b"], seed=4).indices == sel.indices
    assert select_examples(labels, 25, ["a", "b"], seed=5).indices != sel.indices
    with pytest.raises(InsufficientExamples):
        select_examples(labels, 0, ["a"], seed=0)
    with pytest.raises(InsufficientExamples) as info:
        select_examples(labels, 6, ["c"], seed=0)
    assert (info.value.available, info.value.requested) == (5, 6)


def test_selection_manifest_and_spec(tmp_path):
    labels = ["a"] * 5 + ["b"] * 5
    points = np.arange(20.0).reshape(10, 2)
    sel = select_examples(labels, 2, ["a", "b"], seed=0)
    sel.write_manifest(tmp_path / "m.jsonl")
    assert len((tmp_path / "m.jsonl").read_text().splitlines()) == 4
    spec = build_embedding_spec(points, sel, [0.0, 0.0])
    np.testing.assert_array_equal(spec.examples[0], points[sel.indices["a"]])
