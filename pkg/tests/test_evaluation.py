import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from senselabel.errors import AllRefusals, MissingGroundTruth
from senselabel.evaluation import (Cost, PriceTable, accuracy, accuracy_from_confusion,
                                   build_report, calibrate_price_table, confusion_matrix,
                                   consistency_curve, cost_estimate, cost_from_totals,
                                   off_diagonal_share, read_ground_truth, response_bias,
                                   time_estimate, write_ground_truth)
from senselabel.llm import AnnotationRecord
from senselabel.prompts import ParsedResponse, parse_response

CLASSES = ["walking", "walking upstairs", "running"]


def rec(qid, answer, pt=100, ct=2, classes=CLASSES):
    if answer is None:
        return AnnotationRecord(qid, "p", None, None)
    return AnnotationRecord(qid, "p", answer, parse_response(answer, classes), pt, ct)


def refusal(qid):
    return AnnotationRecord(qid, "p", "as an AI", ParsedResponse("refusal", None, "as an ai", "as an AI"), 100, 5)


def test_accuracy_examples():
    gt = {f"q{i}": "walking" for i in range(10)}
    recs = [rec(f"q{i}", "walking" if i < 7 else "running") for i in range(10)]
    assert accuracy(recs, gt) == 0.7
    assert accuracy([refusal(f"q{i}") for i in range(10)], gt) == 0.0
    assert accuracy([rec("q0", None)], gt) == 0.0
    with pytest.raises(MissingGroundTruth):
        accuracy([rec("zz", "walking")], gt)


def test_confusion_examples():
    gt = {f"q{i}": "walking" for i in range(5)} | {"r1": "running", "r2": "running", "r3": "running"}
    recs = [rec(f"q{i}", "walking upstairs") for i in range(5)]
    recs += [rec("r1", "running"), refusal("r2"), rec("r3", "walking or running")]
    M = confusion_matrix(recs, gt, CLASSES)
    assert M.shape == (3, 5)
    assert M[0, 1] == 5
    assert M[2].tolist() == [0, 0, 1, 1, 1]
    assert M.sum(axis=1).tolist() == [5, 0, 3]
    diag = confusion_matrix([rec("r1", "running")], gt, CLASSES)
    assert diag[2, 2] == 1 and diag.sum() == 1
    with pytest.raises(ValueError):
        confusion_matrix([rec("x", "running")], {"x": "cycling"}, CLASSES)


def test_off_diagonal_share():
    M = np.array([[5, 3, 0, 0, 0], [1, 6, 0, 0, 0], [0, 1, 9, 0, 0]])
    assert off_diagonal_share(M, [[0, 1]]) == pytest.approx(4 / 5)
    assert off_diagonal_share(np.diag([3, 3]).astype(int), [[0, 1]]) == 1.0


def test_response_bias():
    assert response_bias([rec(f"q{i}", "walking") for i in range(4)], ["walking", "running"]) == \
        {"walking": 1.0, "running": 0.0}
    balanced = [rec("a", "walking"), rec("b", "running")]
    assert response_bias(balanced, ["walking", "running"]) == {"walking": 0.5, "running": 0.5}
    mixed = [rec(f"q{i}", "walking" if i < 7 else "running") for i in range(10)] + [refusal("r")]
    assert response_bias(mixed, ["walking", "running"]) == {"walking": 0.7, "running": 0.3}
    with pytest.raises(AllRefusals):
        response_bias([refusal("r")], ["walking", "running"])
    with pytest.raises(ValueError):
        response_bias([], ["walking"])


def test_consistency_curve():
    gt = {"a": "walking", "b": "running"}
    good = [rec("a", "walking"), rec("b", "running")]
    half = [rec("a", "walking"), rec("b", "walking")]
    flat = consistency_curve({1: good, 3: good, 10: good, 25: good}, gt)
    assert flat.monotonic and list(flat.points) == [1, 3, 10, 25]
    down = consistency_curve({1: good, 25: half}, gt)
    assert not down.monotonic and down.points == {1: 1.0, 25: 0.5}
    with pytest.raises(ValueError):
        consistency_curve({1: good}, gt)


def test_time_estimate():
    assert time_estimate(2330, 175) == pytest.approx(13.314, abs=1e-3)
    assert 13.0 <= time_estimate(2330, 175) <= 13.6
    with pytest.raises(ValueError):
        time_estimate(10, 0)


def test_cost_examples():
    prices = PriceTable.from_amounts(0.03, 0.06)
    assert prices.prompt_per_1k == 30_000
    assert cost_estimate([], prices) == Cost(0)
    c = cost_estimate([rec("a", "walking", pt=1000, ct=500)], prices)
    assert c.micro == 60_000 and c.amount == pytest.approx(0.06)
    flat = PriceTable(0, 0, per_request=7)
    assert cost_estimate([rec("a", "walking"), rec("b", "running"), rec("c", None)], flat).micro == 14
    with pytest.raises(ValueError):
        PriceTable(-1, 0)
    with pytest.raises(ValueError):
        Cost(1, "USD") + Cost(1, "EUR")


@given(st.integers(0, 10**7), st.integers(0, 10**6), st.integers(0, 10**4),
       st.integers(0, 10**5), st.integers(0, 10**5), st.integers(0, 10**3))
def test_cost_is_linear_in_tokens(pt, ct, n, p1, p2, flat):
    prices = PriceTable(p1, p2, flat)
    one = cost_from_totals(pt, ct, n, prices)
    two = cost_from_totals(2 * pt, 2 * ct, n, prices)
    base = cost_from_totals(0, 0, n, prices)
    assert two.nano - base.nano == 2 * (one.nano - base.nano)
    assert (one + one).nano == cost_from_totals(2 * pt, 2 * ct, 2 * n, prices).nano


def test_calibration_reproduces_target():
    recs = [rec(f"q{i}", "walking", pt=1200 + i, ct=3) for i in range(20)]
    prices = calibrate_price_table(recs, 5.03, 2330)
    assert prices.completion_per_1k == 2 * prices.prompt_per_1k
    per_query = cost_estimate(recs, prices).nano / len(recs)
    assert per_query * 2330 / 1e9 == pytest.approx(5.03, rel=1e-3)
    with pytest.raises(ValueError):
        calibrate_price_table([rec("a", None)], 5.03, 2330)


labels = st.sampled_from(CLASSES + ["refusal", "none", "cycling"])


def _records_from(draws):
    gt, recs = {}, []
    for i, (truth, answer) in enumerate(draws):
        q = f"q{i}"
        gt[q] = truth
        if answer == "refusal":
            recs.append(refusal(q))
        elif answer == "none":
            recs.append(rec(q, None))
        else:
            recs.append(rec(q, answer))
    return recs, gt


@given(st.lists(st.tuples(st.sampled_from(CLASSES), labels), min_size=1, max_size=40))
def test_accuracy_equals_confusion_trace(draws):
    recs, gt = _records_from(draws)
    M = confusion_matrix(recs, gt, CLASSES)
    assert accuracy(recs, gt) == pytest.approx(accuracy_from_confusion(M))
    counts = {c: sum(t == c for t, _ in draws) for c in CLASSES}
    assert M.sum(axis=1).tolist() == [counts[c] for c in CLASSES]


@given(st.lists(st.tuples(st.sampled_from(CLASSES), labels), min_size=1, max_size=40),
       st.sampled_from(CLASSES))
def test_adding_a_correct_record_never_lowers_accuracy(draws, c):
    recs, gt = _records_from(draws)
    before = accuracy(recs, gt)
    gt["extra"] = c
    assert accuracy(recs + [rec("extra", c)], gt) >= before


@given(st.lists(labels, min_size=1, max_size=40))
def test_bias_sums_to_one(answers):
    recs, _ = _records_from([("walking", a) for a in answers])
    try:
        shares = response_bias(recs, CLASSES)
    except AllRefusals:
        return
    assert abs(sum(shares.values()) - 1.0) <= 1e-12


def test_ground_truth_roundtrip(tmp_path):
    truths = {"q1": "walking upstairs", "q2": "running, fast"}
    write_ground_truth(tmp_path / "gt.csv", truths)
    assert read_ground_truth(tmp_path / "gt.csv") == truths


def test_report_outputs(tmp_path):
    gt = {"a": "walking", "b": "running", "c": "walking"}
    recs = [rec("a", "walking"), rec("b", "running"), refusal("c")]
    report = build_report(recs, gt, ["walking", "running"], prices=PriceTable(1000, 2000),
                          rate_per_minute=175, consistency_runs={1: recs, 3: recs},
                          config={"dim": 2})
    paths = report.write(tmp_path)
    data = json.loads(paths["json"].read_text())
    assert data["accuracy"] == pytest.approx(2 / 3)
    assert data["confusion_matrix"]["columns"] == ["walking", "running", "refusal", "ambiguous"]
    assert data["outcomes"] == {"label": 2, "refusal": 1, "ambiguous": 0}
    assert data["cost"]["micro_units"] == cost_estimate(recs, PriceTable(1000, 2000)).micro
    assert data["consistency_curve"]["monotonic"] is True
    assert paths["csv"].read_text().splitlines()[0] == "truth,walking,running,refusal,ambiguous"
    svg = paths["svg"].read_text()
    assert svg.startswith("<svg") and svg.count("<rect") == 8
    assert report.to_json() == build_report(recs, gt, ["walking", "running"], prices=PriceTable(1000, 2000),
                                            rate_per_minute=175, consistency_runs={1: recs, 3: recs},
                                            config={"dim": 2}).to_json()


def test_report_survives_all_refusals():
    report = build_report([refusal("a")], {"a": "walking"}, ["walking", "running"])
    assert report.bias is None and report.accuracy == 0.0
