"""Acceptance checks, one or more tests per criterion.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion (see conftest.py). Run on its own with
``python3 -m pytest tests/test_acceptance.py``.
"""
import json
import math
import os
import signal
import subprocess
import sys
import textwrap
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from golden_specs import GOLDEN_SPECS
from senselabel import evaluation as ev
from senselabel.ingest import window_count
from senselabel.llm import (BackendConfig, ChatClient, MockBackend, SlidingWindowLimiter,
                            VirtualClock, annotate_batch, max_in_window, read_log)
from senselabel.numeric import grad_check
from senselabel.pipeline import Pipeline, RunConfig
from senselabel.prompts import (EmbeddingPromptSpec, RawPromptSpec, oracle_annotate, parse_response,
                                render_embedding_prompt, render_raw_prompt)
from senselabel.ssl import nt_xent_loss, tfc_loss_terms
from senselabel.synthetic import OVERLAPPING_PAIRS

ROOT = Path(__file__).resolve().parents[1]
TESTS = Path(__file__).parent
TWO_CLASS = ROOT / "demos/configs/two_class.toml"
SIX_CLASS = ROOT / "demos/configs/six_class.toml"
FIXTURE_LOG = TESTS / "fixtures/two_class_mock_log.jsonl"

REFUSAL = ("Sorry, as an AI model, I'm not able to classify real-time activities based on raw "
           "accelerometer data instantly. This type of classification typically involves training "
           "a machine learning model on large datasets to recognize the patterns associated with "
           "different activities. If you've trained such a model, you should input this data there.")
TABLE3_RESPONSE = ('The embedding [ 14.239516 , 7.1703763 ] is classified as "walking_upstairs" '
                   "based on the minimum distance to the example embeddings, using the Euclidean "
                   "distance metric.")


def detail(record_property, text):
    record_property("detail", text)
    print(text)


def load_config(path, out, *overrides):
    return RunConfig.load(path, [(["out"], str(out)), *overrides])


def report_of(stage):
    return json.loads(stage.path("report.json").read_text(encoding="utf-8"))


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1, "loss values match oracles within 1e-9, gradients match finite differences")
def test_loss_correctness(record_property):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_value, worst_grad = 0.0, 0.0
    for b in range(100):
        n, d, j = int(rng.integers(1, 5)), int(rng.integers(2, 6)), int(rng.integers(2, 5))
        tau = float(rng.uniform(0.1, 1.5))
        z = rng.normal(size=(2 * n, d))
        loss, _ = nt_xent_loss(z, tau)
        worst_value = max(worst_value, abs(loss - oracles.nt_xent(z.tolist(), tau)))
        worst_grad = max(worst_grad, grad_check(lambda x: nt_xent_loss(x, tau)[0],
                                                lambda x: nt_xent_loss(x, tau)[1], z, h=1e-6))

        arrays = oracles.random_tfc_batch(rng, n=n, d=d, j=j)
        lam, delta = float(rng.uniform()), float(rng.uniform(0.1, 2.0))
        kind = ("cosine", "euclidean")[b % 2]
        t = tfc_loss_terms(*arrays, tau=tau, delta=delta, lam=lam, distance=kind)
        ref = oracles.tfc_terms(*oracles.as_lists(arrays), tau, delta, lam, kind)
        for got, want in zip((t.time, t.freq, t.consistency, t.total), ref):
            worst_value = max(worst_value, abs(got - want))
        for pos, key in enumerate(oracles.TFC_KEYS):
            def f(x, pos=pos):
                a = list(arrays)
                a[pos] = x
                return tfc_loss_terms(*a, tau=tau, delta=delta, lam=lam, distance=kind).total

            def g(x, pos=pos, key=key):
                a = list(arrays)
                a[pos] = x
                return tfc_loss_terms(*a, tau=tau, delta=delta, lam=lam, distance=kind).grads[key]

            worst_grad = max(worst_grad, grad_check(f, g, arrays[pos], h=1e-6))
    elapsed = time.perf_counter() - start
    detail(record_property, f"max value error {worst_value:.1e}, max gradient error {worst_grad:.1e}, "
                            f"{elapsed:.1f} s")
    assert worst_value <= 1e-9
    assert worst_grad <= 1e-4
    assert elapsed < 30.0


# ---------------------------------------------------------------- 2


@pytest.mark.criterion(2, "closed-form loss anchors")
def test_closed_form_anchors(record_property):
    single, _ = nt_xent_loss(np.array([[0.3, -1.2, 2.0], [1.5, 0.4, -0.7]]), tau=0.5)
    assert single == 0.0

    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    ortho, _ = nt_xent_loss(z, tau=1.0)
    assert abs(ortho - math.log(1 + 2 / math.e)) <= 1e-9

    rng = np.random.default_rng(7)
    arrays = oracles.random_tfc_batch(rng)
    one = tfc_loss_terms(*arrays, lam=1.0)
    zero = tfc_loss_terms(*arrays, lam=0.0)
    assert one.total == one.time + one.freq
    assert zero.total == zero.consistency
    detail(record_property, f"single pair {single}, orthogonal {ortho:.12f}")


# ---------------------------------------------------------------- 3


@pytest.mark.criterion(3, "pre-training separates two classes (>= 0.95) where a random encoder does not (<= 0.80)")
def test_separation_property(tmp_path, record_property):
    trained = Pipeline(load_config(TWO_CLASS, tmp_path))
    start = time.perf_counter()
    trained.pretrain()
    train_seconds = time.perf_counter() - start
    acc_trained = report_of(trained.evaluate())["accuracy"]

    random_init = Pipeline(load_config(TWO_CLASS, tmp_path, (["pretrain", "epochs"], 0)))
    acc_random = report_of(random_init.evaluate())["accuracy"]

    epochs = trained.config["pretrain"]["epochs"]
    detail(record_property, f"trained {acc_trained:.3f} ({epochs} epochs, {train_seconds:.0f} s), "
                            f"random init {acc_random:.3f}")
    assert epochs <= 50 and train_seconds <= 120.0
    assert trained.config["project"]["dim"] == 2 and trained.config["annotate"]["examples"] == 25
    assert acc_trained >= 0.95
    assert acc_random <= 0.80


# ---------------------------------------------------------------- 4


def random_instance(rng):
    n, u = int(rng.integers(2, 7)), int(rng.integers(2, 16))
    metric = ("euclidean", "manhattan", "cosine")[int(rng.integers(3))]
    lattice = rng.uniform() < 0.25  # small integers make exact ties common

    def draw(rows):
        if not lattice:
            return rng.normal(scale=10.0, size=(rows, u))
        x = rng.integers(-2, 3, size=(rows, u)).astype(float)
        for r in range(rows):
            while not x[r].any():
                x[r] = rng.integers(-2, 3, size=u)
        return x

    examples = [draw(int(rng.integers(1, 26))) for _ in range(n)]
    return EmbeddingPromptSpec([f"class {c}" for c in range(n)], examples, draw(1)[0], metric)


@pytest.mark.criterion(4, "oracle annotator equals a brute-force nearest-example scan")
def test_oracle_equivalence(record_property):
    rng = np.random.default_rng(99)
    mismatches, seen = 0, set()
    for _ in range(10_000):
        spec = random_instance(rng)
        seen.add((spec.metric_name, spec.dim, len(spec.class_names)))
        expected = oracles.nearest_example(spec.query.tolist(), spec.class_names,
                                           [e.tolist() for e in spec.examples], spec.metric_name)
        mismatches += oracle_annotate(spec) != expected
    detail(record_property, f"{mismatches} mismatches over 10000 instances, "
                            f"{len(seen)} (metric, u, n) combinations")
    assert mismatches == 0
    assert {m for m, _, _ in seen} == {"euclidean", "manhattan", "cosine"}
    assert {u for _, u, _ in seen} == set(range(2, 16))
    assert {n for _, _, n in seen} == set(range(2, 7))


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5, "rendered prompts are byte-identical to reviewed golden files")
def test_prompt_fidelity(record_property):
    for name, spec in GOLDEN_SPECS.items():
        text = render_raw_prompt(spec) if isinstance(spec, RawPromptSpec) else render_embedding_prompt(spec)
        assert text.encode("utf-8") == (TESTS / "golden" / f"{name}.txt").read_bytes(), name
    raw = (TESTS / "golden/raw_zero_examples.txt").read_text(encoding="utf-8")
    emb = (TESTS / "golden/embedding_two_class.txt").read_text(encoding="utf-8")
    assert "Classify the following triaxial accelerometer data" in raw
    assert "considering the minimum distance to the example embeddings" in emb
    detail(record_property, f"{len(GOLDEN_SPECS)} golden files")


# ---------------------------------------------------------------- 6


@pytest.mark.criterion(6, "six overlapping classes degrade accuracy, confusion stays inside the overlapping pairs")
def test_multiclass_degradation(tmp_path, record_property):
    six = Pipeline(load_config(SIX_CLASS, tmp_path))
    three = Pipeline(load_config(SIX_CLASS, tmp_path,
                                 (["data", "classes"], ["walking", "running", "cycling"])))
    rows6 = json.loads(six.grid().path("grid.json").read_text())["configurations"]
    rows3 = json.loads(three.grid().path("grid.json").read_text())["configurations"]
    acc3 = {(r["dim"], r["metric"], r["examples"]): r["accuracy"] for r in rows3}
    acc6 = {(r["dim"], r["metric"], r["examples"]): r["accuracy"] for r in rows6}

    # reference cell: 2-D projection, euclidean distance, 25 examples per class
    ref = (2, "euclidean", 25)
    report = report_of(six.evaluate(*ref))
    names = report["class_names"]
    M = np.array(report["confusion_matrix"]["counts"])
    groups = [[names.index(a), names.index(b)] for a, b in OVERLAPPING_PAIRS]
    share = ev.off_diagonal_share(M, groups)
    perfect = sum(v == 1.0 for v in acc3.values())
    detail(record_property, f"3 classes {acc3[ref]:.3f}, 6 classes {acc6[ref]:.3f}, "
                            f"overlap share {share:.2f} at {ref}; 3-class accuracy 1.0 in "
                            f"{perfect}/{len(acc3)} grid cells")
    assert acc3[ref] == 1.0
    assert acc6[ref] < acc3[ref]
    assert all(acc6[c] < acc3[c] for c in acc3)
    assert share >= 0.8


# ---------------------------------------------------------------- 7


@pytest.mark.criterion(7, "time and cost model reproduce the reported run")
def test_cost_and_time_model(record_property):
    minutes = ev.time_estimate(2330, 175)
    assert 13.0 <= minutes <= 13.6

    records = list(read_log(FIXTURE_LOG).values())
    assert len(records) >= 40
    # calibrate on one half of the recorded log, estimate with the other half
    fit, held_out = records[0::2], records[1::2]
    prices = ev.calibrate_price_table(fit, 5.03, 2330)
    per_query = ev.cost_estimate(held_out, prices).nano / len(held_out)
    estimate = per_query * 2330 / 1e9
    detail(record_property, f"{minutes:.3f} min; USD {estimate:.3f} for 2330 queries "
                            f"(prompt {prices.prompt_per_1k} micro-USD/1k tokens)")
    assert abs(estimate - 5.03) <= 0.10 * 5.03


# ---------------------------------------------------------------- 8


def virtual_client(backend):
    clock = VirtualClock()
    limiter = SlidingWindowLimiter(backend.max_requests_per_minute, 60.0, clock, clock.sleep)
    return ChatClient(backend, limiter, clock=clock, sleep=clock.sleep), clock


def prompts(n):
    return [(f"q{i:04d}", f"prompt {i}: is this walking or running?") for i in range(n)]


def responder(prompt):
    return "running" if int(prompt.split()[1].rstrip(":")) % 3 == 0 else "walking"


def comparable(records):
    rows = []
    for r in records:
        d = r.to_dict()
        d.pop("timestamp")
        d.pop("latency_ms")
        rows.append(d)
    return rows


@pytest.mark.criterion(8, "client respects the rate limit, retries and resumes after a kill")
def test_rate_limit_over_500_requests(record_property):
    with MockBackend(responder) as mock:
        backend = BackendConfig(mock.url, api_key_env_var="", max_requests_per_minute=175,
                                max_concurrent_inflight=4)
        client, clock = virtual_client(backend)
        records = annotate_batch(prompts(500), backend, ["walking", "running"], client=client)
        served = len(mock.requests)
    peak = max_in_window(client.limiter.history, 60.0)
    detail(record_property, f"500 requests, peak {peak} per 60 s window, {clock() / 60:.2f} virtual min")
    assert served == 500 and all(r.predicted for r in records)
    assert peak <= 175
    assert clock() >= 120.0  # 500 requests need at least two full windows at 175/min


@pytest.mark.criterion(8, "client respects the rate limit, retries and resumes after a kill")
def test_two_429s_then_success_takes_three_attempts():
    with MockBackend("walking", statuses=[429, 429]) as mock:
        backend = BackendConfig(mock.url, api_key_env_var="", max_concurrent_inflight=1)
        client, _ = virtual_client(backend)
        [record] = annotate_batch(prompts(1), backend, ["walking", "running"], client=client)
        statuses = [r["status"] for r in mock.requests]
    assert statuses == [429, 429, 200]
    assert record.attempt_count == 3 and record.predicted == "walking"


CHILD = textwrap.dedent("""
    import sys
    from senselabel.llm import BackendConfig, annotate_batch
    url, log_path, n = sys.argv[1], sys.argv[2], int(sys.argv[3])
    prompts = [(f"q{i:04d}", f"prompt {i}: is this walking or running?") for i in range(n)]
    backend = BackendConfig(url, api_key_env_var="", max_requests_per_minute=100000,
                            max_concurrent_inflight=3)
    annotate_batch(prompts, backend, ["walking", "running"], log_path=log_path)
""")


def slow_responder(prompt):
    time.sleep(0.01)
    return responder(prompt)


@pytest.mark.criterion(8, "client respects the rate limit, retries and resumes after a kill")
def test_kill_and_resume_matches_uninterrupted_run(tmp_path, record_property):
    n = 200
    log_path = tmp_path / "annotations.jsonl"
    with MockBackend(slow_responder) as mock:
        backend = BackendConfig(mock.url, api_key_env_var="", max_requests_per_minute=100000,
                                max_concurrent_inflight=3)
        client, _ = virtual_client(backend)
        full = annotate_batch(prompts(n), backend, ["walking", "running"], client=client)

        child = subprocess.Popen([sys.executable, "-c", CHILD, mock.url, str(log_path), str(n)])
        deadline = time.monotonic() + 60
        while time.monotonic() < deadline and child.poll() is None:
            if log_path.exists() and log_path.read_text().count("\n") >= 60:
                break
            time.sleep(0.005)
        assert child.poll() is None, "child finished before it could be killed"
        os.kill(child.pid, signal.SIGKILL)
        child.wait()

        logged = len(read_log(log_path))
        before = len(mock.requests)
        client, _ = virtual_client(backend)
        resumed = annotate_batch(prompts(n), backend, ["walking", "running"],
                                 log_path=log_path, client=client)
        resent = len(mock.requests) - before
    detail(record_property, f"killed after {logged} logged records, resume sent {resent} requests")
    assert 0 < logged < n
    assert resent == n - logged
    assert comparable(resumed) == comparable(full)


# ---------------------------------------------------------------- 9


TINY = """
[seeds]
data = 1
pretrain = 2
projection = 3
examples = 4
[data]
window_len = 32
stride = 16
[data.synthetic]
preset = "two-class"
n_subjects = 10
seconds = 4.0
[pretrain]
epochs = 3
batch_size = 32
encoder = {kernel_sizes = [5, 3, 3], channels = [4, 6, 8], head_hidden = 12, output_dim = 6}
[project]
perplexity = 5.0
iterations = 200
[grid]
dims = [2, 3]
metrics = ["euclidean", "manhattan", "cosine"]
examples = [1, 3, 10]
workers = 2
"""


@pytest.mark.criterion(9, "windowing matches an enumeration oracle and grid manifests are bit-reproducible")
def test_window_count_matches_oracle(record_property):
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n, L, S = int(rng.integers(0, 2000)), int(rng.integers(1, 300)), int(rng.integers(1, 300))
        assert window_count(n, L, S) == oracles.window_count(n, L, S), (n, L, S)


@pytest.mark.criterion(9, "windowing matches an enumeration oracle and grid manifests are bit-reproducible")
def test_grid_manifest_is_bit_reproducible(tmp_path, record_property):
    manifests = []
    for attempt in ("first", "second"):
        config = RunConfig.load(text=TINY, overrides=[(["out"], str(tmp_path / attempt)),
                                                      (["annotate", "backend"], "oracle")])
        pipe = Pipeline(config)
        pipe.grid()
        manifests.append(pipe.write_manifest().read_bytes())
    n_stages = len(json.loads(manifests[0])["stages"])
    detail(record_property, f"manifests of {n_stages} stages identical: {manifests[0] == manifests[1]}")
    assert manifests[0] == manifests[1]


# ---------------------------------------------------------------- 10


@pytest.mark.criterion(10, "raw-prompt path round-trips the refusal and the reported response")
def test_raw_prompt_baseline_path(record_property):
    spec = RawPromptSpec(["walking upstairs", "jogging"], [-0.0933, 0.0165, 0.0609],
                         body_position_text="the smartphone stored in the user's trousers' front pocket")
    prompt = render_raw_prompt(spec)
    assert prompt.startswith("Classify the following triaxial accelerometer data")
    refusal = parse_response(REFUSAL, spec.class_names)
    labelled = parse_response(TABLE3_RESPONSE, spec.class_names)
    detail(record_property, f"refusal -> {refusal.outcome}, response -> {labelled.outcome}({labelled.label})")
    assert refusal.outcome == "refusal" and refusal.label is None
    assert labelled.outcome == "label" and labelled.label == "walking upstairs"
