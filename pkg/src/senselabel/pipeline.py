"""Declarative run configuration and content-addressed pipeline stages.

Every stage writes into ``<out>/<run-id>/<stage>/<key>/`` where ``key`` is a
hash of the stage version, the configuration fields the stage reads and the
key of the stage it consumes. A directory holding ``stage.json`` is complete
and is reused as-is, so re-running with unchanged inputs skips the work and
leaves the outputs byte-identical.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import evaluation as ev
from .adapters import ADAPTERS, DATASETS, parse_dataset
from .errors import AuthError, ConfigError, SenseLabelError, TerminalTransportError
from .ingest import Normalizer, SplitSpec, read_windows, split, windowize_all, write_windows
from .llm import (AnnotationRecord, BackendConfig, ChatClient, MockBackend, SlidingWindowLimiter,
                  VirtualClock, annotate_batch, estimate_tokens, oracle_responder, read_log)
from .numeric import METRICS
from .projection import MAX_DIM, MIN_DIM, project, read_projection, write_projection
from .prompts import (build_embedding_spec, oracle_annotate, parse_response,
                      render_embedding_prompt, select_examples)
from .ssl import AugmentationSpec, ContrastiveConfig, EncoderConfig, encode, load_model, pretrain, save_model
from .synthetic import SIX_CLASS, TWO_CLASS, make_recordings

log = logging.getLogger(__name__)

STAGES = ("ingest", "pretrain", "encode", "project", "annotate", "evaluate", "grid")
STAGE_VERSIONS = {s: 1 for s in STAGES}
BACKENDS = ("oracle", "mock", "live")
SEED_KEYS = ("data", "pretrain", "projection", "examples")
SYNTHETIC_PRESETS = {"two-class": TWO_CLASS, "six-class": SIX_CLASS}
# settings that change how a run executes but never what it produces
EXECUTION_ONLY = (("grid", "workers"),)

DEFAULTS = {
    "out": "runs",
    "run_id": None,
    "seeds": {},
    "data": {
        "adapter": "synthetic",
        "path": None,
        "dataset_id": None,
        "test_subjects": None,
        "classes": None,
        "target_hz": 50.0,
        "window_len": 128,
        "stride": 64,
        "normalize": True,
        "adapter_options": {},
        "synthetic": {"preset": "two-class"},
    },
    "pretrain": {
        "mode": "simclr",
        "epochs": None,
        "batch_size": None,
        "optimizer": None,
        "lr": None,
        "temperature": 0.5,
        "noise_sigma": 0.05,
        "scale_range": [0.8, 1.2],
        "encoder": {},
        "domain": None,
    },
    "project": {"method": "tsne", "dim": 2, "perplexity": 30.0, "iterations": 1000},
    "annotate": {
        "backend": "oracle",
        "metric": "euclidean",
        "examples": 25,
        "decimal_places": 7,
        "answer_in_one_word": True,
        "max_queries": None,
        "endpoint_url": None,
        "model_name": "gpt-4",
        "api_key_env_var": "OPENAI_API_KEY",
        "rate_per_minute": 175,
        "concurrency": 4,
        "max_attempts": 5,
    },
    "evaluate": {
        "currency": "USD",
        "prompt_per_1k": None,
        "completion_per_1k": None,
        "per_request": 0.0,
        "rate_per_minute": 175,
    },
    "grid": {"dims": [2, 5, 10, 15], "metrics": ["euclidean", "manhattan", "cosine"],
             "examples": [1, 3, 10, 25], "workers": 1},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def parse_override(item: str) -> tuple[list[str], object]:
    """``section.key=value`` with the value read as a TOML literal when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip().split("."), value


@dataclass
class RunConfig:
    """Resolved configuration: defaults, then the file, then overrides."""

    data: dict
    source_dir: Path = Path(".")

    @classmethod
    def load(cls, path=None, overrides=(), text: str | None = None) -> "RunConfig":
        raw: dict = {}
        source_dir = Path(".")
        if text is not None:
            raw = _loads(text)
        elif path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file {p} does not exist")
            raw = _loads(p.read_text(encoding="utf-8"))
            source_dir = p.resolve().parent
        for item in overrides:
            keys, value = parse_override(item) if isinstance(item, str) else item
            if isinstance(keys, str):
                keys = keys.split(".")
            node = raw
            for k in keys[:-1]:
                node = node.setdefault(k, {})
                if not isinstance(node, dict):
                    raise ConfigError(f"override {'.'.join(keys)} crosses a non-table value")
            node[keys[-1]] = value
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        cfg = cls(_merge(DEFAULTS, raw), source_dir)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    def resolve_path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (self.source_dir / p)

    def validate(self) -> None:
        d = self.data
        for section in ("data", "pretrain", "project", "annotate", "evaluate", "grid"):
            unknown = set(d[section]) - set(DEFAULTS[section])
            if unknown:
                raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
        seeds = d["seeds"]
        missing = [k for k in SEED_KEYS if k not in seeds]
        if missing:
            raise ConfigError(f"[seeds] must set {', '.join(missing)} (seeds are mandatory)")
        for k, v in seeds.items():
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(f"seed {k} must be a non-negative integer")
        data = d["data"]
        if data["adapter"] != "synthetic":
            if data["adapter"] not in ADAPTERS:
                raise ConfigError(f"unknown adapter {data['adapter']!r}")
            if not data["path"]:
                raise ConfigError("data.path is required for file-based adapters")
            if not self.resolve_path(data["path"]).exists():
                raise ConfigError(f"data.path {data['path']} does not exist")
        elif data["synthetic"].get("preset", "two-class") not in SYNTHETIC_PRESETS:
            raise ConfigError(f"unknown synthetic preset {data['synthetic'].get('preset')!r}")
        if d["pretrain"]["mode"] not in ("simclr", "tfc"):
            raise ConfigError(f"unknown pretrain mode {d['pretrain']['mode']!r}")
        proj = d["project"]
        if proj["method"] not in ("tsne", "pca"):
            raise ConfigError(f"unknown projection method {proj['method']!r}")
        dims = [proj["dim"]] + list(d["grid"]["dims"])
        if any(not isinstance(u, int) or not MIN_DIM <= u <= MAX_DIM for u in dims):
            raise ConfigError(f"dimensions must be integers in [{MIN_DIM}, {MAX_DIM}]")
        ann = d["annotate"]
        metrics = [ann["metric"]] + list(d["grid"]["metrics"])
        bad = [m for m in metrics if m not in METRICS]
        if bad:
            raise ConfigError(f"unknown metric(s) {bad}; expected one of {list(METRICS)}")
        ks = [ann["examples"]] + list(d["grid"]["examples"])
        if any(not isinstance(k, int) or k < 1 for k in ks):
            raise ConfigError("example counts must be positive integers")
        if ann["backend"] not in BACKENDS:
            raise ConfigError(f"unknown backend {ann['backend']!r}")
        if ann["backend"] == "live" and not ann["endpoint_url"]:
            raise ConfigError("annotate.endpoint_url is required for the live backend")
        if int(d["grid"]["workers"]) < 1:
            raise ConfigError("grid.workers must be >= 1")

    @property
    def config_hash(self) -> str:
        body = {k: copy.deepcopy(v) for k, v in self.data.items() if k not in ("out", "run_id")}
        for section, key in EXECUTION_ONLY:
            body[section].pop(key, None)
        return sha256_hex(canonical_json(body))

    @property
    def run_id(self) -> str:
        return self.data["run_id"] or f"run-{self.config_hash[:12]}"

    @property
    def run_dir(self) -> Path:
        return self.resolve_path(self.data["out"]) / self.run_id


def _loads(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None


# --------------------------------------------------------------------------
# stage bookkeeping


class StageFailed(SenseLabelError):
    """A stage raised; carries the stage name and the exit code to report."""

    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        self.cause = exc
        self.exit_code = 4 if isinstance(exc, (AuthError, TerminalTransportError)) else 3
        super().__init__(f"{type(exc).__name__}: {exc}")


@dataclass
class StageResult:
    name: str
    key: str
    directory: Path
    reused: bool

    def path(self, filename: str) -> Path:
        return self.directory / filename


VOLATILE_FIELDS = ("timestamp", "latency_ms")


def file_digest(path: Path) -> str:
    """sha256 of a file; annotation logs are digested without timing fields."""
    if path.name == "annotations.jsonl":
        rows = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                for f in VOLATILE_FIELDS:
                    rec.pop(f, None)
                rows.append(canonical_json(rec))
        return sha256_hex("\n".join(sorted(rows)))
    return hashlib.sha256(path.read_bytes()).hexdigest()


_locks: dict[str, threading.Lock] = {}
_locks_guard = threading.Lock()


def _lock_for(key: str) -> threading.Lock:
    with _locks_guard:
        return _locks.setdefault(key, threading.Lock())


class Pipeline:
    """Runs stages for one configuration, reusing completed stage directories."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.run_dir = config.run_dir
        self.stages: dict[str, dict] = {}
        self._manifest_lock = threading.Lock()
        self._memo: dict[str, StageResult] = {}
        self._memo_lock = threading.RLock()

    def _once(self, name: str, fn):
        # upstream stages are shared by every grid configuration
        with self._memo_lock:
            if name not in self._memo:
                self._memo[name] = fn()
            return self._memo[name]

    def _classes(self) -> list[str]:
        split_info = self.ingest().path("split.json").read_text(encoding="utf-8")
        return json.loads(split_info)["chosen_classes"]

    # -- generic stage runner ------------------------------------------------

    def _stage(self, name: str, label: str, params: dict, upstream: list[StageResult], build) -> StageResult:
        key = sha256_hex(canonical_json({
            "stage": name, "version": STAGE_VERSIONS[name], "params": params,
            "upstream": [u.key for u in upstream]}))[:16]
        directory = self.run_dir / name / key
        marker = directory / "stage.json"
        with _lock_for(str(directory)):
            reused = marker.exists()
            if not reused:
                directory.mkdir(parents=True, exist_ok=True)
                log.info("running %s (%s)", label, key)
                try:
                    build(directory)
                except SenseLabelError as exc:
                    if isinstance(exc, (StageFailed, ConfigError)):
                        raise
                    raise StageFailed(label, exc) from exc
                except (ValueError, KeyError, OSError, ArithmeticError) as exc:
                    raise StageFailed(label, exc) from exc
                outputs = {p.name: file_digest(p) for p in sorted(directory.iterdir())
                           if p.is_file() and p.name != "stage.json"}
                marker.write_text(json.dumps({
                    "stage": name, "version": STAGE_VERSIONS[name], "key": key,
                    "params": params, "upstream": [u.key for u in upstream],
                    "outputs": outputs}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            else:
                log.info("reusing %s (%s)", label, key)
        info = json.loads(marker.read_text(encoding="utf-8"))
        with self._manifest_lock:
            self.stages[label] = {"key": key, "version": STAGE_VERSIONS[name],
                                  "directory": str(directory.relative_to(self.run_dir)),
                                  "outputs": info["outputs"]}
        return StageResult(name, key, directory, reused)

    def write_manifest(self) -> Path:
        path = self.run_dir / "manifest.json"
        stages = {}
        if path.exists():
            stages = json.loads(path.read_text(encoding="utf-8")).get("stages", {})
        stages.update(self.stages)
        manifest = {
            "run_id": self.config.run_id,
            "config_hash": self.config.config_hash,
            "config": {k: v for k, v in self.config.data.items() if k not in ("out", "run_id")},
            "seeds": self.config["seeds"],
            "stage_versions": STAGE_VERSIONS,
            "stages": stages,
        }
        self.run_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    # -- ingest ----------------------------------------------------------------

    def _data_identity(self) -> dict:
        data = self.config["data"]
        if data["adapter"] == "synthetic":
            return {"synthetic": data["synthetic"], "seed": self.config["seeds"]["data"]}
        p = self.config.resolve_path(data["path"])
        files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
        h = hashlib.sha256()
        for f in files:
            h.update(str(f.relative_to(p) if p.is_dir() else f.name).encode())
            h.update(hashlib.sha256(f.read_bytes()).digest())
        return {"adapter": data["adapter"], "content_sha256": h.hexdigest(),
                "adapter_options": data["adapter_options"]}

    def _split_spec(self, recordings) -> SplitSpec:
        data = self.config["data"]
        info = DATASETS.get(data["adapter"])
        dataset_id = recordings[0].dataset_id if recordings else (data["dataset_id"] or "data")
        classes = data["classes"] or (list(info.chosen_classes) if info else None)
        subjects = data["test_subjects"] or (list(info.test_subject_ids) if info else None)
        if data["adapter"] == "synthetic":
            preset = SYNTHETIC_PRESETS[data["synthetic"].get("preset", "two-class")]
            classes = classes or [c.name for c in preset][:2]
            n_sub = data["synthetic"].get("n_subjects", 30)
            subjects = subjects or [str(s) for s in range(n_sub - n_sub // 5 + 1, n_sub + 1)]
        if not classes or not subjects:
            raise ConfigError("data.classes and data.test_subjects are required for this adapter")
        return SplitSpec(dataset_id, [str(s) for s in subjects], list(classes))

    def _recordings(self):
        data = self.config["data"]
        if data["adapter"] == "synthetic":
            opts = dict(data["synthetic"])
            preset = SYNTHETIC_PRESETS[opts.pop("preset", "two-class")]
            for k in ("amplitude_range", "noise_range"):
                if k in opts:
                    opts[k] = tuple(opts[k])
            return make_recordings(preset, seed=self.config["seeds"]["data"], **opts)
        opts = dict(data["adapter_options"])
        if data["dataset_id"] and data["adapter"] == "generic-csv":
            opts.setdefault("dataset_id", data["dataset_id"])
        return parse_dataset(self.config.resolve_path(data["path"]), data["adapter"], **opts)

    def ingest(self) -> StageResult:
        return self._once("ingest", self._ingest)

    def _ingest(self) -> StageResult:
        data = self.config["data"]
        params = {"data": self._data_identity(),
                  **{k: data[k] for k in ("test_subjects", "classes", "target_hz", "window_len",
                                          "stride", "normalize", "dataset_id")}}

        def build(d: Path):
            recs = self._recordings()
            spec = self._split_spec(recs)
            windows = windowize_all(recs, data["window_len"], data["stride"], data["target_hz"])
            train, test = split(windows, spec)
            norm = Normalizer.fit(train) if data["normalize"] else Normalizer()
            train, test = norm.apply(train), norm.apply(test)
            write_windows(d / "train.jsonl", train)
            write_windows(d / "test.jsonl", test)
            (d / "split.json").write_text(json.dumps({
                "dataset_id": spec.dataset_id, "test_subject_ids": sorted(spec.test_subject_ids),
                "chosen_classes": list(spec.chosen_classes), "normalizer": norm.to_dict(),
                "train_windows": len(train), "test_windows": len(test)},
                indent=2, sort_keys=True) + "\n", encoding="utf-8")

        return self._stage("ingest", "ingest", params, [], build)

    # -- pretrain / encode -------------------------------------------------------

    def _contrastive_config(self) -> ContrastiveConfig:
        p = self.config["pretrain"]
        overrides = {k: p[k] for k in ("epochs", "batch_size", "optimizer", "lr") if p[k] is not None}
        return ContrastiveConfig.defaults(
            p["mode"], temperature=p["temperature"], seed=self.config["seeds"]["pretrain"],
            augmentation=AugmentationSpec(p["noise_sigma"], tuple(p["scale_range"])), **overrides)

    def pretrain(self) -> StageResult:
        return self._once("pretrain", self._pretrain)

    def _pretrain(self) -> StageResult:
        ing = self.ingest()
        p = self.config["pretrain"]
        params = {**{k: v for k, v in p.items() if k != "domain"},
                  "seed": self.config["seeds"]["pretrain"]}

        def build(d: Path):
            train = read_windows(ing.path("train.jsonl"))
            cfg = self._contrastive_config()
            enc = None
            if p["encoder"] or p["mode"] == "simclr":
                window_len = train[0].values.shape[0]
                fields = {k: tuple(v) if isinstance(v, list) else v for k, v in p["encoder"].items()}
                if p["mode"] == "tfc":
                    fields.setdefault("output_dim", 334)
                    fields.setdefault("head_hidden", 256)
                enc = EncoderConfig(window_len=window_len, seed=cfg.seed, **fields)
            result = pretrain(train, p["mode"], cfg, enc)
            save_model(d / "encoder.npz", result.model, cfg)
            result.write_log(d / "train_log.csv")

        return self._stage("pretrain", "pretrain", params, [ing], build)

    def encode(self) -> StageResult:
        return self._once("encode", self._encode)

    def _encode(self) -> StageResult:
        ing, pre = self.ingest(), self.pretrain()
        domain = self.config["pretrain"]["domain"]

        def build(d: Path):
            model, _ = load_model(pre.path("encoder.npz"))
            out = {}
            for part in ("train", "test"):
                windows = read_windows(ing.path(f"{part}.jsonl"))
                out[f"{part}_embeddings"] = encode(windows, model, domain)
                out[f"{part}_ids"] = np.array([w.id for w in windows])
                out[f"{part}_labels"] = np.array([w.label or "" for w in windows])
            with open(d / "embeddings.npz", "wb") as fh:
                np.savez(fh, **out)

        return self._stage("encode", "encode", {"domain": domain}, [pre], build)

    # -- project -----------------------------------------------------------------

    def project(self, dim: int | None = None) -> StageResult:
        dim = int(dim or self.config["project"]["dim"])
        return self._once(f"project[dim={dim}]", lambda: self._project(dim))

    def _project(self, dim: int) -> StageResult:
        enc = self.encode()
        classes = self._classes()
        proj = self.config["project"]
        params = {**proj, "dim": dim, "seed": self.config["seeds"]["projection"], "classes": classes}

        def build(d: Path):
            with np.load(enc.path("embeddings.npz")) as z:
                keep = np.isin(z["train_labels"], classes)
                E = np.vstack([z["train_embeddings"][keep], z["test_embeddings"]])
                ids = list(z["train_ids"][keep]) + list(z["test_ids"])
                labels = list(z["train_labels"][keep]) + list(z["test_labels"])
                splits = ["train"] * int(keep.sum()) + ["test"] * len(z["test_ids"])
            kwargs = {}
            if proj["method"] == "tsne":
                kwargs = {"perplexity": proj["perplexity"], "iterations": proj["iterations"]}
            res = project(E, proj["method"], dim, seed=self.config["seeds"]["projection"], **kwargs)
            write_projection(d / "projection.jsonl", [str(i) for i in ids], splits,
                             [str(x) for x in labels], res.points)
            # test labels stay out of the projection file and go to the ground truth file
            ev.write_ground_truth(d / "ground_truth.csv",
                                  {str(i): str(lab) for i, lab, s in zip(ids, labels, splits) if s == "test"})
            diag = {k: v for k, v in res.diagnostics.items() if k not in ("components", "mean")}
            (d / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")

        return self._stage("project", f"project[dim={dim}]", params, [enc], build)

    # -- annotate ------------------------------------------------------------------

    def _queries(self, records: list[dict]) -> list[dict]:
        test = [r for r in records if r["split"] == "test"]
        limit = self.config["annotate"]["max_queries"]
        if limit is not None and limit < len(test):
            rng = np.random.default_rng(self.config["seeds"]["examples"])
            keep = np.sort(rng.choice(len(test), size=int(limit), replace=False))
            test = [test[i] for i in keep]
        return test

    def annotate(self, dim: int | None = None, metric: str | None = None,
                 examples: int | None = None) -> StageResult:
        ann = self.config["annotate"]
        prj = self.project(dim)
        dim = int(dim or self.config["project"]["dim"])
        metric = metric or ann["metric"]
        k = int(examples or ann["examples"])
        classes = self._classes()
        backend = ann["backend"]
        params = {"metric": metric, "examples": k, "backend": backend,
                  "decimal_places": ann["decimal_places"], "answer_in_one_word": ann["answer_in_one_word"],
                  "max_queries": ann["max_queries"], "seed": self.config["seeds"]["examples"]}
        if backend == "live":
            params["model_name"] = ann["model_name"]
            params["endpoint_url"] = ann["endpoint_url"]

        def build(d: Path):
            recs = read_projection(prj.path("projection.jsonl"))
            train = [r for r in recs if r["split"] == "train"]
            points = np.array([r["values"] for r in train])
            selection = select_examples([r["label"] for r in train], k, classes,
                                        self.config["seeds"]["examples"])
            selection.write_manifest(d / "examples.jsonl")
            prompts = []
            for q in self._queries(recs):
                spec = build_embedding_spec(points, selection, q["values"], metric,
                                            ann["decimal_places"], ann["answer_in_one_word"])
                prompts.append((q["id"], render_embedding_prompt(spec), spec))
            run_backend(backend, prompts, classes, d / "annotations.jsonl", ann)

        label = f"annotate[dim={dim},metric={metric},k={k}]"
        return self._stage("annotate", label, params, [prj], build)

    # -- evaluate --------------------------------------------------------------------

    def price_table(self) -> ev.PriceTable | None:
        e = self.config["evaluate"]
        if e["prompt_per_1k"] is None or e["completion_per_1k"] is None:
            return None
        return ev.PriceTable.from_amounts(e["prompt_per_1k"], e["completion_per_1k"],
                                          e["per_request"], e["currency"])

    def evaluate(self, dim: int | None = None, metric: str | None = None,
                 examples: int | None = None) -> StageResult:
        ann = self.annotate(dim, metric, examples)
        prj = self.project(dim)
        classes = self._classes()
        e = self.config["evaluate"]
        dim = int(dim or self.config["project"]["dim"])
        metric = metric or self.config["annotate"]["metric"]
        k = int(examples or self.config["annotate"]["examples"])

        def build(d: Path):
            records = load_annotations(ann.path("annotations.jsonl"))
            truth = ev.read_ground_truth(prj.path("ground_truth.csv"))
            report = ev.build_report(records, truth, classes, self.price_table(), e["rate_per_minute"],
                                     config={"dim": dim, "metric": metric, "examples": k,
                                             "backend": self.config["annotate"]["backend"]})
            report.write(d)

        return self._stage("evaluate", f"evaluate[dim={dim},metric={metric},k={k}]",
                           {**e, "dim": dim, "metric": metric, "examples": k}, [ann], build)

    # -- grid ------------------------------------------------------------------------

    def grid_configurations(self) -> list[tuple[int, str, int]]:
        g = self.config["grid"]
        return [(u, m, k) for u in g["dims"] for m in g["metrics"] for k in g["examples"]]

    def grid(self) -> StageResult:
        g = self.config["grid"]
        configs = self.grid_configurations()
        workers = int(g["workers"])
        self.encode()
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(self.project, g["dims"]))
            reports = list(pool.map(lambda c: self.evaluate(*c), configs))
        params = {"configurations": [list(c) for c in configs]}

        def build(d: Path):
            rows = []
            by_curve: dict = {}
            for (u, m, k), rep in zip(configs, reports):
                data = json.loads(rep.path("report.json").read_text(encoding="utf-8"))
                rows.append({"dim": u, "metric": m, "examples": k, "accuracy": data["accuracy"],
                             "refusal": data["outcomes"]["refusal"],
                             "ambiguous": data["outcomes"]["ambiguous"],
                             "query_count": data["query_count"], "cost": data["cost"],
                             "report": str(rep.directory.relative_to(self.run_dir))})
                by_curve.setdefault(f"dim={u},metric={m}", {})[k] = data["accuracy"]
            curves = {}
            for name, pts in by_curve.items():
                acc = [pts[k] for k in sorted(pts)]
                curves[name] = {"points": {str(k): pts[k] for k in sorted(pts)},
                                "monotonic": all(b >= a for a, b in zip(acc, acc[1:]))}
            (d / "grid.json").write_text(json.dumps({"configurations": rows, "consistency": curves},
                                                    indent=2, sort_keys=True) + "\n", encoding="utf-8")
            lines = ["dim,metric,examples,accuracy,refusal,ambiguous,query_count"]
            lines += [f"{r['dim']},{r['metric']},{r['examples']},{r['accuracy']!r},{r['refusal']},"
                      f"{r['ambiguous']},{r['query_count']}" for r in rows]
            (d / "grid.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

        return self._stage("grid", "grid", params, reports, build)


def load_annotations(path) -> list[AnnotationRecord]:
    """Records of an annotation log in file order."""
    return list(read_log(path).values())


def run_backend(backend: str, prompts, class_names, log_path: Path, ann: dict) -> list[AnnotationRecord]:
    """Annotate ``(query_id, prompt_text, spec)`` triples with the chosen backend."""
    if backend == "oracle":
        done = read_log(log_path)
        with open(log_path, "a", encoding="utf-8") as fh:
            for qid, text, spec in prompts:
                if qid in done:
                    continue
                answer = oracle_annotate(spec)
                rec = AnnotationRecord(qid, text, answer, parse_response(answer, class_names),
                                       estimate_tokens(text), estimate_tokens(answer), 0.0, 1, None)
                fh.write(canonical_json(rec.to_dict()) + "\n")
                done[qid] = rec
        return [done[q] for q, _, _ in prompts]

    pairs = [(q, t) for q, t, _ in prompts]
    if backend == "mock":
        # the mock runs in-process on a virtual clock: the rate cap is enforced
        # on the schedule without making the run wait in real time
        clock = VirtualClock()
        with MockBackend(oracle_responder) as mock:
            cfg = BackendConfig(mock.url, ann["model_name"], api_key_env_var="",
                                max_requests_per_minute=ann["rate_per_minute"],
                                max_concurrent_inflight=ann["concurrency"],
                                max_attempts=ann["max_attempts"])
            limiter = SlidingWindowLimiter(cfg.max_requests_per_minute, 60.0, clock, clock.sleep)
            client = ChatClient(cfg, limiter, clock=clock, sleep=clock.sleep)
            try:
                return annotate_batch(pairs, cfg, class_names, log_path, client=client)
            finally:
                client.close()
    cfg = BackendConfig(ann["endpoint_url"], ann["model_name"], ann["api_key_env_var"],
                        ann["rate_per_minute"], ann["concurrency"], ann["max_attempts"])
    if cfg.api_key_env_var and cfg.api_key() is None:
        raise ConfigError(f"environment variable {cfg.api_key_env_var} is not set")
    return annotate_batch(pairs, cfg, class_names, log_path)
