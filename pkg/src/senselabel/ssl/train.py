"""Contrastive pre-training loops, embedding extraction and model files."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import NonFiniteLoss, ShapeMismatch
from ..ingest import Window, stack
from ..numeric import OptimizerState, optimizer_step
from .augment import AugmentationSpec, augment_spectrum, augment_values, frequency_view
from .layers import EncoderConfig
from .models import SimclrModel, TfcModel

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = "senselabel-encoder"


@dataclass
class ContrastiveConfig:
    mode: str = "simclr"
    temperature: float = 0.5
    batch_size: int = 512
    epochs: int = 200
    optimizer: str = "sgd-cosine"
    lr: float = 0.1
    momentum: float = 0.0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.99
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    seed: int = 0
    # TFC only
    lam: float = 0.5
    delta: float = 1.0
    distance: str = "cosine"
    joint_dim: int = 128
    spectral_jitter: float = 0.1

    def __post_init__(self):
        if isinstance(self.augmentation, dict):
            self.augmentation = AugmentationSpec(**self.augmentation)
        if self.mode not in ("simclr", "tfc"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 so every anchor has negatives")

    @classmethod
    def defaults(cls, mode: str, **overrides) -> "ContrastiveConfig":
        if mode == "simclr":
            base = dict(mode="simclr", epochs=200, batch_size=512, optimizer="sgd-cosine", lr=0.1)
        elif mode == "tfc":
            base = dict(mode="tfc", epochs=40, batch_size=128, optimizer="adam", lr=3e-4,
                        beta1=0.9, beta2=0.99)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        base.update(overrides)
        return cls(**base)

    def make_optimizer(self) -> OptimizerState:
        return OptimizerState(self.optimizer, self.lr, total_steps=self.epochs,
                              beta1=self.beta1, beta2=self.beta2,
                              momentum=self.momentum, weight_decay=self.weight_decay)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augmentation"]["scale_range"] = list(self.augmentation.scale_range)
        return d


@dataclass
class TrainingResult:
    model: object
    history: list = field(default_factory=list)  # (epoch, mean_loss, lr)

    def write_log(self, path) -> None:
        Path(path).write_text(history_csv(self.history), encoding="utf-8")


def history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "mean_loss", "lr"])
    for epoch, loss, lr in history:
        w.writerow([epoch, repr(float(loss)), repr(float(lr))])
    return buf.getvalue()


def build_model(mode: str, config: ContrastiveConfig | None = None,
                encoder_config: EncoderConfig | None = None, window_len: int = 128):
    config = config or ContrastiveConfig.defaults(mode)
    if mode == "simclr":
        enc = encoder_config or EncoderConfig(window_len=window_len, seed=config.seed)
        return SimclrModel(enc)
    if mode == "tfc":
        if encoder_config is not None:
            tcfg = encoder_config
            fcfg = EncoderConfig(**{**encoder_config.to_dict(), "seed": encoder_config.seed + 1})
        else:
            tcfg = EncoderConfig(window_len=window_len, output_dim=334, head_hidden=256, seed=config.seed)
            fcfg = EncoderConfig(window_len=window_len, output_dim=334, head_hidden=256, seed=config.seed + 1)
        return TfcModel(tcfg, fcfg, joint_dim=config.joint_dim, delta=config.delta,
                        lam=config.lam, distance=config.distance, seed=config.seed)
    raise ValueError(f"unknown mode {mode!r}")


def tfc_views(x, spec: AugmentationSpec, rng, spectral_jitter: float = 0.1):
    """(time, augmented time, frequency, augmented frequency) views of a batch."""
    xt_aug = augment_values(x, spec, rng)
    xf = frequency_view(x)
    xf_aug = augment_spectrum(xf, rng, jitter=spectral_jitter)
    return x, xt_aug, xf, xf_aug


def tfc_losses(batch, model: TfcModel, tau: float = 0.5):
    """Return ``(L_T, L_F, L_C, L_TFC, grads)`` for a prepared view batch."""
    terms, grads = model.loss_and_grads(*batch, tau)
    return terms.time, terms.freq, terms.consistency, terms.total, grads


def pretrain(train: Sequence[Window] | np.ndarray, mode: str = "simclr",
             config: ContrastiveConfig | None = None,
             encoder_config: EncoderConfig | None = None, model=None) -> TrainingResult:
    """Label-free contrastive training; deterministic for a given seed."""
    config = config or ContrastiveConfig.defaults(mode)
    if config.mode != mode:
        raise ValueError(f"config mode {config.mode!r} does not match {mode!r}")
    X = train if isinstance(train, np.ndarray) else stack(train)
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    model = model or build_model(mode, config, encoder_config, window_len=X.shape[1])
    opt = config.make_optimizer()
    rng = np.random.default_rng(config.seed)
    params = model.params
    history = []
    n = X.shape[0]
    bs = min(config.batch_size, n)
    for epoch in range(config.epochs):
        opt.epoch = epoch
        lr = opt.lr
        order = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            if idx.size < 2:
                continue
            xb = X[idx]
            try:
                if mode == "simclr":
                    va = augment_values(xb, config.augmentation, rng)
                    vb = augment_values(xb, config.augmentation, rng)
                    loss, grads = model.loss_and_grads(va, vb, config.temperature)
                else:
                    views = tfc_views(xb, config.augmentation, rng, config.spectral_jitter)
                    terms, grads = model.loss_and_grads(*views, config.temperature)
                    loss = terms.total
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(str(exc), epoch=epoch, batch=b) from exc
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss("non-finite loss or gradient", epoch=epoch, batch=b)
            params = optimizer_step(opt, params, grads)
            model.set_params(params)
            losses.append(loss)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        history.append((epoch, mean_loss, lr))
        log.info("epoch %d mean_loss %.6f lr %.6g", epoch, mean_loss, lr)
    return TrainingResult(model, history)


def encode(windows: Sequence[Window] | np.ndarray, model, domain: str | None = None,
           batch_size: int = 256) -> np.ndarray:
    """One embedding row per window.

    SimCLR models support ``domain="time"`` only. TFC models support
    ``"time"``, ``"frequency"`` and ``"joint"`` (time and frequency
    concatenated, the default).
    """
    X = windows if isinstance(windows, np.ndarray) else stack(windows)
    if X.ndim != 3:
        raise ShapeMismatch(f"expected (B, L, C) windows, got {X.shape}")
    if isinstance(model, SimclrModel):
        domain = domain or "time"
        if domain != "time":
            raise ValueError("SimCLR encoders only produce time-domain embeddings")
        fns = [model.encoder]
        views = [X]
    else:
        domain = domain or "joint"
        fns, views = [], []
        if domain in ("time", "joint"):
            fns.append(model.time_encoder)
            views.append(X)
        if domain in ("frequency", "joint"):
            fns.append(model.freq_encoder)
            views.append(frequency_view(X))
        if not fns:
            raise ValueError(f"unknown domain {domain!r}")
    parts = []
    for fn, V in zip(fns, views):
        out = [fn(V[i:i + batch_size]) for i in range(0, V.shape[0], batch_size)]
        d = fn.config.output_dim
        parts.append(np.concatenate(out) if out else np.zeros((0, d)))
    return np.concatenate(parts, axis=1)


# --------------------------------------------------------------------------
# model files: npz archive whose "__header__" entry is a JSON config


def save_model(path, model, training: ContrastiveConfig | None = None) -> None:
    header = {
        "magic": MAGIC,
        "format_version": FORMAT_VERSION,
        "mode": model.mode,
        "model": model.config_dict(),
        "training": training.to_dict() if training is not None else None,
    }
    arrays = {k: v for k, v in model.params.items()}
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("magic") != MAGIC:
            raise ValueError(f"{path} is not an encoder file")
        if header["format_version"] > FORMAT_VERSION:
            raise ValueError(f"unsupported encoder format {header['format_version']}")
        params = {k: data[k] for k in data.files if k != "__header__"}
    cfg = header["model"]
    if header["mode"] == "simclr":
        model = SimclrModel(EncoderConfig(**cfg["encoder"]))
    else:
        model = TfcModel(EncoderConfig(**cfg["time_encoder"]), EncoderConfig(**cfg["freq_encoder"]),
                         joint_dim=cfg["joint_dim"], projector_hidden=cfg["projector_hidden"],
                         delta=cfg["delta"], lam=cfg["lam"], distance=cfg["distance"], seed=cfg["seed"])
    model.set_params(params)
    return model, header
