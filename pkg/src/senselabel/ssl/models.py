"""Trainable models: a single SimCLR encoder and the dual-encoder TFC model."""
from __future__ import annotations

import numpy as np

from .layers import MLP, ConvEncoder, EncoderConfig
from .losses import nt_xent_loss, tfc_loss_terms


class SimclrModel:
    mode = "simclr"

    def __init__(self, encoder_config: EncoderConfig | None = None):
        self.encoder = ConvEncoder(encoder_config or EncoderConfig())

    @property
    def params(self) -> dict:
        return dict(self.encoder.params)

    def set_params(self, params: dict) -> None:
        self.encoder.set_params(params)

    def loss_and_grads(self, view_a, view_b, tau):
        """NT-Xent over the two augmented views of one batch."""
        x = np.concatenate([view_a, view_b])
        z, cache = self.encoder.forward(x)
        loss, dz = nt_xent_loss(z, tau)
        return loss, self.encoder.backward(dz, cache)

    def config_dict(self) -> dict:
        return {"encoder": self.encoder.config.to_dict()}


class TfcModel:
    """Time encoder G_T, frequency encoder G_F and cross projectors R_T, R_F.

    Parameters are namespaced ``time.*``, ``freq.*``, ``rT.*`` and ``rF.*``.
    """

    mode = "tfc"

    def __init__(self, time_config: EncoderConfig | None = None,
                 freq_config: EncoderConfig | None = None,
                 joint_dim: int = 128, projector_hidden: int = 256,
                 delta: float = 1.0, lam: float = 0.5, distance: str = "cosine", seed: int = 0):
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if delta <= 0:
            raise ValueError("delta must be positive")
        time_config = time_config or EncoderConfig(output_dim=334, head_hidden=256, seed=seed)
        freq_config = freq_config or EncoderConfig(output_dim=334, head_hidden=256, seed=seed + 1)
        self.time_encoder = ConvEncoder(time_config)
        self.freq_encoder = ConvEncoder(freq_config)
        rng = np.random.default_rng(seed + 2)
        self.proj_time = MLP((time_config.output_dim, projector_hidden, joint_dim), rng, prefix="fc")
        self.proj_freq = MLP((freq_config.output_dim, projector_hidden, joint_dim), rng, prefix="fc")
        self.joint_dim = joint_dim
        self.projector_hidden = projector_hidden
        self.delta = delta
        self.lam = lam
        self.distance = distance
        self.seed = seed

    @property
    def embedding_dim(self) -> int:
        return self.time_encoder.config.output_dim + self.freq_encoder.config.output_dim

    def _parts(self):
        return (("time.", self.time_encoder), ("freq.", self.freq_encoder),
                ("rT.", self.proj_time), ("rF.", self.proj_freq))

    @property
    def params(self) -> dict:
        out = {}
        for prefix, part in self._parts():
            for k, v in part.params.items():
                out[prefix + k] = v
        return out

    def set_params(self, params: dict) -> None:
        for prefix, part in self._parts():
            sub = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
            if isinstance(part, ConvEncoder):
                part.set_params(sub)
            else:
                part.params.update({k: np.asarray(v, dtype=np.float64) for k, v in sub.items()})

    def forward_terms(self, xt, xt_aug, xf, xf_aug, tau):
        N = xt.shape[0]
        hT_all, cT = self.time_encoder.forward(np.concatenate([xt, xt_aug]))
        hF_all, cF = self.freq_encoder.forward(np.concatenate([xf, xf_aug]))
        zT_all, aT = self.proj_time.forward(hT_all)
        zF_all, aF = self.proj_freq.forward(hF_all)
        terms = tfc_loss_terms(hT_all[:N], hT_all[N:], hF_all[:N], hF_all[N:],
                               zT_all[:N], zT_all[N:], zF_all[:N], zF_all[N:],
                               tau=tau, delta=self.delta, lam=self.lam, distance=self.distance)
        return terms, (cT, cF, aT, aF)

    def loss_and_grads(self, xt, xt_aug, xf, xf_aug, tau):
        terms, (cT, cF, aT, aF) = self.forward_terms(xt, xt_aug, xf, xf_aug, tau)
        g = terms.grads
        dzT = np.concatenate([g["zT"], g["zT_aug"]])
        dzF = np.concatenate([g["zF"], g["zF_aug"]])
        dhT, grT = self.proj_time.backward(dzT, aT)
        dhF, grF = self.proj_freq.backward(dzF, aF)
        dhT += np.concatenate([g["hT"], g["hT_aug"]])
        dhF += np.concatenate([g["hF"], g["hF_aug"]])
        grads = {}
        for prefix, sub in (("time.", self.time_encoder.backward(dhT, cT)),
                            ("freq.", self.freq_encoder.backward(dhF, cF)),
                            ("rT.", grT), ("rF.", grF)):
            grads.update({prefix + k: v for k, v in sub.items()})
        return terms, grads

    def config_dict(self) -> dict:
        return {
            "time_encoder": self.time_encoder.config.to_dict(),
            "freq_encoder": self.freq_encoder.config.to_dict(),
            "joint_dim": self.joint_dim, "projector_hidden": self.projector_hidden,
            "delta": self.delta, "lam": self.lam, "distance": self.distance, "seed": self.seed,
        }
