"""Batch generation through the full chain, the BCE training loop, and the
achievable-rate estimate (1 minus the cross-entropy in bits)."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .channel import calibrate_sigma2, gen_channel
from .errors import ConfigurationError, TrainingDiverged
from .link import LinkConfig, draw_bit_grid, np_frontend, propagate, transmit
from .rxchain import EqualizedOutput

_LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class TrainCfg:
    """Training hyper-parameters; SNR is drawn uniformly in dB per element."""

    iterations: int = 10000
    batch: int = 2
    lr: float = 1e-3
    optimizer: str = "sgd"
    snr_low_db: float = 7.0
    snr_high_db: float = 34.0
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if self.snr_low_db >= self.snr_high_db:
            raise ConfigurationError("snr_low_db must be < snr_high_db")
        if self.batch < 1 or self.iterations < 0:
            raise ConfigurationError("batch must be >= 1 and iterations >= 0")
        if self.lr < 0:
            raise ConfigurationError("lr must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class DemapInput:
    """Network inputs: re/im planes of the equalized grid plus variances."""

    xhat_ri: np.ndarray  # (B, N_u, N_f, N_t, 2)
    r_x: np.ndarray  # (B, N_u, N_f, N_t, 1)

    def __post_init__(self):
        if self.r_x.min() <= 0.0 or self.r_x.max() > 1.0 + 1e-6:
            raise ValueError("error variances must lie in (0, 1]")


def pack_demap_input(eqs: list[EqualizedOutput], dtype=np.float32) -> DemapInput:
    xhat = np.stack([eq.xhat for eq in eqs])  # (B, N_u, N_f, N_t)
    r_x = np.stack([eq.r_x for eq in eqs])
    ri = np.stack([xhat.real, xhat.imag], axis=-1).astype(dtype)
    return DemapInput(ri, np.minimum(r_x, 1.0)[..., None].astype(dtype))


@dataclass
class TrainingBatch:
    inputs: DemapInput
    bits: np.ndarray  # (B, N_u, N_f, N_t, K)
    mask: np.ndarray  # (1, 1, N_f, N_t, 1) data-RE selector
    snr_db: np.ndarray  # (B,)


def gen_training_batch(link: LinkConfig, cfg: TrainCfg, rng: np.random.Generator) -> TrainingBatch:
    """One batch of uncoded slots pushed through the nearest-pilot front end.

    Each element draws fresh bits, a fresh channel realization, and an SNR
    uniform in dB over the training range; sigma2 is calibrated per
    realization. Bits at pilot REs are placeholders and are masked out of the
    loss by the returned mask.
    """
    eqs = []
    all_bits = []
    snrs = np.empty(cfg.batch)
    for s in range(cfg.batch):
        bits = draw_bit_grid(link, rng)
        tx = transmit(link, bits)
        real = gen_channel(link.channel, link.dims, rng)
        snrs[s] = rng.uniform(cfg.snr_low_db, cfg.snr_high_db)
        sigma2 = calibrate_sigma2(real, snrs[s])
        rx = propagate(real, tx, sigma2, rng)
        eqs.append(np_frontend(link, rx, sigma2))
        all_bits.append(bits)
    mask = link.pattern.data_mask()[None, None, :, :, None]
    return TrainingBatch(pack_demap_input(eqs), np.stack(all_bits), mask, snrs)


@dataclass
class TrainResult:
    model: object
    loss_trace: list[tuple[int, float, float]] = field(default_factory=list)


def train(model, link: LinkConfig, cfg: TrainCfg) -> TrainResult:
    """Minimize the masked LLR cross-entropy; returns the loss trace.

    Records (iteration, loss_bits, batch mean SNR) every log_every iterations
    (always including the first), checkpoints on the configured schedule, and
    aborts with TrainingDiverged if the loss goes non-finite.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed])))
    adam_state = T.AdamState(model.params) if cfg.optimizer == "adam" else None
    result = TrainResult(model)
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)

    for it in range(1, cfg.iterations + 1):
        batch = gen_training_batch(link, cfg, rng)
        llr = model.forward(batch.inputs.xhat_ri, batch.inputs.r_x, train=True)
        llr_uf = T.transpose(llr, (0, 3, 1, 2, 4))  # user-first to match bits
        loss = T.bce_from_llr(llr_uf, batch.bits, batch.mask)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise TrainingDiverged(it, cfg.lr)
        model.params.zero_grad()
        loss.backward()
        if cfg.optimizer == "adam":
            T.adam_step(model.params, adam_state, cfg.lr)
        else:
            T.sgd_step(model.params, cfg.lr)
        if it == 1 or it % cfg.log_every == 0:
            result.loss_trace.append((it, loss_val, float(batch.snr_db.mean())))
        if cfg.out_dir and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            model.save(os.path.join(cfg.out_dir, f"{it}.ckpt"))
    return result


def bce_bits(llr: np.ndarray, bits: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Numpy BCE in bits per transmitted bit (no graph); same conventions as
    the differentiable loss."""
    z = np.where(bits == 0, llr, -llr)
    per_bit = np.logaddexp(0.0, -z) / _LN2
    if mask is None:
        return float(per_bit.mean())
    maskf = np.broadcast_to(mask, llr.shape).astype(np.float64)
    return float((per_bit * maskf).sum() / maskf.sum())


def rate_estimate(llr: np.ndarray, bits: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Achievable-rate estimate in bits per channel bit: 1 - BCE.

    Negative values are possible for a demapper worse than a coin flip.
    """
    return 1.0 - bce_bits(llr, bits, mask)


def write_loss_trace(trace: list[tuple[int, float, float]], path: str) -> None:
    with open(path, "w") as f:
        f.write("iteration,loss_bits,snr_mean_db\n")
        for it, loss, snr in trace:
            f.write(f"{it},{loss!r},{snr!r}\n")
