"""Evaluation harness: Monte Carlo BER trials over the four receivers,
sweep aggregation, CSV reporting, and the sectioned config file.

All receivers of a trial consume the identical (bits, channel, noise) tuple
for a given seed; only the receiver processing differs, so BER comparisons
are paired.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .channel import ChannelModelCfg, calibrate_sigma2, gen_channel
from .codec import LLR_CLIP, ParityCheckCode, ldpc_decode, ldpc_encode, make_regular_ldpc
from .errors import ConfigurationError
from .grid import GridDims, make_pilot_pattern
from .link import LinkConfig, genie_frontend, np_frontend, propagate, transmit
from .modem import qam_constellation
from .neuraldemap import CvTConfig, build_model, llr_user_first
from .rxchain import demap_grid
from .training import TrainCfg, pack_demap_input

RECEIVER_KINDS = (
    "perfect_csi_gaussian",
    "np_gaussian_baseline",
    "resnet_demapper",
    "cvt_demapper",
)
NEURAL_KINDS = ("resnet_demapper", "cvt_demapper")


@dataclass
class TrialCounts:
    n_bits: int = 0
    n_bit_errors: int = 0
    n_blocks: int = 0
    n_block_errors: int = 0

    def __iadd__(self, other):
        self.n_bits += other.n_bits
        self.n_bit_errors += other.n_bit_errors
        self.n_blocks += other.n_blocks
        self.n_block_errors += other.n_block_errors
        return self


@dataclass
class SweepResultRow:
    snr_db: float
    receiver: str
    n_bits: int
    n_bit_errors: int
    ber: float
    n_blocks: int
    n_block_errors: int
    coded: bool


def _data_re_list(link: LinkConfig) -> np.ndarray:
    """Data REs as (m, n) rows in a fixed (subcarrier-major) order."""
    return np.argwhere(link.pattern.data_mask())


def run_trial(
    link: LinkConfig,
    receiver: str,
    snr_db: float,
    seed: int,
    coded: bool,
    code: ParityCheckCode | None = None,
    decoder_iters: int = 50,
    model=None,
    trace: dict | None = None,
) -> TrialCounts:
    """One slot through one receiver; counts errors on data-RE payload bits.

    With coding, as many full codewords as fit per user are placed at the
    head of that user's data-bit stream (remaining positions carry random
    filler excluded from the counts) and errors are counted on information
    bits after decoding.
    """
    if receiver not in RECEIVER_KINDS:
        raise ConfigurationError(f"unknown receiver {receiver!r}")
    if receiver in NEURAL_KINDS and model is None:
        raise ConfigurationError(f"{receiver} requires a trained model")
    if coded and code is None:
        raise ConfigurationError("coded trials need an LDPC code")

    ss = np.random.SeedSequence([seed])
    rng_bits, rng_chan, rng_noise = (
        np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(3)
    )
    k_mod = link.bits_per_symbol
    n_u = link.n_u
    data_re = _data_re_list(link)
    n_data = data_re.shape[0]
    bits_per_user = n_data * k_mod

    bit_grid = rng_bits.integers(
        0, 2, size=(n_u, link.dims.n_f, link.dims.n_t, k_mod), dtype=np.uint8
    )
    if coded:
        n_codewords = bits_per_user // code.n
        if n_codewords == 0:
            raise ConfigurationError(
                f"grid carries {bits_per_user} bits per user, fewer than one n={code.n} codeword"
            )
        info = rng_bits.integers(0, 2, size=(n_u, n_codewords, code.k), dtype=np.uint8)
        codewords = ldpc_encode(code, info)
        data_bits = bit_grid[:, data_re[:, 0], data_re[:, 1], :].reshape(n_u, bits_per_user)
        data_bits[:, : n_codewords * code.n] = codewords.reshape(n_u, -1)
        bit_grid[:, data_re[:, 0], data_re[:, 1], :] = data_bits.reshape(n_u, n_data, k_mod)
    else:
        info = None
        n_codewords = 0

    tx = transmit(link, bit_grid)
    real = gen_channel(link.channel, link.dims, rng_chan)
    sigma2 = calibrate_sigma2(real, snr_db)
    rx = propagate(real, tx, sigma2, rng_noise)
    if trace is not None:
        trace.update(bits=bit_grid.copy(), h=real.h.copy(), rx=rx.copy(), sigma2=sigma2)

    if receiver == "perfect_csi_gaussian":
        eq = genie_frontend(real, rx, sigma2)
        llr = demap_grid(eq, link.const)
    elif receiver == "np_gaussian_baseline":
        eq = np_frontend(link, rx, sigma2)
        llr = demap_grid(eq, link.const)
    else:
        eq = np_frontend(link, rx, sigma2)
        inputs = pack_demap_input([eq], dtype=model.dtype)
        with T.no_grad():
            out = model.forward(inputs.xhat_ri, inputs.r_x, train=False)
        llr = np.clip(llr_user_first(out.data)[0].astype(np.float64), -LLR_CLIP, LLR_CLIP)

    llr_data = llr[:, data_re[:, 0], data_re[:, 1], :].reshape(n_u, bits_per_user)
    counts = TrialCounts()
    if coded:
        cw_llrs = llr_data[:, : n_codewords * code.n].reshape(n_u * n_codewords, code.n)
        decoded, _ = ldpc_decode(code, cw_llrs, max_iters=decoder_iters)
        ref = info.reshape(n_u * n_codewords, code.k)
        bit_errs = decoded != ref
        counts.n_bits = ref.size
        counts.n_bit_errors = int(bit_errs.sum())
        counts.n_blocks = n_u * n_codewords
        counts.n_block_errors = int(bit_errs.any(axis=1).sum())
    else:
        sent = bit_grid[:, data_re[:, 0], data_re[:, 1], :].reshape(n_u, bits_per_user)
        hard = (llr_data < 0).astype(np.uint8)
        counts.n_bits = sent.size
        counts.n_bit_errors = int((hard != sent).sum())
    return counts


def trial_seeds(master_seed: int, n_points: int, trials_per_point: int) -> np.ndarray:
    """Per-(snr, trial) seeds shared by all receivers (paired comparisons)."""
    words = np.random.SeedSequence([master_seed]).generate_state(
        n_points * trials_per_point, dtype=np.uint32
    )
    return words.reshape(n_points, trials_per_point)


def run_sweep(
    link: LinkConfig,
    receivers: list[str],
    snr_list_db: list[float],
    trials_per_point: int,
    seed: int,
    coded: bool = True,
    code: ParityCheckCode | None = None,
    models: dict | None = None,
    decoder_iters: int = 50,
) -> list[SweepResultRow]:
    """BER sweep; one aggregated row per (snr, receiver)."""
    models = models or {}
    for r in receivers:
        if r not in RECEIVER_KINDS:
            raise ConfigurationError(f"unknown receiver {r!r}")
        if r in NEURAL_KINDS and r not in models:
            raise ConfigurationError(f"receiver {r} listed but no model supplied")
    seeds = trial_seeds(seed, len(snr_list_db), trials_per_point)
    rows = []
    for si, snr_db in enumerate(snr_list_db):
        for receiver in receivers:
            total = TrialCounts()
            for t in range(trials_per_point):
                total += run_trial(
                    link,
                    receiver,
                    snr_db,
                    int(seeds[si, t]),
                    coded,
                    code=code,
                    decoder_iters=decoder_iters,
                    model=models.get(receiver),
                )
            rows.append(
                SweepResultRow(
                    snr_db=float(snr_db),
                    receiver=receiver,
                    n_bits=total.n_bits,
                    n_bit_errors=total.n_bit_errors,
                    ber=total.n_bit_errors / total.n_bits if total.n_bits else 0.0,
                    n_blocks=total.n_blocks,
                    n_block_errors=total.n_block_errors,
                    coded=coded,
                )
            )
    return rows


CSV_HEADER = "snr_db,receiver,n_bits,n_bit_errors,ber,n_blocks,n_block_errors,coded"


def write_sweep_csv(rows: list[SweepResultRow], path: str) -> None:
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for r in rows:
            f.write(
                f"{r.snr_db!r},{r.receiver},{r.n_bits},{r.n_bit_errors},"
                f"{r.ber!r},{r.n_blocks},{r.n_block_errors},{int(r.coded)}\n"
            )


def read_sweep_csv(path: str) -> list[SweepResultRow]:
    rows = []
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected sweep CSV header: {header}")
        for line in f:
            parts = line.strip().split(",")
            rows.append(
                SweepResultRow(
                    snr_db=float(parts[0]),
                    receiver=parts[1],
                    n_bits=int(parts[2]),
                    n_bit_errors=int(parts[3]),
                    ber=float(parts[4]),
                    n_blocks=int(parts[5]),
                    n_block_errors=int(parts[6]),
                    coded=bool(int(parts[7])),
                )
            )
    return rows


# -- sectioned key-value configuration ----------------------------------------

_KNOWN_SECTIONS = ("grid", "channel", "modem", "codec", "model", "train", "sweep")


def load_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigurationError(f"cannot read config file {path}")
    unknown = set(cp.sections()) - set(_KNOWN_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    return cp


def _get(cp, section, key, default, conv=str):
    if cp.has_option(section, key):
        return conv(cp.get(section, key))
    return default


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def link_from_config(cp: configparser.ConfigParser) -> LinkConfig:
    dims = GridDims(_get(cp, "grid", "n_f", 24, int), _get(cp, "grid", "n_t", 14, int))
    n_u = _get(cp, "channel", "n_u", 4, int)
    pattern = make_pilot_pattern(dims, n_u, _get(cp, "grid", "pilot_symbols", (2, 11), _ints))
    chan = ChannelModelCfg(
        n_r=_get(cp, "channel", "n_r", 8, int),
        n_u=n_u,
        rho_rx=_get(cp, "channel", "rho_rx", 0.4, float),
        ar_time=_get(cp, "channel", "ar_time", 0.99, float),
        n_taps=_get(cp, "channel", "n_taps", 4, int),
        tap_decay=_get(cp, "channel", "tap_decay", 0.5, float),
        cluster_mix=_get(cp, "channel", "cluster_mix", 0.0, float),
    )
    const = qam_constellation(_get(cp, "modem", "bits_per_symbol", 2, int))
    return LinkConfig(pattern, chan, const)


def codec_from_config(cp: configparser.ConfigParser) -> tuple[ParityCheckCode, int]:
    n = _get(cp, "codec", "block_length", 96, int)
    seed = _get(cp, "codec", "seed", 7, int)
    iters = _get(cp, "codec", "decoder_iters", 50, int)
    return make_regular_ldpc(n, seed), iters


def modelcfg_from_config(cp: configparser.ConfigParser) -> tuple[str, CvTConfig, int]:
    kind = _get(cp, "model", "kind", "cvt")
    if kind not in ("cvt", "resnet"):
        raise ConfigurationError(f"unknown model kind {kind!r}")
    cfg = CvTConfig(
        d_model=_get(cp, "model", "d_model", 64, int),
        d_key=_get(cp, "model", "d_key", 8, int),
        n_heads=_get(cp, "model", "n_heads", 8, int),
        n_blocks=_get(cp, "model", "n_blocks", 3 if kind == "cvt" else 5, int),
        bits_per_symbol=_get(cp, "modem", "bits_per_symbol", 2, int),
    )
    return kind, cfg, _get(cp, "model", "seed", 0, int)


def traincfg_from_config(cp: configparser.ConfigParser) -> TrainCfg:
    return TrainCfg(
        iterations=_get(cp, "train", "iterations", 10000, int),
        batch=_get(cp, "train", "batch", 2, int),
        lr=_get(cp, "train", "lr", 1e-3, float),
        optimizer=_get(cp, "train", "optimizer", "sgd"),
        snr_low_db=_get(cp, "train", "snr_low_db", 7.0, float),
        snr_high_db=_get(cp, "train", "snr_high_db", 34.0, float),
        seed=_get(cp, "train", "seed", 0, int),
        log_every=_get(cp, "train", "log_every", 100, int),
        checkpoint_every=_get(cp, "train", "checkpoint_every", 0, int),
    )


@dataclass
class SweepSpec:
    receivers: list[str]
    snr_list_db: list[float]
    trials_per_point: int
    coded: bool
    seed: int
    checkpoints: dict[str, str]


def sweepspec_from_config(cp: configparser.ConfigParser) -> SweepSpec:
    receivers = _get(
        cp, "sweep", "receivers", "perfect_csi_gaussian,np_gaussian_baseline"
    )
    if isinstance(receivers, str):
        receivers = [r.strip() for r in receivers.split(",") if r.strip()]
    checkpoints = {}
    if cp.has_option("sweep", "cvt_checkpoint"):
        checkpoints["cvt_demapper"] = cp.get("sweep", "cvt_checkpoint")
    if cp.has_option("sweep", "resnet_checkpoint"):
        checkpoints["resnet_demapper"] = cp.get("sweep", "resnet_checkpoint")
    return SweepSpec(
        receivers=receivers,
        snr_list_db=_get(cp, "sweep", "snr_db", [10.0, 16.0, 22.0, 28.0], _floats),
        trials_per_point=_get(cp, "sweep", "trials_per_point", 200, int),
        coded=_get(cp, "sweep", "coded", True, _bool),
        seed=_get(cp, "sweep", "seed", 0, int),
        checkpoints=checkpoints,
    )


def build_demapper_models(cp: configparser.ConfigParser, spec: SweepSpec, override_ckpt: str | None = None):
    """Instantiate and load the neural receivers named in a sweep spec."""
    kind, cfg, seed = modelcfg_from_config(cp)
    models = {}
    for receiver in spec.receivers:
        if receiver not in NEURAL_KINDS:
            continue
        want = "cvt" if receiver == "cvt_demapper" else "resnet"
        rcfg = cfg if want == kind else CvTConfig(
            d_model=cfg.d_model, d_key=cfg.d_key, n_heads=cfg.n_heads,
            n_blocks=3 if want == "cvt" else 5, bits_per_symbol=cfg.bits_per_symbol,
        )
        model = build_model(want, rcfg, seed=seed)
        ckpt = spec.checkpoints.get(receiver)
        if override_ckpt and want == kind:
            ckpt = override_ckpt
        if not ckpt:
            raise ConfigurationError(f"receiver {receiver} requires a checkpoint path")
        model.load(ckpt)
        models[receiver] = model
    return models
