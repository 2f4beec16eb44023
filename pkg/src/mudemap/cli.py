"""Command-line entry point: train, sweep, gradcheck, oracle, info."""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ConfigurationError
from .gradcheck import full_suite
from .harness import (
    build_demapper_models,
    codec_from_config,
    link_from_config,
    load_config,
    modelcfg_from_config,
    run_sweep,
    sweepspec_from_config,
    traincfg_from_config,
    write_sweep_csv,
)
from .neuraldemap import build_model, model_card
from .oracles import run_oracle_suite
from .training import TrainCfg, train, write_loss_trace


def _cmd_train(args) -> int:
    cp = load_config(args.config)
    link = link_from_config(cp)
    kind, mcfg, mseed = modelcfg_from_config(cp)
    tcfg = traincfg_from_config(cp)
    if args.seed is not None:
        tcfg = TrainCfg(**{**tcfg.__dict__, "seed": args.seed})
    out_dir = args.out or "run"
    tcfg = TrainCfg(**{**tcfg.__dict__, "out_dir": out_dir})
    model = build_model(kind, mcfg, seed=mseed)
    print(f"training {kind} demapper: {model.num_params()} parameters, "
          f"{tcfg.iterations} iterations")
    result = train(model, link, tcfg)
    os.makedirs(out_dir, exist_ok=True)
    ckpt = os.path.join(out_dir, f"{tcfg.iterations}.ckpt")
    model.save(ckpt)
    write_loss_trace(result.loss_trace, os.path.join(out_dir, "loss_trace.csv"))
    with open(os.path.join(out_dir, "model_card.txt"), "w") as f:
        f.write(model_card(model))
    if result.loss_trace:
        print(f"final loss: {result.loss_trace[-1][1]:.4f} bits")
    print(f"checkpoint: {ckpt}")
    return 0


def _cmd_sweep(args) -> int:
    cp = load_config(args.config)
    link = link_from_config(cp)
    spec = sweepspec_from_config(cp)
    if args.seed is not None:
        spec.seed = args.seed
    code, decoder_iters = codec_from_config(cp) if spec.coded else (None, 50)
    models = build_demapper_models(cp, spec, override_ckpt=args.checkpoint)
    rows = run_sweep(
        link,
        spec.receivers,
        spec.snr_list_db,
        spec.trials_per_point,
        spec.seed,
        coded=spec.coded,
        code=code,
        models=models,
        decoder_iters=decoder_iters,
    )
    write_sweep_csv(rows, args.out)
    for r in rows:
        print(f"snr {r.snr_db:6.2f} dB  {r.receiver:24s}  ber {r.ber:.3e}  "
              f"({r.n_bit_errors}/{r.n_bits})")
    print(f"wrote {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    results = full_suite(seed=args.seed or 0, include_models=not args.ops_only)
    failed = 0
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"{status:4s} {r.name:24s} max rel err {r.max_rel_err:.3e}")
        failed += not r.ok
    return 1 if failed else 0


def _cmd_oracle(args) -> int:
    results = run_oracle_suite(seed=args.seed or 0)
    failed = 0
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"{status:4s} {r.name:32s} err {r.max_err:.3e} (tol {r.tol:g})")
        failed += not r.ok
    return 1 if failed else 0


def _cmd_info(args) -> int:
    cp = load_config(args.config)
    kind, mcfg, mseed = modelcfg_from_config(cp)
    model = build_model(kind, mcfg, seed=mseed)
    if args.checkpoint:
        model.load(args.checkpoint)
    print(model_card(model), end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mudemap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a demapper per the config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", default=None, help="run directory (default: run)")

    p_sweep = sub.add_parser("sweep", help="BER sweep over the configured receivers")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", required=True, help="output CSV path")
    p_sweep.add_argument("--checkpoint", default=None,
                         help="checkpoint for the [model] receiver, overriding the config")

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of all ops")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--ops-only", action="store_true",
                        help="skip the (slow) full-model checks")

    p_oracle = sub.add_parser("oracle", help="receiver-chain brute-force oracle suite")
    p_oracle.add_argument("--seed", type=int, default=0)

    p_info = sub.add_parser("info", help="print the model card for the configured model")
    p_info.add_argument("--config", required=True)
    p_info.add_argument("--checkpoint", default=None)

    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "sweep": _cmd_sweep,
        "gradcheck": _cmd_gradcheck,
        "oracle": _cmd_oracle,
        "info": _cmd_info,
    }
    try:
        return handlers[args.command](args)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
