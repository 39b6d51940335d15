"""Command-line surface for the full pipeline.

Commands: gen-data, train, eval, oracle, gradcheck, ablate. Every
command is driven by a config (a built-in preset name or a file path)
plus explicit flags, and is deterministic given its flags and seeds.

Exit codes: 0 ok, 2 config/usage error, 3 I/O error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import training
from .channel import generate_dataset, read_dataset
from .config import PRESETS, resolve_config
from .errors import ConfigError, DataIOError, NumericalError
from .model import (
    SSNetWeights,
    forward,
    load_checkpoint,
    make_mask,
    masked_loss,
)
from .numerics import RngStream, grad_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def _parse_float_list(text: str, flag: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as e:
        raise ConfigError(f"{flag} expects a comma-separated number list: {e}") from e


def _parse_snr_list(text: str) -> tuple:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        out.append(None if item == "none" else float(item))
    if not out:
        raise ConfigError("--snr list is empty")
    return tuple(out)


def _fmt_db(x: float) -> str:
    return "-inf" if math.isinf(x) else f"{x:8.2f}"


def _lin_to_db(lin: float) -> float:
    return 10.0 * math.log10(lin) if lin > 0 else float("-inf")


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args.config)
    count = args.count if args.count is not None else cfg.count
    if count < 1:
        raise ConfigError(f"--count must be >= 1, got {count}")
    model = args.model or cfg.channel_model
    seed = args.seed if args.seed is not None else cfg.data_seed
    dataset = generate_dataset(
        cfg.grid, model, cfg.m_antennas, cfg.delta2, count, seed, path=args.out
    )
    h = dataset.header
    print(f"wrote {args.out}")
    print(
        f"  grid={h.grid.tag} model={h.model} m_antennas={h.m_antennas} "
        f"delta2={h.delta2:g} count={h.count} dtype={h.dtype} seed={h.seed}"
    )
    print(f"  bytes={os.path.getsize(args.out)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args.config)
    plan = cfg.train_plan(dataset_path=args.data, out_dir=args.out_dir)
    if args.resume:
        plan.resume_from = args.resume
    result = training.train(plan)
    last = result.loss_rows[-1] if result.loss_rows else None
    print(f"trained {plan.epochs} epochs -> {result.final_path}")
    if last:
        print(
            f"  final train loss {last[2]:.6f}, held-out NMSE {_fmt_db(last[4])} dB "
            f"(best {_fmt_db(_lin_to_db(result.best_holdout_linear))} dB)"
        )
    print(f"  best checkpoint: {result.best_path}")
    print(f"  loss curve: {os.path.join(plan.out_dir, 'loss_curve.csv')}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _, weights = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.data)
    pcts = _parse_float_list(args.observed, "--observed")
    for p in pcts:
        if not 0.0 < p < 100.0:
            raise ConfigError(f"--observed percentages must be in (0, 100), got {p:g}")
    snrs = _parse_snr_list(args.snr)
    rows = training.evaluate(weights, dataset, pcts, snrs, args.seed)
    training.write_metrics_csv(args.out, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    for r in rows:
        snr_s = "none" if r.snr_db is None else f"{r.snr_db:g} dB"
        print(
            f"  obs {r.observed_pct:5.1f}%  snr {snr_s:>7}  "
            f"NMSE {_fmt_db(r.nmse_db)} dB  ({r.ms_per_sample:.2f} ms/sample)"
        )
    if args.crosscheck:
        print("LMMSE oracle vs analytic floor (matched conditions):")
        oracle_rows = training.evaluate_oracle("lmmse", dataset, pcts, snrs, args.seed)
        floors = training.analytic_floor_table(dataset, pcts, snrs, args.seed)
        for r in oracle_rows:
            floor_db = 10 * math.log10(floors[(r.observed_pct, r.snr_db)])
            snr_s = "none" if r.snr_db is None else f"{r.snr_db:g} dB"
            print(
                f"  obs {r.observed_pct:5.1f}%  snr {snr_s:>7}  "
                f"mc {_fmt_db(r.nmse_db)} dB  analytic {_fmt_db(floor_db)} dB  "
                f"delta {r.nmse_db - floor_db:+.3f} dB"
            )
    return EXIT_OK


def cmd_oracle(args) -> int:
    dataset = read_dataset(args.data)
    pcts = _parse_float_list(args.observed, "--observed")
    snrs = _parse_snr_list(args.snr)
    rows = training.evaluate_oracle(args.method, dataset, pcts, snrs, args.seed)
    floors = (
        training.analytic_floor_table(dataset, pcts, snrs, args.seed)
        if args.method == "lmmse"
        else None
    )
    for r in rows:
        snr_s = "none" if r.snr_db is None else f"{r.snr_db:g} dB"
        line = (
            f"  {r.model}  obs {r.observed_pct:5.1f}%  snr {snr_s:>7}  "
            f"NMSE {_fmt_db(r.nmse_db)} dB"
        )
        if floors is not None:
            floor_db = 10 * math.log10(floors[(r.observed_pct, r.snr_db)])
            line += f"  analytic {_fmt_db(floor_db)} dB  delta {r.nmse_db - floor_db:+.3f} dB"
        print(line)
    if args.out:
        training.write_metrics_csv(args.out, rows)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = resolve_config(args.config)
    net = cfg.net_config()
    if net.dropout != 0.0:
        raise ConfigError("gradcheck needs a dropout-free config (use the tiny preset)")
    dataset = generate_dataset(
        cfg.grid, cfg.channel_model, cfg.m_antennas, cfg.delta2, 1, cfg.data_seed
    )
    sample = dataset.sample(0)
    mask = make_mask(cfg.grid.n_ports, cfg.mask_ratio, RngStream(cfg.eval_seed, "gradcheck-mask"))
    weights = SSNetWeights.init(net, RngStream(cfg.train_seed, "train").derive("init"))

    def loss_fn():
        return masked_loss(forward(sample.data, mask, weights, net), sample.data, mask)

    report = grad_check(
        loss_fn,
        weights.parameters(),
        eps=args.eps,
        max_coords_per_param=args.coords,
        rng=RngStream(cfg.eval_seed, "gradcheck-coords"),
    )
    print(report)
    if report.max_rel_error >= args.tolerance:
        print(f"FAIL: max relative error {report.max_rel_error:.3e} >= {args.tolerance:g}")
        return EXIT_NUMERICAL
    print(f"OK: max relative error {report.max_rel_error:.3e} < {args.tolerance:g}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_config(args.config)
    plan = cfg.train_plan(dataset_path=args.data, out_dir=args.out_dir)
    out = training.ablate(
        plan,
        observed_pcts=cfg.eval_observed_pct,
        snr_list=cfg.eval_snr_db,
        eval_seed=cfg.eval_seed,
    )
    n_moe = out["moe"].weights.n_values()
    n_nomoe = out["nomoe"].weights.n_values()
    print(f"parameter values: moe={n_moe} nomoe={n_nomoe}")
    for (pct, snr), delta in out["deltas"].items():
        snr_s = "none" if snr is None else f"{snr:g} dB"
        print(f"  obs {pct:5.1f}%  snr {snr_s:>7}  moe-vs-ffn delta {delta:+.2f} dB")
    print(f"wrote {os.path.join(args.out_dir, 'ablation.csv')}")
    print(f"wrote {os.path.join(args.out_dir, 'ablation_delta.csv')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssnet",
        description="Fluid-antenna CSI extrapolation: data generation, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a channel dataset file")
    p.add_argument("--config", required=True, help=f"preset {sorted(PRESETS)} or config path")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--count", type=int, default=None, help="override sample count")
    p.add_argument("--model", choices=("clarke", "bessel"), default=None, help="override correlation model")
    p.add_argument("--seed", type=int, default=None, help="override dataset seed")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="dataset path")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", default="", help="checkpoint to continue from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="sweep a checkpoint over observed %% and SNR")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--observed", default="5,10,15,20,25,50", help="comma list of observed %%")
    p.add_argument("--snr", default="none", help="comma list of SNR dB values or 'none'")
    p.add_argument("--seed", type=int, default=99, help="eval seed (masks and noise)")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--crosscheck", action="store_true", help="also run the LMMSE oracle and print its delta vs the analytic floor")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("oracle", help="run the LMMSE or nearest-neighbor oracle")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("lmmse", "nn"), required=True)
    p.add_argument("--observed", default="5,10,15,20,25,50")
    p.add_argument("--snr", default="none")
    p.add_argument("--seed", type=int, default=99)
    p.add_argument("--out", default="", help="optional metrics CSV path")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    p.add_argument("--config", default="tiny")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=24, help="coordinates probed per parameter")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train MoE vs no-MoE variants and compare")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"invalid arguments: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataIOError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
