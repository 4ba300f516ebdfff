"""Command-line front end: generate | demux | evaluate | score.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 data-contract
violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .dataset import generate_dataset
from .errors import ConfigError, ContractError
from .evaluate import (
    demux_dataset,
    evaluate_datasets,
    load_candidates,
    parse_score_weights,
    score_candidates,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CONTRACT = 4


def _resolve_seed(cli_seed, cfg_seed) -> int:
    """Precedence: --seed, then MUXGEL_SEED, then the config file."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get("MUXGEL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"MUXGEL_SEED={env!r} is not an integer") from exc
    return cfg_seed


def _cmd_generate(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args.seed, cfg.seed)
    manifest = generate_dataset(cfg, args.out, count=args.count, seed=seed,
                                jobs=args.jobs)
    n = len(manifest["samples"])
    rej = len(manifest["rejections"])
    print(f"generated {n} samples into {args.out} "
          f"(seed {manifest['seed']}, {rej} rejected draws)")
    return EXIT_OK


def _cmd_demux(args) -> int:
    descriptor = demux_dataset(args.in_dir, args.mode, args.out,
                               mask_source=args.mask, sigma=args.sigma,
                               iterations=args.iterations)
    print(f"reconstructed {len(descriptor['ids'])} samples "
          f"({args.mode}, {args.mask} mask) into {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    evaluation = evaluate_datasets(args.pred, args.truth,
                                   lpips_file=args.lpips_file,
                                   pseudo_lpips=args.pseudo_lpips)
    out = Path(args.out) if args.out else Path(args.pred) / "evaluation"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "evaluation.json", "w") as fh:
        json.dump(evaluation, fh, indent=2, sort_keys=True)
        fh.write("\n")
    from .report import render_evaluation_outputs

    render_evaluation_outputs(out, evaluation)
    agg = evaluation["aggregate"]
    if agg:
        print(f"evaluated {evaluation['count']} samples -> {out}")
        print(f"  tactile: rmse {agg['rmse_t']:.4f}  1-ssim {agg['one_minus_ssim_t']:.4f}  "
              f"psnr {agg['psnr_t']:.2f} dB")
        print(f"  vision : rmse {agg['rmse_v']:.4f}  1-ssim {agg['one_minus_ssim_v']:.4f}  "
              f"psnr {agg['psnr_v']:.2f} dB")
    else:
        print(f"evaluated 0 samples -> {out}")
    return EXIT_OK


def _cmd_score(args) -> int:
    weights = parse_score_weights(args.weights)
    rows = score_candidates(load_candidates(args.metrics), weights)
    header = f"{'rank':>4}  {'candidate':<16} {'score':>9}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(f"{row['rank']:>4}  {row['name']:<16} {row['score']:>9.4f}")
    if args.out:
        from .report import render_score_outputs

        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "scores.json", "w") as fh:
            json.dump({"weights": vars(weights), "ranking": rows}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
        render_score_outputs(out, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muxgel",
        description="Synthesize, reconstruct, and score spatially multiplexed "
                    "visuo-tactile samples.",
    )
    parser.add_argument("--version", action="version", version=f"muxgel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="materialize a deterministic dataset")
    gen.add_argument("config", help="muxgen/1 JSON configuration file")
    gen.add_argument("--out", required=True, help="output dataset directory")
    gen.add_argument("--count", type=int, default=None, help="override sample count")
    gen.add_argument("--seed", type=int, default=None, help="override global seed")
    gen.add_argument("--jobs", type=int, default=1, help="parallel workers")
    gen.set_defaults(func=_cmd_generate)

    dmx = sub.add_parser("demux", help="reconstruct vision/tactile from a dataset")
    dmx.add_argument("--in", dest="in_dir", required=True, help="dataset directory")
    dmx.add_argument("--mode", required=True, choices=("si", "di-abst", "di-rest"))
    dmx.add_argument("--mask", default="nominal", choices=("nominal", "provided"))
    dmx.add_argument("--out", required=True, help="reconstruction output directory")
    dmx.add_argument("--sigma", type=float, default=None,
                     help="inpaint kernel sigma in px (default: half a cell)")
    dmx.add_argument("--iterations", type=int, default=8, help="inpaint passes")
    dmx.set_defaults(func=_cmd_demux)

    ev = sub.add_parser("evaluate", help="score reconstructions against truth")
    ev.add_argument("--pred", required=True, help="reconstruction directory")
    ev.add_argument("--truth", required=True, help="dataset directory")
    ev.add_argument("--lpips-file", default=None,
                    help="JSON file of externally computed lpips values per id")
    ev.add_argument("--pseudo-lpips", action="store_true",
                    help="also report the built-in pyramid distance (distinct key)")
    ev.add_argument("--out", default=None, help="report directory")
    ev.set_defaults(func=_cmd_evaluate)

    sc = sub.add_parser("score", help="rank candidates by the selection score")
    sc.add_argument("--metrics", nargs="+", required=True,
                    help="metric JSON file(s); stems name the candidates")
    sc.add_argument("--weights", default=None,
                    help="'ts,tl,vs,vl' or a JSON file with those keys")
    sc.add_argument("--out", default=None, help="write ranked table + figure here")
    sc.set_defaults(func=_cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"muxgel: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"muxgel: data-contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"muxgel: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
