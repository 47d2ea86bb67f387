"""Command-line front end.

Exit codes: 0 on success, 2 for configuration/input errors, 3 for numerical
failures (divergence, degenerate stencils, non-convergence).
"""

import argparse
import os
import sys

import numpy as np

from . import analysis, harness
from .config import parse_config
from .errors import ConfigError, NumericalError


def _add_run(sub):
    p = sub.add_parser("run", help="run a case from a TOML config")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_run)


def _cmd_run(args):
    cfg = parse_config(args.config)
    rep = harness.run_case(cfg)
    print(f"case={rep.case} scheme={rep.scheme} steps={rep.steps}")
    for key in sorted(rep.metrics):
        print(f"  {key} = {rep.metrics[key]:.6g}")
    if rep.strouhal is not None:
        print(f"  strouhal = {rep.strouhal:.4f}")
    for key in sorted(rep.counters):
        print(f"  {key} = {rep.counters[key]}")
    print(f"wrote {os.path.join(cfg.output_dir, 'report.csv')}")
    return 0


def _add_analyze_ratio(sub):
    p = sub.add_parser("analyze-ratio",
                       help="force-ratio profile of a straight boundary")
    p.add_argument("--alpha", type=float, default=2.0 / 3.0)
    p.add_argument("--basis", default="linear", choices=["constant", "linear"])
    p.add_argument("--y0-steps", type=int, default=16)
    p.add_argument("--out", default="ratio_profile.csv")
    p.set_defaults(fn=_cmd_analyze_ratio)


def _cmd_analyze_ratio(args):
    prof = analysis.ratio_profile(alpha=args.alpha, basis=args.basis,
                                  y0_steps=args.y0_steps)
    analysis.write_ratio_profile_csv(prof, args.out)
    print(f"alpha={args.alpha:g} basis={args.basis}")
    print(f"  ratio min={prof.ratio.min():.6f} max={prof.ratio.max():.6f} "
          f"delta={prof.delta:.6f}")
    print(f"wrote {args.out}")
    return 0


def _add_sweep(sub):
    p = sub.add_parser("sweep-alpha",
                       help="ratio-variation sweep over the weight scale")
    p.add_argument("--min", type=float, default=0.4)
    p.add_argument("--max", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--basis", default="linear", choices=["constant", "linear"])
    p.add_argument("--out", default="alpha_sweep.csv")
    p.set_defaults(fn=_cmd_sweep)


def _cmd_sweep(args):
    if not (0 < args.min < args.max):
        raise ConfigError("need 0 < min < max for the alpha sweep")
    if args.steps < 2:
        raise ConfigError("sweep needs at least 2 steps")
    alphas = np.linspace(args.min, args.max, args.steps)
    sweep = analysis.delta_ratio_sweep(alphas, basis=args.basis)
    analysis.write_alpha_sweep_csv(sweep, args.out)
    print(f"delta range [{sweep.delta.min():.6f}, {sweep.delta.max():.6f}], "
          f"flattest alpha = {sweep.argmin_alpha:.4f}")
    print(f"wrote {args.out}")
    return 0


def _add_histogram(sub):
    p = sub.add_parser("histogram",
                       help="force-ratio histogram from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--out", default="ratio_histogram.csv")
    p.set_defaults(fn=_cmd_histogram)


def _cmd_histogram(args):
    hist = harness.histogram_from_checkpoint(args.checkpoint, bins=args.bins)
    analysis.write_histogram_csv(hist, args.out)
    print(f"peak={hist.peak:.4f} frac_within_{hist.window:.0%}="
          f"{hist.frac_within:.3f} single_peaked={hist.single_peaked()}")
    print(f"counted {hist.n_counted} markers, excluded {hist.n_excluded}")
    print(f"wrote {args.out}")
    return 0


def _add_convergence(sub):
    p = sub.add_parser("convergence",
                       help="residual-vs-h study from a config template")
    p.add_argument("config")
    p.add_argument("--grids", type=float, nargs="+", required=True,
                   metavar="H", help="grid spacings (need at least 3)")
    p.add_argument("--schemes", nargs="+", default=["corrected", "baseline"])
    p.add_argument("--out", default="convergence.csv")
    p.set_defaults(fn=_cmd_convergence)


def _cmd_convergence(args):
    cfg = parse_config(args.config)
    study = harness.convergence_study(cfg, args.grids, tuple(args.schemes))
    study.write_csv(args.out)
    for s, slope in study.slopes.items():
        print(f"{s}: slope = {slope:.3f}")
    print(f"wrote {args.out}")
    return 0


def _add_bench(sub):
    p = sub.add_parser("bench", help="per-step cost comparison of schemes")
    p.add_argument("config")
    p.add_argument("--schemes", nargs="+",
                   default=["baseline", "corrected", "hybrid:2",
                            "iterative:10"])
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(fn=_cmd_bench)


def _cmd_bench(args):
    cfg = parse_config(args.config)
    rows = harness.scheme_benchmark(cfg, args.schemes)
    harness.write_benchmark_csv(rows, args.out)
    for r in rows:
        print(f"{r['scheme']:>14}: {1e3 * r['median_step']:8.3f} ms/step "
              f"({r['relative']:.2f}x)  res_l1={r['res_l1_mean']:.3e}")
    print(f"wrote {args.out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="mlsibm",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for add in (_add_run, _add_analyze_ratio, _add_sweep, _add_histogram,
                _add_convergence, _add_bench):
        add(sub)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
