import argparse
import json
import logging
import os
import sys

from dotenv import load_dotenv

load_dotenv()

from src.tools.commands import (  # noqa: E402
    estimate_shift,
    fit_density,
    hellinger_rate_study,
    plot_summary,
    simulate,
)


def _int_list(value: str):
    return [int(v) for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcshift",
        description="Log-concave one-step estimation of a two-sample location shift",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the log-concave MLE of one sample")
    fit.add_argument("--input", required=True, help="file with one observation per line")
    fit.add_argument("--smooth", action="store_true", help="also compute the smoothing bandwidth")

    estimate = sub.add_parser("estimate", help="estimate the shift between two samples")
    estimate.add_argument("--x", required=True, help="X sample file")
    estimate.add_argument("--y", required=True, help="Y sample file")
    estimate.add_argument("--eta", type=float, default=0.0, help="truncation level in [0, 0.5)")
    estimate.add_argument("--level", type=float, default=0.95, help="confidence level")

    sim = sub.add_parser("simulate", help="run the Monte Carlo study and write a CSV")
    sim.add_argument("--config", help="key = value experiment file")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--reps", type=int, help="replications per scheme and size")
    sim.add_argument("--out", help="CSV output path")
    sim.add_argument("--workers", type=int)

    plot = sub.add_parser("plot", help="render SVG figures from a summary CSV")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--out-dir", required=True)
    plot.add_argument("--level", type=float, default=0.95, help="nominal coverage reference")

    rate = sub.add_parser("rate", help="Hellinger distance of the pooled fit against pooled size")
    rate.add_argument("--scheme", default="gaussian")
    rate.add_argument("--sizes", type=_int_list, default=[100, 400, 1600])
    rate.add_argument("--reps", type=int, default=50)
    rate.add_argument("--seed", type=int)
    return parser


def log_level() -> str:
    """Level named by LCSHIFT_LOG_LEVEL; unknown names fall back to WARNING."""
    level = os.getenv("LCSHIFT_LOG_LEVEL", "WARNING").strip().upper()
    # getLevelNamesMapping() is Python 3.11+; it returns a copy of _nameToLevel.
    names = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))()
    if level not in names:
        print(f"warning: unknown LCSHIFT_LOG_LEVEL {level!r}, using WARNING", file=sys.stderr)
        return "WARNING"
    return level


def main(argv=None) -> int:
    logging.basicConfig(
        level=log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)

    if args.command == "fit":
        result = fit_density(args.input, smooth=args.smooth)
    elif args.command == "estimate":
        result = estimate_shift(args.x, args.y, eta=args.eta, level=args.level)
    elif args.command == "simulate":
        result = simulate(args.config, seed=args.seed, replications=args.reps,
                          output_path=args.out, workers=args.workers)
    elif args.command == "plot":
        result = plot_summary(args.csv, args.out_dir, nominal_level=args.level)
    else:
        result = hellinger_rate_study(args.scheme, args.sizes, args.reps, seed=args.seed)

    if not result["success"]:
        print(f"error: {result['error']}", file=sys.stderr)
        return result["exit_code"]

    if args.command == "estimate":
        payload = result["estimate"]
    else:
        payload = {k: v for k, v in result.items() if k not in ("success", "exit_code")}
    print(json.dumps(payload, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
