"""Command line interface.

Subcommands: ``train <config>``, ``bench-solver``, ``profile-batch`` and
``lqr <system> <config>``. Output lands under --out, the EGN_OUT_DIR
environment variable, or ./runs, in that order. Failures print a single
machine-readable JSON line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _out_dir(args) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(os.environ.get("EGN_OUT_DIR", "runs"))


def _int_list(raw: str):
    return [int(v) for v in raw.split(",") if v.strip()]


def _str_list(raw: str):
    return [v.strip() for v in raw.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egn",
        description="Exact Gauss-Newton optimization toolkit benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="seeded training sweep from a config file")
    p_train.add_argument("config", help="path to the experiment config")
    p_train.add_argument("--out", default=None, help="output directory")

    p_bench = sub.add_parser("bench-solver", help="microbenchmark the direction solvers")
    p_bench.add_argument("--d", default="1000,10000,100000", help="parameter counts")
    p_bench.add_argument("--b", default="32", help="batch sizes")
    p_bench.add_argument("--c", default="10", help="output counts")
    p_bench.add_argument("--solvers", default="egn,smw", help="egn,smw,qr,dense,cg:K")
    p_bench.add_argument("--repeats", type=int, default=1000)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--lam", type=float, default=1.0)
    p_bench.add_argument("--out", default=None)

    p_prof = sub.add_parser("profile-batch", help="solve-vs-rest share per batch size")
    p_prof.add_argument("--models", default="1k,10k,100k", help="model presets")
    p_prof.add_argument("--batch-sizes", default="8,16,32,64,128,256,512")
    p_prof.add_argument("--repeats", type=int, default=100)
    p_prof.add_argument("--seed", type=int, default=0)
    p_prof.add_argument("--out", default=None)

    p_lqr = sub.add_parser("lqr", help="policy iteration against the Riccati oracle")
    p_lqr.add_argument("system", help="builtin name (scalar, synthetic4, synthetic4noisy) or a system file")
    p_lqr.add_argument("config", help="path to the experiment config")
    p_lqr.add_argument("--out", default=None)

    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # imports deferred so --help stays fast
    from egn import bench
    from egn.config import load_config

    if args.command == "train":
        out = bench.cmd_train(load_config(args.config), _out_dir(args))
        print(f"wrote {out}")
    elif args.command == "bench-solver":
        out_path = _out_dir(args) / "bench_solver.csv"
        bench.cmd_bench_solver(
            _int_list(args.d),
            _int_list(args.b),
            _int_list(args.c),
            _str_list(args.solvers),
            repeats=args.repeats,
            seed=args.seed,
            out_path=out_path,
            lam=args.lam,
        )
        print(f"wrote {out_path}")
    elif args.command == "profile-batch":
        out_path = _out_dir(args) / "profile_batch.csv"
        bench.cmd_profile_batch(
            _str_list(args.models),
            _int_list(args.batch_sizes),
            repeats=args.repeats,
            seed=args.seed,
            out_path=out_path,
        )
        print(f"wrote {out_path}")
    elif args.command == "lqr":
        out = bench.cmd_lqr(args.system, load_config(args.config), _out_dir(args))
        print(f"wrote {out}")
    return 0


def main() -> int:
    try:
        return run()
    except Exception as e:  # noqa: BLE001 - single reporting point for the CLI
        line = json.dumps({"error": type(e).__name__, "message": str(e)})
        print(line, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
