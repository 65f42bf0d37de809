"""Command line: ``bench``, ``verify`` and ``convert``.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 acceptance
failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bench import METHOD_NAMES, BenchConfig, UsageError, emit_plotdata, parse_range, run_bench


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def build_parser():
    parser = argparse.ArgumentParser(prog="srcmpo", description="Compressed MPO-MPS products.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run methods on the synthetic ensemble")
    b.add_argument("--n", type=int, default=40)
    b.add_argument("--d", type=int, default=2)
    b.add_argument("--chi", type=int, default=20)
    b.add_argument("--D", dest="bond_D", type=int, default=20)
    b.add_argument("--alpha", type=float, default=-0.5)
    b.add_argument("--methods", default="src,zipup,ctc", help=f"comma list from {','.join(METHOD_NAMES)}")
    b.add_argument("--chi-bar", default=None, help="lo:hi:step (inclusive) or comma list")
    b.add_argument("--tol", default=None, help="comma list of relative tolerances")
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.add_argument("--output", default=None, help="record file (default bench.<format>)")
    b.add_argument("--reference", choices=("ctc", "exact"), default="ctc")
    b.add_argument("--max-sweeps", type=int, default=10)
    b.add_argument("--no-normalize", action="store_true", help="keep raw ensemble scale")
    b.add_argument("--input", default=None, help="use a stored pair <path>.mpo.tnc/<path>.mps.tnc")
    b.add_argument("--plotdata", default=None, help="directory for per-method series")
    b.add_argument("--quiet", action="store_true")

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", default=None, help="comma list of check names")

    c = sub.add_parser("convert", help="TNC1 <-> dense .npy")
    c.add_argument("source")
    c.add_argument("dest")
    c.add_argument("--d", type=int, default=2, help="local dimension for dense input")
    c.add_argument("--tol", type=float, default=1e-14, help="truncation for dense input")
    return parser


def _bench(args, parser):
    try:
        chi_bars = parse_range(args.chi_bar) if args.chi_bar else ()
        tols = _floats(args.tol) if args.tol else ()
        output = args.output or f"bench.{args.format}"
        config = BenchConfig(
            n=args.n,
            d=args.d,
            chi=args.chi,
            bond_D=args.bond_D,
            alpha=args.alpha,
            methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
            chi_bars=chi_bars,
            tols=tols,
            trials=args.trials,
            seed=args.seed,
            output_path=output,
            format=args.format,
            reference=args.reference,
            max_sweeps=args.max_sweeps,
            normalize=not args.no_normalize,
            input_pair=args.input,
        )
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))

    def show(rec):
        print(
            f"{rec.method:>9} param={rec.param:<8g} trial={rec.trial} "
            f"err={rec.rel_error:.3e} t={rec.wall_time_s:.3f}s bond={rec.max_bond}",
            flush=True,
        )

    records = run_bench(config, None if args.quiet else show)
    if args.plotdata:
        emit_plotdata(records, args.plotdata)
    print(f"wrote {len(records)} records to {config.output_path}")
    return 0


def _verify(args):
    from .acceptance import CHECKS, run_all

    names = None
    if args.only:
        names = set(args.only.split(","))
        known = {c.__name__ for c in CHECKS}
        unknown = names - known
        if unknown:
            print(f"unknown checks: {sorted(unknown)}; known: {sorted(known)}", file=sys.stderr)
            return 2
    results = run_all(names)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 3 if failed else 0


def _convert(args):
    from .io import deserialize, serialize
    from .mps import DenseCapError, Mps, from_dense, mpo_from_dense, to_dense, to_dense_matrix

    try:
        if args.source.endswith(".npy"):
            arr = np.load(args.source)
            if arr.ndim == 1:
                n = round(np.log(arr.size) / np.log(args.d))
                if args.d**n != arr.size:
                    print(f"length {arr.size} is not a power of {args.d}", file=sys.stderr)
                    return 2
                obj = from_dense(arr, [args.d] * n, tol=args.tol)
            elif arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
                n = round(np.log(arr.shape[0]) / np.log(args.d))
                if args.d**n != arr.shape[0]:
                    print(f"size {arr.shape[0]} is not a power of {args.d}", file=sys.stderr)
                    return 2
                obj = mpo_from_dense(arr, [args.d] * n, tol=args.tol)
            else:
                print("dense input must be a vector or a square matrix", file=sys.stderr)
                return 2
            serialize(obj, args.dest)
        else:
            obj = deserialize(args.source)
            dense = to_dense(obj) if isinstance(obj, Mps) else to_dense_matrix(obj)
            np.save(args.dest, dense)
    except DenseCapError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench":
        return _bench(args, parser)
    if args.command == "verify":
        return _verify(args)
    return _convert(args)


if __name__ == "__main__":
    sys.exit(main())
