"""Runtime, accuracy and final bond dimension against a relative tolerance.

Adaptive SRC (with and without the final rounding pass) against zip-up,
density matrix, fitting and contract-then-compress.
"""

import argparse

from srcmpo.bench import BenchConfig, emit_plotdata, run_bench, summarize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--bond", type=int, default=8)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="fig3")
    args = ap.parse_args()
    cfg = BenchConfig(
        n=args.n, d=2, chi=args.bond, bond_D=args.bond, alpha=args.alpha,
        methods=("src", "src-plain", "zipup", "density", "ctc", "fitting"),
        tols=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-8),
        trials=args.trials, seed=args.seed, output_path=f"{args.out}.csv",
    )
    records = run_bench(cfg)
    emit_plotdata(records, f"{args.out}_series")
    for row in summarize(records):
        print(f"{row['method']:>9} tol={row['param']:<7g} err={row['rel_error_mean']:.3e} "
              f"bond={row['max_bond_mean']:.1f} time={row['wall_time_s_mean']:.3f}s")


if __name__ == "__main__":
    main()
