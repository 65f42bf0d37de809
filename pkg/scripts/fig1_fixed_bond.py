"""Accuracy and runtime against output bond dimension on the alpha=-0.5
random ensemble.

Desk scale by default (n=40, D=chi=20).  ``--full`` runs n=100, D=chi=50,
which needs a large-memory machine for the contract-then-compress reference.
"""

import argparse

from srcmpo.bench import BenchConfig, emit_plotdata, run_bench, summarize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="fig1")
    args = ap.parse_args()
    if args.full:
        n, bond, chi_bars = 100, 50, tuple(range(10, 81, 10))
    else:
        n, bond, chi_bars = 40, 20, (5, 10, 15, 20, 25, 30)
    cfg = BenchConfig(
        n=n, d=2, chi=bond, bond_D=bond, alpha=-0.5,
        methods=("src", "src-plain", "rctc", "zipup", "density", "ctc", "fitting"),
        chi_bars=chi_bars, trials=args.trials, seed=args.seed,
        output_path=f"{args.out}.csv",
    )
    records = run_bench(cfg)
    emit_plotdata(records, f"{args.out}_series")
    for row in summarize(records):
        print(f"{row['method']:>9} chi_bar={row['param']:<3} err={row['rel_error_mean']:.3e} "
              f"time={row['wall_time_s_mean']:.3f}s")


if __name__ == "__main__":
    main()
