"""Replication study across break sizes and layouts.

Reproduces the benchmark comparison between the Bayesian detector and the
adaptive-LASSO baseline over sparse and dense break environments. The
desk-scale default (20 replications per cell) finishes in well under an
hour; pass --reps 100 for the full-scale version.

Usage:
    python scripts/run_simulation_study.py --out-dir results/ [--reps 20]
    python scripts/run_simulation_study.py --quick   # tiny smoke variant
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from bisam.alasso import AlassoConfig
from bisam.dataio import write_metrics_csv
from bisam.sampler import PriorConfig, SamplerConfig
from bisam.simlab import SimDesign, StudyConfig, report_rows, run_study

SIZES = [1.0, 1.5, 2.0, 3.0, 6.0, 10.0]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=str, default="results")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true",
                    help="3 sizes, 3 reps, short chains (smoke run)")
    args = ap.parse_args()

    sizes = [2.0, 3.0, 6.0] if args.quick else SIZES
    reps = 3 if args.quick else args.reps
    sampler = SamplerConfig(
        n_burn=300 if args.quick else 500,
        n_draw=600 if args.quick else 1500,
        seed=0,
        grid_points=160,
    )
    cfg = StudyConfig(prior=PriorConfig(), sampler=sampler, alasso=AlassoConfig())

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_rows = []
    for layout in ("sparse", "dense"):
        design = SimDesign(layout=layout, n_reps=reps, seed=args.seed)
        t0 = time.perf_counter()
        results = run_study(design, sizes, ["bisam", "alasso"], cfg)
        print(f"{layout}: {time.perf_counter() - t0:.0f}s")
        all_rows += report_rows(results, layout)
    write_metrics_csv(all_rows, out_dir / "metrics.csv",
                      meta={"reps": reps, "sizes": sizes, "seed": args.seed})
    print(f"wrote {out_dir / 'metrics.csv'}")


if __name__ == "__main__":
    main()
