"""Detection accuracy as the number of breaks grows at fixed 3-sigma size.

Builds custom layouts with 2, 4, ..., 12 breaks (at most two per unit,
spaced at least three periods apart) and scores both methods per count.

Usage:
    python scripts/vary_break_count.py --out metrics_by_count.csv [--reps 10]
"""

from __future__ import annotations

import argparse
from dataclasses import replace

import numpy as np

from bisam.alasso import AlassoConfig
from bisam.dataio import write_metrics_csv
from bisam.sampler import PriorConfig, SamplerConfig
from bisam.simlab import MIN_BREAK_SPACING, SimDesign, StudyConfig, _spaced_starts, report_rows, run_study


def layout_with_count(n_breaks: int, n_units: int, n_periods: int, size: float,
                      rng: np.random.Generator) -> list[tuple[int, int, float]]:
    units = list(rng.permutation(n_units) + 1)
    per_unit = {}
    for k in range(n_breaks):
        u = units[k % n_units]
        per_unit[u] = per_unit.get(u, 0) + 1
        if per_unit[u] > 2:
            raise ValueError("too many breaks for the unit count")
    breaks = []
    for u, k in per_unit.items():
        for s in _spaced_starts(rng, k, n_periods, MIN_BREAK_SPACING):
            breaks.append((int(u), s, size))
    return breaks


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=str, default="metrics_by_count.csv")
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=float, default=3.0)
    args = ap.parse_args()

    cfg = StudyConfig(
        prior=PriorConfig(),
        sampler=SamplerConfig(n_burn=500, n_draw=1500, seed=0, grid_points=160),
        alasso=AlassoConfig(),
    )
    rows = []
    rng = np.random.default_rng(args.seed)
    for count in (2, 4, 6, 8, 10, 12):
        layout = layout_with_count(count, 10, 30, args.size, rng)
        design = SimDesign(layout=layout, n_reps=args.reps, seed=args.seed + count)
        results = run_study(design, [args.size], ["bisam", "alasso"], cfg)
        rows += report_rows(results, f"count{count}")
        print(f"{count} breaks done")
    write_metrics_csv(rows, args.out, meta={"axis": "break count", "size": args.size})
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
