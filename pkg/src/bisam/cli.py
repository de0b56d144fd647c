"""Command-line surface: simulate, fit, alasso, calibrate-tau, score.

Every command is deterministic given its flags and seed; outputs carry a
format-version tag and reproduce byte for byte on identical reruns. Invalid
configuration exits with status 2, runtime failures with status 1, both
with a machine-readable error line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .alasso import AlassoConfig, alasso_detect
from .dataio import (
    FORMAT_VERSION,
    ingest_panel,
    save_draws,
    write_fitpath_csv,
    write_metrics_csv,
    write_pips_csv,
    write_report_json,
)
from .imom import calibrate_tau
from .inference import build_report
from .panel import BreakCandidate, build_design
from .sampler import PriorConfig, SamplerConfig, run_chain
from .simlab import METHODS, SimDesign, StudyConfig, report_rows, run_study, score

__all__ = ["cli_dispatch", "main", "RunConfig"]


@dataclass
class RunConfig:
    """Validated parameter set of one command invocation.

    Unknown keys are rejected; the version tag travels with every output
    written from this configuration.
    """

    command: str
    params: dict = field(default_factory=dict)
    format_version: str = FORMAT_VERSION

    ALLOWED: dict = None  # populated below

    def __post_init__(self) -> None:
        allowed = _ALLOWED_KEYS.get(self.command)
        if allowed is None:
            raise ValueError(f"unknown command {self.command!r}")
        unknown = set(self.params) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def as_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "command": self.command,
            "params": self.params,
        }


_PRIOR_KEYS = {"tau", "omega", "omega_a", "omega_b", "m0", "n0", "beta_prior_var", "eta", "tau_eps", "no_outliers"}
_SAMPLER_KEYS = {"burn", "draw", "thin", "seed", "grid_points"}
_FE_KEYS = {"no_unit_fe", "no_time_fe", "no_intercept"}

_ALLOWED_KEYS = {
    "simulate": {"layout", "sizes", "reps", "n_units", "n_periods", "sigma2", "methods", "out", "threshold", "strict_threshold"} | _PRIOR_KEYS | _SAMPLER_KEYS,
    "fit": {"input", "out_dir", "save_draws", "transform", "threshold", "strict_threshold", "config"} | _PRIOR_KEYS | _SAMPLER_KEYS | _FE_KEYS,
    "alasso": {"input", "out", "weight_power", "tol", "max_iter", "selection"} | _FE_KEYS,
    "calibrate-tau": {"p", "multiple"},
    "score": {"detected", "truth", "n_units", "n_periods", "out"},
}


def _add_prior_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=3.32, help="slab scale multiplier")
    p.add_argument("--omega", type=float, default=0.01, help="prior inclusion probability")
    p.add_argument("--omega-a", type=float, default=None, help="Beta hyperprior a (with --omega-b)")
    p.add_argument("--omega-b", type=float, default=None, help="Beta hyperprior b")
    p.add_argument("--m0", type=float, default=None, help="inverse-gamma shape (default: empirical Bayes)")
    p.add_argument("--n0", type=float, default=None, help="inverse-gamma rate (default: empirical Bayes)")
    p.add_argument("--beta-prior-var", type=float, default=None)
    p.add_argument("--eta", type=float, default=0.01, help="outlier prior probability")
    p.add_argument("--tau-eps", type=float, default=10.0, help="outlier scale multiplier")
    p.add_argument("--no-outliers", action="store_true", help="disable the outlier mixture")


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--burn", type=int, default=2000)
    p.add_argument("--draw", type=int, default=5000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=400)


def _add_fe_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-unit-fe", action="store_true")
    p.add_argument("--no-time-fe", action="store_true")
    p.add_argument("--no-intercept", action="store_true")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bisam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the replication study and write the metrics table")
    p.add_argument("--layout", choices=["sparse", "dense"], default="sparse")
    p.add_argument("--sizes", type=str, required=True, help="comma-separated break sizes in sigma units")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--n-units", type=int, default=10)
    p.add_argument("--n-periods", type=int, default=30)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--methods", type=str, default="bisam,alasso")
    p.add_argument("--out", type=str, default="metrics.csv")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--strict-threshold", action="store_true")
    _add_prior_flags(p)
    _add_sampler_flags(p)

    p = sub.add_parser("fit", help="fit the break model to a panel file and write reports")
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--out-dir", type=str, required=True)
    p.add_argument("--save-draws", action="store_true")
    p.add_argument("--transform", action="append", default=[], metavar="COL=OP[,OP]",
                   help="per-column transforms, e.g. y=log (repeatable)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--strict-threshold", action="store_true")
    p.add_argument("--config", type=str, default=None, help="JSON file with flag overrides")
    _add_prior_flags(p)
    _add_sampler_flags(p)
    _add_fe_flags(p)

    p = sub.add_parser("alasso", help="adaptive-LASSO baseline on a panel file")
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--weight-power", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--selection", choices=["bic", "cv"], default="bic")
    _add_fe_flags(p)

    p = sub.add_parser("calibrate-tau", help="slab scale with given prior mass inside the sigma band")
    p.add_argument("--p", type=float, required=True, help="target prior mass within the band")
    p.add_argument("--multiple", type=float, default=1.0, help="band half-width in sigma units")

    p = sub.add_parser("score", help="classification metrics from detected/truth break files")
    p.add_argument("--detected", type=str, required=True)
    p.add_argument("--truth", type=str, required=True)
    p.add_argument("--n-units", type=int, required=True)
    p.add_argument("--n-periods", type=int, required=True)
    p.add_argument("--out", type=str, default=None)
    return parser


def _prior_from_args(args: argparse.Namespace) -> PriorConfig:
    hyper = None
    if args.omega_a is not None or args.omega_b is not None:
        if args.omega_a is None or args.omega_b is None:
            raise ValueError("--omega-a and --omega-b must be given together")
        hyper = (args.omega_a, args.omega_b)
    return PriorConfig(
        tau=args.tau,
        omega=args.omega,
        omega_hyper=hyper,
        m0=args.m0,
        n0=args.n0,
        beta_prior_var=args.beta_prior_var,
        eta=args.eta,
        tau_eps=args.tau_eps,
        outliers_enabled=not args.no_outliers,
    )


def _sampler_from_args(args: argparse.Namespace) -> SamplerConfig:
    return SamplerConfig(
        n_burn=args.burn,
        n_draw=args.draw,
        thin=args.thin,
        seed=args.seed,
        grid_points=args.grid_points,
    )


def _parse_transforms(pairs: list[str]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for raw in pairs:
        if "=" not in raw:
            raise ValueError(f"transform must look like col=op[,op]: {raw!r}")
        col, ops = raw.split("=", 1)
        out.setdefault(col.strip(), []).extend(s.strip() for s in ops.split(",") if s.strip())
    return out


def _read_breaks_csv(path: str) -> list[BreakCandidate]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [ln for ln in lines if ln and not ln.startswith("#")]
    if not rows or rows[0].split(",")[:2] != ["unit", "start"]:
        raise ValueError(f"break file {path} must have a unit,start header")
    out = []
    for ln in rows[1:]:
        parts = ln.split(",")
        out.append(BreakCandidate(int(float(parts[0])), int(float(parts[1]))))
    return out


def _runconfig(args: argparse.Namespace, command: str) -> RunConfig:
    params = {k: v for k, v in vars(args).items() if k != "command"}
    return RunConfig(command=command, params=params)


def _cmd_calibrate_tau(args: argparse.Namespace) -> int:
    tau = calibrate_tau(args.p, args.multiple)
    print(f"{tau:.4f}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    sizes = [float(s) for s in args.sizes.split(",") if s.strip()]
    if not sizes:
        raise ValueError("--sizes must name at least one break size")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    design = SimDesign(
        n_units=args.n_units,
        n_periods=args.n_periods,
        sigma2=args.sigma2,
        layout=args.layout,
        n_reps=args.reps,
        seed=args.seed,
    )
    cfg = StudyConfig(
        prior=_prior_from_args(args),
        sampler=_sampler_from_args(args),
        alasso=AlassoConfig(),
        pip_threshold=args.threshold,
        strict_threshold=args.strict_threshold,
    )
    results = run_study(design, sizes, methods, cfg)
    rows = report_rows(results, args.layout)
    rc = _runconfig(args, "simulate")
    write_metrics_csv(rows, args.out, meta={"config": rc.as_dict()})
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    if args.config:
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(overrides, dict):
            raise ValueError("config file must hold a JSON object")
        known = {k for k in vars(args)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for k, v in overrides.items():
            setattr(args, k, v)
    rc = _runconfig(args, "fit")
    transforms = _parse_transforms(args.transform)
    panel = ingest_panel(
        args.input,
        transforms,
        include_unit_fe=not args.no_unit_fe,
        include_time_fe=not args.no_time_fe,
        include_intercept=not args.no_intercept,
    )
    prior = _prior_from_args(args)
    sampler = _sampler_from_args(args)
    draws = run_chain(panel, prior, sampler)
    design = build_design(panel)
    report = build_report(draws, design, args.threshold, strict=args.strict_threshold)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"config": rc.as_dict()}
    (out_dir / "config.json").write_text(
        json.dumps(rc.as_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    write_pips_csv(report, out_dir / "pips.csv", meta=meta)
    write_report_json(report, out_dir / "report.json", meta=meta)
    write_fitpath_csv(report, panel, out_dir / "fitpath.csv", meta=meta)
    if args.save_draws:
        save_draws(draws, out_dir / "draws.csv")
    return 0


def _cmd_alasso(args: argparse.Namespace) -> int:
    panel = ingest_panel(
        args.input,
        include_unit_fe=not args.no_unit_fe,
        include_time_fe=not args.no_time_fe,
        include_intercept=not args.no_intercept,
    )
    cfg = AlassoConfig(
        weight_power=args.weight_power,
        tol=args.tol,
        max_iter=args.max_iter,
        selection=args.selection,
    )
    design = build_design(panel)
    detected, _ = alasso_detect(panel, design, cfg)
    rc = _runconfig(args, "alasso")
    lines = ["# " + json.dumps({"format_version": FORMAT_VERSION, "kind": "detected", "config": rc.as_dict()}, sort_keys=True)]
    lines.append("unit,start")
    for cand in detected:
        lines.append(f"{panel.units[cand.unit - 1]},{panel.times[cand.start - 1]:g}"
                     if isinstance(panel.times[cand.start - 1], (int, float))
                     else f"{panel.units[cand.unit - 1]},{panel.times[cand.start - 1]}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    detected = _read_breaks_csv(args.detected)
    truth = _read_breaks_csv(args.truth)
    q = args.n_units * (args.n_periods - 3)
    row = score(detected, truth, q)
    rc = _runconfig(args, "score")
    lines = []
    for name, value in row.as_dict().items():
        lines.append(f"{name}={'' if value is None else f'{value:.6f}'}")
    print("\n".join(lines))
    if args.out:
        out_rows = [
            {"method": "scored", "layout": "file", "size": 0.0, "metric": k, "mean": v, "se": None}
            for k, v in row.as_dict().items()
        ]
        write_metrics_csv(out_rows, args.out, meta={"config": rc.as_dict()})
    return 0


_COMMANDS = {
    "calibrate-tau": _cmd_calibrate_tau,
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "alasso": _cmd_alasso,
    "score": _cmd_score,
}


def cli_dispatch(argv: list[str] | None = None) -> int:
    """Parse arguments, run the requested command, return the exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(json.dumps({"error": str(exc), "kind": "config"}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 1
        print(json.dumps({"error": str(exc), "kind": "runtime"}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch())
