"""Panel ingestion and persistence of draws, reports and plot-data files.

All delimited outputs are comma-separated, dot-decimal, UTF-8 with LF line
endings, carry a leading ``#`` header line with the format version, and are
reproducible byte for byte from (inputs, config, seed). Floats are written
with shortest round-trip precision so draw files reload exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .inference import WINDOW_WIDTHS, BreakReport
from .panel import BreakCandidate, PanelData
from .sampler import PosteriorDraws, PriorConfig, SamplerConfig

__all__ = [
    "FORMAT_VERSION",
    "ingest_panel",
    "serialize_panel",
    "save_draws",
    "load_draws",
    "write_metrics_csv",
    "write_pips_csv",
    "write_report_json",
    "write_fitpath_csv",
]

FORMAT_VERSION = "1"

TRANSFORMS = {
    "log": np.log,
    "square": np.square,
}


def _fmt(x) -> str:
    """Shortest exact decimal form of a float; integers stay integral."""
    if x is None:
        return ""
    f = float(x)
    if f != f:
        return "nan"
    if f == int(f) and abs(f) < 1e16:
        return str(int(f))
    return repr(f)


def _parse_number(raw: str, column: str, line_no: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValueError(
            f"non-numeric value {raw!r} in column {column!r} at line {line_no}"
        ) from None


def ingest_panel(
    path: str | Path,
    transforms: dict[str, list[str]] | None = None,
    *,
    include_unit_fe: bool = True,
    include_time_fe: bool = True,
    include_intercept: bool = True,
) -> PanelData:
    """Read a balanced panel from delimited text.

    The header must be ``unit,time,y`` followed by zero or more covariate
    columns. ``transforms`` maps a column name to a list of directives
    ("log", "square") applied elementwise in order. Units keep their file
    order of first appearance; times are sorted numerically. A missing
    (unit, time) cell or a non-numeric field is an error that names the
    offending cell or position.
    """
    transforms = transforms or {}
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty panel file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["unit", "time", "y"]:
            raise ValueError("panel header must start with unit,time,y")
        cov_names = header[3:]
        unknown = set(transforms) - set(header[2:])
        if unknown:
            raise ValueError(f"transform directives for unknown columns: {sorted(unknown)}")
        cells: dict[tuple[str, float], list[float]] = {}
        units: list[str] = []
        times: set[float] = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"wrong field count at line {line_no}")
            unit = row[0].strip()
            time = _parse_number(row[1].strip(), "time", line_no)
            if time == int(time):
                time = int(time)
            vals = [
                _parse_number(row[3 + k].strip(), cov_names[k], line_no)
                for k in range(len(cov_names))
            ]
            yval = _parse_number(row[2].strip(), "y", line_no)
            key = (unit, time)
            if key in cells:
                raise ValueError(f"duplicate cell (unit={unit}, time={_fmt(time)})")
            cells[key] = [yval] + vals
            if unit not in units:
                units.append(unit)
            times.add(time)

    time_list = sorted(times)
    n, t = len(units), len(time_list)
    y = np.empty((n, t))
    X = np.empty((n, t, len(cov_names)))
    for i, u in enumerate(units):
        for k, tm in enumerate(time_list):
            if (u, tm) not in cells:
                raise ValueError(f"missing cell (unit={u}, time={_fmt(tm)})")
            vals = cells[(u, tm)]
            y[i, k] = vals[0]
            X[i, k, :] = vals[1:]

    for col, directives in transforms.items():
        target = y if col == "y" else X[:, :, cov_names.index(col)]
        for directive in directives:
            if directive not in TRANSFORMS:
                raise ValueError(f"unknown transform {directive!r}")
            if directive == "log" and np.any(target <= 0):
                raise ValueError(f"log transform of non-positive values in column {col!r}")
            target[...] = TRANSFORMS[directive](target)

    return PanelData(
        units=units,
        times=time_list,
        y=y,
        X=X,
        include_unit_fe=include_unit_fe,
        include_time_fe=include_time_fe,
        include_intercept=include_intercept,
    )


def serialize_panel(panel: PanelData, path: str | Path, cov_names: list[str] | None = None) -> None:
    """Write a panel back to delimited text (round-trips through ingest)."""
    p = panel.n_covariates
    cov_names = cov_names or [f"x{k+1}" for k in range(p)]
    if len(cov_names) != p:
        raise ValueError("covariate name count mismatch")
    buf = io.StringIO()
    buf.write("unit,time,y" + ("," if p else "") + ",".join(cov_names) + "\n")
    for i, u in enumerate(panel.units):
        for k, tm in enumerate(panel.times):
            fields = [str(u), _fmt(tm), _fmt(panel.y[i, k])]
            fields += [_fmt(panel.X[i, k, j]) for j in range(p)]
            buf.write(",".join(fields) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# draw persistence


def save_draws(draws: PosteriorDraws, path: str | Path) -> None:
    """Store a posterior sample in columnar delimited text.

    The first line is a JSON header carrying the format version, seed,
    configuration and layout; the body has one row per recorded draw.
    Reloading reproduces every stored field exactly.
    """
    n, t = draws.n_units, draws.n_periods
    p = draws.beta.shape[1]
    q = draws.n_candidates
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "draws",
        "seed": draws.sampler.seed,
        "prior": asdict(draws.prior),
        "sampler": asdict(draws.sampler),
        "counters": draws.counters,
        "units": list(draws.units),
        "times": list(draws.times),
        "candidates": [[c.unit, c.start] for c in draws.candidates],
        "n_records": draws.n_records,
        "p_full": p,
    }
    cols = (
        ["omega"]
        + [f"beta_{k}" for k in range(p)]
        + [f"sigma2_{k}" for k in range(n)]
        + [f"gamma_{k}" for k in range(q)]
        + [f"delta_{k}" for k in range(q)]
        + [f"eps_{i}_{k}" for i in range(n) for k in range(t)]
    )
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    buf.write(",".join(cols) + "\n")
    for r in range(draws.n_records):
        fields = [repr(float(draws.omega[r]))]
        fields += [repr(float(v)) for v in draws.beta[r]]
        fields += [repr(float(v)) for v in draws.sigma2[r]]
        fields += [repr(float(v)) for v in draws.gamma[r]]
        fields += [str(int(v)) for v in draws.delta_gamma[r]]
        fields += [str(int(v)) for v in draws.delta_eps[r].reshape(-1)]
        buf.write(",".join(fields) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def load_draws(path: str | Path) -> PosteriorDraws:
    """Reload a draw file written by ``save_draws``.

    A wrong version tag, a truncated body or a malformed header raises
    "incompatible draw file".
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    try:
        if not lines or not lines[0].startswith("# "):
            raise ValueError
        header = json.loads(lines[0][2:])
        if header.get("format_version") != FORMAT_VERSION or header.get("kind") != "draws":
            raise ValueError
        n_records = int(header["n_records"])
        units = header["units"]
        times = header["times"]
        candidates = [BreakCandidate(u, s) for u, s in header["candidates"]]
        p = int(header["p_full"])
        n, t, q = len(units), len(times), len(candidates)
        body = lines[2 : 2 + n_records]
        if len(lines) < 2 or len(body) != n_records:
            raise ValueError
        beta = np.empty((n_records, p))
        gamma = np.empty((n_records, q))
        delta = np.empty((n_records, q), dtype=np.uint8)
        sigma2 = np.empty((n_records, n))
        delta_eps = np.empty((n_records, n, t), dtype=np.uint8)
        omega = np.empty(n_records)
        width = 1 + p + n + 2 * q + n * t
        for r, line in enumerate(body):
            vals = line.split(",")
            if len(vals) != width:
                raise ValueError
            pos = 0
            omega[r] = float(vals[pos]); pos += 1
            beta[r] = [float(v) for v in vals[pos : pos + p]]; pos += p
            sigma2[r] = [float(v) for v in vals[pos : pos + n]]; pos += n
            gamma[r] = [float(v) for v in vals[pos : pos + q]]; pos += q
            delta[r] = [int(v) for v in vals[pos : pos + q]]; pos += q
            delta_eps[r] = np.array(
                [int(v) for v in vals[pos : pos + n * t]], dtype=np.uint8
            ).reshape(n, t)
        prior = PriorConfig(**{
            k: tuple(v) if k == "omega_hyper" and v is not None else v
            for k, v in header["prior"].items()
        })
        sampler = SamplerConfig(**header["sampler"])
    except (ValueError, KeyError, TypeError, json.JSONDecodeError):
        raise ValueError("incompatible draw file") from None
    return PosteriorDraws(
        beta=beta,
        gamma=gamma,
        delta_gamma=delta,
        sigma2=sigma2,
        delta_eps=delta_eps,
        omega=omega,
        counters=dict(header["counters"]),
        candidates=candidates,
        units=units,
        times=times,
        prior=prior,
        sampler=sampler,
    )


# ---------------------------------------------------------------------------
# report and table writers


def _header_line(kind: str, meta: dict | None = None) -> str:
    payload = {"format_version": FORMAT_VERSION, "kind": kind}
    if meta:
        payload.update(meta)
    return "# " + json.dumps(payload, sort_keys=True) + "\n"


def write_metrics_csv(rows: list[dict], path: str | Path, meta: dict | None = None) -> None:
    """Long-format metrics table: method, layout, size, metric, mean, se."""
    buf = io.StringIO()
    buf.write(_header_line("metrics", meta))
    buf.write("method,layout,size,metric,mean,se\n")
    for row in rows:
        buf.write(
            ",".join(
                [
                    str(row["method"]),
                    str(row["layout"]),
                    _fmt(row["size"]),
                    str(row["metric"]),
                    _fmt(row["mean"]),
                    _fmt(row["se"]),
                ]
            )
            + "\n"
        )
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def write_pips_csv(report: BreakReport, path: str | Path, meta: dict | None = None) -> None:
    """Per-candidate inclusion probabilities labeled with unit/period labels."""
    buf = io.StringIO()
    buf.write(_header_line("pips", meta))
    buf.write("unit,start,pip\n")
    for cand, pip in zip(report.candidates, report.pip):
        unit_label = report.units[cand.unit - 1]
        start_label = report.times[cand.start - 1]
        buf.write(f"{unit_label},{_fmt(start_label) if isinstance(start_label, (int, float)) else start_label},{_fmt(pip)}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def write_report_json(report: BreakReport, path: str | Path, meta: dict | None = None) -> None:
    """Full break report as deterministic JSON."""
    def label(cand: BreakCandidate) -> dict:
        return {
            "unit": cand.unit,
            "start": cand.start,
            "unit_label": report.units[cand.unit - 1],
            "start_label": report.times[cand.start - 1],
        }

    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "report",
        "threshold": report.threshold,
        "strict": report.strict,
        "units": list(report.units),
        "times": list(report.times),
        "pip": [dict(label(c), pip=float(p)) for c, p in zip(report.candidates, report.pip)],
        "selected": [label(c) for c in report.selected],
        "gamma_summary": [
            dict(
                label(s.candidate),
                n_included=s.n_included,
                mean=s.mean,
                median=s.median,
                lo90=s.lo90,
                hi90=s.hi90,
                no_conditional_draws=s.no_conditional_draws,
            )
            for s in report.gamma_summary
        ],
        "window_prob": [
            dict(
                label(c),
                **{
                    f"w{w}": (None if np.isnan(report.window_prob[i, k]) else float(report.window_prob[i, k]))
                    for k, w in enumerate(WINDOW_WIDTHS)
                },
            )
            for i, c in enumerate(report.candidates)
        ],
        "outlier_prob": [[float(v) for v in row] for row in report.outlier_prob],
        "fitted": [[float(v) for v in row] for row in report.fitted],
    }
    if meta:
        payload["meta"] = meta
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n"
    )


def write_fitpath_csv(
    report: BreakReport, panel: PanelData, path: str | Path, meta: dict | None = None
) -> None:
    """Observed and fitted paths plus break-window probabilities per cell.

    ``window_wK`` at (unit, time) is the probability of at least one break
    starting in the width-K window beginning at that period; blank where
    the window leaves the admissible start range.
    """
    window_by_cand = {c: i for i, c in enumerate(report.candidates)}
    buf = io.StringIO()
    buf.write(_header_line("fitpath", meta))
    buf.write("unit,time,observed,fitted,window_w1,window_w2,window_w3\n")
    for i, u in enumerate(panel.units):
        for k, tm in enumerate(panel.times):
            cand = BreakCandidate(i + 1, k + 1)
            cells = []
            for wk, w in enumerate(WINDOW_WIDTHS):
                idx = window_by_cand.get(cand)
                if idx is None or np.isnan(report.window_prob[idx, wk]):
                    cells.append("")
                else:
                    cells.append(_fmt(report.window_prob[idx, wk]))
            buf.write(
                ",".join(
                    [
                        str(u),
                        _fmt(tm) if isinstance(tm, (int, float)) else str(tm),
                        _fmt(panel.y[i, k]),
                        _fmt(report.fitted[i, k]),
                    ]
                    + cells
                )
                + "\n"
            )
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")
