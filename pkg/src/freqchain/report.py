"""Report and plot-data rendering (JSON or CSV, byte-stable)."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .analysis import GaussianFit, Histogram
from .chainspec import MeasurementEquation
from .exactfreq import format_rounded
from .scenario import Report, hz_text


def equation_record(eq: MeasurementEquation) -> list[dict]:
    return eq.records()


def report_dict(rep: Report) -> dict:
    fin = rep.final
    avg = rep.average
    return {
        "target": rep.equation.target,
        "equation": equation_record(rep.equation),
        "equation_offset_uhz": str(rep.equation.offset),
        "sessions": [
            {
                "session": s.session_id + 1,
                "center_fB_hz": hz_text(s.center_fB),
                "stat_sigma_hz": hz_text(s.stat_sigma),
                "chi2": s.chi2,
                "jumps": s.jump_count,
                "trials": s.trials,
                "spectra": s.spectra_count,
                "retained_attempts": kept,
                "discarded_gates": dropped,
            }
            for s, kept, dropped in zip(rep.sessions, rep.retained, rep.discarded_gates)
        ],
        "mean_fB": {
            "value_hz": hz_text(avg.mean_fB.value),
            "sigma_hz": hz_text(avg.mean_fB.sigma),
            "sem_hz": hz_text(avg.sem),
            "fit_sigma_hz": hz_text(avg.fit_sigma),
            "sessions": avg.sessions,
        },
        "f_target": {
            "value_hz": hz_text(fin.f_target.value),
            "sigma_hz": hz_text(fin.f_target.sigma),
            "stat_sigma_hz": hz_text(fin.stat_sigma),
            "value_khz": format_rounded(fin.f_target.value, "kHz", 2),
            "sigma_khz": format_rounded(fin.f_target.sigma, "kHz", 2),
        },
        "budget": [
            {
                "symbol": b.symbol,
                "coefficient": str(b.coefficient),
                "sigma_hz": hz_text(b.sigma),
                "contribution_hz": hz_text(b.contribution),
            }
            for b in fin.budget
        ],
        "fractional_uncertainty": fin.fractional_uncertainty,
    }


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def render(obj: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(_flatten(obj))
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def equation_csv(eq: MeasurementEquation) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["symbol", "num", "den", "sigma_hz"], lineterminator="\n")
    w.writeheader()
    w.writerows(eq.records())
    return buf.getvalue()


def spectrum_csv(hist: Histogram, fit: GaussianFit) -> str:
    """Excitation probability per 30 Hz bin with its error bar and the fit."""
    centers = np.array([b.center_fB.to_float_hz() for b in hist.bins])
    model = fit.model(centers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_center_hz", "trials", "jumps", "probability", "sigma", "fit"])
    for b, m in zip(hist.bins, model):
        w.writerow([hz_text(b.center_fB), b.trials, b.jumps, repr(b.probability), repr(b.sigma), repr(float(m))])
    return buf.getvalue()


def sessions_csv(rep: Report) -> str:
    """Line center per session; error bar is the reference-limited sigma."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["session", "center_fB_hz", "error_bar_hz", "stat_sigma_hz"])
    bar = rep.average.mean_fB.sigma
    for s in rep.sessions:
        w.writerow([s.session_id + 1, hz_text(s.center_fB), hz_text(bar), hz_text(s.stat_sigma)])
    return buf.getvalue()


def write_report(out: Path, rep: Report, fmt: str = "json") -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / f"report.{fmt}"
    path.write_text(render(report_dict(rep), fmt), encoding="utf-8")
    written.append(path)
    path = out / "equation.csv"
    path.write_text(equation_csv(rep.equation), encoding="utf-8")
    written.append(path)
    for s, h, f in zip(rep.sessions, rep.histograms, rep.fits):
        path = out / f"spectrum_session_{s.session_id + 1:02d}.csv"
        path.write_text(spectrum_csv(h, f), encoding="utf-8")
        written.append(path)
    path = out / "line_centers.csv"
    path.write_text(sessions_csv(rep), encoding="utf-8")
    written.append(path)
    return written


def summary_lines(rep: Report) -> list[str]:
    fin = rep.final
    return [
        f"sessions            {rep.average.sessions}",
        f"mean f_B            {hz_text(rep.average.mean_fB.value)} Hz "
        f"(ref {hz_text(rep.average.mean_fB.sigma)} Hz, SEM {hz_text(rep.average.sem)} Hz)",
        f"{rep.equation.target:<20}{format_rounded(fin.f_target.value, 'kHz', 2)} "
        f"({format_rounded(fin.f_target.sigma, 'kHz', 2)})",
        f"fractional          {fin.fractional_uncertainty:.3g}",
    ] + [
        f"  budget {b.symbol:<12} |{b.coefficient}| x {hz_text(b.sigma)} Hz = {hz_text(b.contribution)} Hz"
        for b in fin.budget
    ]
