"""Acceptance battery: published numbers reproduced exactly, simulation checks.

Each check returns a :class:`Check` and never raises on a failed
criterion, so ``freqchain verify`` can print a full pass/fail table.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .analysis import Bin, Histogram, compute_final, fit_gaussian
from .chainspec import compile_equation, evaluate, load_chain, propagate_uncertainty
from .combsim import CounterReading, SlipProcess, flag_lost_cycles, simulate_beat_series
from .exactfreq import Frequency, UncertainFrequency, format_rounded, scale_exact
from .ionsim import ExcitationRecord, IonConfig, effective_center, zeeman_shift
from .scenario import (
    Scenario,
    SessionData,
    analyze,
    data_path,
    default_scenario,
    simulate,
    truth_target,
)

HZ = Frequency.from_hz

PUBLISHED_INPUTS = {
    "f_HeNe": HZ(88_376_182_599_976),
    "f_B": HZ(49_174_925),
    "comb.f_rep": HZ(76_000_000),
    "f_LO": HZ(1_632_000_000),
    "comb.f_ceo": HZ(0),
}
PUBLISHED_TARGET = HZ(1_267_402_452_899_916)
PUBLISHED_TARGET_KHZ = "1267402452899.92 kHz"
PUBLISHED_SIGMA = HZ(232)
INDIUM_TERMS = {
    "f_HeNe": Fraction(16),
    "f_B": Fraction(-4),
    "comb.f_rep": Fraction(-4 * 482_285),
    "f_LO": Fraction(-1),
    "comb.f_ceo": Fraction(0),
}


@dataclass
class Check:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: float = math.inf

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.number:>2}. {self.name}: {self.detail} ({self.seconds:.2f} s)"


def _timed(number: int, name: str, limit: float, fn: Callable[[], tuple[bool, str]]) -> Check:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed criterion, reported as such
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    dt = time.perf_counter() - t0
    if ok and dt > limit:
        ok, detail = False, detail + f"; runtime {dt:.1f} s over the {limit:g} s limit"
    return Check(number, name, ok, detail, dt, limit)


def _indium_equation():
    return compile_equation(load_chain(data_path("indium.chain")))


def check_compilation() -> Check:
    def run():
        eq = _indium_equation()
        got = dict(eq.terms)
        return got == INDIUM_TERMS and eq.offset == 0, f"terms {{{', '.join(f'{k}: {v}' for k, v in got.items())}}}"
    return _timed(1, "chain compiles to the measurement equation", 1.0, run)


def check_evaluation() -> Check:
    def run():
        f = evaluate(_indium_equation(), PUBLISHED_INPUTS)
        shown = format_rounded(f, "kHz", 2)
        return f == PUBLISHED_TARGET and shown == PUBLISHED_TARGET_KHZ, f"{f} -> {shown}"
    return _timed(2, "evaluation at published inputs", 1.0, run)


def check_budget() -> Check:
    def run():
        eq = _indium_equation()
        sigma = propagate_uncertainty(eq, {"f_HeNe": HZ(10), "f_B": HZ(42)})
        values = {k: v for k, v in PUBLISHED_INPUTS.items() if k != "f_B"}
        fin = compute_final(eq, UncertainFrequency(HZ(49_174_925), HZ(42)), values, {"f_HeNe": HZ(10)})
        frac = fin.fractional_uncertainty
        shown = format_rounded(fin.f_target.sigma, "kHz", 2)
        ok = (sigma == PUBLISHED_SIGMA and fin.f_target.sigma == PUBLISHED_SIGMA
              and shown == "0.23 kHz" and 1.80e-13 <= frac <= 1.86e-13)
        return ok, f"sigma {sigma} ({shown}), fractional {frac:.4e}"
    return _timed(3, "quadrature uncertainty budget", 1.0, run)


def check_ceo_independence() -> Check:
    def run():
        outs = set()
        for ceo in (HZ(0), HZ(20_000_000), HZ(-20_000_000)):
            eq = _indium_equation()
            values = dict(PUBLISHED_INPUTS, **{"comb.f_ceo": ceo})
            outs.add((tuple(eq.terms.items()), evaluate(eq, values)))
        return len(outs) == 1, f"{len(outs)} distinct output(s) over f_ceo in {{0, +-20 MHz}}"
    return _timed(4, "carrier-envelope offset independence", 1.0, run)


def noiseless_histogram(mu: Frequency, amplitude=0.4, sigma_hz=150.0, trials=16, width=HZ(30)) -> Histogram:
    """Exact model samples on a +-3 sigma grid of 30 Hz spacing around mu."""
    bins = []
    for k in range(-15, 16):
        c = mu + scale_exact(width, k) + HZ(Fraction(7, 100))  # grid not centered on mu
        x = float((c - mu).hz)
        p = amplitude * math.exp(-0.5 * (x / sigma_hz) ** 2)
        bins.append(Bin(c, trials, round(p * trials), p, 1.0 / trials))
    return Histogram(width, bins)


def grid_search_center(hist: Histogram, guess: Frequency, half_span_hz=10.0, step_hz=0.01) -> float:
    """Brute-force oracle: profile chi-square over mu, returned relative to ``guess`` in Hz.

    For each trial center the amplitude is solved in closed form and the
    width by bounded scalar minimization.
    """
    x = np.array([float((b.center_fB - guess).hz) for b in hist.bins])
    p = np.array([b.probability for b in hist.bins])
    w = np.array([b.trials for b in hist.bins], dtype=float) ** 2

    def profile(mu, s):
        g = np.exp(-0.5 * ((x - mu) / s) ** 2)
        a = np.sum(w * g * p) / np.sum(w * g * g)
        return float(np.sum(w * (p - a * g) ** 2))

    n = int(round(2 * half_span_hz / step_hz))
    grid = -half_span_hz + step_hz * np.arange(n + 1)
    best = []
    for mu in grid:
        res = minimize_scalar(lambda s: profile(mu, s), bounds=(10.0, 1000.0), method="bounded",
                              options={"xatol": 1e-9})
        best.append(res.fun)
    return float(grid[int(np.argmin(best))])


def check_fit_oracle() -> Check:
    def run():
        worst = 0.0
        details = []
        for mu in (HZ(Fraction(4917492537, 100)), HZ(Fraction(12345678901, 1000)), HZ(1000)):
            hist = noiseless_histogram(mu)
            fit = fit_gaussian(hist)
            err_a = abs(fit.amplitude - 0.4) / 0.4
            err_s = abs(fit.width_sigma.to_float_hz() - 150.0) / 150.0
            err_mu = abs(float((fit.center - mu).hz)) / abs(mu.to_float_hz())
            worst = max(worst, err_a, err_s, err_mu)
            grid_mu = grid_search_center(hist, mu)
            fitted = float((fit.center - mu).hz)
            details.append(abs(grid_mu - fitted))
        ok = worst <= 1e-9 and max(details) <= 0.01
        return ok, f"max relative error {worst:.2e}, grid-vs-fit center {max(details):.4f} Hz"
    return _timed(5, "Gaussian fit vs brute-force oracle", 10.0, run)


def coverage_battery(scn: Scenario, seeds=range(1, 101)) -> dict:
    eq = scn.equation()
    truth = truth_target(scn, eq)
    diffs, sigmas = [], []
    for seed in seeds:
        rep = analyze(scn.with_seed(seed), simulate(scn.with_seed(seed)), eq)
        diffs.append(rep.final.f_target.value.ticks - truth.ticks)
        sigmas.append(rep.final.stat_sigma.ticks)
    diffs = np.array(diffs, dtype=float)
    sigmas = np.array(sigmas, dtype=float)
    return {
        "inside": int(np.sum(np.abs(diffs) <= 3 * sigmas)),
        "runs": len(diffs),
        "bias_hz": float(diffs.mean()) / 1e6,
        "sigma_hz": float(sigmas.mean()) / 1e6,
    }


def check_coverage(scn: Scenario | None = None) -> Check:
    def run():
        s = scn or default_scenario()
        s = replace(s, counter_noise=HZ(Fraction(3, 10)), slips=SlipProcess(1e-3), sessions=11)
        r = coverage_battery(s)
        ok = r["inside"] >= 97 and abs(r["bias_hz"]) < r["sigma_hz"] / 3
        return ok, (f"{r['inside']}/{r['runs']} runs within 3 sigma, mean bias {r['bias_hz']:+.3f} Hz "
                    f"vs per-run sigma {r['sigma_hz']:.3f} Hz")
    return _timed(6, "end-to-end coverage over 100 seeds", 300.0, run)


def check_lost_cycles() -> Check:
    def run():
        series = simulate_beat_series(HZ(49_174_925), HZ(Fraction(3, 10)), 1, 20_000,
                                      SlipProcess(1e-2), 2024, monitor_noise_sigma=HZ(Fraction(5, 100)))
        mask = flag_lost_cycles(series.deviations, HZ(Fraction(1, 2)), series.readings)
        flagged = {i for i, ok in enumerate(mask) if not ok}
        injected = set(series.slips)
        return flagged == injected and len(injected) > 0, f"{len(flagged)} flagged, {len(injected)} injected"
    return _timed(7, "lost-cycle filter removes exactly the slipped gates", 10.0, run)


def check_zeeman() -> Check:
    def run():
        base = IonConfig(true_center_fB=HZ(49_174_925))
        c0 = effective_center(base)
        ok = True
        for b in ("0.001", "0.01", "0.1", "1"):
            cfg = replace(base, B_field=Fraction(b))
            uv = zeeman_shift(cfg)
            ok &= uv == scale_exact(HZ(-636), Fraction(b))
            ok &= scale_exact(effective_center(cfg) - c0, -4) == uv
        return ok, "UV shift = -636 Hz/G x B, f_B shift = -(UV shift)/4 at B in {0.001, 0.01, 0.1, 1} G"
    return _timed(8, "Zeeman shift linearity", 1.0, run)


def shift_session(d: SessionData, delta: Frequency) -> SessionData:
    readings = [CounterReading(r.index, r.value + delta, r.gate, r.valid) for r in d.readings]
    records = [ExcitationRecord(r.fB_setpoint + delta, r.attempt_index, r.jumped, r.windows_to_decay)
               for r in d.records]
    return SessionData(d.index, readings, d.deviations, records, d.spectra, d.slips)


def check_equivariance(scn: Scenario | None = None) -> Check:
    def run():
        s = scn or default_scenario()
        eq = s.equation()
        data = simulate(s)
        delta = HZ(1000)
        a = analyze(s, data, eq)
        b = analyze(s, [shift_session(d, delta) for d in data], eq)
        d_mean = b.average.mean_fB.value - a.average.mean_fB.value
        d_target = b.final.f_target.value - a.final.f_target.value
        sig_a = (a.final.f_target.sigma, a.final.stat_sigma, a.average.sem, a.average.fit_sigma,
                 [x.stat_sigma for x in a.sessions])
        sig_b = (b.final.f_target.sigma, b.final.stat_sigma, b.average.sem, b.average.fit_sigma,
                 [x.stat_sigma for x in b.sessions])
        ok = abs(d_mean.ticks - delta.ticks) <= 1 and d_target == scale_exact(delta, -4) and sig_a == sig_b
        return ok, f"mean f_B moved {d_mean}, target moved {d_target}, sigmas {'equal' if sig_a == sig_b else 'differ'}"
    return _timed(9, "pipeline shift equivariance", 30.0, run)


def check_determinism() -> Check:
    from .cli import main

    def run():
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            for run_dir in ("a", "b"):
                sim, ana = tmp / run_dir / "sim", tmp / run_dir / "ana"
                if main(["simulate", "--seed", "7", "--out", str(sim)]) != 0:
                    return False, "simulate failed"
                if main(["analyze", str(sim), "--out", str(ana)]) != 0:
                    return False, "analyze failed"
            cmp = filecmp.dircmp(tmp / "a", tmp / "b")
            diffs = []

            def walk(c, prefix=""):
                diffs.extend(prefix + f for f in c.diff_files + c.left_only + c.right_only)
                for name, sub in c.subdirs.items():
                    walk(sub, prefix + name + "/")
            walk(cmp)
            # dircmp compares shallowly by stat; confirm by content
            files = sorted(p.relative_to(tmp / "a") for p in (tmp / "a").rglob("*") if p.is_file())
            same = all((tmp / "a" / f).read_bytes() == (tmp / "b" / f).read_bytes() for f in files)
            return same and not diffs, f"{len(files)} files compared, {'identical' if same and not diffs else 'differ'}"
    return _timed(10, "byte-identical simulate/analyze outputs", 60.0, run)


ALL_CHECKS = [
    check_compilation,
    check_evaluation,
    check_budget,
    check_ceo_independence,
    check_fit_oracle,
    check_coverage,
    check_lost_cycles,
    check_zeeman,
    check_equivariance,
    check_determinism,
]


def run_all(skip: set[int] = frozenset()) -> list[Check]:
    out = []
    for i, fn in enumerate(ALL_CHECKS, start=1):
        if i in skip:
            continue
        out.append(fn())
    return out
