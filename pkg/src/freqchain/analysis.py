"""Data reduction: filter, bin, fit, average sessions, final budget."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from .chainspec import MeasurementEquation, evaluate
from .combsim import CounterReading
from .exactfreq import (
    ZERO,
    Frequency,
    UncertainFrequency,
    quadrature,
    round_half_up,
    scale_exact,
)
from .ionsim import ExcitationRecord

log = logging.getLogger(__name__)

BIN_WIDTH = Frequency.from_hz(30)
REFERENCE_LIMITED_SIGMA = Frequency.from_hz(42)


class DataError(ValueError):
    """Not enough usable data for the requested reduction."""


class FitError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class JointRecord:
    """One excitation attempt joined with the counted beat of its gate."""

    fB: Frequency
    jumped: bool
    windows_to_decay: Optional[int] = None
    setpoint: Optional[Frequency] = None


def filter_records(
    readings: Sequence[CounterReading],
    records: Sequence[ExcitationRecord],
) -> list[JointRecord]:
    """Keep attempts whose synchronized counter gate passed the lost-cycle check.

    The abscissa of a kept attempt is the counted beat, not the setpoint.
    """
    if len(readings) != len(records):
        raise ValueError(f"alignment mismatch: {len(readings)} gates vs {len(records)} attempts")
    out = []
    for g, r in zip(readings, records):
        if g.index != r.attempt_index:
            raise ValueError(f"alignment mismatch at gate {g.index} / attempt {r.attempt_index}")
        if g.valid:
            out.append(JointRecord(g.value, r.jumped, r.windows_to_decay, r.fB_setpoint))
    if records and not out:
        warnings.warn("every gate was flagged for lost cycles; nothing retained", RuntimeWarning)
    return out


@dataclass(frozen=True, slots=True)
class Bin:
    center_fB: Frequency  # mean counted f_B of the member attempts
    trials: int
    jumps: int
    probability: float
    sigma: float


@dataclass
class Histogram:
    bin_width: Frequency
    bins: list[Bin]

    @property
    def trials(self) -> int:
        return sum(b.trials for b in self.bins)

    @property
    def jumps(self) -> int:
        return sum(b.jumps for b in self.bins)


def bin_records(records: Sequence[JointRecord], bin_width: Frequency = BIN_WIDTH) -> Histogram:
    """Group attempts into half-open f_B intervals [k w, (k+1) w).

    Each bin is placed at the mean f_B of its members (rounded half-up to
    1 uHz) so that shifting every record by a constant shifts every bin by
    the same constant. Error bars are 1/N per bin.
    """
    if bin_width.ticks <= 0:
        raise ValueError("bin width must be positive")
    if not records:
        raise DataError("no records to bin")
    acc: dict[int, list[int]] = {}
    w = bin_width.ticks
    for r in records:
        slot = acc.setdefault(r.fB.ticks // w, [0, 0, 0])
        slot[0] += 1
        slot[1] += int(r.jumped)
        slot[2] += r.fB.ticks
    bins = []
    for k in sorted(acc):
        n, j, s = acc[k]
        center = Frequency(round_half_up(Fraction(s, n)))
        bins.append(Bin(center, n, j, j / n, 1.0 / n))
    return Histogram(bin_width, bins)


@dataclass
class GaussianFit:
    amplitude: float
    center: Frequency
    width_sigma: Frequency
    covariance: np.ndarray  # (A, mu, sigma) [+ offset], Hz units
    chi2: float
    iterations: int
    converged: bool
    offset: float = 0.0
    center_offset_hz: float = 0.0  # fitted mu relative to the reference bin
    reference: Frequency = ZERO

    @property
    def center_sigma_hz(self) -> float:
        return math.sqrt(max(self.covariance[1, 1], 0.0))

    def model(self, fB_hz: np.ndarray) -> np.ndarray:
        x = np.asarray(fB_hz, dtype=float) - self.reference.to_float_hz()
        return gaussian(x, self.amplitude, self.center_offset_hz,
                        self.width_sigma.to_float_hz(), self.offset)


def gaussian(x, amplitude, mu, sigma, offset=0.0):
    return amplitude * np.exp(-0.5 * ((x - mu) / sigma) ** 2) + offset


def _weights(hist: Histogram, weighting: str) -> np.ndarray:
    n = np.array([b.trials for b in hist.bins], dtype=float)
    if weighting == "caption":
        return n * n  # 1/sigma^2 with sigma = 1/N
    if weighting == "binomial":
        k = np.array([b.jumps for b in hist.bins], dtype=float)
        p = (k + 0.5) / (n + 1.0)  # keeps empty and full bins finite
        return n / (p * (1.0 - p))
    raise ValueError(f"unknown weighting {weighting!r}")


def fit_gaussian(
    hist: Histogram,
    weighting: str = "caption",
    with_offset: bool = False,
    max_iter: int = 200,
    rtol: float = 1e-10,
) -> GaussianFit:
    """Weighted least-squares Gaussian line fit by damped Gauss-Newton.

    Works on Hz offsets from the first bin so the normal equations stay well
    conditioned; the absolute center is restored by exact tick addition.
    The covariance is scaled by the reduced chi-square because the 1/N
    error bars fix relative, not absolute, weights.
    """
    bins = hist.bins
    if len(bins) < 4:
        raise DataError(f"need at least 4 bins, got {len(bins)}")
    p = np.array([b.probability for b in bins])
    if not np.any(p > 0):
        raise DataError("no excitations in any bin")
    if np.all(p == p[0]):
        raise DataError("degenerate data: all bins have the same probability")

    ref = bins[0].center_fB
    x = np.array([float((b.center_fB - ref).hz) for b in bins])
    w = _weights(hist, weighting)

    # moment-based start
    mu0 = float(np.sum(p * x) / np.sum(p))
    s0 = math.sqrt(max(float(np.sum(p * (x - mu0) ** 2) / np.sum(p)), 1e-12))
    params = np.array([p.max(), mu0, s0] + ([0.0] if with_offset else []))
    npar = len(params)

    def residual(q):
        off = q[3] if with_offset else 0.0
        return p - gaussian(x, q[0], q[1], q[2], off)

    def jacobian(q):
        a, mu, sg = q[0], q[1], q[2]
        z = (x - mu) / sg
        e = np.exp(-0.5 * z * z)
        cols = [e, a * e * z / sg, a * e * z * z / sg]
        if with_offset:
            cols.append(np.ones_like(x))
        return np.column_stack(cols)

    r = residual(params)
    chi2 = float(np.sum(w * r * r))
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jacobian(params)
        JW = J.T * w
        H = JW @ J
        g = JW @ r
        while True:
            try:
                step = np.linalg.solve(H + lam * np.diag(np.diag(H)), g)
            except np.linalg.LinAlgError as exc:
                raise FitError("singular normal matrix during the fit") from exc
            trial = params + step
            if trial[2] <= 0:
                lam *= 10
                if lam > 1e16:
                    break
                continue
            rt = residual(trial)
            chi2_t = float(np.sum(w * rt * rt))
            if chi2_t <= chi2:
                break
            lam *= 10
            if lam > 1e16:
                break
        if lam > 1e16:
            # no downhill step left; accept only if the undamped step is negligible
            gn = np.linalg.lstsq(H, g, rcond=None)[0]
            scale = np.array([abs(params[0]), abs(params[2]), abs(params[2])] + ([1.0] if with_offset else []))
            converged = bool(np.all(np.abs(gn) <= 1e-6 * np.maximum(scale, 1e-300)))
            break
        scale = np.array([abs(trial[0]), abs(trial[2]), abs(trial[2])] + ([1.0] if with_offset else []))
        params, r, chi2 = trial, rt, chi2_t
        lam = max(lam / 10, 1e-12)
        if np.all(np.abs(step) <= rtol * np.maximum(scale, 1e-300)):
            converged = True
            break
    if not converged:
        raise FitError(f"Gaussian fit did not converge in {max_iter} iterations")

    amp, mu, sg = params[0], params[1], abs(params[2])
    if sg < hist.bin_width.to_float_hz() / 10:
        raise FitError(f"fitted width {sg:.3g} Hz collapsed below a tenth of the bin width")
    J = jacobian(params)
    H = (J.T * w) @ J
    dof = max(len(x) - npar, 1)
    try:
        cov = np.linalg.inv(H) * (chi2 / dof)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular normal matrix at the solution") from exc
    center = Frequency(ref.ticks + round_half_up(Fraction(mu) * 1_000_000))
    return GaussianFit(
        amplitude=float(amp),
        center=center,
        width_sigma=Frequency.from_float_hz(sg),
        covariance=cov,
        chi2=chi2,
        iterations=it,
        converged=True,
        offset=float(params[3]) if with_offset else 0.0,
        center_offset_hz=float(mu),
        reference=ref,
    )


@dataclass(frozen=True)
class SessionResult:
    session_id: int
    center_fB: Frequency
    stat_sigma: Frequency
    jump_count: int
    spectra_count: int
    chi2: float = 0.0
    trials: int = 0


def analyze_session(
    session_id: int,
    records: Sequence[JointRecord],
    spectra_count: int,
    bin_width: Frequency = BIN_WIDTH,
    weighting: str = "caption",
    with_offset: bool = False,
) -> tuple[SessionResult, Histogram, GaussianFit]:
    hist = bin_records(records, bin_width)
    fit = fit_gaussian(hist, weighting=weighting, with_offset=with_offset)
    result = SessionResult(
        session_id=session_id,
        center_fB=fit.center,
        stat_sigma=Frequency.from_float_hz(fit.center_sigma_hz),
        jump_count=hist.jumps,
        spectra_count=spectra_count,
        chi2=fit.chi2,
        trials=hist.trials,
    )
    return result, hist, fit


@dataclass(frozen=True)
class SessionAverage:
    mean_fB: UncertainFrequency  # sigma is the reference-limited value
    sem: Frequency  # scatter of session centers
    fit_sigma: Frequency  # fit uncertainties propagated through the mean
    sessions: int

    @property
    def stat_sigma(self) -> Frequency:
        """Larger of the two statistical estimates."""
        return max(self.sem, self.fit_sigma)


def average_sessions(
    sessions: Sequence[SessionResult],
    reference_sigma: Frequency = REFERENCE_LIMITED_SIGMA,
) -> SessionAverage:
    """Unweighted mean of the session line centers."""
    if not sessions:
        raise DataError("no sessions to average")
    n = len(sessions)
    total = sum(s.center_fB.ticks for s in sessions)
    mean = Fraction(total, n)
    if n > 1:
        ss = sum((s.center_fB.ticks - mean) ** 2 for s in sessions)
        sem = math.sqrt(float(ss) / (n - 1) / n)
    else:
        sem = 0.0
    fit = math.sqrt(sum(float(s.stat_sigma.ticks) ** 2 for s in sessions)) / n
    return SessionAverage(
        UncertainFrequency(Frequency(round_half_up(mean)), reference_sigma),
        Frequency(round(sem)),
        Frequency(round(fit)),
        n,
    )


@dataclass(frozen=True)
class BudgetItem:
    symbol: str
    coefficient: Fraction
    sigma: Frequency
    contribution: Frequency  # |coefficient| * sigma


@dataclass(frozen=True)
class FinalResult:
    mean_fB: UncertainFrequency
    f_target: UncertainFrequency
    fractional_uncertainty: float
    budget: list[BudgetItem]
    stat_sigma: Frequency = ZERO  # |coefficient of f_B| * statistical sigma of the mean
    sem: Frequency = ZERO

    def budget_quadrature(self) -> Frequency:
        return quadrature([b.contribution for b in self.budget])


def compute_final(
    eq: MeasurementEquation,
    mean_fB: UncertainFrequency | SessionAverage,
    values: Mapping[str, Frequency],
    sigmas: Mapping[str, Frequency],
    counted_symbol: str = "f_B",
) -> FinalResult:
    """Evaluate the equation at the averaged beat and combine the budget.

    The counted beat's uncertainty is the one carried by ``mean_fB``; every
    other entry of ``sigmas`` adds its own line to the budget.
    """
    avg = mean_fB if isinstance(mean_fB, SessionAverage) else None
    mean = avg.mean_fB if avg else mean_fB
    assignment = dict(values)
    assignment[counted_symbol] = mean.value
    target = evaluate(eq, assignment)

    all_sigmas = {k: v for k, v in sigmas.items() if k != counted_symbol}
    all_sigmas[counted_symbol] = mean.sigma
    budget = []
    for sym in sorted(all_sigmas, key=lambda s: (s != counted_symbol, s)):
        c = eq.coefficient(sym)
        sigma = all_sigmas[sym]
        if sigma.ticks < 0:
            raise ValueError(f"negative sigma for {sym}")
        if c == 0 and sigma.ticks == 0:
            continue
        contribution = Frequency(round_half_up(abs(c) * sigma.ticks))
        budget.append(BudgetItem(sym, c, sigma, contribution))
    total = quadrature([b.contribution for b in budget])
    frac = total.ticks / abs(target.ticks) if target.ticks else math.inf
    c_fb = abs(eq.coefficient(counted_symbol))
    stat = scale_exact(avg.stat_sigma, c_fb) if avg else ZERO
    sem = scale_exact(avg.sem, c_fb) if avg else ZERO
    return FinalResult(mean, UncertainFrequency(target, total), frac, budget, stat, sem)
