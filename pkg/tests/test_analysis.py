"""Binning, line fits, session averaging and the final budget."""

import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import curve_fit

from freqchain.analysis import (
    Bin,
    DataError,
    FitError,
    Histogram,
    JointRecord,
    SessionResult,
    analyze_session,
    average_sessions,
    bin_records,
    compute_final,
    filter_records,
    fit_gaussian,
    gaussian,
)
from freqchain.acceptance import grid_search_center, noiseless_histogram
from freqchain.chainspec import compile_equation, load_chain
from freqchain.combsim import CounterReading
from freqchain.exactfreq import Frequency, quadrature
from freqchain.ionsim import ExcitationRecord
from freqchain.scenario import data_path

HZ = Frequency.from_hz
W = HZ(30)


def rec(hz, jumped=False):
    return JointRecord(HZ(hz), jumped)


# ---------------------------------------------------------------- joining

def test_filter_keeps_valid_gates_with_counted_abscissa():
    readings = [CounterReading(0, HZ(101), Fraction(1)), CounterReading(1, HZ(99), Fraction(1), valid=False)]
    records = [ExcitationRecord(HZ(100), 0, True, 3), ExcitationRecord(HZ(100), 1, False)]
    out = filter_records(readings, records)
    assert out == [JointRecord(HZ(101), True, 3, HZ(100))]


def test_filter_alignment_errors():
    r = [CounterReading(0, HZ(1), Fraction(1))]
    with pytest.raises(ValueError, match="alignment"):
        filter_records(r, [])
    with pytest.raises(ValueError, match="alignment"):
        filter_records(r, [ExcitationRecord(HZ(1), 5, False)])


def test_filter_warns_when_all_gates_lost():
    r = [CounterReading(0, HZ(1), Fraction(1), valid=False)]
    with pytest.warns(RuntimeWarning):
        assert filter_records(r, [ExcitationRecord(HZ(1), 0, False)]) == []


# ---------------------------------------------------------------- binning

def test_bins_are_half_open_and_absolute():
    h = bin_records([rec(0), rec(29), rec(30, True), rec(-1), rec(Fraction(59_999_999, 10**6))], W)
    assert [b.trials for b in h.bins] == [1, 2, 2]
    assert [b.jumps for b in h.bins] == [0, 0, 1]
    # centers are the mean counted f_B of the members
    assert h.bins[1].center_fB == HZ(Fraction(29, 2))
    assert h.bins[0].probability == 0.0 and h.bins[0].sigma == 1.0


def test_bin_center_rounds_half_up():
    h = bin_records([JointRecord(Frequency(0), False), JointRecord(Frequency(1), False)], W)
    assert h.bins[0].center_fB == Frequency(1)


def test_bin_empty_raises():
    with pytest.raises(DataError):
        bin_records([], W)


records_st = st.lists(
    st.tuples(st.integers(-10**9, 10**9), st.booleans()).map(lambda t: JointRecord(Frequency(t[0]), t[1])),
    min_size=1, max_size=200,
)


@given(records_st)
def test_bin_conservation(records):
    h = bin_records(records, W)
    assert h.trials == len(records)
    assert h.jumps == sum(r.jumped for r in records)
    assert all(b.probability == b.jumps / b.trials for b in h.bins)


@given(records_st, st.integers(-10**6, 10**6))
def test_bin_shift_by_whole_bins(records, k):
    shift = k * W.ticks
    moved = [JointRecord(Frequency(r.fB.ticks + shift), r.jumped) for r in records]
    a, b = bin_records(records, W), bin_records(moved, W)
    assert [(x.trials, x.jumps) for x in a.bins] == [(x.trials, x.jumps) for x in b.bins]
    assert all(y.center_fB.ticks - x.center_fB.ticks == shift for x, y in zip(a.bins, b.bins))


# ---------------------------------------------------------------- fitting

@pytest.mark.parametrize("mu", [HZ(Fraction(4917492537, 100)), HZ(1000), HZ(-5_000_000)])
def test_noiseless_fit_exact(mu):
    fit = fit_gaussian(noiseless_histogram(mu))
    assert fit.converged
    assert fit.amplitude == pytest.approx(0.4, rel=1e-9)
    assert fit.width_sigma.to_float_hz() == pytest.approx(150.0, rel=1e-9)
    assert abs(float((fit.center - mu).hz)) < 1e-6
    assert fit.chi2 < 1e-20


def test_fit_agrees_with_scipy_and_grid_oracle():
    rng = np.random.default_rng(5)
    mu = HZ(49_174_925)
    bins = []
    for k in range(-16, 17):
        c = mu + HZ(30 * k + 7)
        p = 0.4 * math.exp(-0.5 * ((30 * k + 7) / 150) ** 2)
        n = int(rng.integers(10, 60))
        j = int(rng.binomial(n, p))
        bins.append(Bin(c, n, j, j / n, 1 / n))
    h = Histogram(W, bins)
    fit = fit_gaussian(h)
    x = np.array([float((b.center_fB - mu).hz) for b in bins])
    y = np.array([b.probability for b in bins])
    s = np.array([b.sigma for b in bins])
    popt, pcov = curve_fit(gaussian, x, y, p0=[0.4, 0, 150], sigma=s, absolute_sigma=False,
                           ftol=1e-15, xtol=1e-15, gtol=1e-15)
    assert fit.amplitude == pytest.approx(popt[0], rel=1e-6)
    assert float((fit.center - mu).hz) == pytest.approx(popt[1], abs=1e-4)
    assert fit.width_sigma.to_float_hz() == pytest.approx(popt[2], rel=1e-6)
    assert fit.center_sigma_hz == pytest.approx(math.sqrt(pcov[1, 1]), rel=1e-4)
    guess = Frequency(round(fit.center.ticks, -6) + 3_000_000)  # oracle window not centred on the answer
    assert abs(grid_search_center(h, guess) - float((fit.center - guess).hz)) <= 0.01


def test_fit_with_offset():
    h = noiseless_histogram(HZ(0))
    h = Histogram(W, [Bin(b.center_fB, b.trials, b.jumps, b.probability + 0.05, b.sigma) for b in h.bins])
    fit = fit_gaussian(h, with_offset=True)
    assert fit.offset == pytest.approx(0.05, rel=1e-8)
    assert fit.amplitude == pytest.approx(0.4, rel=1e-8)


def test_binomial_weighting_runs():
    fit = fit_gaussian(noiseless_histogram(HZ(0)), weighting="binomial")
    assert fit.amplitude == pytest.approx(0.4, rel=1e-9)
    with pytest.raises(ValueError):
        fit_gaussian(noiseless_histogram(HZ(0)), weighting="nope")


def _flat(n_bins, p):
    return Histogram(W, [Bin(HZ(30 * i), 16, round(16 * p), p, 1 / 16) for i in range(n_bins)])


def test_fit_rejects_bad_histograms():
    with pytest.raises(DataError, match="4 bins"):
        fit_gaussian(_flat(3, 0.2))
    with pytest.raises(DataError, match="no excitations"):
        fit_gaussian(_flat(8, 0.0))
    with pytest.raises(DataError, match="degenerate"):
        fit_gaussian(_flat(8, 0.25))


def test_fit_reports_spike_as_error():
    bins = [Bin(HZ(30 * i), 16, 0, 0.0, 1 / 16) for i in range(10)]
    bins[4] = Bin(HZ(120), 16, 8, 0.5, 1 / 16)
    with pytest.raises(FitError):
        fit_gaussian(Histogram(W, bins))


# ---------------------------------------------------------------- sessions

def _result(i, hz, sigma_hz=5):
    return SessionResult(i, HZ(hz), HZ(sigma_hz), 600, 21, 1.0, 4000)


def test_average_unweighted():
    avg = average_sessions([_result(0, 100), _result(1, 110, 50), _result(2, 130)])
    assert avg.mean_fB.value == Frequency(113_333_333)  # 340/3 Hz, rounded half-up
    assert avg.mean_fB.sigma == HZ(42)  # reference-limited by default
    # sample std 15.275 Hz / sqrt(3)
    assert avg.sem.to_float_hz() == pytest.approx(8.8192, abs=1e-4)
    assert avg.fit_sigma.to_float_hz() == pytest.approx(math.sqrt(25 + 2500 + 25) / 3, abs=1e-6)
    assert avg.stat_sigma == max(avg.sem, avg.fit_sigma)


def test_average_single_and_empty():
    assert average_sessions([_result(0, 5)]).sem == HZ(0)
    with pytest.raises(DataError):
        average_sessions([])


@pytest.fixture(scope="module")
def indium():
    return compile_equation(load_chain(data_path("indium.chain")))


def test_final_at_published_values(indium):
    from freqchain.exactfreq import UncertainFrequency

    values = indium.default_assignment()
    fin = compute_final(indium, UncertainFrequency(HZ(49_174_925), HZ(42)), values, indium.default_sigmas())
    assert fin.f_target.value == HZ(1_267_402_452_899_916)
    assert fin.f_target.sigma == HZ(232)
    assert [(b.symbol, b.contribution) for b in fin.budget if b.contribution] == [("f_B", HZ(168)), ("f_HeNe", HZ(160))]
    assert 1.80e-13 <= fin.fractional_uncertainty <= 1.86e-13


@given(st.integers(0, 10**4), st.integers(0, 10**4), st.integers(-10**6, 10**6))
def test_budget_consistency(s_ref, s_fb, dfb):
    from freqchain.exactfreq import UncertainFrequency

    eq = compile_equation(load_chain(data_path("indium.chain")))
    values = eq.default_assignment()
    mean = UncertainFrequency(HZ(49_174_925 + dfb), HZ(s_fb))
    fin = compute_final(eq, mean, values, {"f_HeNe": HZ(s_ref)})
    assert fin.f_target.sigma == fin.budget_quadrature()
    assert fin.f_target.sigma == quadrature([HZ(16 * s_ref), HZ(4 * s_fb)])
    assert fin.f_target.value == HZ(1_267_402_452_899_916 - 4 * dfb)


def test_analyze_session_counts():
    recs = []
    rng = np.random.default_rng(0)
    for k in range(-12, 13):
        f = 49_174_925 + 80 * k
        p = 0.4 * math.exp(-0.5 * (80 * k / 150) ** 2)
        recs += [rec(f, bool(rng.random() < p)) for _ in range(200)]
    res, hist, fit = analyze_session(3, recs, 21)
    assert res.trials == 25 * 200 and res.jump_count == sum(r.jumped for r in recs)
    assert abs(res.center_fB.to_float_hz() - 49_174_925) < 4 * res.stat_sigma.to_float_hz()
    assert len(hist.bins) == 25
