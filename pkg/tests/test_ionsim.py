"""Quantum-jump Monte Carlo of a single ion."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binom

from freqchain.exactfreq import Frequency
from freqchain.ionsim import (
    IonConfig,
    ScanProtocol,
    detect_jump,
    effective_center,
    excitation_probability,
    expected_jumps,
    mean_decay_windows,
    run_session,
    scan_setpoints,
    simulate_session,
    zeeman_shift,
)

HZ = Frequency.from_hz
CENTER = HZ(49_174_925)


def protocol(**kw):
    base = dict(scan_range=(CENTER - HZ(480), CENTER + HZ(480)), spectra=1)
    base.update(kw)
    return ScanProtocol(**base)


def test_lifetime_from_linewidth():
    cfg = IonConfig(CENTER)
    assert cfg.lifetime == pytest.approx(1 / (2 * math.pi * 0.8))
    assert cfg.lifetime == pytest.approx(0.19894, rel=1e-4)


@pytest.mark.parametrize("b, uv, fb", [
    (Fraction(1, 1000), -636_000, 159_000),
    (Fraction(1, 100), -6_360_000, 1_590_000),
    (Fraction(1, 10), -63_600_000, 15_900_000),
    (1, -636_000_000, 159_000_000),
])
def test_zeeman_values(b, uv, fb):
    cfg = IonConfig(CENTER, B_field=Fraction(b))
    assert zeeman_shift(cfg).ticks == uv
    assert (effective_center(cfg) - CENTER).ticks == fb


@given(st.floats(-1.0, 1.0, allow_nan=False))
def test_excitation_symmetric_about_center(x):
    cfg = IonConfig(CENTER, peak_excitation_probability=0.4)
    d = Frequency.from_float_hz(x * 1000)
    assert excitation_probability(cfg, CENTER + d) == pytest.approx(excitation_probability(cfg, CENTER - d), abs=0)


def test_excitation_shape():
    cfg = IonConfig(CENTER, peak_excitation_probability=0.4)
    assert excitation_probability(cfg, CENTER) == 0.4
    assert excitation_probability(cfg, CENTER + HZ(150)) == pytest.approx(0.4 * math.exp(-0.5))


@pytest.mark.parametrize("counts, result", [
    ([5], (False, None)),
    ([0, 7], (True, 1)),
    ([0, 0, 0, 3, 9], (True, 3)),
    ([0] * 11, (True, 10)),
])
def test_detect_jump(counts, result):
    assert detect_jump(counts) == result


def test_detect_jump_rejects():
    with pytest.raises(ValueError):
        detect_jump([])
    with pytest.raises(ValueError):
        detect_jump([0] * 12)


def test_setpoints_stay_on_one_grid():
    p = protocol(spectra=30, range_jitter=HZ(160))
    sp = scan_setpoints(p, np.random.default_rng(0))
    start = (CENTER - HZ(480)).ticks
    assert np.all((sp - start) % HZ(80).ticks == 0)
    assert sp.min() >= start - HZ(160).ticks
    assert sp.max() <= (CENTER + HZ(640)).ticks
    assert len(sp) % 16 == 0


def test_nominal_grid():
    assert len(protocol().nominal_setpoints()) == 13


@given(st.integers(0, 2**32 - 1))
def test_session_bit_reproducible(seed):
    cfg = IonConfig(CENTER)
    a = simulate_session(cfg, protocol(spectra=2), seed)
    b = simulate_session(cfg, protocol(spectra=2), seed)
    assert np.array_equal(a.setpoints, b.setpoints)
    assert np.array_equal(a.jumped, b.jumped)
    assert np.array_equal(a.windows, b.windows)


@pytest.mark.parametrize("peak", [0.1, 0.4, 0.9])
def test_jump_rate_against_binomial(peak):
    cfg = IonConfig(CENTER, peak_excitation_probability=peak)
    p = protocol(attempts_per_step=2000)
    arr = simulate_session(cfg, p, 7)
    for f in p.nominal_setpoints():
        sel = arr.setpoints == f.ticks
        n, k = int(sel.sum()), int(arr.jumped[sel].sum())
        q = excitation_probability(cfg, f)
        assert binom.ppf(1e-7, n, q) <= k <= binom.isf(1e-7, n, q)


def test_expected_jumps_matches_simulation():
    cfg = IonConfig(CENTER, peak_excitation_probability=0.428)
    p = protocol(spectra=21, range_jitter=HZ(160))
    jumps = [int(simulate_session(cfg, p, s).jumped.sum()) for s in range(40)]
    assert abs(np.mean(jumps) - expected_jumps(cfg, p)) < 4 * np.std(jumps) / math.sqrt(40) + 1


def test_decay_window_mean():
    cfg = IonConfig(CENTER, peak_excitation_probability=1.0)
    p = protocol(attempts_per_step=1000)
    arr = simulate_session(cfg, p, 3)
    w = arr.windows[arr.jumped]
    expected = mean_decay_windows(cfg, p)
    assert expected == pytest.approx(4.8, abs=0.2)
    assert abs(w.mean() - expected) < 5 * w.std() / math.sqrt(len(w))
    assert w.min() >= 1 and w.max() <= 10


def test_no_jumps_when_dark_background_is_bright():
    # background light in every window hides every shelving event
    cfg = IonConfig(CENTER, peak_excitation_probability=1.0, dark_counts=50.0)
    recs = run_session(cfg, protocol(), 1)
    assert not any(r.jumped for r in recs)


def test_zero_probability_never_jumps():
    recs = run_session(IonConfig(CENTER, peak_excitation_probability=0.0), protocol(), 1)
    assert not any(r.jumped for r in recs)
    assert all(r.windows_to_decay is None for r in recs)


def test_validation():
    with pytest.raises(ValueError):
        IonConfig(CENTER, peak_excitation_probability=1.5)
    with pytest.raises(ValueError):
        IonConfig(CENTER, effective_width_sigma=HZ(0))
    with pytest.raises(ValueError):
        ScanProtocol((CENTER, CENTER - HZ(1)))
