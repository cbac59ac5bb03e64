"""Exact micro-hertz arithmetic."""

from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from freqchain.exactfreq import (
    TICK_LIMIT,
    ExactnessError,
    Frequency,
    FrequencyError,
    UncertainFrequency,
    format_frequency,
    format_rounded,
    linear_combine,
    parse_frequency,
    quadrature,
    quadrature_scaled,
    round_half_up,
    scale_exact,
)

HZ = Frequency.from_hz
ticks = st.integers(min_value=-(10**24), max_value=10**24)
freqs = ticks.map(Frequency)
small = st.integers(min_value=-(10**12), max_value=10**12).map(Frequency)
ratios = st.fractions(max_denominator=1000).filter(lambda r: abs(r) < 10**6)


# ---------------------------------------------------------------- parsing

@pytest.mark.parametrize("text, expected", [
    ("76 MHz", 76_000_000_000_000),
    ("1632 MHz", 1_632_000_000_000_000),
    ("88376182599976 Hz", 88_376_182_599_976_000_000),
    ("1267402452899.92 kHz", 1_267_402_452_899_920_000_000),
    ("0.8 Hz", 800_000),
    ("-636 Hz", -636_000_000),
    ("42", 42_000_000),
    ("0.000001 Hz", 1),
    ("2.5 THz", 2_500_000_000_000_000_000),
    ("0.000001000 Hz", 1),
])
def test_parse_known_values(text, expected):
    assert parse_frequency(text).ticks == expected


@pytest.mark.parametrize("text", ["", "Hz", "1 GHzz", "1e6 Hz", "0.0000001 Hz", "1 uHz", "1 mHz", "abc"])
def test_parse_rejects(text):
    with pytest.raises(FrequencyError):
        parse_frequency(text)


def test_range_limit():
    Frequency(TICK_LIMIT)
    with pytest.raises(OverflowError):
        Frequency(TICK_LIMIT + 1)
    with pytest.raises(OverflowError):
        Frequency(-TICK_LIMIT - 1)
    with pytest.raises(OverflowError):
        parse_frequency("1" + "0" * 40 + " THz")


def test_float_refused_on_exact_path():
    with pytest.raises(TypeError):
        Frequency.from_hz(0.1)
    assert Frequency.from_float_hz(0.1).ticks == 100_000


def test_format_canonical():
    assert format_frequency(HZ(1_267_402_452_899_916)) == "1267402452899916 Hz"
    assert format_frequency(HZ(Fraction(1, 2))) == "0.5 Hz"
    assert format_frequency(HZ(76_000_000), "MHz") == "76 MHz"
    assert format_frequency(Frequency(-1)) == "-0.000001 Hz"
    assert str(HZ(0)) == "0 Hz"


@pytest.mark.parametrize("hz, shown", [
    (1_267_402_452_899_916, "1267402452899.92 kHz"),
    (232, "0.23 kHz"),
    (235, "0.24 kHz"),  # half-up
    (-235, "-0.24 kHz"),  # presentation rounds ties away from zero
    (-234, "-0.23 kHz"),
])
def test_format_rounded(hz, shown):
    assert format_rounded(HZ(hz), "kHz", 2) == shown


@given(freqs, st.sampled_from(["Hz", "kHz", "MHz", "GHz", "THz"]))
def test_parse_format_round_trip(f, unit):
    assert parse_frequency(format_frequency(f, unit)) == f


# ---------------------------------------------------------------- arithmetic

@given(st.fractions(), st.integers(min_value=-1000, max_value=1000))
def test_round_half_up_commutes_with_integer_shift(x, n):
    assert round_half_up(x + n) == round_half_up(x) + n


def test_round_half_up_ties():
    assert round_half_up(Fraction(1, 2)) == 1
    assert round_half_up(Fraction(-1, 2)) == 0
    assert round_half_up(Fraction(-3, 2)) == -1


def test_scale_exact_refuses_fractional_result():
    assert scale_exact(HZ(76_000_000), Fraction(1, 128)).ticks == 593_750_000_000
    with pytest.raises(ExactnessError):
        scale_exact(Frequency(1), Fraction(1, 3))


@given(freqs, st.integers(-50, 50), st.integers(-50, 50))
def test_scale_composition(f, a, b):
    assert scale_exact(scale_exact(f, a), b) == scale_exact(f, a * b)


@given(st.lists(st.tuples(st.integers(-10**6, 10**6), small), max_size=12), st.randoms())
def test_linear_combine_permutation_invariant(terms, rnd):
    shuffled = list(terms)
    rnd.shuffle(shuffled)
    assert linear_combine(terms) == linear_combine(shuffled)


@given(st.lists(st.tuples(st.integers(-10**6, 10**6), small), max_size=12), st.data())
def test_linear_combine_splits(terms, data):
    cut = data.draw(st.integers(0, len(terms)))
    assert linear_combine(terms) == linear_combine(terms[:cut]) + linear_combine(terms[cut:])


@given(small, small)
def test_add_sub_inverse(a, b):
    assert (a + b) - b == a
    assert -(-a) == a
    assert abs(a) == abs(-a)


# ---------------------------------------------------------------- quadrature

def test_quadrature_known_values():
    assert quadrature([HZ(3), HZ(4)]) == HZ(5)
    assert quadrature([HZ(160), HZ(168)]) == HZ(232)
    assert quadrature_scaled([(16, HZ(10)), (4, HZ(42))]) == HZ(232)
    assert quadrature([]) == HZ(0)
    # sqrt(2) uHz = 1.414.. -> 1 ; sqrt(2.5^2 + 0) stays exact
    assert quadrature([Frequency(1), Frequency(1)]).ticks == 1
    assert quadrature([Frequency(2), Frequency(2)]).ticks == 3  # 2.83 -> 3


def test_quadrature_rejects_negative():
    with pytest.raises(ValueError):
        quadrature([Frequency(-1)])


@given(st.lists(st.integers(0, 10**15).map(Frequency), max_size=10), st.randoms())
def test_quadrature_symmetric(sigmas, rnd):
    shuffled = list(sigmas)
    rnd.shuffle(shuffled)
    assert quadrature(sigmas) == quadrature(shuffled)


@given(st.lists(st.integers(0, 10**15).map(Frequency), max_size=10), st.integers(0, 10**15).map(Frequency))
def test_quadrature_monotone_and_bounded(sigmas, extra):
    q = quadrature(sigmas)
    assert quadrature(sigmas + [extra]) >= q
    if sigmas:
        assert q >= max(sigmas)
        assert q.ticks <= sum(s.ticks for s in sigmas) + 1


@given(st.integers(0, 10**18))
def test_quadrature_single_is_identity(t):
    assert quadrature([Frequency(t)]).ticks == t


def test_uncertain_frequency():
    u = UncertainFrequency(HZ(10), HZ(1))
    assert u.value == HZ(10)
    with pytest.raises(ValueError):
        UncertainFrequency(HZ(10), HZ(-1))
