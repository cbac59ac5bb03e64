"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerances.

Each test prints the criterion line (visible with ``pytest -v -s`` or in the
terminal summary) and asserts it. Frozen oracle values are worked out by
hand with plain integer arithmetic, independent of the package.
"""

from fractions import Fraction

import pytest

from freqchain import acceptance as acc

# frozen oracles
EQ_TERMS = {"f_HeNe": 16, "f_B": -4, "comb.f_rep": -4 * 482_285, "f_LO": -1, "comb.f_ceo": 0}
TARGET_HZ = 16 * 88_376_182_599_976 - 4 * 49_174_925 - 1_929_140 * 76_000_000 - 1_632_000_000
assert TARGET_HZ == 1_267_402_452_899_916
BUDGET_HZ = 232  # isqrt((16*10)^2 + (4*42)^2) = isqrt(53824) = 232 exactly


def _gate(check, capsys, extra=True):
    with capsys.disabled():
        print("\n" + check.line())
    assert check.passed, check.line()
    assert extra


def test_criterion_01_compilation(capsys):
    eq = acc._indium_equation()
    _gate(acc.check_compilation(), capsys,
          {k: Fraction(v) for k, v in EQ_TERMS.items()} == eq.terms)


def test_criterion_02_evaluation(capsys):
    from freqchain.chainspec import evaluate
    from freqchain.exactfreq import format_rounded

    got = evaluate(acc._indium_equation(), acc.PUBLISHED_INPUTS)
    _gate(acc.check_evaluation(), capsys,
          got.ticks == TARGET_HZ * 10**6 and format_rounded(got, "kHz", 2) == "1267402452899.92 kHz")


def test_criterion_03_budget(capsys):
    from freqchain.chainspec import propagate_uncertainty
    from freqchain.exactfreq import Frequency

    s = propagate_uncertainty(acc._indium_equation(),
                              {"f_HeNe": Frequency.from_hz(10), "f_B": Frequency.from_hz(42)})
    _gate(acc.check_budget(), capsys,
          s.ticks == BUDGET_HZ * 10**6 and 1.80e-13 <= BUDGET_HZ / TARGET_HZ <= 1.86e-13)


def test_criterion_04_ceo_independence(capsys):
    _gate(acc.check_ceo_independence(), capsys)


def test_criterion_05_fit_oracle(capsys):
    _gate(acc.check_fit_oracle(), capsys)


@pytest.mark.slow
def test_criterion_06_coverage(capsys):
    _gate(acc.check_coverage(), capsys)


def test_criterion_07_lost_cycles(capsys):
    _gate(acc.check_lost_cycles(), capsys)


def test_criterion_08_zeeman(capsys):
    _gate(acc.check_zeeman(), capsys)


def test_criterion_09_equivariance(capsys):
    _gate(acc.check_equivariance(), capsys)


def test_criterion_10_determinism(capsys):
    _gate(acc.check_determinism(), capsys)
