"""Comb modes, gated beat counters and the redundant lost-cycle monitor."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence, Union

import numpy as np

from .exactfreq import TICKS_PER_HZ, ZERO, Frequency, scale_exact

DEFAULT_LOST_CYCLE_THRESHOLD = Frequency.from_hz(Fraction(1, 2))


@dataclass(frozen=True)
class CombState:
    f_rep: Frequency
    f_ceo: Frequency = ZERO
    rep_jitter_sigma: Frequency = ZERO

    def __post_init__(self):
        if self.f_rep.ticks <= 0:
            raise ValueError("f_rep must be positive")
        if self.rep_jitter_sigma.ticks < 0:
            raise ValueError("rep jitter sigma must be non-negative")


def mode_frequency(comb: CombState, m: int) -> Frequency:
    """f_ceo + m * f_rep, exact."""
    if m < 0:
        raise ValueError("mode index must be non-negative")
    return comb.f_ceo + scale_exact(comb.f_rep, m)


@dataclass(frozen=True, slots=True)
class CounterReading:
    index: int
    value: Frequency
    gate: Fraction
    valid: bool = True


@dataclass(frozen=True)
class SlipProcess:
    """Per-gate probability of losing or gaining whole cycles.

    ``magnitudes`` are signed cycle counts drawn with ``weights`` when a
    slip happens.
    """

    probability: float = 0.0
    magnitudes: tuple[int, ...] = (1, -1)
    weights: tuple[float, ...] = (0.5, 0.5)

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("slip probability must lie in [0, 1]")
        if len(self.magnitudes) != len(self.weights) or not self.magnitudes:
            raise ValueError("magnitudes and weights must be non-empty and equal length")
        if any(m == 0 for m in self.magnitudes):
            raise ValueError("a slip of zero cycles is not a slip")


class BeatSeries(NamedTuple):
    readings: list[CounterReading]
    deviations: list[Frequency]
    slips: dict[int, int]  # gate index -> injected cycles


def gate_resolution(gate: Fraction | int | str) -> int:
    """Counter resolution 1/gate Hz as whole ticks."""
    gate = Fraction(gate)
    if gate <= 0:
        raise ValueError("gate must be positive")
    res = TICKS_PER_HZ / gate
    if res.denominator != 1:
        raise ValueError(f"1/gate for gate={gate} s is not a whole number of uHz")
    return int(res)


def _quantize(ticks: np.ndarray, step: int) -> np.ndarray:
    # nearest multiple of step, halves rounded up
    return ((ticks + step // 2) // step) * step


def simulate_beat_series(
    true_beat: Union[Frequency, Sequence[Frequency]],
    noise_sigma: Frequency,
    gate: Fraction | int | str,
    count: int | None,
    slips: SlipProcess,
    seed: int | np.random.SeedSequence | np.random.Generator,
    monitor_noise_sigma: Frequency = ZERO,
) -> BeatSeries:
    """Counter readings of a beat note and the matching monitor deviations.

    ``true_beat`` is either one frequency repeated ``count`` times or one
    value per gate (a scanned laser), possibly as an int64 tick array. Each reading is the true beat plus
    white Gaussian counter noise plus any slip, rounded to the 1/gate
    resolution. A slip of c cycles moves the gate average by c/gate and is
    seen identically by the monitor counter, whose own noise is
    ``monitor_noise_sigma``.
    """
    step = gate_resolution(gate)
    gate = Fraction(gate)
    if isinstance(true_beat, Frequency):
        if count is None or count < 1:
            raise ValueError("count must be >= 1")
        truth = np.full(count, true_beat.ticks, dtype=np.int64)
    else:
        if isinstance(true_beat, np.ndarray):  # already in ticks
            truth = true_beat.astype(np.int64)
        else:
            truth = np.array([f.ticks for f in true_beat], dtype=np.int64)
        if count is not None and count != len(truth):
            raise ValueError("count does not match the number of true beat values")
        if len(truth) < 1:
            raise ValueError("count must be >= 1")
    if noise_sigma.ticks < 0 or monitor_noise_sigma.ticks < 0:
        raise ValueError("noise sigma must be non-negative")
    n = len(truth)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    noise = np.rint(rng.standard_normal(n) * noise_sigma.ticks).astype(np.int64)
    slipped = rng.random(n) < slips.probability
    cycles = np.zeros(n, dtype=np.int64)
    k = int(slipped.sum())
    if k:
        w = np.asarray(slips.weights, dtype=float)
        cycles[slipped] = rng.choice(np.asarray(slips.magnitudes, dtype=np.int64), size=k, p=w / w.sum())
    slip_ticks = cycles * step
    monitor = np.rint(rng.standard_normal(n) * monitor_noise_sigma.ticks).astype(np.int64)

    values = _quantize(truth + noise + slip_ticks, step)
    deviations = slip_ticks + monitor
    readings = [CounterReading(i, Frequency(int(v)), gate) for i, v in enumerate(values)]
    slip_log = {int(i): int(cycles[i]) for i in np.flatnonzero(slipped)}
    return BeatSeries(readings, [Frequency(int(d)) for d in deviations], slip_log)


def flag_lost_cycles(
    deviations: Sequence[Frequency],
    threshold: Frequency = DEFAULT_LOST_CYCLE_THRESHOLD,
    readings: Sequence[CounterReading] | None = None,
) -> list[bool]:
    """Validity mask: a gate is kept unless its monitor is off by more than threshold."""
    if threshold.ticks <= 0:
        raise ValueError("threshold must be positive")
    if readings is not None and len(readings) != len(deviations):
        raise ValueError(
            f"length mismatch: {len(readings)} readings vs {len(deviations)} monitor values"
        )
    return [abs(d.ticks) <= threshold.ticks for d in deviations]


def apply_mask(readings: Sequence[CounterReading], mask: Sequence[bool]) -> list[CounterReading]:
    if len(readings) != len(mask):
        raise ValueError("length mismatch between readings and mask")
    return [CounterReading(r.index, r.value, r.gate, bool(ok)) for r, ok in zip(readings, mask)]
