"""Monte-Carlo model of quantum-jump spectroscopy on a single ion.

Frequencies on the scan axis are beat-note setpoints at 946 nm (the f_B
axis). The clock transition sits at the fourth harmonic and enters the
measurement equation with coefficient -4 on f_B, so a shift d of the UV
line moves the resonant f_B by -d/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .exactfreq import Frequency, round_half_up

NATURAL_LINEWIDTH = Frequency.from_hz(Fraction(8, 10))
ZEEMAN_COEFFICIENT = Frequency.from_hz(-636)  # per gauss, at 237 nm
TARGET_PER_FB = -4  # d f_target / d f_B


@dataclass(frozen=True)
class IonConfig:
    true_center_fB: Frequency
    effective_width_sigma: Frequency = Frequency.from_hz(150)
    peak_excitation_probability: float = 0.4
    natural_linewidth: Frequency = NATURAL_LINEWIDTH
    metastable_lifetime: Optional[float] = None  # s; None -> 1/(2 pi linewidth)
    B_field: Fraction = Fraction(0)  # gauss
    zeeman_coefficient: Frequency = ZEEMAN_COEFFICIENT
    bright_counts: float = 100.0  # mean photons per probe window, ground state
    dark_counts: float = 0.0  # mean background photons per window

    def __post_init__(self):
        if self.effective_width_sigma.ticks <= 0:
            raise ValueError("effective width must be positive")
        if not 0.0 <= self.peak_excitation_probability <= 1.0:
            raise ValueError("peak excitation probability must lie in [0, 1]")
        if self.lifetime <= 0:
            raise ValueError("metastable lifetime must be positive")
        if self.bright_counts <= 0 or self.dark_counts < 0:
            raise ValueError("photon count rates out of range")
        object.__setattr__(self, "B_field", Fraction(self.B_field))

    @property
    def lifetime(self) -> float:
        if self.metastable_lifetime is not None:
            return self.metastable_lifetime
        return 1.0 / (2 * math.pi * self.natural_linewidth.to_float_hz())


@dataclass(frozen=True)
class ScanProtocol:
    """One session: ``spectra`` scans over ``scan_range`` in ``step`` increments.

    Start and stop of each spectrum are moved independently by a random
    whole number of ``jitter_quantum`` (default: one step) within
    +-``range_jitter``, so scan ranges differ slightly between spectra while
    all spectra stay on one synthesizer grid.
    """

    scan_range: tuple[Frequency, Frequency]
    step: Frequency = Frequency.from_hz(80)
    attempts_per_step: int = 16
    clock_pulse: float = 0.015
    probe_window: float = 0.040
    max_extra_windows: int = 10
    spectra: int = 1
    range_jitter: Frequency = Frequency(0)
    jitter_quantum: Optional[Frequency] = None

    def __post_init__(self):
        start, stop = self.scan_range
        if stop < start:
            raise ValueError("scan range is empty")
        if self.step.ticks <= 0 or self.attempts_per_step < 1:
            raise ValueError("step and attempts must be positive")
        if self.max_extra_windows < 0 or self.spectra < 1:
            raise ValueError("window count and spectra must be non-negative/positive")
        if self.jitter_quantum is None:
            object.__setattr__(self, "jitter_quantum", self.step)
        if self.range_jitter.ticks < 0 or self.jitter_quantum.ticks <= 0:
            raise ValueError("jitter parameters out of range")

    def nominal_setpoints(self) -> list[Frequency]:
        start, stop = self.scan_range
        n = (stop.ticks - start.ticks) // self.step.ticks + 1
        return [Frequency(start.ticks + i * self.step.ticks) for i in range(n)]


@dataclass(frozen=True, slots=True)
class ExcitationRecord:
    fB_setpoint: Frequency
    attempt_index: int
    jumped: bool
    windows_to_decay: Optional[int] = None


def zeeman_shift(config: IonConfig) -> Frequency:
    """Linear Zeeman shift of the UV clock line, exact at 1 uHz when representable."""
    shift = config.zeeman_coefficient.ticks * config.B_field
    return Frequency(round_half_up(shift))


def effective_center(config: IonConfig) -> Frequency:
    """Resonant f_B including the Zeeman shift (-1/4 of the UV shift)."""
    shift_fb = Fraction(zeeman_shift(config).ticks, TARGET_PER_FB)
    return Frequency(config.true_center_fB.ticks + round_half_up(shift_fb))


def excitation_probability(config: IonConfig, fB_setpoint: Frequency) -> float:
    center = effective_center(config)
    x = (fB_setpoint.ticks - center.ticks) / config.effective_width_sigma.ticks
    return config.peak_excitation_probability * math.exp(-0.5 * x * x)


def _probabilities(config: IonConfig, setpoints: np.ndarray) -> np.ndarray:
    center = effective_center(config).ticks
    x = (setpoints - center).astype(float) / config.effective_width_sigma.ticks
    return config.peak_excitation_probability * np.exp(-0.5 * x * x)


def detect_jump(counts: Sequence[int], max_extra_windows: int = 10) -> tuple[bool, Optional[int]]:
    """Double-resonance readout of one attempt.

    ``counts[0]`` is the first cooling-laser probe window; later entries are
    the extra windows waited for the metastable state to decay. A dark
    first window means a jump, and the decay is placed at the first window
    that fluoresces again, or at the cap if none does.
    """
    if len(counts) == 0:
        raise ValueError("no probe windows")
    if len(counts) > 1 + max_extra_windows:
        raise ValueError(f"more than {1 + max_extra_windows} probe windows")
    if counts[0] > 0:
        return False, None
    for i in range(1, len(counts)):
        if counts[i] > 0:
            return True, i
    return True, max_extra_windows


def _spectrum_grid(protocol: ScanProtocol, k_start: int, k_stop: int) -> np.ndarray:
    start, stop = protocol.scan_range
    q = protocol.jitter_quantum.ticks
    lo, hi = start.ticks + k_start * q, stop.ticks + k_stop * q
    if hi < lo:
        hi = lo
    return np.arange(lo, hi + 1, protocol.step.ticks, dtype=np.int64)


def scan_setpoints(protocol: ScanProtocol, rng: np.random.Generator) -> np.ndarray:
    """Setpoint ticks of every attempt in scan order, spectra concatenated."""
    kmax = protocol.range_jitter.ticks // protocol.jitter_quantum.ticks
    out = []
    for _ in range(protocol.spectra):
        k = rng.integers(-kmax, kmax + 1, size=2) if kmax else (0, 0)
        grid = _spectrum_grid(protocol, int(k[0]), int(k[1]))
        out.append(np.repeat(grid, protocol.attempts_per_step))
    return np.concatenate(out)


@dataclass
class SessionArrays:
    """Column form of a simulated session; one entry per attempt."""

    setpoints: np.ndarray  # int64 ticks
    jumped: np.ndarray  # bool
    windows: np.ndarray  # int64, -1 where no jump
    per_step: int = field(default=16)

    def records(self) -> list[ExcitationRecord]:
        return [
            ExcitationRecord(Frequency(int(s)), i, bool(j), int(w) if j else None)
            for i, (s, j, w) in enumerate(zip(self.setpoints, self.jumped, self.windows))
        ]


def simulate_session(
    config: IonConfig,
    protocol: ScanProtocol,
    seed: int | np.random.SeedSequence | np.random.Generator,
) -> SessionArrays:
    """Vectorized core of :func:`run_session`.

    An excited ion is taken to stay shelved through the first probe window;
    its decay time is then drawn from the metastable lifetime and mapped to
    40 ms windows. Fluorescence counts are Poisson (bright when the ion is in
    the ground state, plus dark counts) and go through :func:`detect_jump`'s
    rule, vectorized.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    setpoints = scan_setpoints(protocol, rng)
    n = len(setpoints)
    excited = rng.random(n) < _probabilities(config, setpoints)

    nwin = 1 + protocol.max_extra_windows
    decay = rng.exponential(config.lifetime, size=n)
    # extra window i (1-based) covers [(i-1) T, i T) after the first probe
    first_bright = np.floor(decay / protocol.probe_window).astype(np.int64) + 1
    idx = np.arange(nwin)
    ground = ~excited[:, None] | (idx[None, :] >= first_bright[:, None])
    ground[:, 0] = ~excited
    mean = np.where(ground, config.bright_counts + config.dark_counts, config.dark_counts)
    counts = rng.poisson(mean)

    jumped = counts[:, 0] == 0
    lit = counts[:, 1:] > 0
    any_lit = lit.any(axis=1)
    windows = np.where(any_lit, lit.argmax(axis=1) + 1, protocol.max_extra_windows)
    windows = np.where(jumped, windows, -1).astype(np.int64)
    return SessionArrays(setpoints, jumped, windows, protocol.attempts_per_step)


def run_session(
    config: IonConfig,
    protocol: ScanProtocol,
    seed: int | np.random.SeedSequence | np.random.Generator,
) -> list[ExcitationRecord]:
    return simulate_session(config, protocol, seed).records()


def expected_jumps(config: IonConfig, protocol: ScanProtocol) -> float:
    """Mean jump count of a session with ideal detection, averaged over scan jitter."""
    kmax = protocol.range_jitter.ticks // protocol.jitter_quantum.ticks
    ks = range(-kmax, kmax + 1)
    per_range = [_probabilities(config, _spectrum_grid(protocol, a, b)).sum() for a in ks for b in ks]
    return float(np.mean(per_range)) * protocol.attempts_per_step * protocol.spectra


def mean_decay_windows(config: IonConfig, protocol: ScanProtocol) -> float:
    """E[windows_to_decay] for the capped geometric decay-window law."""
    q = math.exp(-protocol.probe_window / config.lifetime)
    m = protocol.max_extra_windows
    return (1 - q**m) / (1 - q)
