"""Scenario files, per-session simulation and the record CSV formats.

A scenario is an INI-style file (sections of ``key = value``), with every
frequency written in the exact decimal format of :mod:`freqchain.exactfreq`.
All randomness derives from the single ``[run] seed``: session ``i`` draws
from ``SeedSequence(seed, spawn_key=(i,))``, so sessions can be simulated
in any order or in parallel without changing a single bit.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import (
    FinalResult,
    GaussianFit,
    Histogram,
    SessionAverage,
    SessionResult,
    analyze_session,
    average_sessions,
    compute_final,
    filter_records,
)
from .chainspec import ChainSpec, MeasurementEquation, compile_equation, evaluate, load_chain
from .combsim import (
    CounterReading,
    SlipProcess,
    apply_mask,
    flag_lost_cycles,
    simulate_beat_series,
)
from .exactfreq import Frequency, UncertainFrequency, format_frequency, parse_frequency
from .ionsim import ExcitationRecord, IonConfig, ScanProtocol, effective_center, simulate_session


class ScenarioError(ValueError):
    pass


def data_path(name: str) -> Path:
    return Path(str(resources.files("freqchain") / "data" / name))


def hz_text(f: Frequency) -> str:
    """Exact decimal hertz without unit, as used in the CSV files."""
    return format_frequency(f)[: -len(" Hz")]


@dataclass
class Scenario:
    chain_path: Path
    ion: IonConfig
    scan: ScanProtocol
    counter_noise: Frequency
    monitor_noise: Frequency
    gate: Fraction
    slips: SlipProcess
    lost_cycle_threshold: Frequency
    sessions: int = 11
    seed: int = 1
    counted: str = "f_B"
    f_ceo: Frequency = Frequency(0)
    rep_jitter: Frequency = Frequency(0)
    bin_width: Frequency = Frequency.from_hz(30)
    reference_sigma: Frequency = Frequency.from_hz(42)
    weighting: str = "caption"
    with_offset: bool = False
    overrides: dict[str, UncertainFrequency] = field(default_factory=dict)
    published: dict[str, str] = field(default_factory=dict)

    def chain(self) -> ChainSpec:
        return load_chain(self.chain_path)

    def equation(self) -> MeasurementEquation:
        return compile_equation(self.chain())

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


def _freq(sec: configparser.SectionProxy, key: str, default: Optional[str] = None) -> Frequency:
    text = sec.get(key, default)
    if text is None:
        raise ScenarioError(f"[{sec.name}] {key} is required")
    try:
        return parse_frequency(text)
    except ValueError as exc:
        raise ScenarioError(f"[{sec.name}] {key}: {exc}") from None


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario file; a relative chain path resolves next to it."""
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # symbol names are case sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    for section in ("chain", "ion", "scan"):
        if not cp.has_section(section):
            raise ScenarioError(f"{path}: missing [{section}] section")
    for section in ("run", "comb", "counter", "analysis", "published", "references"):
        if not cp.has_section(section):
            cp.add_section(section)

    try:
        chain = Path(cp["chain"]["file"])
    except KeyError:
        raise ScenarioError("[chain] file is required") from None
    if not chain.is_absolute():
        chain = path.parent / chain
    if not chain.exists():
        raise ScenarioError(f"chain file {chain} not found")

    ion_s = cp["ion"]
    try:
        ion = IonConfig(
            true_center_fB=_freq(ion_s, "true_center_fB"),
            effective_width_sigma=_freq(ion_s, "width_sigma", "150 Hz"),
            peak_excitation_probability=ion_s.getfloat("peak_probability", 0.4),
            natural_linewidth=_freq(ion_s, "natural_linewidth", "0.8 Hz"),
            metastable_lifetime=ion_s.getfloat("lifetime") if "lifetime" in ion_s else None,
            B_field=Fraction(ion_s.get("B_field", "0")),
            zeeman_coefficient=_freq(ion_s, "zeeman_coefficient", "-636 Hz"),
            bright_counts=ion_s.getfloat("bright_counts", 100.0),
            dark_counts=ion_s.getfloat("dark_counts", 0.0),
        )
        sc = cp["scan"]
        center = _freq(sc, "center", ion_s.get("true_center_fB"))
        half = _freq(sc, "half_range", "480 Hz")
        scan = ScanProtocol(
            scan_range=(center - half, center + half),
            step=_freq(sc, "step", "80 Hz"),
            attempts_per_step=sc.getint("attempts", 16),
            clock_pulse=sc.getfloat("clock_pulse", 0.015),
            probe_window=sc.getfloat("probe_window", 0.040),
            max_extra_windows=sc.getint("max_extra_windows", 10),
            spectra=sc.getint("spectra", 21),
            range_jitter=_freq(sc, "range_jitter", "0 Hz"),
            jitter_quantum=_freq(sc, "jitter_quantum") if "jitter_quantum" in sc else None,
        )
        ct = cp["counter"]
        an = cp["analysis"]
        overrides = {}
        for sym, text in cp["references"].items():
            value, _, sigma = text.partition(" sigma ")
            overrides[sym] = UncertainFrequency(
                parse_frequency(value), parse_frequency(sigma) if sigma else Frequency(0)
            )
        weighting = an.get("weighting", "caption")
        if weighting not in ("caption", "binomial"):
            raise ScenarioError(f"[analysis] weighting must be caption or binomial, not {weighting!r}")
        return Scenario(
            chain_path=chain,
            ion=ion,
            scan=scan,
            counter_noise=_freq(ct, "noise_sigma", "0.3 Hz"),
            monitor_noise=_freq(ct, "monitor_noise_sigma", "0 Hz"),
            gate=Fraction(ct.get("gate", "1")),
            slips=SlipProcess(ct.getfloat("slip_probability", 0.0)),
            lost_cycle_threshold=_freq(ct, "lost_cycle_threshold", "0.5 Hz"),
            sessions=cp["run"].getint("sessions", 11),
            seed=cp["run"].getint("seed", 1),
            counted=cp["chain"].get("counted", "f_B"),
            f_ceo=_freq(cp["comb"], "f_ceo", "0 Hz"),
            rep_jitter=_freq(cp["comb"], "rep_jitter", "0 Hz"),
            bin_width=_freq(an, "bin_width", "30 Hz"),
            reference_sigma=_freq(an, "reference_sigma", "42 Hz"),
            weighting=weighting,
            with_offset=an.getboolean("offset", False),
            overrides=overrides,
            published=dict(cp["published"]),
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def default_scenario() -> Scenario:
    return load_scenario(data_path("paper.scenario"))


# --------------------------------------------------------------------------
# simulation

@dataclass
class SessionData:
    """Everything one session writes to disk."""

    index: int
    readings: list[CounterReading]
    deviations: list[Frequency]
    records: list[ExcitationRecord]
    spectra: int
    slips: dict[int, int] = field(default_factory=dict)


def session_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(index,))


def simulate_one(scn: Scenario, index: int) -> SessionData:
    ion_seq, counter_seq = session_seed(scn.seed, index).spawn(2)
    arrays = simulate_session(scn.ion, scn.scan, np.random.default_rng(ion_seq))
    series = simulate_beat_series(
        arrays.setpoints,
        scn.counter_noise,
        scn.gate,
        None,
        scn.slips,
        np.random.default_rng(counter_seq),
        monitor_noise_sigma=scn.monitor_noise,
    )
    mask = flag_lost_cycles(series.deviations, scn.lost_cycle_threshold, series.readings)
    return SessionData(
        index,
        apply_mask(series.readings, mask),
        series.deviations,
        arrays.records(),
        scn.scan.spectra,
        series.slips,
    )


def simulate(scn: Scenario, sessions: Optional[int] = None) -> list[SessionData]:
    n = scn.sessions if sessions is None else sessions
    return [simulate_one(scn, i) for i in range(n)]


def truth_target(scn: Scenario, eq: MeasurementEquation) -> Frequency:
    """Target frequency implied by the injected (Zeeman-shifted) line center."""
    values = assignment(scn, eq)
    values[scn.counted] = effective_center(scn.ion)
    return evaluate(eq, values)


def assignment(scn: Scenario, eq: MeasurementEquation) -> dict[str, Frequency]:
    values = eq.default_assignment()
    for c in [s for s in eq.terms if s.endswith(".f_ceo")]:
        values[c] = scn.f_ceo
    for sym, u in scn.overrides.items():
        values[sym] = u.value
    return values


def reference_sigmas(scn: Scenario, eq: MeasurementEquation) -> dict[str, Frequency]:
    sigmas = eq.default_sigmas()
    for sym, u in scn.overrides.items():
        sigmas[sym] = u.sigma
    return sigmas


# --------------------------------------------------------------------------
# analysis of a set of sessions

@dataclass
class Report:
    sessions: list[SessionResult]
    histograms: list[Histogram]
    fits: list[GaussianFit]
    average: SessionAverage
    final: FinalResult
    equation: MeasurementEquation
    retained: list[int]
    discarded_gates: list[int]


def analyze(scn: Scenario, data: Sequence[SessionData], eq: Optional[MeasurementEquation] = None) -> Report:
    eq = eq if eq is not None else scn.equation()
    results, hists, fits, kept, dropped = [], [], [], [], []
    for d in data:
        joint = filter_records(d.readings, d.records)
        kept.append(len(joint))
        dropped.append(sum(not r.valid for r in d.readings))
        res, hist, fit = analyze_session(
            d.index, joint, d.spectra, scn.bin_width, scn.weighting, scn.with_offset
        )
        results.append(res)
        hists.append(hist)
        fits.append(fit)
    avg = average_sessions(results, scn.reference_sigma)
    final = compute_final(eq, avg, assignment(scn, eq), reference_sigmas(scn, eq), scn.counted)
    return Report(results, hists, fits, avg, final, eq, kept, dropped)


# --------------------------------------------------------------------------
# CSV formats

BEAT_HEADER = ["gate_index", "value_hz", "monitor_deviation_hz", "valid"]
RECORD_HEADER = ["fB_setpoint_hz", "attempt_index", "jumped", "windows_to_decay"]


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def beats_csv(readings: Sequence[CounterReading], deviations: Sequence[Frequency]) -> str:
    return _csv_text(BEAT_HEADER, (
        [r.index, hz_text(r.value), hz_text(d), int(r.valid)] for r, d in zip(readings, deviations)
    ))


def records_csv(records: Sequence[ExcitationRecord]) -> str:
    return _csv_text(RECORD_HEADER, (
        [hz_text(r.fB_setpoint), r.attempt_index, int(r.jumped),
         "" if r.windows_to_decay is None else r.windows_to_decay]
        for r in records
    ))


def read_beats(path: str | Path, gate: Fraction = Fraction(1)) -> tuple[list[CounterReading], list[Frequency]]:
    readings, devs = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != BEAT_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            readings.append(CounterReading(
                int(row["gate_index"]), parse_frequency(row["value_hz"]), gate, row["valid"] == "1"
            ))
            devs.append(parse_frequency(row["monitor_deviation_hz"]))
    return readings, devs


def read_records(path: str | Path) -> list[ExcitationRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            w = row["windows_to_decay"]
            out.append(ExcitationRecord(
                parse_frequency(row["fB_setpoint_hz"]), int(row["attempt_index"]),
                row["jumped"] == "1", int(w) if w else None,
            ))
    return out


def session_files(index: int) -> tuple[str, str]:
    stem = f"session_{index + 1:02d}"
    return f"{stem}_beats.csv", f"{stem}_records.csv"


def write_session(out: Path, d: SessionData) -> list[Path]:
    beats, recs = session_files(d.index)
    (out / beats).write_text(beats_csv(d.readings, d.deviations), encoding="utf-8")
    (out / recs).write_text(records_csv(d.records), encoding="utf-8")
    return [out / beats, out / recs]


def write_manifest(out: Path, scn: Scenario, data: Sequence[SessionData]) -> Path:
    manifest = {
        "seed": scn.seed,
        "gate_s": str(scn.gate),
        "sessions": [
            {"index": d.index, "files": list(session_files(d.index)), "spectra": d.spectra,
             "injected_slips": {str(k): v for k, v in sorted(d.slips.items())}}
            for d in data
        ],
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_sessions(directory: str | Path, gate: Fraction = Fraction(1), spectra: int = 21) -> list[SessionData]:
    """Read every session pair in a directory written by ``write_session``.

    The stored ``valid`` column is taken as is.
    """
    directory = Path(directory)
    manifest = directory / "manifest.json"
    entries = []
    if manifest.exists():
        meta = json.loads(manifest.read_text(encoding="utf-8"))
        gate = Fraction(meta.get("gate_s", str(gate)))
        for s in meta["sessions"]:
            entries.append((s["index"], s["files"], s.get("spectra", spectra)))
    else:
        for beats in sorted(directory.glob("session_*_beats.csv")):
            idx = int(beats.name.split("_")[1]) - 1
            entries.append((idx, list(session_files(idx)), spectra))
    out = []
    for idx, (beats, recs), nspec in entries:
        readings, devs = read_beats(directory / beats, gate)
        out.append(SessionData(idx, readings, devs, read_records(directory / recs), nspec))
    return out
