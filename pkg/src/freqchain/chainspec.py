"""Frequency-chain descriptions and their compiled measurement equation.

A chain file lists the oscillators of a phase-coherent chain and the locks
between them. Every lock is a linear constraint between node frequencies,
so the whole chain is a linear system. Solving it over exact rationals
expresses the target as a linear form over the known quantities:
references, counted beats, constant offsets and comb internals.

File format (one declaration per line, ``#`` starts a comment)::

    ref <name> <frequency> [sigma <frequency>]
    const <name> <frequency>
    osc <name>
    comb <name> rep <frequency> [sigma <frequency>]
    counted <name>
    lock <out> = <k> * <in> [+|- <const-or-literal>] [div <int>]
    lock <out> = mode(<comb>, <index>) [+|- <const-or-literal>] [div <int>]
    beat <counted> = <a> - <b>
    target <name>

Each comb contributes two symbols, ``<comb>.f_rep`` (known, from the
``rep`` value) and ``<comb>.f_ceo``. The offset frequency is solved for
when a lock pins the comb position; otherwise it stays a free symbol.
``div`` annotations record RF prescalers in the servo path and do not
change the frequency relation.
"""

from __future__ import annotations

import graphlib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Union

from .exactfreq import (
    ZERO,
    ExactnessError,
    Frequency,
    FrequencyError,
    format_frequency,
    UncertainFrequency,
    linear_combine,
    parse_frequency,
    quadrature_scaled,
)

NODE_KINDS = ("reference", "oscillator", "comb", "counted", "constant")


class ChainError(ValueError):
    """A chain description that cannot be parsed or compiled."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column else "") + ": "
        super().__init__(where + message)


class UnderdeterminedError(ChainError):
    pass


class OverdeterminedError(ChainError):
    pass


class CyclicChainError(ChainError):
    pass


@dataclass(frozen=True)
class NodeDecl:
    name: str
    kind: str
    value: Optional[UncertainFrequency] = None
    line: int = 0


@dataclass(frozen=True)
class Offset:
    """Signed lock offset: a constant node or a literal frequency."""

    sign: int = 1
    const: Optional[str] = None
    literal: Optional[Frequency] = None


@dataclass(frozen=True)
class HarmonicLock:
    out: str
    source: str
    k: int
    offset: Optional[Offset] = None
    divider: Optional[int] = None
    line: int = 0


@dataclass(frozen=True)
class CombModeLock:
    out: str
    comb: str
    mode_index: int
    offset: Optional[Offset] = None
    divider: Optional[int] = None
    line: int = 0


@dataclass(frozen=True)
class BeatLock:
    """``counted = a - b``."""

    counted: str
    a: str
    b: str
    line: int = 0


LockDecl = Union[HarmonicLock, CombModeLock, BeatLock]


@dataclass
class ChainSpec:
    nodes: list[NodeDecl]
    locks: list[LockDecl]
    target: str

    def node(self, name: str) -> NodeDecl:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)


def rep_symbol(comb: str) -> str:
    return f"{comb}.f_rep"


def ceo_symbol(comb: str) -> str:
    return f"{comb}.f_ceo"


@dataclass(frozen=True)
class MeasurementEquation:
    """target = sum(terms[s] * s) + offset.

    ``offset`` collects literal lock offsets in exact uHz (a Fraction, since
    elimination may divide them). ``known`` holds the values and sigmas the
    chain file declares for its symbols.
    """

    target: str
    terms: Mapping[str, Fraction]
    offset: Fraction = Fraction(0)
    known: Mapping[str, UncertainFrequency] = field(default_factory=dict)

    def nonzero(self) -> dict[str, Fraction]:
        return {s: c for s, c in self.terms.items() if c != 0}

    def coefficient(self, symbol: str) -> Fraction:
        return self.terms.get(symbol, Fraction(0))

    def default_assignment(self) -> dict[str, Frequency]:
        return {s: u.value for s, u in self.known.items()}

    def default_sigmas(self) -> dict[str, Frequency]:
        return {s: u.sigma for s, u in self.known.items()}

    def records(self) -> list[dict]:
        """Flat rows for reports: symbol, numerator, denominator, sigma."""
        rows = []
        for s in sorted(self.terms):
            c = self.terms[s]
            sigma = self.known[s].sigma if s in self.known else None
            rows.append({
                "symbol": s,
                "num": c.numerator,
                "den": c.denominator,
                "sigma_hz": format_frequency(sigma)[:-3] if sigma is not None else "",
            })
        return rows


# --------------------------------------------------------------------------
# parsing

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_FREQ = r"[+-]?\d+(?:\.\d+)?\s*(?:[kMGT]?Hz)?"
_OFFSET = rf"(?:\s*(?P<osign>[+-])\s*(?P<offset>{_NAME}|\d+(?:\.\d+)?\s*(?:[kMGT]?Hz)?))?"
_DIV = r"(?:\s+div\s+(?P<div>\d+))?"

_PATTERNS = {
    "ref": re.compile(rf"ref\s+(?P<name>{_NAME})\s+(?P<value>{_FREQ})(?:\s+sigma\s+(?P<sigma>{_FREQ}))?$"),
    "const": re.compile(rf"const\s+(?P<name>{_NAME})\s+(?P<value>{_FREQ})$"),
    "osc": re.compile(rf"osc\s+(?P<name>{_NAME})$"),
    "comb": re.compile(rf"comb\s+(?P<name>{_NAME})\s+rep\s+(?P<value>{_FREQ})(?:\s+sigma\s+(?P<sigma>{_FREQ}))?$"),
    "counted": re.compile(rf"counted\s+(?P<name>{_NAME})$"),
    "harmonic": re.compile(rf"lock\s+(?P<out>{_NAME})\s*=\s*(?P<k>[+-]?\d+)\s*\*\s*(?P<src>{_NAME}){_OFFSET}{_DIV}$"),
    "mode": re.compile(rf"lock\s+(?P<out>{_NAME})\s*=\s*mode\(\s*(?P<comb>{_NAME})\s*,\s*(?P<m>[+-]?\d+)\s*\){_OFFSET}{_DIV}$"),
    "beat": re.compile(rf"beat\s+(?P<counted>{_NAME})\s*=\s*(?P<a>{_NAME})\s*-\s*(?P<b>{_NAME})$"),
    "target": re.compile(rf"target\s+(?P<name>{_NAME})$"),
}

_NODE_KEYWORDS = {
    "ref": "reference",
    "const": "constant",
    "osc": "oscillator",
    "comb": "comb",
    "counted": "counted",
}


def _col(raw: str, token: str) -> int:
    i = re.search(rf"(?<![A-Za-z0-9_]){re.escape(token)}(?![A-Za-z0-9_])", raw)
    return i.start() + 1 if i else 1


def _freq(text: str, lineno: int, raw: str) -> Frequency:
    try:
        return parse_frequency(text)
    except (FrequencyError, OverflowError) as exc:
        raise ChainError(str(exc), lineno, _col(raw, text.split()[0])) from None


def _offset(m: re.Match, lineno: int, raw: str) -> Optional[Offset]:
    if m.group("offset") is None:
        return None
    sign = -1 if m.group("osign") == "-" else 1
    tok = m.group("offset")
    if re.fullmatch(_NAME, tok) and not re.fullmatch(r"[kMGT]?Hz", tok):
        return Offset(sign, const=tok)
    return Offset(sign, literal=_freq(tok, lineno, raw))


def parse_chain(text: str) -> ChainSpec:
    """Parse chain text and check it for structural validity."""
    nodes: dict[str, NodeDecl] = {}
    locks: list[LockDecl] = []
    targets: list[tuple[str, int, str]] = []
    raw_lines: dict[int, str] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        raw_lines[lineno] = raw
        keyword = line.split()[0]
        if keyword in _NODE_KEYWORDS:
            m = _PATTERNS[keyword].match(line)
            if m is None:
                raise ChainError(f"malformed '{keyword}' declaration", lineno, _col(raw, keyword))
            name = m.group("name")
            if name in nodes:
                raise ChainError(
                    f"duplicate node '{name}' (first declared on line {nodes[name].line})",
                    lineno, _col(raw, name),
                )
            value = None
            if keyword in ("ref", "const", "comb"):
                sigma_text = m.groupdict().get("sigma")
                sigma = _freq(sigma_text, lineno, raw) if sigma_text else ZERO
                if sigma.ticks < 0:
                    raise ChainError("sigma must be non-negative", lineno, _col(raw, "sigma"))
                value = UncertainFrequency(_freq(m.group("value"), lineno, raw), sigma)
            nodes[name] = NodeDecl(name, _NODE_KEYWORDS[keyword], value, lineno)
        elif keyword == "lock":
            m = _PATTERNS["harmonic"].match(line)
            if m is not None:
                k = int(m.group("k"))
                if k < 1:
                    raise ChainError("harmonic order must be >= 1", lineno, _col(raw, m.group("k")))
                div = int(m.group("div")) if m.group("div") else None
                locks.append(HarmonicLock(m.group("out"), m.group("src"), k,
                                          _offset(m, lineno, raw), div, lineno))
                continue
            m = _PATTERNS["mode"].match(line)
            if m is not None:
                idx = int(m.group("m"))
                if idx < 0:
                    raise ChainError("mode index must be >= 0", lineno, _col(raw, m.group("m")))
                div = int(m.group("div")) if m.group("div") else None
                locks.append(CombModeLock(m.group("out"), m.group("comb"), idx,
                                          _offset(m, lineno, raw), div, lineno))
                continue
            raise ChainError("malformed lock", lineno, _col(raw, "lock"))
        elif keyword == "beat":
            m = _PATTERNS["beat"].match(line)
            if m is None:
                raise ChainError("malformed beat", lineno, _col(raw, "beat"))
            locks.append(BeatLock(m.group("counted"), m.group("a"), m.group("b"), lineno))
        elif keyword == "target":
            m = _PATTERNS["target"].match(line)
            if m is None:
                raise ChainError("malformed target", lineno, _col(raw, "target"))
            targets.append((m.group("name"), lineno, raw))
        else:
            raise ChainError(f"unknown keyword '{keyword}'", lineno, _col(raw, keyword))

    if not targets:
        raise ChainError("no target")
    if len(targets) > 1:
        name, lineno, raw = targets[1]
        raise ChainError("more than one target", lineno, _col(raw, "target"))

    def need(name: str, kinds: tuple[str, ...], lineno: int, what: str) -> None:
        raw = raw_lines.get(lineno, "")
        if name not in nodes:
            raise ChainError(f"undeclared node '{name}'", lineno, _col(raw, name))
        if nodes[name].kind not in kinds:
            raise ChainError(
                f"'{name}' is a {nodes[name].kind}; {what} must be one of {', '.join(kinds)}",
                lineno, _col(raw, name),
            )

    freq_kinds = ("reference", "oscillator", "counted", "constant")
    for lock in locks:
        if isinstance(lock, BeatLock):
            need(lock.counted, ("counted",), lock.line, "a beat result")
            need(lock.a, freq_kinds, lock.line, "a beat input")
            need(lock.b, freq_kinds, lock.line, "a beat input")
            continue
        need(lock.out, ("oscillator",), lock.line, "a lock output")
        if isinstance(lock, HarmonicLock):
            need(lock.source, freq_kinds, lock.line, "a lock input")
        else:
            need(lock.comb, ("comb",), lock.line, "a mode-lock input")
        if lock.offset is not None and lock.offset.const is not None:
            need(lock.offset.const, ("constant",), lock.line, "a lock offset")

    target, lineno, raw = targets[0]
    need(target, freq_kinds, lineno, "the target")
    return ChainSpec(list(nodes.values()), locks, target)


# --------------------------------------------------------------------------
# compilation

def _check_acyclic(spec: ChainSpec) -> None:
    graph: dict[str, set[str]] = {}
    for lock in spec.locks:
        if isinstance(lock, HarmonicLock):
            graph.setdefault(lock.out, set()).add(lock.source)
    try:
        tuple(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise CyclicChainError("cyclic lock graph: " + " -> ".join(cycle)) from None


def _lock_row(lock: LockDecl) -> tuple[dict[str, Fraction], Fraction]:
    """Constraint as sum(row[v] * v) + literal = 0."""
    row: dict[str, Fraction] = {}
    literal = Fraction(0)

    def add(name: str, c: Fraction | int) -> None:
        row[name] = row.get(name, Fraction(0)) + c

    if isinstance(lock, BeatLock):
        add(lock.counted, 1)
        add(lock.a, -1)
        add(lock.b, 1)
        return row, literal
    add(lock.out, 1)
    if isinstance(lock, HarmonicLock):
        add(lock.source, -lock.k)
    else:
        add(ceo_symbol(lock.comb), -1)
        add(rep_symbol(lock.comb), -lock.mode_index)
    off = lock.offset
    if off is not None:
        if off.const is not None:
            add(off.const, -off.sign)
        else:
            literal -= off.sign * off.literal.ticks
    return row, literal


def compile_equation(spec: ChainSpec) -> MeasurementEquation:
    """Eliminate every oscillator and return the target's linear form.

    Unknowns are the oscillators plus each comb's offset frequency. Rows are
    reduced by exact Gauss-Jordan elimination with pivots restricted to
    unknown columns: oscillators in declaration order, then comb offsets
    sorted by name. An oscillator left without a pivot is underdetermined;
    a row that reduces to a relation among known symbols only is an
    over-constrained chain. A comb offset that no lock pins stays a symbol.
    """
    _check_acyclic(spec)
    kinds = {n.name: n.kind for n in spec.nodes}
    combs = sorted(n.name for n in spec.nodes if n.kind == "comb")
    oscs = [n.name for n in spec.nodes if n.kind == "oscillator"]
    unknowns = oscs + [ceo_symbol(c) for c in combs]

    rows = []
    for lock in spec.locks:
        row, lit = _lock_row(lock)
        rows.append(({k: v for k, v in row.items() if v != 0}, lit, lock.line))

    pivots: dict[str, int] = {}
    used: set[int] = set()
    for col in unknowns:
        p = next((i for i, (r, _, _) in enumerate(rows) if i not in used and r.get(col)), None)
        if p is None:
            continue
        used.add(p)
        prow, plit, pline = rows[p]
        scale = prow[col]
        prow = {k: v / scale for k, v in prow.items()}
        plit = plit / scale
        rows[p] = (prow, plit, pline)
        for i, (r, lit, line) in enumerate(rows):
            if i == p or not r.get(col):
                continue
            f = r[col]
            merged = dict(r)
            for k, v in prow.items():
                merged[k] = merged.get(k, Fraction(0)) - f * v
            rows[i] = ({k: v for k, v in merged.items() if v != 0}, lit - f * plit, line)
        pivots[col] = p

    missing = [o for o in oscs if o not in pivots]
    if missing:
        raise UnderdeterminedError(
            "underdetermined: no lock fixes " + ", ".join(f"'{m}'" for m in missing)
        )
    for i, (r, lit, line) in enumerate(rows):
        if i in used:
            continue
        if r or lit:
            raise OverdeterminedError(
                "overdetermined: lock imposes an inconsistent relation among known quantities", line
            )
        raise OverdeterminedError("overdetermined: redundant lock", line)

    target = spec.target
    if target in pivots:
        prow, plit, _ = rows[pivots[target]]
        terms = {k: -v for k, v in prow.items() if k != target}
        offset = -plit
    else:
        terms = {target: Fraction(1)}
        offset = Fraction(0)
    for k in terms:
        if k in pivots:  # cannot happen after full reduction
            raise AssertionError(f"unknown {k} survived elimination")

    for c in combs:
        terms.setdefault(rep_symbol(c), Fraction(0))
        terms.setdefault(ceo_symbol(c), Fraction(0))

    known: dict[str, UncertainFrequency] = {}
    for n in spec.nodes:
        if n.kind in ("reference", "constant"):
            known[n.name] = n.value
        elif n.kind == "comb":
            known[rep_symbol(n.name)] = n.value
    terms = {k: v for k, v in sorted(terms.items())}
    return MeasurementEquation(target, terms, offset, known)


def evaluate(eq: MeasurementEquation, assignment: Mapping[str, Frequency]) -> Frequency:
    """Exact value of the target for the given symbol values."""
    missing = [s for s in eq.nonzero() if s not in assignment]
    if missing:
        raise KeyError("no value for " + ", ".join(missing))
    if eq.offset.denominator != 1:
        raise ExactnessError(f"literal offset {eq.offset} uHz is not whole")
    f = linear_combine((c, assignment[s]) for s, c in eq.nonzero().items())
    return Frequency(f.ticks + int(eq.offset))


def propagate_uncertainty(eq: MeasurementEquation, sigmas: Mapping[str, Frequency]) -> Frequency:
    """Quadrature sum of |coefficient| * sigma over the symbols given."""
    items = []
    for s, sigma in sigmas.items():
        if sigma.ticks < 0:
            raise ValueError(f"negative sigma for {s}")
        items.append((abs(eq.coefficient(s)), sigma))
    return quadrature_scaled(items)


def load_chain(path) -> ChainSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_chain(fh.read())
