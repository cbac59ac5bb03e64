"""Command line: compile, simulate, analyze, reproduce, verify.

Exit codes: 0 success, 2 chain or scenario error, 3 data error,
4 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from .analysis import DataError, FitError
from .chainspec import ChainError, compile_equation, evaluate, load_chain, propagate_uncertainty
from .exactfreq import Frequency, format_rounded
from .report import equation_csv, render, summary_lines, write_report
from .scenario import (
    ScenarioError,
    analyze,
    assignment,
    data_path,
    load_scenario,
    load_sessions,
    simulate,
    truth_target,
    write_manifest,
    write_session,
)

log = logging.getLogger("freqchain")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _scenario(args):
    scn = load_scenario(args.scenario or data_path("paper.scenario"))
    if getattr(args, "chain", None):
        scn = replace(scn, chain_path=Path(args.chain))
    if getattr(args, "seed", None) is not None:
        scn = scn.with_seed(args.seed)
    if getattr(args, "sessions", None) is not None:
        scn = replace(scn, sessions=args.sessions)
    return scn


def cmd_compile(args) -> int:
    eq = compile_equation(load_chain(args.chain or data_path("indium.chain")))
    if args.format == "csv":
        text = equation_csv(eq)
    else:
        text = render({"target": eq.target, "equation": eq.records(),
                       "offset_uhz": str(eq.offset)}, "json")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"equation.{args.format}").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = _scenario(args)
    scn.equation()  # fail early on a broken chain
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = simulate(scn)
    for d in data:
        write_session(out, d)
    write_manifest(out, scn, data)
    jumps = [sum(r.jumped for r in d.records) for d in data]
    print(f"wrote {len(data)} sessions to {out} (jumps per session: {', '.join(map(str, jumps))})")
    return EXIT_OK


def cmd_analyze(args) -> int:
    scn = _scenario(args)
    data = load_sessions(args.records, scn.gate, scn.scan.spectra)
    if not data:
        print(f"no data: no session files in {args.records}", file=sys.stderr)
        return EXIT_DATA
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = analyze(scn, data)
    if args.out:
        write_report(Path(args.out), rep, args.format)
    print("\n".join(summary_lines(rep)))
    return EXIT_OK


def _group(text: str) -> str:
    """'1267402452899.92 kHz' -> '1 267 402 452 899.92 kHz'."""
    number, unit = text.split(" ")
    whole, _, frac = number.partition(".")
    groups = []
    while len(whole) > 3:
        groups.insert(0, whole[-3:])
        whole = whole[:-3]
    groups.insert(0, whole)
    return " ".join(groups) + (f".{frac}" if frac else "") + f" {unit}"


def cmd_reproduce(args) -> int:
    try:
        scn = _scenario(args)
        eq = scn.equation()
    except (ChainError, ScenarioError) as exc:
        print(f"FAIL: {exc}")
        return EXIT_CONFIG
    pub_value = Frequency.from_hz(scn.published.get("f_target", "1267402452899.92 kHz"))
    pub_sigma = Frequency.from_hz(scn.published.get("sigma", "0.23 kHz"))
    pub_mean = Frequency.from_hz(scn.published.get("mean_fB", "49174925 Hz"))
    values = assignment(scn, eq)
    values[scn.counted] = pub_mean
    exact = evaluate(eq, values)
    sigmas = {k: v for k, v in eq.default_sigmas().items() if v}
    sigmas[scn.counted] = scn.reference_sigma
    budget = propagate_uncertainty(eq, sigmas)
    frac = budget.ticks / exact.ticks

    checks = []
    shown = format_rounded(exact, "kHz", 2)
    checks.append(("published inputs give the published value",
                   shown == format_rounded(pub_value, "kHz", 2), f"{exact} -> {_group(shown)}"))
    checks.append(("quadrature budget", format_rounded(budget, "kHz", 2) == format_rounded(pub_sigma, "kHz", 2)
                   and 1.80e-13 <= frac <= 1.86e-13, f"{budget}, {frac:.3g} fractional"))

    truth = truth_target(scn, eq)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rep = analyze(scn, simulate(scn), eq)
    except (DataError, FitError) as exc:
        print(f"FAIL: {exc}")
        return EXIT_DATA
    got = rep.final.f_target
    dev = abs((got.value - truth).ticks)
    stat = rep.final.stat_sigma
    checks.append(("simulated sessions recover the injected target",
                   dev <= 3 * stat.ticks and dev <= got.sigma.ticks,
                   f"{_group(format_rounded(got.value, 'kHz', 2))} ({format_rounded(got.sigma, 'kHz', 2)}), "
                   f"off by {Frequency(dev)} vs 3 x {stat} statistical"))

    for name, ok, detail in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    verdict = all(ok for _, ok, _ in checks)
    print(f"f_In+ = {_group(format_rounded(pub_value, 'kHz', 2))} (paper) / recovered within budget: "
          f"{'PASS' if verdict else 'FAIL'}")
    return EXIT_OK if verdict else EXIT_ACCEPTANCE


def cmd_verify(args) -> int:
    from .acceptance import run_all

    skip = set(args.skip or [])
    results = run_all(skip)
    for c in results:
        print(c.line())
    failed = [c for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_OK if not failed else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freqchain", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--scenario", help="scenario file (default: shipped paper.scenario)")
        sp.add_argument("--chain", help="chain file overriding the scenario's")
        if seed:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--sessions", type=int)

    sp = sub.add_parser("compile", help="compile a chain file to its measurement equation")
    sp.add_argument("--chain", help="chain file (default: shipped indium.chain)")
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("simulate", help="write simulated beat and excitation records")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="reduce record files to the final report")
    sp.add_argument("records", help="directory written by 'simulate'")
    common(sp)
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("reproduce", help="end-to-end run of the published measurement")
    common(sp)
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("verify", help="run the acceptance criteria")
    sp.add_argument("--skip", type=int, action="append", help="criterion number to skip")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ChainError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FitError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
