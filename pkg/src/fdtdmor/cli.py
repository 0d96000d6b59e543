"""Command-line driver.

    fdtdmor run SCENARIO [SCENARIO ...] [-o DIR] [--jobs N]
    fdtdmor compare REF CAND [--resonance-tol X] [--s21-tol DB]
    fdtdmor eigen SCENARIO [--s-factor S] [--enforce/--no-enforce] [-o DIR]
    fdtdmor gen TEMPLATE [key=value ...] [-o FILE]

Exit status: 0 success, 1 configuration error, 2 divergence,
3 comparison threshold failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ComparisonError, ConfigError, FdtdMorError
from .pipeline import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_THRESHOLD,
    compare_runs,
    eigen_analysis,
    exit_code,
    format_timing_table,
    provenance_line,
    run_batch,
    run_scenario,
    time_step,
)
from .scenario import GENERATORS, generate, load_scenario

log = logging.getLogger("fdtdmor")


def _cmd_run(args) -> int:
    if len(args.scenarios) > 1:
        results = run_batch(args.scenarios, args.jobs, args.output)
        for code, message in results:
            print(message)
        return max(code for code, _ in results)
    result = run_scenario(args.scenarios[0], args.output)
    print(format_timing_table(result.timing), end="")
    for i, f in enumerate(result.resonances.freqs):
        print(f"resonance {i}: {f / 1e9:.6f} GHz")
    print(f"artifacts in {result.directory}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    report = compare_runs(args.reference, args.candidate, args.resonance_tol, args.s21_tol, args.max_count)
    text = report.text()
    print(text, end="")
    if args.report:
        Path(args.report).write_text(text)
    return EXIT_OK if report.passed else EXIT_THRESHOLD


def _cmd_eigen(args) -> int:
    from .plotting import plot_eigenvalues
    from .stability import write_eigen_csv

    config = load_scenario(args.scenario)
    s = config.s_factor if args.s_factor is None else args.s_factor
    result = eigen_analysis(config, enforce=args.enforce, s_factor=s)
    out = Path(args.output or config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    dt, _ = time_step(config, s)
    prov = provenance_line(config, dt, s)
    for label, vals in result.sets.items():
        write_eigen_csv(out / f"eigenvalues_{label}.csv", vals, prov)
        mags = np.abs(vals)
        print(f"{label:9s} {len(vals)} eigenvalues, max |lambda| = {mags.max():.12f},"
              f" max ||lambda| - 1| = {np.abs(mags - 1).max():.3e}")
    write_eigen_csv(out / "singular_values.csv", result.singular_values, prov + f" limit={result.limit:.12e}")
    print(f"singular values >= 2/dt: {result.violating} of {len(result.singular_values)}")
    plot_eigenvalues(result.sets, out / "eigenvalues.png", f"{config.name}, s = {s:g}")
    print(f"artifacts in {out}")
    return EXIT_OK


def _cmd_gen(args) -> int:
    params = {}
    for item in args.params:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}", "params")
        key, value = item.split("=", 1)
        params[key] = value
    config = generate(args.template, **params)
    text = config.to_yaml()
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdtdmor", description="Reduced-order FDTD beyond the CFL limit.")
    p.add_argument("--version", action="version", version=f"fdtdmor {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one or more scenario files")
    r.add_argument("scenarios", nargs="+")
    r.add_argument("-o", "--output", help="output directory (batch: parent of per-scenario directories)")
    r.add_argument("-j", "--jobs", type=int, default=1, help="concurrent scenarios in batch mode")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="compare two run directories or artifact files")
    c.add_argument("reference")
    c.add_argument("candidate")
    c.add_argument("--resonance-tol", type=float, default=0.01, help="relative resonance error threshold")
    c.add_argument("--s21-tol", type=float, default=1.0, help="max |dS21| in dB")
    c.add_argument("--max-count", type=int, default=None, help="compare only the first N reference resonances")
    c.add_argument("--report", help="also write the report to this file")
    c.set_defaults(func=_cmd_compare)

    e = sub.add_parser("eigen", help="dump update eigenvalues and scaled singular values")
    e.add_argument("scenario")
    e.add_argument("--s-factor", type=float, default=None)
    g = e.add_mutually_exclusive_group()
    g.add_argument("--enforce", dest="enforce", action="store_true", default=None)
    g.add_argument("--no-enforce", dest="enforce", action="store_false")
    e.add_argument("-o", "--output")
    e.set_defaults(func=_cmd_eigen)

    t = sub.add_parser("gen", help="write a scenario from a built-in template")
    t.add_argument("template", help=f"one of {', '.join(sorted(GENERATORS))}")
    t.add_argument("params", nargs="*", help="template parameters as key=value")
    t.add_argument("-o", "--output")
    t.set_defaults(func=_cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors are configuration errors; exit status 2 is reserved for divergence
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ComparisonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FdtdMorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
