"""
Command-line entry point.

    nlfv run <config> [--scheme S] [--dx D]
    nlfv convergence <config>
    nlfv weights --kernel K --eta E --dx D
    nlfv compare <config> [--level N]

``<config>`` is an INI file or the name of a shipped preset.  Outputs go to
``--out-dir``, else ``$NLFV_OUT_DIR``, else the working directory.  Every
command ends with a ``summary:`` line on stderr; the exit code is nonzero
iff an error occurred or an invariant check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from nonlocal_fv.config import (
    ConfigError, RunConfig, StudyConfig, list_presets, parse_config, parse_scheme_choice,
)
from nonlocal_fv.diagnostics import RunReport, format_float
from nonlocal_fv.experiments import (
    build_setup, compute_reference, entropy_ks_for, execute, run_study,
)
from nonlocal_fv.model import get_kernel
from nonlocal_fv.plotting import Series, emit_svg_plot
from nonlocal_fv.quadrature import compute_weights

OUT_DIR_ENV = "NLFV_OUT_DIR"

log = logging.getLogger("nlfv")


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _columns_csv(header: Sequence[str], cols: Sequence[np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([format_float(v) for v in row])
    return buf.getvalue()


def _summary(status: str, command: str, **fields) -> None:
    parts = [f"status={status}", f"command={command}"]
    parts += [f"{k}={v}" for k, v in fields.items()]
    print("summary: " + " ".join(parts), file=sys.stderr)


def _strict_flag(args) -> Optional[bool]:
    return args.strict


# {{{ commands

def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if isinstance(cfg, StudyConfig):
        if not args.scheme:
            raise ConfigError(["study configs need --scheme for a single run"], args.config)
        cfg = cfg.base
    if args.scheme:
        cfg = replace(cfg, scheme=parse_scheme_choice(args.scheme))
    if args.dx:
        cfg = replace(cfg, dx=args.dx)
    if args.t_end is not None:
        cfg = replace(cfg, t_end=args.t_end)

    setup = build_setup(cfg, strict=_strict_flag(args))
    spacing = args.entropy_spacing if args.entropy_spacing is not None else cfg.entropy_spacing
    ks = entropy_ks_for(setup, spacing) if spacing else None
    out = execute(setup, entropy_ks=ks)
    d = _out_dir(args)

    sol = _write(d / (cfg.csv or "solution.csv"),
                 _columns_csv(("x", "rho"), (setup.grid.centers, out.state.cells)))
    steps = _write(d / (cfg.steps_csv or "steps.csv"), out.report.to_csv())
    print(sol)
    print(steps)
    svg = args.svg or cfg.svg
    if svg:
        print(emit_svg_plot([Series(cfg.scheme.label, setup.grid.centers, out.state.cells)],
                            "x", "rho", d / svg, title=f"t = {out.state.time:g}"))

    rep = out.report
    for f in rep.failures[:20]:
        log.error(f)
    _summary("ok" if rep.passed else "fail", "run", scheme=cfg.scheme.label,
             dx=format_float(setup.grid.dx), lam=format_float(setup.lam),
             within_cfl=setup.within_cfl, steps=out.state.step_index,
             failures=len(rep.failures), min=format_float(rep.min_of("min")),
             max=format_float(rep.max_of("max")),
             entropy_max=format_float(rep.max_of("entropy_violation_max")))
    return 0 if rep.passed else 1


def cmd_convergence(args) -> int:
    study = parse_config(args.config)
    if not isinstance(study, StudyConfig):
        raise ConfigError(["convergence needs a config with a [study] section"], args.config)
    d = _out_dir(args)
    res = run_study(study, cache_dir=d / ".reference-cache", strict=_strict_flag(args),
                    progress=lambda m: log.info(m))
    path = _write(d / (args.output or "errors.csv"), res.table.to_csv())
    print(path)
    failed = []
    for (label, n), o in res.outcomes.items():
        if not o.report.passed:
            failed.append(f"{label}@n={n}")
            log.error("%s n=%d: %s", label, n, o.report.failures[0])
    _summary("ok" if not failed else "fail", "convergence", table=path.name,
             runs=len(res.outcomes), failed_runs=",".join(failed) or "none")
    return 0 if not failed else 1


def cmd_weights(args) -> int:
    w = compute_weights(get_kernel(args.kernel), args.eta, args.dx)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("k", "gamma_k"))
    for k, g in zip(w.indices, w.weights):
        wr.writerow((int(k), format_float(g)))
    wr.writerow(("weight_sum", format_float(w.weight_sum)))
    if args.output:
        print(_write(_out_dir(args) / args.output, buf.getvalue()))
    else:
        sys.stdout.write(buf.getvalue())
    _summary("ok", "weights", kernel=args.kernel, n_weights=len(w.weights),
             weight_sum=format_float(w.weight_sum))
    return 0


def cmd_compare(args) -> int:
    study = parse_config(args.config)
    if not isinstance(study, StudyConfig):
        raise ConfigError(["compare needs a config with a [study] section"], args.config)
    n = study.levels[-1] if args.level is None else args.level
    d = _out_dir(args)
    strict = _strict_flag(args)

    ref_setup = build_setup(replace(study.base, scheme=study.reference,
                                    dx=study.dx_at(study.reference_level)), strict=strict)
    ref = compute_reference(ref_setup, d / ".reference-cache")
    series: List[Series] = []
    cols = []
    header = ["x"]
    reports: List[RunReport] = []
    x = None
    for choice in study.schemes:
        setup = build_setup(replace(study.base, scheme=choice, dx=study.dx_at(n)), strict=strict)
        out = execute(setup)
        reports.append(out.report)
        x = setup.grid.centers
        series.append(Series(choice.label, x, out.state.cells))
        cols.append(out.state.cells)
        header.append(choice.label)
    series.append(Series("reference", ref_setup.grid.centers, ref.cells))

    path = _write(d / (args.output or "compare.csv"), _columns_csv(header, [x] + cols))
    _write(d / "reference.csv", _columns_csv(("x", "rho"), (ref_setup.grid.centers, ref.cells)))
    svg = emit_svg_plot(series, "x", "rho", d / (args.svg or "compare.svg"),
                        title=f"dx = {study.dx_at(n):g}, t = {study.base.t_end:g}")
    print(path)
    print(svg)
    failures = sum(len(r.failures) for r in reports)
    _summary("ok" if failures == 0 else "fail", "compare", level=n, failures=failures)
    return 0 if failures == 0 else 1

# }}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlfv", description=__doc__.split("\n\n")[0].strip())
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=None,
                      help="reject step ratios above the CFL bound (overrides the config)")
    mode.add_argument("--permissive", dest="strict", action="store_false",
                      help="warn about step ratios above the CFL bound and proceed")
    p.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or .)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    presets = ", ".join(list_presets())
    r = sub.add_parser("run", help="single simulation", description=f"presets: {presets}")
    r.add_argument("config")
    r.add_argument("--scheme", help="scheme name or name:alpha (required for study configs)")
    r.add_argument("--dx", type=float)
    r.add_argument("--t-end", type=float)
    r.add_argument("--entropy-spacing", type=float,
                   help="check the discrete entropy inequality on a k grid of this spacing")
    r.add_argument("--svg")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("convergence", help="L1 error table against a fine reference")
    c.add_argument("config")
    c.add_argument("--output", help="CSV file name (default errors.csv)")
    c.set_defaults(func=cmd_convergence)

    w = sub.add_parser("weights", help="quadrature weights of a kernel")
    w.add_argument("--kernel", required=True)
    w.add_argument("--eta", type=float, required=True)
    w.add_argument("--dx", type=float, required=True)
    w.add_argument("--output", help="CSV file name (default: stdout)")
    w.set_defaults(func=cmd_weights)

    m = sub.add_parser("compare", help="all study schemes on one grid plus the reference")
    m.add_argument("config")
    m.add_argument("--level", type=int, help="refinement level (default: finest study level)")
    m.add_argument("--output", help="CSV file name (default compare.csv)")
    m.add_argument("--svg", help="SVG file name (default compare.svg)")
    m.set_defaults(func=cmd_compare)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {exc.source}: {e}", file=sys.stderr)
        _summary("error", args.command, kind="config", errors=len(exc.errors))
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _summary("error", args.command, kind=type(exc).__name__)
        return 2


if __name__ == "__main__":
    sys.exit(main())
