"""
Turning configs into runs: setup construction, monitored execution and
convergence studies with a disk cache for reference solutions.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from nonlocal_fv import __version__
from nonlocal_fv.config import RunConfig, SchemeChoice, StudyConfig
from nonlocal_fv.diagnostics import ErrorTable, InvariantMonitor, RunReport, entropy_levels, l1_error
from nonlocal_fv.flux import SchemeError, make_scheme
from nonlocal_fv.model import (
    KernelSpec, ModelSpec, get_kernel, make_model, validate_model, velocity_from_name,
)
from nonlocal_fv.quadrature import KernelWeights, compute_weights
from nonlocal_fv.solver import (
    CLASSIC_LXF, ClassicLxF, GridSpec, Scheme, SolverState, cfl_max_lambda, classic_lxf_lambda,
    constants_for, initial_cells, run,
)

logger = logging.getLogger(__name__)


class SetupError(ValueError):
    pass


@dataclass
class RunSetup:
    config: RunConfig
    model: ModelSpec
    kernel: KernelSpec
    weights: KernelWeights
    scheme: Scheme
    grid: GridSpec
    cells: np.ndarray
    lam: float
    cfl_bound: float

    @property
    def within_cfl(self) -> bool:
        return self.lam <= self.cfl_bound * (1 + 1e-12)

    @property
    def label(self) -> str:
        return self.config.scheme.label


@dataclass
class RunOutcome:
    setup: RunSetup
    state: SolverState
    report: Optional[RunReport]


def build_model(cfg: RunConfig) -> ModelSpec:
    interval = cfg.interval if cfg.interval is not None else cfg.initial.bounds
    if cfg.g_coeffs is not None:
        return make_model(cfg.model_name, interval, g_coeffs=cfg.g_coeffs,
                          velocity=velocity_from_name(cfg.velocity))
    return make_model(cfg.model_name, interval)


def build_scheme(choice: SchemeChoice, model: ModelSpec) -> Scheme:
    if choice.name == CLASSIC_LXF:
        if choice.alpha is None or choice.alpha < model.bound_dg - 1e-12:
            raise SchemeError(f"{CLASSIC_LXF} needs alpha >= ||g'|| = {model.bound_dg:g}")
        return ClassicLxF(model, float(choice.alpha))
    return make_scheme(choice.name, model, choice.alpha)


def build_setup(cfg: RunConfig, *, strict: Optional[bool] = None) -> RunSetup:
    """Validate the model and build weights, scheme, step ratio and initial cells.

    Raises :class:`SetupError` when the step ratio exceeds the CFL bound and
    the run is strict (``strict`` overrides ``cfg.strict``).
    """
    if cfg.scheme is None:
        raise SetupError("no scheme selected")
    strict = cfg.strict if strict is None else strict
    model = build_model(cfg)
    kernel = get_kernel(cfg.kernel)
    check = validate_model(model, kernel, cfg.eta)
    if not check.passed:
        bad = [c.name for c in check.checks if c.passed is False]
        raise SetupError(f"model {model.name!r} violates the model assumptions: {', '.join(bad)}")
    weights = compute_weights(kernel, cfg.eta, cfg.dx)
    scheme = build_scheme(cfg.scheme, model)
    bound = cfl_max_lambda(constants_for(scheme), weights.gamma0, model)

    rule = cfg.lam
    if rule.kind == "fixed":
        lam = rule.value
    elif rule.kind == "cfl":
        lam = bound
    else:
        lam = classic_lxf_lambda(rule.value, weights.gamma0, model)
    if strict and lam > bound * (1 + 1e-12):
        raise SetupError(f"lambda={lam:.6g} exceeds the CFL bound {bound:.6g} "
                         f"for {cfg.scheme.label} at dx={cfg.dx:g} (strict mode)")

    grid = GridSpec(cfg.x_min, cfg.x_max, cfg.dx, cfg.t_end, lam, cfg.boundary, cfg.anchor)
    cells = initial_cells(cfg.initial, grid, cfg.sampling)
    return RunSetup(cfg, model, kernel, weights, scheme, grid, cells, lam, bound)


def execute(setup: RunSetup, *, monitor: bool = True,
            entropy_ks: Optional[np.ndarray] = None,
            check_conservation: bool = False) -> RunOutcome:
    mon = None
    if monitor:
        mon = InvariantMonitor(setup.model, setup.kernel, setup.weights, setup.scheme,
                               setup.grid, setup.cells, entropy_ks=entropy_ks,
                               check_conservation=check_conservation, lam=setup.lam)
    state = run(setup.model, setup.scheme, setup.weights, setup.grid, setup.cells,
                strict=False, monitor=mon)
    return RunOutcome(setup, state, mon.report if mon else None)


def entropy_ks_for(setup: RunSetup, spacing: float) -> np.ndarray:
    lo, hi = float(setup.cells.min()), float(setup.cells.max())
    return entropy_levels(lo, hi, spacing)


# {{{ studies

def reference_key(setup: RunSetup) -> str:
    cfg = setup.config
    desc = {
        "version": __version__,
        "model": [setup.model.name, list(setup.model.g_coeffs), setup.model.velocity.name,
                  setup.model.rho_min, setup.model.rho_max],
        "kernel": [cfg.kernel, cfg.eta],
        "scheme": cfg.scheme.label,
        "grid": [cfg.x_min, cfg.x_max, cfg.dx, cfg.t_end, setup.lam, cfg.boundary, cfg.anchor],
        "initial": [[p.lo, p.hi, p.value, list(p.closed)] for p in cfg.initial.pieces],
        "default": cfg.initial.default_value,
        "sampling": cfg.sampling,
    }
    blob = json.dumps(desc, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def compute_reference(setup: RunSetup, cache_dir: Optional[Path] = None) -> SolverState:
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"ref-{reference_key(setup)}.npz"
        if path.exists():
            with np.load(path) as z:
                logger.info("reference loaded from %s", path)
                return SolverState(float(z["time"]), z["cells"], int(z["steps"]), setup.grid)
    state = execute(setup, monitor=False).state
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, cells=state.cells, time=state.time, steps=state.step_index)
        tmp.replace(path)
    return state


@dataclass
class StudyResult:
    table: ErrorTable
    outcomes: Dict[Tuple[str, int], RunOutcome]
    reference: SolverState
    reference_setup: RunSetup

    def report(self, label: str, n: int) -> RunReport:
        return self.outcomes[(label, n)].report


def run_study(study: StudyConfig, *, cache_dir: Optional[Path] = None,
              strict: Optional[bool] = None, monitor: bool = True,
              entropy_spacing: Optional[float] = None,
              progress: Optional[Callable[[str], None]] = None) -> StudyResult:
    """Reference once, then every (scheme, level) pair; levels run sequentially."""
    say = progress or (lambda s: None)
    base = study.base
    ref_setup = build_setup(replace(base, scheme=study.reference,
                                    dx=study.dx_at(study.reference_level)), strict=strict)
    say(f"reference {study.reference.label} dx={ref_setup.grid.dx:g}")
    ref = compute_reference(ref_setup, cache_dir)

    outcomes: Dict[Tuple[str, int], RunOutcome] = {}
    errors: Dict[str, List[float]] = {}
    for choice in study.schemes:
        errs = []
        for n in study.levels:
            setup = build_setup(replace(base, scheme=choice, dx=study.dx_at(n)), strict=strict)
            ks = None
            if entropy_spacing is not None and not isinstance(setup.scheme, ClassicLxF):
                ks = entropy_ks_for(setup, entropy_spacing)
            out = execute(setup, monitor=monitor, entropy_ks=ks)
            outcomes[(choice.label, n)] = out
            ratio = 2 ** (study.reference_level - n)
            errs.append(l1_error(out.state, ref, ratio, method=study.comparison))
            say(f"{choice.label} n={n} error={errs[-1]:.6g}")
        errors[choice.label] = errs

    table = ErrorTable(list(study.levels), [study.dx_at(n) for n in study.levels], errors,
                       reference=f"{study.reference.label} dx={ref_setup.grid.dx!r}")
    return StudyResult(table, outcomes, ref, ref_setup)

# }}}
