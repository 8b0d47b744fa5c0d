"""
Discrete estimates of the scheme as runtime checks, plus L1 errors and EOC tables.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from nonlocal_fv.flux import FluxScheme, SchemeConstants, kruzkov_numerical_entropy_flux
from nonlocal_fv.model import KernelSpec, ModelSpec
from nonlocal_fv.quadrature import KernelWeights
from nonlocal_fv.solver import (
    ClassicLxF,
    GridSpec,
    SolverState,
    StepReport,
    constants_for,
    interface_fluxes,
    total_variation,
)

__all__ = [
    "total_variation", "tv_bound", "entropy_residual", "EntropyResidual", "l1_error",
    "eoc", "StepRecord", "RunReport", "InvariantMonitor", "check_step_invariants",
    "ErrorTable", "DiagnosticsError", "format_float",
]

REL_SLACK = 1e-12
TIME_CONTINUITY_SLACK = 1e-10
CONSERVATION_TOL = 1e-11


class DiagnosticsError(ValueError):
    pass


def format_float(x: Optional[float]) -> str:
    """Shortest round-trip repr (at most 17 significant digits); empty for None."""
    if x is None:
        return ""
    return repr(float(x))


def _slack(*vals: float) -> float:
    return REL_SLACK * max(1.0, *(abs(v) for v in vals))


# {{{ total variation

def tv_bound(t: float, model: ModelSpec, kernel: KernelSpec, eta: float, tv0: float) -> float:
    """``exp(t w(0) (||v'|| (2||g|| + ||g'|| ||rho||) + 2||v''|| ||g|| ||rho||)) TV0``."""
    m = model
    rate = kernel.omega_at_zero(eta) * (
        m.bound_dv * (2 * m.bound_g + m.bound_dg * m.rho_norm)
        + 2 * m.bound_ddv * m.bound_g * m.rho_norm)
    return math.exp(t * rate) * tv0

# }}}


# {{{ entropy

@dataclass(frozen=True)
class EntropyResidual:
    """Max over cells and ``k`` of the discrete entropy residual.

    ``full`` uses the factor ``lam`` on the nonlocal source term, ``half`` the
    factor ``lam/2``.  Nonpositive values certify the inequality.
    """

    full: float
    half: float
    argmax_k_full: float


def entropy_residual(prev: SolverState, nxt: SolverState, ks: Sequence[float],
                     scheme: FluxScheme, weights: KernelWeights, grid: GridSpec
                     ) -> EntropyResidual:
    if isinstance(scheme, ClassicLxF):
        raise DiagnosticsError("the entropy residual is defined for factorized fluxes only")
    if nxt.step_index != prev.step_index + 1 or len(nxt.cells) != len(prev.cells):
        raise DiagnosticsError("states are not one step apart")
    dt = nxt.time - prev.time
    if not dt > 0:
        raise DiagnosticsError("states are not one step apart")
    lam = dt / grid.dx
    ks = np.asarray(ks, dtype=float)
    if ks.size == 0:
        raise DiagnosticsError("no entropy levels given")

    _, V = interface_fluxes(prev.cells, scheme, weights, grid.boundary)   # j = -1 .. M-1
    p = prev.cells
    ext = np.concatenate([p[-1:], p, p[:1]]) if grid.boundary == "periodic" else \
        np.concatenate([p[:1], p, p[-1:]])
    K = ks[:, None]
    Fk = kruzkov_numerical_entropy_flux(ext[None, :-1], ext[None, 1:], K, V[None, :], scheme)
    base = (np.abs(nxt.cells[None, :] - K) - np.abs(p[None, :] - K)
            + lam * (Fk[:, 1:] - Fk[:, :-1]))
    source = lam * np.sign(nxt.cells[None, :] - K) * scheme.model.g(K) * np.diff(V)[None, :]
    full = base + source
    half = base + 0.5 * source
    i = np.unravel_index(int(np.argmax(full)), full.shape)
    return EntropyResidual(float(full.max()), float(half.max()), float(ks[i[0]]))


def entropy_levels(rho_min: float, rho_max: float, spacing: float = 0.05) -> np.ndarray:
    """``rho_min + i*spacing`` strictly inside ``(rho_min, rho_max)``."""
    n = int(math.ceil((rho_max - rho_min) / spacing - 1e-9)) - 1
    return np.round(rho_min + spacing * np.arange(1, max(n, 0) + 1), 12)

# }}}


# {{{ errors against references

def l1_error(coarse: SolverState | np.ndarray, reference: SolverState | np.ndarray,
             ratio: int, dx: Optional[float] = None, method: str = "average") -> float:
    """L1 distance after restricting the reference to the coarse grid.

    ``average`` groups ``ratio`` fine cells per coarse cell (edge-anchored
    nested grids).  ``point`` takes every ``ratio``-th fine value
    (center-anchored grids whose coarse centers are fine centers).
    """
    c = coarse.cells if isinstance(coarse, SolverState) else np.asarray(coarse, dtype=float)
    r = reference.cells if isinstance(reference, SolverState) else np.asarray(reference, dtype=float)
    if dx is None:
        if not isinstance(coarse, SolverState) or coarse.grid is None:
            raise DiagnosticsError("dx is required for bare arrays")
        dx = coarse.grid.dx
    if ratio < 1 or int(ratio) != ratio:
        raise DiagnosticsError(f"ratio must be a positive integer, got {ratio}")
    if method == "average":
        if len(r) != ratio * len(c):
            raise DiagnosticsError(
                f"grids not nested: {len(r)} reference cells vs {ratio}x{len(c)}")
        agg = r.reshape(len(c), ratio).mean(axis=1)
    elif method == "point":
        if len(r) != ratio * (len(c) - 1) + 1:
            raise DiagnosticsError(
                f"grids not nested: {len(r)} reference centers vs {len(c)} coarse centers")
        agg = r[::ratio]
    else:
        raise DiagnosticsError(f"unknown comparison method {method!r}")
    return float(dx * np.sum(np.abs(c - agg)))


def eoc(errors: Sequence[float]) -> List[Optional[float]]:
    """``log2(e_{n-1}/e_n)`` for ``n >= 1``; ``None`` where an error vanishes."""
    if len(errors) < 2:
        raise DiagnosticsError("need at least two errors")
    rates: List[Optional[float]] = []
    for a, b in zip(errors[:-1], errors[1:]):
        rates.append(math.log2(a / b) if a > 0 and b > 0 else None)
    return rates


@dataclass
class ErrorTable:
    """L1 errors per scheme over a ladder of halved ``dx``."""

    levels: List[int]
    dx: List[float]
    errors: Dict[str, List[float]]
    reference: str = ""

    def __post_init__(self):
        for a, b in zip(self.dx[:-1], self.dx[1:]):
            if abs(a / b - 2.0) > 1e-9:
                raise DiagnosticsError("dx must halve from row to row")

    def rates(self, scheme: str) -> List[Optional[float]]:
        e = self.errors[scheme]
        return [None] + (eoc(e) if len(e) >= 2 else [])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.errors)
        head = ["n", "dx"]
        for s in names:
            head += [f"{s}_l1_error", f"{s}_eoc"]
        w.writerow(head)
        rates = {s: self.rates(s) for s in names}
        for i, n in enumerate(self.levels):
            row = [str(n), format_float(self.dx[i])]
            for s in names:
                row += [format_float(self.errors[s][i]), format_float(rates[s][i])]
            w.writerow(row)
        return buf.getvalue()

# }}}


# {{{ per-step checks

@dataclass
class StepRecord:
    t: float
    min: float
    max: float
    l1: float
    tv: float
    tv_bound: float
    time_continuity_lhs: float
    time_continuity_rhs: float
    entropy_violation_max: Optional[float] = None
    entropy_violation_half: Optional[float] = None


STEP_COLUMNS = ("t", "min", "max", "l1", "tv", "tv_bound", "time_continuity_lhs",
                "time_continuity_rhs", "entropy_violation_max", "entropy_violation_half")


@dataclass
class RunReport:
    scheme: str
    dx: float
    lam: float
    model: str
    records: List[StepRecord] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    initial_l1: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def failed(self, check: str) -> bool:
        return any(f.startswith(check + ":") for f in self.failures)

    def max_of(self, column: str) -> Optional[float]:
        vals = [getattr(r, column) for r in self.records if getattr(r, column) is not None]
        return max(vals) if vals else None

    def min_of(self, column: str) -> Optional[float]:
        vals = [getattr(r, column) for r in self.records if getattr(r, column) is not None]
        return min(vals) if vals else None

    @property
    def conservation_drift(self) -> float:
        if not self.records or self.initial_l1 == 0:
            return 0.0
        return max(abs(r.l1 - self.initial_l1) for r in self.records) / self.initial_l1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for r in self.records:
            w.writerow([format_float(getattr(r, c)) for c in STEP_COLUMNS])
        return buf.getvalue()


def check_step_invariants(prev: SolverState, nxt: SolverState, step_report: StepReport,
                          constants: SchemeConstants, model: ModelSpec, grid: GridSpec,
                          report: RunReport, *, bounds, tv_limit: float,
                          check_conservation: bool = False) -> Dict[str, bool]:
    """Maximum principle, conservation, TV bound and time continuity for one step.

    ``bounds`` is ``(rho_m, rho_M)`` of the initial data; ``tv_limit`` the TV
    bound at ``nxt.time``.  A record is appended to ``report`` and failures
    are listed in ``report.failures``.
    """
    lo, hi = bounds
    dt = nxt.time - prev.time
    tv_prev = total_variation(prev.cells, grid.boundary)
    lhs = grid.dx * float(np.sum(np.abs(nxt.cells - prev.cells)))
    rhs = dt * (constants.norm_g_flux * model.bound_dv + constants.l1 + constants.l2) * tv_prev

    results = {
        "maximum_principle": (step_report.min >= lo - REL_SLACK
                              and step_report.max <= hi + REL_SLACK),
        "tv_bound": step_report.tv <= tv_limit + _slack(step_report.tv, tv_limit),
        "time_continuity": lhs <= rhs + TIME_CONTINUITY_SLACK,
    }
    if check_conservation and report.initial_l1 > 0:
        drift = abs(step_report.l1 - report.initial_l1) / report.initial_l1
        results["conservation"] = drift <= CONSERVATION_TOL

    report.records.append(StepRecord(
        t=nxt.time, min=step_report.min, max=step_report.max, l1=step_report.l1,
        tv=step_report.tv, tv_bound=tv_limit, time_continuity_lhs=lhs,
        time_continuity_rhs=rhs))

    for name, ok in results.items():
        if not ok:
            report.failures.append(
                f"{name}: step {nxt.step_index} t={nxt.time:.6g} "
                f"min={step_report.min:.17g} max={step_report.max:.17g} "
                f"tv={step_report.tv:.6g}/{tv_limit:.6g} tc={lhs:.6g}/{rhs:.6g}")
    return results


class InvariantMonitor:
    """Step callback for :func:`nonlocal_fv.solver.run` that fills a :class:`RunReport`.

    Entropy residuals are evaluated only when ``entropy_ks`` is given; the
    ``lam``-factor variant counts as a failure above ``REL_SLACK``, the
    ``lam/2`` variant is recorded only.
    """

    def __init__(self, model: ModelSpec, kernel: KernelSpec, weights: KernelWeights,
                 scheme, grid: GridSpec, initial: np.ndarray, *,
                 entropy_ks: Optional[Sequence[float]] = None,
                 check_conservation: bool = False, lam: Optional[float] = None):
        self.model = model
        self.kernel = kernel
        self.weights = weights
        self.scheme = scheme
        self.grid = grid
        self.constants = constants_for(scheme)
        initial = np.asarray(initial, dtype=float)
        self.bounds = (float(initial.min()), float(initial.max()))
        self.tv0 = total_variation(initial, grid.boundary)
        self.entropy_ks = None if entropy_ks is None else np.asarray(entropy_ks, dtype=float)
        self.check_conservation = check_conservation
        self.report = RunReport(scheme=scheme.name, dx=grid.dx,
                                lam=lam if lam is not None else (grid.lam or float("nan")),
                                model=model.name,
                                initial_l1=float(grid.dx * np.sum(np.abs(initial))))

    def __call__(self, prev: SolverState, nxt: SolverState, rep: StepReport) -> None:
        limit = tv_bound(nxt.time, self.model, self.kernel, self.weights.eta, self.tv0)
        check_step_invariants(prev, nxt, rep, self.constants, self.model, self.grid,
                              self.report, bounds=self.bounds, tv_limit=limit,
                              check_conservation=self.check_conservation)
        if self.entropy_ks is not None:
            res = entropy_residual(prev, nxt, self.entropy_ks, self.scheme, self.weights,
                                   self.grid)
            rec = self.report.records[-1]
            rec.entropy_violation_max = res.full
            rec.entropy_violation_half = res.half
            if res.full > REL_SLACK:
                self.report.failures.append(
                    f"entropy: step {nxt.step_index} residual {res.full:.3e} at k={res.argmax_k_full}")

# }}}
