"""
Explicit conservative finite-volume scheme for the nonlocal law

    rho_j^{n+1} = rho_j^n - lam (F_{j+1/2} - F_{j-1/2}),
    F_{j+1/2}   = G(rho_j, rho_{j+1}) V_j,
    V_j         = v(sum_k gamma_k rho_{j+k+1}).

Boundaries are handled with ghost cells: ``outflow_constant`` repeats the
outermost cell, ``periodic`` wraps around.  The domain must be wide enough
that the kernel window and the waves never reach an outflow boundary if
conservation is to be measured.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional, Tuple, Union

import numpy as np
from scipy import signal

from nonlocal_fv.flux import FluxScheme, SchemeConstants, scheme_constants
from nonlocal_fv.model import InitialData, ModelSpec, project_initial_data, sample_initial_data
from nonlocal_fv.quadrature import KernelWeights

logger = logging.getLogger(__name__)

BOUNDARIES = ("outflow_constant", "periodic")
ANCHORS = ("edges", "centers")
CLASSIC_LXF = "lax_friedrichs_classic"


class SolverError(RuntimeError):
    pass


class CFLViolation(SolverError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[x_min, x_max]``.

    With ``anchor="edges"`` the cells tile ``[x_min, x_max]`` exactly.  With
    ``anchor="centers"`` the cell centers are ``x_min + j dx`` for
    ``j = 0 .. (x_max - x_min)/dx``, so refined grids share every coarse
    center (needed for pointwise comparison against a reference).
    """

    x_min: float
    x_max: float
    dx: float
    t_end: float
    lam: Optional[float] = None
    boundary: str = "outflow_constant"
    anchor: str = "edges"

    def __post_init__(self):
        if not self.dx > 0:
            raise SolverError(f"dx must be positive, got {self.dx}")
        if not self.x_max > self.x_min:
            raise SolverError("x_max must exceed x_min")
        ratio = (self.x_max - self.x_min) / self.dx
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise SolverError(f"(x_max - x_min)/dx = {ratio} is not an integer")
        if self.lam is not None and not self.lam > 0:
            raise SolverError(f"lambda must be positive, got {self.lam}")
        if self.t_end < 0:
            raise SolverError("t_end must be nonnegative")
        if self.boundary not in BOUNDARIES:
            raise SolverError(f"unknown boundary {self.boundary!r}; use one of {BOUNDARIES}")
        if self.anchor not in ANCHORS:
            raise SolverError(f"unknown anchor {self.anchor!r}; use one of {ANCHORS}")

    @property
    def n_cells(self) -> int:
        n = int(round((self.x_max - self.x_min) / self.dx))
        return n + 1 if self.anchor == "centers" else n

    @property
    def centers(self) -> np.ndarray:
        j = np.arange(self.n_cells)
        if self.anchor == "centers":
            return self.x_min + j * self.dx
        return self.x_min + (j + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        c = self.centers
        return np.concatenate([c - 0.5 * self.dx, [c[-1] + 0.5 * self.dx]])

    def refined(self, factor: int) -> "GridSpec":
        return replace(self, dx=self.dx / factor)


@dataclass(frozen=True)
class SolverState:
    time: float
    cells: np.ndarray
    step_index: int = 0
    grid: Optional[GridSpec] = field(default=None, compare=False)

    def mass(self, dx: Optional[float] = None) -> float:
        dx = dx if dx is not None else self.grid.dx
        return float(dx * np.sum(np.abs(self.cells)))


@dataclass
class StepReport:
    fluxes: np.ndarray
    velocities: np.ndarray
    lam: float
    min: float
    max: float
    l1: float
    tv: float


@dataclass(frozen=True)
class ClassicLxF:
    """Lax-Friedrichs variant with the downstream velocity on the right state.

    Its interface flux is ``(g(rho_j) V_j + g(rho_{j+1}) V_{j+1} + alpha (rho_j - rho_{j+1}))/2``;
    the diffusion term is not scaled by the velocity.
    """

    model: ModelSpec
    alpha: float
    name: str = CLASSIC_LXF


Scheme = Union[FluxScheme, ClassicLxF]


def constants_for(scheme: Scheme) -> SchemeConstants:
    """Scheme constants; the classic variant borrows the Lax-Friedrichs closed forms."""
    if isinstance(scheme, ClassicLxF):
        m = scheme.model
        lip = m.bound_v * (scheme.alpha + m.bound_dg) / 2.0
        return SchemeConstants(lip, lip, m.bound_g + 0.5 * scheme.alpha * (m.rho_max - m.rho_min),
                               scheme.alpha)
    return scheme_constants(scheme, validate=False)


def cfl_max_lambda(constants: SchemeConstants, gamma0: float, model: ModelSpec) -> float:
    """Largest ``lam = dt/dx`` allowed: ``1 / (||G|| ||v'|| gamma0 + L1 + L2)``."""
    if not 0.0 <= gamma0 <= 1.0 + 1e-12:
        raise SolverError(f"gamma0 must lie in [0, 1], got {gamma0}")
    denom = constants.norm_g_flux * model.bound_dv * gamma0 + constants.l1 + constants.l2
    if not denom > 0:
        raise SolverError("CFL denominator vanishes")
    return 1.0 / denom


def classic_lxf_lambda(alpha: float, gamma0: float, model: ModelSpec) -> float:
    """Step ratio ``1 / (alpha + gamma0 ||g|| ||v'||)`` commonly paired with the classic variant."""
    return 1.0 / (alpha + gamma0 * model.bound_g * model.bound_dv)


# {{{ initial data

def initial_cells(data: InitialData, grid: GridSpec, method: str = "average") -> np.ndarray:
    """Cell values from piecewise-constant data: exact averages or center samples."""
    if method == "average":
        return project_initial_data(data, grid.edges)
    if method == "point":
        return sample_initial_data(data, grid.centers, grid.dx)
    raise SolverError(f"unknown initial-data method {method!r}; use 'average' or 'point'")

# }}}


# {{{ nonlocal velocity

def _ghosted(cells: np.ndarray, lo: int, hi: int, boundary: str) -> np.ndarray:
    """Cell values for global indices ``lo .. hi`` (inclusive) under the boundary policy."""
    m = len(cells)
    if lo >= 0 and hi < m:
        return cells[lo:hi + 1]
    idx = np.arange(lo, hi + 1)
    if boundary == "periodic":
        return cells[idx % m]
    # outflow_constant
    n_left = max(0, -lo)
    n_right = max(0, hi - (m - 1))
    core = cells[max(lo, 0):min(hi, m - 1) + 1]
    parts = []
    if n_left:
        parts.append(np.full(n_left, cells[0]))
    parts.append(core)
    if n_right:
        parts.append(np.full(n_right, cells[-1]))
    return np.concatenate(parts)


def kernel_averages(cells: np.ndarray, weights: KernelWeights, boundary: str,
                    j_lo: int, j_hi: int) -> np.ndarray:
    """``R_j = sum_k gamma_k rho_{j+k+1}`` for interfaces ``j = j_lo .. j_hi``."""
    lo = j_lo + weights.k_min + 1
    hi = j_hi + weights.k_max + 1
    seg = _ghosted(cells, lo, hi, boundary)
    w = weights.weights
    if len(w) == 1:
        return w[0] * seg
    return signal.correlate(seg, w, mode="valid", method="auto")


def interface_velocities(cells: np.ndarray, weights: KernelWeights, model: ModelSpec,
                         boundary: str, j_lo: int = -1, j_hi: Optional[int] = None) -> np.ndarray:
    if j_hi is None:
        j_hi = len(cells) - 1
    R = kernel_averages(cells, weights, boundary, j_lo, j_hi)
    V = model.v(R)
    if not np.all(np.isfinite(V)):
        bad = int(np.argmax(~np.isfinite(V)))
        raise SolverError(f"non-finite nonlocal velocity at interface {j_lo + bad}")
    return V


def nonlocal_velocity(state: Union[SolverState, np.ndarray], weights: KernelWeights,
                      model: ModelSpec, boundary: str = "outflow_constant") -> np.ndarray:
    """``V_j`` at the right interface of every cell, ``j = 0 .. M-1``."""
    cells = state.cells if isinstance(state, SolverState) else np.asarray(state, dtype=float)
    return interface_velocities(cells, weights, model, boundary, 0, len(cells) - 1)

# }}}


# {{{ time stepping

def _neighbors(cells: np.ndarray, boundary: str) -> np.ndarray:
    """``rho_{-1} .. rho_M``."""
    if boundary == "periodic":
        return np.concatenate([cells[-1:], cells, cells[:1]])
    return np.concatenate([cells[:1], cells, cells[-1:]])


def interface_fluxes(cells: np.ndarray, scheme: Scheme, weights: KernelWeights,
                     boundary: str) -> Tuple[np.ndarray, np.ndarray]:
    """Fluxes ``F_{j+1/2}`` and velocities ``V_j`` for ``j = -1 .. M-1``."""
    model = scheme.model
    m = len(cells)
    ext = _neighbors(cells, boundary)
    if isinstance(scheme, ClassicLxF):
        V = interface_velocities(cells, weights, model, boundary, -1, m)
        gv = model.g(ext) * V
        F = 0.5 * (gv[:-1] + gv[1:] + scheme.alpha * (ext[:-1] - ext[1:]))
        return F, V[:-1]
    V = interface_velocities(cells, weights, model, boundary, -1, m - 1)
    F = scheme.evaluate(ext[:-1], ext[1:], V)
    return F, V


def total_variation(cells: np.ndarray, boundary: str = "outflow_constant") -> float:
    """Sum of neighbor jumps; the periodic wrap-around jump is included."""
    cells = np.asarray(cells, dtype=float)
    tv = float(np.sum(np.abs(np.diff(cells))))
    if boundary == "periodic" and len(cells) > 1:
        tv += abs(float(cells[0] - cells[-1]))
    return tv


def _check_cfl(lam: float, scheme: Scheme, weights: KernelWeights, strict: bool) -> None:
    bound = cfl_max_lambda(constants_for(scheme), weights.gamma0, scheme.model)
    if lam > bound * (1 + 1e-12):
        msg = f"lambda={lam:.6g} exceeds the CFL bound {bound:.6g} for {scheme.name}"
        if strict:
            raise CFLViolation(msg)
        logger.warning(msg)


def step(state: SolverState, scheme: Scheme, weights: KernelWeights, grid: GridSpec,
         model: Optional[ModelSpec] = None, *, lam: Optional[float] = None,
         strict: bool = True, check_cfl: bool = True) -> Tuple[SolverState, StepReport]:
    """Advance one step of size ``lam * dx``."""
    if model is not None and model is not scheme.model:
        scheme = replace(scheme, model=model)
    lam = grid.lam if lam is None else lam
    if lam is None:
        raise SolverError("no step ratio given")
    if check_cfl:
        _check_cfl(lam, scheme, weights, strict)

    cells = state.cells
    F, V = interface_fluxes(cells, scheme, weights, grid.boundary)
    new = cells - lam * (F[1:] - F[:-1])
    if not np.all(np.isfinite(new)):
        bad = int(np.argmax(~np.isfinite(new)))
        raise SolverError(f"non-finite update in cell {bad} at step {state.step_index + 1}")

    nxt = SolverState(state.time + lam * grid.dx, new, state.step_index + 1, grid)
    report = StepReport(
        fluxes=F, velocities=V, lam=lam,
        min=float(new.min()), max=float(new.max()),
        l1=float(grid.dx * np.sum(np.abs(new))),
        tv=total_variation(new, grid.boundary),
    )
    return nxt, report


def reference_lxf_step(state: SolverState, weights: KernelWeights, grid: GridSpec,
                       model: ModelSpec, alpha: float, *, lam: Optional[float] = None
                       ) -> SolverState:
    """One step of the classic Lax-Friedrichs variant (see :class:`ClassicLxF`)."""
    nxt, _ = step(state, ClassicLxF(model, alpha), weights, grid, lam=lam, check_cfl=False)
    return nxt


def step_ratios(grid: GridSpec, lam: float) -> Iterator[float]:
    """Step ratios reaching ``t_end`` exactly; only the last step is shortened."""
    dt = lam * grid.dx
    n_full = math.floor(grid.t_end / dt * (1 + 1e-12))
    for _ in range(n_full):
        yield lam
    rest = grid.t_end - n_full * dt
    if rest > 1e-12 * max(dt, grid.t_end):
        yield rest / grid.dx


Monitor = Callable[[SolverState, SolverState, StepReport], None]


def run(model: ModelSpec, scheme: Scheme, weights: KernelWeights, grid: GridSpec,
        initial: Union[np.ndarray, SolverState], *, strict: bool = True,
        monitor: Optional[Monitor] = None) -> SolverState:
    """Integrate from the initial cells to ``grid.t_end``.

    ``monitor(prev, next, report)`` is called after every step.  Under
    ``strict`` a step ratio above the CFL bound raises :class:`CFLViolation`
    before any step is taken.
    """
    if scheme.model is not model:
        scheme = replace(scheme, model=model)
    if isinstance(initial, SolverState):
        state = initial
    else:
        cells = np.asarray(initial, dtype=float)
        if len(cells) != grid.n_cells:
            raise SolverError(f"expected {grid.n_cells} cells, got {len(cells)}")
        state = SolverState(0.0, cells, 0, grid)

    lam = grid.lam
    if lam is None:
        lam = cfl_max_lambda(constants_for(scheme), weights.gamma0, model)
    if not isinstance(scheme, ClassicLxF):
        _check_cfl(lam, scheme, weights, strict)

    t0 = state.time
    n_steps = 0
    for k, lam_k in enumerate(step_ratios(grid, lam)):
        nxt, rep = step(state, scheme, weights, grid, lam=lam_k, check_cfl=False)
        # pin the clock to t0 + n dt so round-off does not accumulate
        nxt = replace(nxt, time=min(grid.t_end, t0 + (k + 1) * lam * grid.dx))
        if monitor is not None:
            monitor(state, nxt, rep)
        state = nxt
        n_steps += 1
    if n_steps:
        state = replace(state, time=grid.t_end)
    return state

# }}}
