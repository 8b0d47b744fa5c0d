"""
Problem definition for nonlocal conservation laws

    rho_t + (g(rho) * v(omega_eta * rho))_x = 0

A :class:`ModelSpec` bundles the flux nonlinearity ``g``, the velocity ``v``
and their derivatives together with sup-norm bounds over the invariant
interval ``I = [rho_min, rho_max]``.  A :class:`KernelSpec` describes a kernel
family ``omega_eta`` with its exact antiderivative.  :class:`InitialData` holds
piecewise-constant initial conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

ScalarFn = Callable[[np.ndarray], np.ndarray]

#: dense sampling resolution used for sup-norm fallbacks
SUP_SAMPLES = 100_000
#: number of sample pairs for the monotonicity checks in :func:`validate_model`
CHECK_SAMPLES = 10_000
CHECK_TOL = 1e-12


class ModelError(ValueError):
    """Raised for malformed or non-finite model definitions."""


# {{{ velocity families

@dataclass(frozen=True)
class Velocity:
    """A named velocity law with its first two derivatives.

    ``critical_points`` maps ``"v"``, ``"dv"``, ``"ddv"`` to stationary points
    of the respective function (used by :func:`sup_norm_bounds`).
    """

    name: str
    v: ScalarFn
    dv: ScalarFn
    ddv: ScalarFn
    critical_points: Dict[str, Tuple[float, ...]] = field(default_factory=dict)


def exp_velocity() -> Velocity:
    return Velocity(
        "exp",
        v=lambda r: np.exp(-np.asarray(r, dtype=float)),
        dv=lambda r: -np.exp(-np.asarray(r, dtype=float)),
        ddv=lambda r: np.exp(-np.asarray(r, dtype=float)),
    )


def power_velocity(p: int) -> Velocity:
    """``v(rho) = (1 - rho)^p``; monotone on ``rho <= 1``."""
    if p < 1:
        raise ModelError(f"power velocity needs p >= 1, got {p}")

    def dv(r):
        return -p * (1.0 - np.asarray(r, dtype=float)) ** (p - 1)

    def ddv(r):
        r = np.asarray(r, dtype=float)
        if p == 1:
            return np.zeros_like(r)
        return p * (p - 1) * (1.0 - r) ** (p - 2)

    name = "linear" if p == 1 else f"power:{p}"
    return Velocity(name, v=lambda r: (1.0 - np.asarray(r, dtype=float)) ** p, dv=dv, ddv=ddv)


def linear_velocity() -> Velocity:
    return power_velocity(1)


def velocity_from_name(name: str) -> Velocity:
    """Parse ``exp``, ``linear`` or ``power:<p>``."""
    name = name.strip()
    if name == "exp":
        return exp_velocity()
    if name == "linear":
        return linear_velocity()
    if name.startswith("power:"):
        try:
            p = int(name.split(":", 1)[1])
        except ValueError as exc:
            raise ModelError(f"bad velocity exponent in {name!r}") from exc
        return power_velocity(p)
    raise ModelError(f"unknown velocity {name!r}; try 'exp', 'linear' or 'power:<p>'")

# }}}


# {{{ model spec

@dataclass(frozen=True)
class ModelSpec:
    """Flux nonlinearity and velocity restricted to ``I = [rho_min, rho_max]``.

    Instances are built by :func:`make_model`; the ``bound_*`` fields are the
    sup-norms over ``I`` and are what the scheme constants and CFL use.
    """

    name: str
    g_coeffs: Tuple[float, ...]
    velocity: Velocity
    rho_min: float
    rho_max: float
    g_critical_points: Tuple[float, ...]
    bound_g: float
    bound_dg: float
    bound_v: float
    bound_dv: float
    bound_ddv: float

    @property
    def interval(self) -> Tuple[float, float]:
        return (self.rho_min, self.rho_max)

    @property
    def g_poly(self) -> Polynomial:
        return Polynomial(self.g_coeffs)

    def g(self, rho):
        return _polyval(self.g_coeffs, rho)

    def dg(self, rho):
        return _polyval(_polyder(self.g_coeffs), rho)

    def v(self, rho):
        return self.velocity.v(rho)

    def dv(self, rho):
        return self.velocity.dv(rho)

    def ddv(self, rho):
        return self.velocity.ddv(rho)

    @property
    def g_is_linear(self) -> bool:
        return len(_trim(self.g_coeffs)) <= 2

    @property
    def rho_norm(self) -> float:
        """``||rho|| = max(|rho_min|, |rho_max|)``."""
        return max(abs(self.rho_min), abs(self.rho_max))

    def with_interval(self, rho_min: float, rho_max: float) -> "ModelSpec":
        return make_model(self.name, (rho_min, rho_max), g_coeffs=self.g_coeffs,
                          velocity=self.velocity)


def _trim(coeffs: Sequence[float]) -> Tuple[float, ...]:
    c = list(coeffs)
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(float(x) for x in c)


def _polyval(coeffs: Sequence[float], x):
    # Horner; exact same arithmetic for scalars and arrays
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x) + coeffs[-1]
    for c in reversed(coeffs[:-1]):
        out = out * x + c
    return out


def _polyder(coeffs: Sequence[float]) -> Tuple[float, ...]:
    if len(coeffs) <= 1:
        return (0.0,)
    return tuple(k * coeffs[k] for k in range(1, len(coeffs)))


def _real_roots_in(coeffs: Sequence[float], lo: float, hi: float) -> List[float]:
    coeffs = _trim(coeffs)
    if len(coeffs) <= 1:
        return []
    roots = Polynomial(coeffs).roots()
    out = []
    for r in roots:
        if abs(r.imag) < 1e-12 and lo < r.real < hi:
            out.append(float(r.real))
    return sorted(out)


def sup_norm_bounds(
    functions: Dict[str, ScalarFn],
    interval: Tuple[float, float],
    critical_points: Optional[Dict[str, Sequence[float]]] = None,
    samples: int = SUP_SAMPLES,
) -> Dict[str, float]:
    """Sup-norms over ``interval`` of each named function.

    Each bound is the maximum of ``|f|`` at the interval endpoints, at the
    supplied critical points of ``f`` that lie in the interval, and at
    ``samples`` uniformly spaced points.
    """
    lo, hi = interval
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ModelError(f"empty or invalid interval {interval!r}")
    critical_points = critical_points or {}
    grid = np.linspace(lo, hi, samples) if hi > lo else np.array([lo])
    bounds = {}
    for name, f in functions.items():
        pts = [lo, hi] + [c for c in critical_points.get(name, ()) if lo <= c <= hi]
        vals = np.concatenate([np.abs(f(np.asarray(pts, dtype=float))), np.abs(f(grid))])
        if not np.all(np.isfinite(vals)):
            raise ModelError(f"non-finite value of {name} on {interval}")
        bounds[name] = float(vals.max())
    return bounds


def make_model(
    name: str,
    interval: Tuple[float, float],
    *,
    g_coeffs: Optional[Sequence[float]] = None,
    velocity: Optional[Velocity] = None,
) -> ModelSpec:
    """Build a :class:`ModelSpec` from the registry or from explicit parts.

    :arg name: a registered model name, or any label when both ``g_coeffs``
        and ``velocity`` are given.
    :arg interval: the invariant interval ``[rho_min, rho_max]``.
    """
    if g_coeffs is None or velocity is None:
        if name not in MODELS:
            raise ModelError(f"unknown model {name!r}; registered: {', '.join(sorted(MODELS))}")
        reg_g, reg_v = MODELS[name]
        g_coeffs = reg_g if g_coeffs is None else g_coeffs
        velocity = reg_v() if velocity is None else velocity

    g_coeffs = _trim(g_coeffs)
    lo, hi = float(interval[0]), float(interval[1])
    if hi < lo:
        raise ModelError(f"empty interval [{lo}, {hi}]")

    dg = _polyder(g_coeffs)
    ddg = _polyder(dg)
    crit_g = _real_roots_in(dg, lo, hi)
    crit_dg = _real_roots_in(ddg, lo, hi)

    fns = {
        "g": lambda r: _polyval(g_coeffs, r),
        "dg": lambda r: _polyval(dg, r),
        "v": velocity.v,
        "dv": velocity.dv,
        "ddv": velocity.ddv,
    }
    crit = {"g": crit_g, "dg": crit_dg}
    crit.update({k: list(v) for k, v in velocity.critical_points.items()})
    b = sup_norm_bounds(fns, (lo, hi), crit)

    return ModelSpec(
        name=name,
        g_coeffs=g_coeffs,
        velocity=velocity,
        rho_min=lo,
        rho_max=hi,
        g_critical_points=tuple(crit_g),
        bound_g=b["g"],
        bound_dg=b["dg"],
        bound_v=b["v"],
        bound_dv=b["dv"],
        bound_ddv=b["ddv"],
    )


#: name -> (g polynomial coefficients in ascending order, velocity factory)
MODELS: Dict[str, Tuple[Tuple[float, ...], Callable[[], Velocity]]] = {
    "arrhenius": ((0.0, 1.0, -1.0), exp_velocity),
    "sedimentation": ((0.0, 1.0, -1.0), lambda: power_velocity(4)),
    "nlwr": ((0.0, 1.0), linear_velocity),
}

# }}}


# {{{ kernels

@dataclass(frozen=True)
class KernelSpec:
    """A kernel family ``omega_eta`` supported on ``[lo*eta, hi*eta]``.

    ``density(x, eta)`` and ``antiderivative(x, eta)`` take physical
    coordinates.  ``antiderivative`` may be ``None`` for user kernels, in
    which case weights fall back to Gauss-Legendre quadrature.
    """

    name: str
    support_lo: float
    support_hi: float
    density: Callable[[np.ndarray, float], np.ndarray]
    antiderivative: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    @property
    def is_downstream(self) -> bool:
        return self.support_lo == 0.0

    def omega_at_zero(self, eta: float) -> float:
        return float(self.density(np.asarray(0.0), eta))

    def support(self, eta: float) -> Tuple[float, float]:
        return (self.support_lo * eta, self.support_hi * eta)


def _constant_density(x, eta):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= eta), 1.0 / eta, 0.0)


def _constant_anti(x, eta):
    x = np.clip(np.asarray(x, dtype=float), 0.0, eta)
    return x / eta


def _linear_density(x, eta):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= eta), 2.0 * (eta - x) / eta**2, 0.0)


def _linear_anti(x, eta):
    x = np.clip(np.asarray(x, dtype=float), 0.0, eta)
    return (2.0 * eta * x - x * x) / eta**2


def _parabolic_density(x, eta):
    s = np.asarray(x, dtype=float) / eta
    return np.where(np.abs(s) < 2.0, 0.375 * (1.0 - s * s / 4.0), 0.0) / eta


def _parabolic_anti(x, eta):
    s = np.clip(np.asarray(x, dtype=float) / eta, -2.0, 2.0)
    return 0.375 * (s - s**3 / 12.0)


KERNELS: Dict[str, KernelSpec] = {
    "constant": KernelSpec("constant", 0.0, 1.0, _constant_density, _constant_anti),
    "linear": KernelSpec("linear", 0.0, 1.0, _linear_density, _linear_anti),
    "parabolic": KernelSpec("parabolic", -2.0, 2.0, _parabolic_density, _parabolic_anti),
}


def get_kernel(name: str) -> KernelSpec:
    try:
        return KERNELS[name]
    except KeyError:
        raise ModelError(
            f"unknown kernel {name!r}; registered: {', '.join(sorted(KERNELS))}"
        ) from None

# }}}


# {{{ validation

@dataclass
class CheckResult:
    name: str
    passed: Optional[bool]  # None means skipped
    detail: str = ""
    point: Optional[float] = None


@dataclass
class ValidationReport:
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _finite_or_raise(label: str, x: np.ndarray, vals: np.ndarray) -> None:
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise ModelError(f"{label} is not finite at rho = {float(x[np.argmax(bad)])!r}")


def validate_model(spec: ModelSpec, kernel: KernelSpec, eta: float = 1.0) -> ValidationReport:
    """Sampled checks of the standing hypotheses on ``g``, ``v`` and the kernel.

    Positivity of ``g`` and ``v``, ``v' <= 0``, kernel nonnegativity and
    normalization, and (for downstream kernels only) ``omega' <= 0``.
    """
    lo, hi = spec.interval
    x = np.linspace(lo, hi, CHECK_SAMPLES) if hi > lo else np.array([lo])
    checks = []

    vals = {}
    for label, f in (("g", spec.g), ("dg", spec.dg), ("v", spec.v),
                     ("dv", spec.dv), ("ddv", spec.ddv)):
        y = f(x)
        _finite_or_raise(label, x, y)
        vals[label] = y

    for label in ("g", "v"):
        bad = vals[label] < -CHECK_TOL
        checks.append(CheckResult(
            f"{label}_nonnegative", not np.any(bad),
            point=float(x[np.argmax(bad)]) if np.any(bad) else None))

    bad = vals["dv"] > CHECK_TOL
    checks.append(CheckResult(
        "v_nonincreasing", not np.any(bad), "v' <= 0",
        point=float(x[np.argmax(bad)]) if np.any(bad) else None))

    s_lo, s_hi = kernel.support(eta)
    xs = np.linspace(s_lo, s_hi, CHECK_SAMPLES)
    w = kernel.density(xs, eta)
    _finite_or_raise(f"kernel {kernel.name}", xs, w)
    bad = w < -CHECK_TOL
    checks.append(CheckResult(
        "kernel_nonnegative", not np.any(bad),
        point=float(xs[np.argmax(bad)]) if np.any(bad) else None))

    if kernel.antiderivative is not None:
        mass = float(kernel.antiderivative(np.asarray(s_hi), eta)
                     - kernel.antiderivative(np.asarray(s_lo), eta))
    else:
        from nonlocal_fv.quadrature import gauss_legendre_integral
        mass = gauss_legendre_integral(lambda t: kernel.density(t, eta), s_lo, s_hi)
    checks.append(CheckResult(
        "kernel_normalized", abs(mass - 1.0) <= 1e-13, f"integral = {mass!r}"))

    if kernel.is_downstream:
        # interior samples only: the density is cut off outside its support
        xi = xs[1:-1]
        inc = np.diff(kernel.density(xi, eta)) > CHECK_TOL
        checks.append(CheckResult(
            "kernel_nonincreasing", not np.any(inc), "omega' <= 0",
            point=float(xi[np.argmax(inc)]) if np.any(inc) else None))
    else:
        checks.append(CheckResult("kernel_nonincreasing", None, "skipped: not a downstream kernel"))

    return ValidationReport(checks)

# }}}


# {{{ initial data

@dataclass(frozen=True)
class Piece:
    """Constant ``value`` on an interval; ``closed`` flags each endpoint."""

    lo: float
    hi: float
    value: float
    closed: Tuple[bool, bool] = (True, True)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        left = (x >= self.lo - tol) if self.closed[0] else (x > self.lo + tol)
        right = (x <= self.hi + tol) if self.closed[1] else (x < self.hi - tol)
        return left & right


@dataclass(frozen=True)
class InitialData:
    pieces: Tuple[Piece, ...]
    default_value: float = 0.0

    def __post_init__(self):
        ordered = sorted(self.pieces, key=lambda p: p.lo)
        for a, b in zip(ordered, ordered[1:]):
            if b.lo < a.hi:
                raise ModelError(f"initial data pieces overlap: {a} and {b}")
        for p in ordered:
            if not p.hi >= p.lo:
                raise ModelError(f"empty piece {p}")

    @property
    def bounds(self) -> Tuple[float, float]:
        vals = [p.value for p in self.pieces] + [self.default_value]
        return (min(vals), max(vals))

    def mass(self, lo: float, hi: float) -> float:
        """Exact integral of the data over ``[lo, hi]``."""
        total = self.default_value * (hi - lo)
        for p in self.pieces:
            overlap = max(0.0, min(hi, p.hi) - max(lo, p.lo))
            total += (p.value - self.default_value) * overlap
        return total


def project_initial_data(data: InitialData, edges: np.ndarray) -> np.ndarray:
    """Exact cell averages of piecewise-constant data on cells ``[edges[j], edges[j+1]]``."""
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    width = hi - lo
    if np.any(width <= 0):
        raise ModelError("cell edges must be strictly increasing")
    out = np.full(lo.shape, data.default_value, dtype=float)
    for p in data.pieces:
        overlap = np.clip(np.minimum(hi, p.hi) - np.maximum(lo, p.lo), 0.0, None)
        out += (p.value - data.default_value) * overlap / width
    return out


def sample_initial_data(data: InitialData, centers: np.ndarray, dx: float) -> np.ndarray:
    """Point values of the data at cell centers, respecting endpoint closedness.

    Endpoint comparisons carry a ``1e-9 dx`` tolerance so that centers built
    as ``x_min + j*dx`` in floating point land on the intended side.
    """
    centers = np.asarray(centers, dtype=float)
    out = np.full(centers.shape, data.default_value, dtype=float)
    tol = 1e-9 * dx
    for p in data.pieces:
        out = np.where(p.contains(centers, tol), p.value, out)
    return out

# }}}
