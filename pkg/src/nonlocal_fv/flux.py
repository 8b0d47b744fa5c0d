r"""
Two-point numerical fluxes of the factorized form ``F(a, b) = G(a, b) V``.

Every flux here is consistent (``G(r, r) = g(r)``), nondecreasing in ``a`` and
nonincreasing in ``b``, and weakly Lipschitz:

.. math::

    |F(a,b) - F(b,b)| \le L_1 |a-b|, \qquad |F(a,b) - F(a,a)| \le L_2 |a-b|.

Godunov and Engquist-Osher use the simplified forms valid for ``V >= 0`` and
refuse negative velocities.  The Lax-Friedrichs flux is valid for any sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from nonlocal_fv.model import ModelSpec

SCHEMES = ("lax_friedrichs", "godunov", "engquist_osher", "upwind")

LIPSCHITZ_SAMPLES = 10_000
LIPSCHITZ_TOL = 1e-12


class SchemeError(ValueError):
    """Invalid scheme/model combination or violated flux precondition."""


def _check_velocity(V) -> None:
    if np.any(np.asarray(V) < 0.0):
        raise SchemeError("negative velocity: the Godunov/Engquist-Osher fluxes "
                          "are implemented for V >= 0 only")


# {{{ reduced fluxes G(a, b)

def godunov_g(a, b, model: ModelSpec):
    """``min g`` over ``[a, b]`` if ``a <= b``, else ``max g`` over ``[b, a]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ga, gb = model.g(a), model.g(b)
    lo_end = np.minimum(a, b)
    hi_end = np.maximum(a, b)
    gmin = np.minimum(ga, gb)
    gmax = np.maximum(ga, gb)
    for c in model.g_critical_points:
        inside = (lo_end < c) & (c < hi_end)
        if np.any(inside):
            gc = float(model.g(c))
            gmin = np.where(inside, np.minimum(gmin, gc), gmin)
            gmax = np.where(inside, np.maximum(gmax, gc), gmax)
    return np.where(a <= b, gmin, gmax)


def g_variation(x, model: ModelSpec, base: float):
    r"""Cumulative variation :math:`\int_{base}^x |g'|` for ``x >= base``.

    Exact for polynomial ``g``: the integral telescopes over the partition of
    ``[base, x]`` by the critical points of ``g``.
    """
    x = np.asarray(x, dtype=float)
    crit = [c for c in model.g_critical_points if c > base]
    pts = np.array([base] + crit)
    gp = model.g(pts)
    prefix = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(gp)))])
    idx = np.searchsorted(pts, x, side="right") - 1
    idx = np.clip(idx, 0, len(pts) - 1)
    return prefix[idx] + np.abs(model.g(x) - gp[idx])


def engquist_osher_g(a, b, model: ModelSpec):
    r"""``(g(a) + g(b) - \int_a^b |g'|) / 2`` with the integral evaluated exactly."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    base = min(float(np.min(a, initial=np.inf)), float(np.min(b, initial=np.inf)), model.rho_min)
    integral = g_variation(b, model, base) - g_variation(a, model, base)
    return 0.5 * (model.g(a) + model.g(b) - integral)


def engquist_osher_concave_g(a, b, model: ModelSpec, c: float):
    """Shortcut for strictly concave ``g`` with maximum at ``c``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return model.g(np.minimum(a, c)) + model.g(np.maximum(b, c)) - model.g(c)


def lax_friedrichs_g(a, b, model: ModelSpec, alpha: float):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 0.5 * (model.g(a) + model.g(b) + alpha * (a - b))


def upwind_g(a, b, model: ModelSpec):
    a = np.asarray(a, dtype=float)
    return model.g(a) + 0.0 * np.asarray(b, dtype=float)

# }}}


# {{{ full fluxes F(a, b, V)

def lxf_flux(a, b, V, alpha, model: ModelSpec):
    """Local Lax-Friedrichs-type flux ``V/2 (g(a) + g(b) + alpha (a - b))``."""
    return np.asarray(V, dtype=float) * lax_friedrichs_g(a, b, model, alpha)


def godunov_flux(a, b, V, model: ModelSpec):
    _check_velocity(V)
    return np.asarray(V, dtype=float) * godunov_g(a, b, model)


def eo_flux(a, b, V, model: ModelSpec):
    _check_velocity(V)
    return np.asarray(V, dtype=float) * engquist_osher_g(a, b, model)


def upwind_flux(a, b, V, model: ModelSpec):
    if not model.g_is_linear:
        raise SchemeError("upwind flux requires linear g")
    _check_velocity(V)
    return np.asarray(V, dtype=float) * upwind_g(a, b, model)

# }}}


@dataclass(frozen=True)
class SchemeConstants:
    l1: float
    l2: float
    norm_g_flux: float
    alpha: Optional[float] = None


@dataclass(frozen=True)
class FluxScheme:
    """A named numerical flux bound to a model.

    Use :func:`make_scheme` to build one; it applies the construction-time
    guards (``alpha >= ||g'||`` for Lax-Friedrichs, linear ``g`` for upwind).
    """

    name: str
    model: ModelSpec
    alpha: Optional[float] = None

    def reduced(self, a, b):
        """The reduced flux ``G(a, b)``."""
        if self.name == "lax_friedrichs":
            return lax_friedrichs_g(a, b, self.model, self.alpha)
        if self.name == "godunov":
            return godunov_g(a, b, self.model)
        if self.name == "engquist_osher":
            return engquist_osher_g(a, b, self.model)
        if self.name == "upwind":
            return upwind_g(a, b, self.model)
        raise SchemeError(f"unknown scheme {self.name!r}")

    def evaluate(self, a, b, V):
        if self.name != "lax_friedrichs":
            _check_velocity(V)
        return np.asarray(V, dtype=float) * self.reduced(a, b)

    @property
    def sign_agnostic(self) -> bool:
        return self.name == "lax_friedrichs"


def make_scheme(name: str, model: ModelSpec, alpha: Optional[float] = None) -> FluxScheme:
    """Build a :class:`FluxScheme`.

    For Lax-Friedrichs ``alpha`` defaults to ``||g'||`` over the model interval,
    the smallest admissible value.
    """
    if name not in SCHEMES:
        raise SchemeError(f"unknown scheme {name!r}; choose from {', '.join(SCHEMES)}")
    if name == "lax_friedrichs":
        if alpha is None:
            alpha = model.bound_dg
        if alpha < model.bound_dg - 1e-12:
            raise SchemeError(
                f"alpha={alpha} is below ||g'||={model.bound_dg}; the Lax-Friedrichs "
                "flux would not be monotone")
        return FluxScheme(name, model, float(alpha))
    if alpha is not None:
        raise SchemeError(f"alpha is only meaningful for lax_friedrichs, not {name}")
    if name == "upwind":
        dg = model.dg(np.linspace(model.rho_min, model.rho_max, 101))
        if np.ptp(dg) > 1e-12:
            raise SchemeError(
                "upwind flux is not monotone for nonlinear g and may converge to the "
                "wrong solution; use godunov or engquist_osher")
    return FluxScheme(name, model)


def scheme_constants(
    scheme: FluxScheme, *, validate: bool = True, samples: int = LIPSCHITZ_SAMPLES, seed: int = 0
) -> SchemeConstants:
    """Closed-form Lipschitz constants ``L1``, ``L2`` and ``||G||``.

    With ``validate`` the defining inequalities are sampled on ``samples``
    random ``(a, b, V)`` triples; a violation raises :class:`SchemeError`.
    """
    m = scheme.model
    if scheme.name in ("godunov", "engquist_osher"):
        c = SchemeConstants(m.bound_v * m.bound_dg, m.bound_v * m.bound_dg, m.bound_g)
    elif scheme.name == "lax_friedrichs":
        a = scheme.alpha
        lip = m.bound_v * (a + m.bound_dg) / 2.0
        c = SchemeConstants(lip, lip, m.bound_g + 0.5 * a * (m.rho_max - m.rho_min), a)
    elif scheme.name == "upwind":
        c = SchemeConstants(m.bound_v * m.bound_dg, 0.0, m.bound_g)
    else:
        raise SchemeError(f"unknown scheme {scheme.name!r}")

    if validate:
        violation = lipschitz_violation(scheme, c, samples=samples, seed=seed)
        if violation > LIPSCHITZ_TOL:
            raise SchemeError(
                f"sampled Lipschitz inequality violated by {violation:.3e} for {scheme.name}")
    return c


def lipschitz_violation(scheme: FluxScheme, c: SchemeConstants, *,
                        samples: int = LIPSCHITZ_SAMPLES, seed: int = 0) -> float:
    """Largest sampled excess of the weak Lipschitz inequalities (``<= 0`` is good)."""
    m = scheme.model
    rng = np.random.default_rng(seed)
    a = rng.uniform(m.rho_min, m.rho_max, samples)
    b = rng.uniform(m.rho_min, m.rho_max, samples)
    vlo = -m.bound_v if scheme.sign_agnostic else 0.0
    V = rng.uniform(vlo, m.bound_v, samples)
    F = scheme.evaluate
    d = np.abs(a - b)
    e1 = np.abs(F(a, b, V) - F(b, b, V)) - c.l1 * d
    e2 = np.abs(F(a, b, V) - F(a, a, V)) - c.l2 * d
    e3 = np.abs(scheme.reduced(a, b)) - c.norm_g_flux
    return float(max(e1.max(), e2.max(), e3.max()))


def kruzkov_numerical_entropy_flux(u, w, k, V, scheme: FluxScheme):
    """``F(max(u,k), max(w,k)) - F(min(u,k), min(w,k))``.

    Note the max/min assignment: the first term clips from below at ``k``.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    return (scheme.evaluate(np.maximum(u, k), np.maximum(w, k), V)
            - scheme.evaluate(np.minimum(u, k), np.minimum(w, k), V))
