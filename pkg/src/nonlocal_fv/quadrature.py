"""
Exact quadrature weights for the discrete nonlocal term.

The velocity at interface ``x_{j+1/2}`` is ``v(sum_k gamma_k rho_{j+k+1})`` with

    gamma_k = integral of omega_eta over [k dx, (k+1) dx].

For a downstream kernel on ``[0, eta]`` the index runs over
``k = 0 .. N-1`` with ``N = floor(eta/dx)``; for a kernel supported on
``[lo*eta, hi*eta]`` it runs from ``-floor(|lo| eta/dx)`` to
``floor(hi eta/dx) - 1``.  A trailing partial cell is dropped, never
renormalized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from nonlocal_fv.model import KernelSpec

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


class QuadratureError(ValueError):
    pass


def gauss_legendre_integral(f: Callable[[np.ndarray], np.ndarray], a: float, b: float) -> float:
    """20-node Gauss-Legendre rule on ``[a, b]``."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return float(half * np.sum(_GL_WEIGHTS * f(mid + half * _GL_NODES)))


@dataclass(frozen=True)
class KernelWeights:
    """Quadrature weights ``gamma_k`` for ``k = k_min .. k_min + len(weights) - 1``."""

    weights: np.ndarray
    k_min: int
    n_eta: int
    dx: float
    eta: float
    kernel_name: str
    exact: bool = True

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.weights) - 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_min + len(self.weights))

    @property
    def weight_sum(self) -> float:
        return float(np.sum(self.weights))

    @property
    def gamma0(self) -> float:
        """Weight multiplying the nearest downstream cell ``rho_{j+1}``."""
        if self.k_min <= 0 <= self.k_max:
            return float(self.weights[-self.k_min])
        return 0.0

    def __getitem__(self, k: int) -> float:
        if not self.k_min <= k <= self.k_max:
            raise IndexError(k)
        return float(self.weights[k - self.k_min])


def _index_range(kernel: KernelSpec, eta: float, dx: float):
    # tolerance guards eta/dx = 10 evaluating to 9.999999999999998
    lo = kernel.support_lo * eta / dx
    hi = kernel.support_hi * eta / dx
    n_lo = math.floor(abs(lo) * (1 + 1e-12)) if lo < 0 else 0
    n_hi = math.floor(hi * (1 + 1e-12))
    return -n_lo, n_hi


def compute_weights(
    kernel: KernelSpec, eta: float, dx: float, *, allow_fallback: bool = False
) -> KernelWeights:
    """Integrate the kernel over each cell of its support.

    Uses the closed-form antiderivative when available.  Kernels without one
    need ``allow_fallback=True`` and are integrated with Gauss-Legendre(20);
    the result is then flagged ``exact=False``.
    """
    if not (dx > 0 and eta > 0):
        raise QuadratureError(f"need dx > 0 and eta > 0, got dx={dx}, eta={eta}")
    width = (kernel.support_hi - kernel.support_lo) * eta
    if dx > width * (1 + 1e-12):
        raise QuadratureError(f"dx={dx} exceeds the kernel support width {width}")

    k_lo, k_hi = _index_range(kernel, eta, dx)
    if k_hi <= k_lo:
        raise QuadratureError(
            f"no full cell fits into the kernel support for eta={eta}, dx={dx}")
    edges = np.arange(k_lo, k_hi + 1) * dx

    if kernel.antiderivative is not None:
        big = kernel.antiderivative(edges, eta)
        weights = np.diff(big)
        exact = True
    elif allow_fallback:
        logger.warning("kernel %r has no antiderivative; weights are not exact", kernel.name)
        weights = np.array([
            gauss_legendre_integral(lambda x: kernel.density(x, eta), a, b)
            for a, b in zip(edges[:-1], edges[1:])
        ])
        exact = False
    else:
        raise QuadratureError(
            f"kernel {kernel.name!r} has no antiderivative and the fallback is disabled")

    n_eta = k_hi if kernel.is_downstream else max(-k_lo, k_hi)
    return KernelWeights(
        weights=np.asarray(weights, dtype=float),
        k_min=k_lo,
        n_eta=n_eta,
        dx=dx,
        eta=eta,
        kernel_name=kernel.name,
        exact=exact,
    )


@dataclass
class WeightReport:
    max_discrepancy: float
    weight_sum: float
    nonnegative: bool
    nonincreasing: bool  # downstream kernels only; True otherwise
    normalized: bool

    @property
    def passed(self) -> bool:
        return self.nonnegative and self.nonincreasing and self.weight_sum <= 1 + 1e-13


def verify_weights(w: KernelWeights, kernel: KernelSpec) -> WeightReport:
    """Re-integrate every weight with Gauss-Legendre(20) and check the invariants."""
    edges = w.indices * w.dx
    oracle = np.array([
        gauss_legendre_integral(lambda x: kernel.density(x, w.eta), a, a + w.dx)
        for a in edges
    ])
    disc = float(np.max(np.abs(oracle - w.weights))) if len(edges) else 0.0
    nonincreasing = True
    if kernel.is_downstream:
        nonincreasing = bool(np.all(np.diff(w.weights) <= 1e-15))
    support = (kernel.support_hi - kernel.support_lo) * w.eta / w.dx
    divides = abs(support - round(support)) < 1e-9
    return WeightReport(
        max_discrepancy=disc,
        weight_sum=w.weight_sum,
        nonnegative=bool(np.all(w.weights >= 0.0)),
        nonincreasing=nonincreasing,
        normalized=(abs(w.weight_sum - 1.0) <= 1e-13) if divides else w.weight_sum <= 1 + 1e-13,
    )
