"""Quadrature and special functions shared by the analytic engines.

The adaptive integrator is a Gauss-Kronrod 7/15 rule with bisection of the
worst segment.  Integrands receive a numpy array of abscissae and may
return either a matching 1-D array or a stack of rows ``(m, n)``; in the
vector case all rows are integrated at once and the error control uses the
max-norm across rows.  Vector evaluation is what keeps the nested double
integrals of the outage engine affordable: the outer rule hands all of a
segment's nodes to the inner rule in one call.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special as sp

__all__ = [
    "QuadSpec",
    "QuadratureError",
    "DEFAULT_QUAD",
    "integrate_1d",
    "integrate_semi_infinite",
    "upper_incomplete_gamma",
]


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to converge.

    Carries the best available estimate and its error bound so callers can
    decide whether to proceed anyway.
    """

    def __init__(self, msg: str, estimate, error_bound):
        super().__init__(msg)
        self.estimate = estimate
        self.error_bound = error_bound


@dataclass(frozen=True)
class QuadSpec:
    """Tolerances and budget for the adaptive integrator.

    ``tail_cut_probability`` bounds the sliver of the unit interval dropped
    next to t=1 by the semi-infinite transform; it must be small enough to
    be irrelevant (< 1e-6) for any decaying integrand.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 2000
    tail_cut_probability: float = 1e-9

    def __post_init__(self) -> None:
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.max_subdivisions < 8:
            raise ValueError("max_subdivisions must be >= 8")
        if not 0 < self.tail_cut_probability < 1e-6:
            raise ValueError("tail_cut_probability must lie in (0, 1e-6)")


DEFAULT_QUAD = QuadSpec()

# Gauss-Kronrod 7/15 nodes on [-1, 1] and the matching weights.  Even
# indices are the Kronrod-only nodes, odd indices the embedded Gauss-7
# nodes.
_GK_NODES = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
    0.586087235467691, 0.741531185599394, 0.864864423359769,
    0.949107912342759, 0.991455371120813,
])
_K15_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_G7_WEIGHTS = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870,
])
_G7_IDX = np.arange(1, 15, 2)


def _gk_segment(f: Callable, a: float, b: float):
    """One Gauss-Kronrod pass over [a, b]; returns (I_k15, err_estimate)."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid + half * _GK_NODES
    y = np.asarray(f(x), dtype=float)
    ik = half * (y @ _K15_WEIGHTS)
    yg = y[..., _G7_IDX]
    ig = half * (yg @ _G7_WEIGHTS)
    err = np.max(np.abs(ik - ig))
    return ik, float(err)


def integrate_1d(f: Callable, a: float, b: float,
                 spec: QuadSpec = DEFAULT_QUAD):
    """Adaptive integral of ``f`` over the finite interval (a, b).

    ``f`` maps an abscissa array to values, either shape (n,) or (m, n)
    for m simultaneous integrands.  Returns a float (or an (m,) array)
    whose estimated error is below max(abs_tol, rel_tol * |result|), where
    |result| is the max-norm in the vector case.  Raises
    :class:`QuadratureError` if the segment budget is exhausted first.
    """
    if not a < b:
        raise ValueError(f"integration interval must satisfy a < b, got [{a}, {b}]")
    val, err = _gk_segment(f, a, b)
    # heap entries: (-err, tie, a, b, value, err)
    counter = 0
    heap = [(-err, counter, a, b, val, err)]
    total = np.array(val, dtype=float, copy=True)
    total_err = err
    n_segments = 1
    while True:
        scale = float(np.max(np.abs(total)))
        if total_err <= max(spec.abs_tol, spec.rel_tol * scale):
            break
        if n_segments >= spec.max_subdivisions:
            raise QuadratureError(
                f"quadrature did not converge within {spec.max_subdivisions} "
                f"segments (error bound {total_err:.3e}, estimate scale {scale:.3e})",
                estimate=total, error_bound=total_err)
        _, _, sa, sb, sval, serr = heapq.heappop(heap)
        sm = 0.5 * (sa + sb)
        lval, lerr = _gk_segment(f, sa, sm)
        rval, rerr = _gk_segment(f, sm, sb)
        total = total - sval + lval + rval
        total_err = total_err - serr + lerr + rerr
        counter += 1
        heapq.heappush(heap, (-lerr, counter, sa, sm, lval, lerr))
        counter += 1
        heapq.heappush(heap, (-rerr, counter, sm, sb, rval, rerr))
        n_segments += 1
    if np.ndim(total) == 0:
        return float(total)
    return total


def integrate_semi_infinite(f: Callable, a: float,
                            spec: QuadSpec = DEFAULT_QUAD):
    """Integral of ``f`` over [a, infinity) for eventually-decaying ``f``.

    Substitutes y = a + t/(1-t), dy = dt/(1-t)^2 and integrates t over
    (0, 1 - tail_cut_probability]; the dropped sliver maps to the extreme
    tail y > a + 1/tail_cut_probability where the integrand contributes
    nothing for any integrand this package produces.
    """

    def transformed(t: np.ndarray):
        omt = 1.0 - t
        y = a + t / omt
        vals = np.asarray(f(y), dtype=float)
        return vals / (omt * omt)

    return integrate_1d(transformed, 0.0, 1.0 - spec.tail_cut_probability, spec)


def upper_incomplete_gamma(a: float, x):
    """Upper incomplete gamma integral from ``x`` to infinity of t^(a-1) e^-t.

    Supports negative and non-integer ``a`` (needed with a = -2/alpha_los)
    and broadcasts over an array second argument.  For a <= 0 the value is
    obtained from the positive-parameter regime by walking the recurrence
    G(a, x) = (G(a+1, x) - x^a e^-x) / a downward, which avoids the
    numerically awkward defining integral near zero.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("second argument must be > 0 (integral diverges at 0 for a <= 0)")
    if a > 0:
        out = sp.gammaincc(a, x) * sp.gamma(a)
        return out if out.ndim else float(out)
    n_steps = int(math.ceil(-a))
    a_top = a + n_steps
    if a_top == 0.0:
        val = sp.exp1(x)
    else:
        val = sp.gammaincc(a_top, x) * sp.gamma(a_top)
    emx = np.exp(-x)
    aa = a_top
    for _ in range(n_steps):
        aa -= 1.0
        val = (val - x ** aa * emx) / aa
    return val if val.ndim else float(val)
