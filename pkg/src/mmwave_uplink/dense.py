"""Dense-network approximation: LOS disc, interference-limited SIR outage.

In a dense deployment the blockage-governed LOS probability is replaced by
a step function: every link inside a disc of radius ``los_radius`` around
the reference BS is line-of-sight, everything outside is ignored, and so
are noise, NLOS interference and small-scale fading.  The transmit-power
law collapses to its all-LOS form and the outage reduces to upper
incomplete gamma terms instead of nested quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import NetworkConfig, directivity_pmf
from .numerics import DEFAULT_QUAD, QuadSpec, integrate_1d, upper_incomplete_gamma
from .power import PowerLaw, power_support_floor
from .sinr import CancellationError

__all__ = [
    "DenseSpec",
    "ModelConsistencyError",
    "make_dense_power_law",
    "dense_power_pdf",
    "dense_sir_outage",
]


class ModelConsistencyError(ArithmeticError):
    """A Laplace-functional exponent came out positive.

    The LOS-disc model only makes sense while serving links stay inside the
    disc; a materially positive exponent means the scenario has left that
    regime and the approximation would silently produce garbage.
    """


@dataclass(frozen=True)
class DenseSpec:
    """LOS-disc geometry and the order of the outage approximation.

    ``relative_density`` is tier-1 BSs per LOS disc
    (density * pi * los_radius^2) and must stay consistent with the network
    it is used against.
    """

    los_radius: float
    approx_terms: int
    relative_density: float
    strict_single_tier_tail: bool = False

    def __post_init__(self) -> None:
        if self.los_radius <= 0:
            raise ValueError("los_radius must be > 0")
        if self.approx_terms < 1:
            raise ValueError("approx_terms must be >= 1")

    @classmethod
    def for_network(cls, net: NetworkConfig, los_radius: float,
                    approx_terms: int,
                    strict_single_tier_tail: bool = False) -> "DenseSpec":
        rel = net.tier(1).density * math.pi * los_radius ** 2
        return cls(los_radius=los_radius, approx_terms=approx_terms,
                   relative_density=rel,
                   strict_single_tier_tail=strict_single_tier_tail)

    def validate_against(self, net: NetworkConfig) -> None:
        rel = net.tier(1).density * math.pi * self.los_radius ** 2
        if abs(rel - self.relative_density) > 1e-9 * max(1.0, abs(rel)):
            raise ValueError(
                f"relative_density {self.relative_density} does not match "
                f"tier-1 density * pi * R^2 = {rel}")


def make_dense_power_law(serving_tier: int, net: NetworkConfig) -> PowerLaw:
    """All-LOS transmit-power law used inside the dense approximation."""
    rho = net.tier(serving_tier).cutoff
    tiers = net.tiers

    def intensity(p):
        p = np.asarray(p, dtype=float)
        out = sum(
            2.0 * math.pi * t.density / (t.alpha_los * rho ** (2.0 / t.alpha_los))
            * p ** (2.0 / t.alpha_los - 1.0)
            for t in tiers)
        return out if out.ndim else float(out)

    def measure(y):
        y = np.asarray(y, dtype=float)
        out = sum(math.pi * t.density * y ** (2.0 / t.alpha_los) for t in tiers)
        return out if out.ndim else float(out)

    total = float(measure(net.max_power / rho))
    return PowerLaw(serving_tier=serving_tier, intensity=intensity,
                    measure=measure, normalizer=-math.expm1(-total),
                    cutoff=rho, max_power=net.max_power)


def dense_power_pdf(p, serving_tier: int, net: NetworkConfig):
    """Transmit-power density when every serving link is line-of-sight."""
    return make_dense_power_law(serving_tier, net).pdf(p)


def _tier_exponent(order_scale: float, serving_tier: int, source_tier: int,
                   net: NetworkConfig, dense: DenseSpec, law: PowerLaw,
                   spec: QuadSpec) -> float:
    """log of one tier's Laplace-functional factor at fading order l.

    ``order_scale`` is eta * l * threshold / (serving cutoff * serving gain).
    """
    serving = net.tier(serving_tier)
    source = net.tier(source_tier)
    alpha = serving.alpha_los
    r_disc = dense.los_radius
    lam0 = source.density * math.pi * r_disc ** 2
    pmf = directivity_pmf(serving, net.user_antenna)

    tail_at = serving.cutoff if dense.strict_single_tier_tail else source.cutoff
    v_terms = []
    for a_v, b_v in zip(pmf.gains, pmf.probs):
        s_v = order_scale * a_v
        far_tail = float(upper_incomplete_gamma(-2.0 / alpha, s_v * tail_at))
        v_terms.append((s_v, b_v, far_tail))

    u_lo = math.log(power_support_floor(law))
    u_hi = math.log(law.max_power)

    def integrand(u: np.ndarray) -> np.ndarray:
        p = np.exp(u)
        area = (math.pi * source.density * (p / source.cutoff) ** (2.0 / alpha)
                - lam0)
        gsum = np.zeros_like(p)
        for s_v, b_v, far_tail in v_terms:
            near = upper_incomplete_gamma(-2.0 / alpha, s_v * p / r_disc ** alpha)
            gsum += (s_v ** (2.0 / alpha) * b_v * p ** (2.0 / alpha)
                     * (near - far_tail))
        body = area + 2.0 * math.pi * source.density / alpha * gsum
        return body * law.pdf(p) * p

    value = float(integrate_1d(integrand, u_lo, u_hi, spec))
    if value > 1e-9:
        raise ModelConsistencyError(
            f"dense exponent for source tier {source_tier} is positive "
            f"({value:.3e}); serving links exceed the LOS disc in this scenario")
    return min(value, 0.0)


def dense_sir_outage(query, dense: DenseSpec, net: NetworkConfig,
                     spec: QuadSpec = DEFAULT_QUAD) -> float:
    """SIR outage under the LOS-disc approximation.

    Noise is ignored by construction: the result is bit-identical under
    changes of the configured noise power.  ``query.terms`` is not used;
    the approximation order is ``dense.approx_terms``.
    """
    dense.validate_against(net)
    serving = net.tier(query.serving_tier)
    gain = serving.bs_main_gain * net.user_antenna.main_gain
    n_terms = dense.approx_terms
    eta = n_terms * math.factorial(n_terms) ** (-1.0 / n_terms)

    laws = [make_dense_power_law(k, net) for k in range(1, net.num_tiers + 1)]

    acc = 0.0
    for order in range(1, n_terms + 1):
        order_scale = eta * order * query.threshold / (serving.cutoff * gain)
        log_factor = 0.0
        for k, law in enumerate(laws, start=1):
            log_factor += _tier_exponent(order_scale, query.serving_tier, k,
                                         net, dense, law, spec)
        acc += (-1.0) ** (order + 1) * math.comb(n_terms, order) * math.exp(log_factor)
    raw = 1.0 - acc
    if raw < -1e-8 or raw > 1.0 + 1e-8:
        raise CancellationError(
            f"dense alternating sum left a residual outside [0, 1] by {raw:.3e}")
    return min(1.0, max(0.0, raw))
