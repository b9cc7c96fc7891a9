"""Transmit-power distribution under truncated channel-inversion control.

Users invert the pathloss toward their serving BS: a user whose serving
link needs power p transmits at p if p <= max_power and stays silent
(truncation outage) otherwise.  Mapping the BS point process through the
pathloss turns the required power into an inhomogeneous Poisson process on
the power axis; everything here is built from its intensity measure.

Two code paths are kept deliberately separate: the single-tier closed
forms (``*_single``) and the general multi-tier composition.  For one tier
they must agree to near machine precision, which the test suite enforces.

All powers in watts.  ``y`` arguments are the dimensionless ratio
p / cutoff of the serving tier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special as sp

from .model import NetworkConfig, TierParams
from .numerics import DEFAULT_QUAD, QuadSpec, integrate_1d

__all__ = [
    "PowerLaw",
    "intensity_measure",
    "intensity_density",
    "intensity_density_single",
    "make_power_law",
    "power_pdf",
    "power_pdf_single",
    "power_cdf",
    "power_moment",
    "power_moment_single",
    "truncation_outage",
    "truncation_outage_single",
    "power_support_floor",
]


def _ramp(x):
    """1 - e^-x (1 + x), computed stably; equals the regularized lower
    incomplete gamma of order 2, so it never suffers the small-x
    cancellation of the literal expression."""
    return sp.gammainc(2.0, x)


def intensity_measure(y, tier: TierParams):
    """Mass of the required-power process of one tier up to power ratio ``y``.

    Strictly increasing from 0, positive for y > 0; the LOS part saturates
    at 2*pi*density/blockage^2 while the NLOS part grows like
    pi*density*y^(2/alpha_nlos).
    """
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("power ratio must be >= 0")
    lam, beta = tier.density, tier.blockage
    r_los = y ** (1.0 / tier.alpha_los)
    r_nlos = y ** (1.0 / tier.alpha_nlos)
    pref = 2.0 * math.pi * lam / (beta * beta)
    out = (pref * (_ramp(beta * r_los) - _ramp(beta * r_nlos))
           + math.pi * lam * r_nlos * r_nlos)
    return out if out.ndim else float(out)


def intensity_density(p, serving_cutoff: float, source_tier: TierParams):
    """Density (per watt) of one source tier's required-power process,
    evaluated against the serving tier's cutoff."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("power must be >= 0")
    lam, beta, rho = source_tier.density, source_tier.blockage, serving_cutoff
    a_l, a_n = source_tier.alpha_los, source_tier.alpha_nlos
    with np.errstate(divide="ignore"):
        los = (2.0 * math.pi * lam / (a_l * rho ** (2.0 / a_l))
               * p ** (2.0 / a_l - 1.0)
               * np.exp(-beta * (p / rho) ** (1.0 / a_l)))
        nlos = (2.0 * math.pi * lam / (a_n * rho ** (2.0 / a_n))
                * p ** (2.0 / a_n - 1.0)
                * (-np.expm1(-beta * (p / rho) ** (1.0 / a_n))))
    out = los + nlos
    return out if out.ndim else float(out)


def intensity_density_single(p, tier: TierParams):
    """Single-tier density: the serving cutoff is the tier's own."""
    return intensity_density(p, tier.cutoff, tier)


@dataclass(frozen=True)
class PowerLaw:
    """Required-power law of the typical user served by one tier.

    ``intensity(p)`` sums the per-tier densities at power p (watts);
    ``measure(y)`` sums the per-tier masses at power ratio y; ``normalizer``
    is the probability that the required power fits under max_power,
    i.e. 1 - truncation outage.
    """

    serving_tier: int
    intensity: Callable
    measure: Callable
    normalizer: float
    cutoff: float
    max_power: float

    def pdf(self, p):
        """Active-user transmit power density on [0, max_power]."""
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > self.max_power)):
            raise ValueError("power outside [0, max_power]")
        dens = self.intensity(p) * np.exp(-self.measure(p / self.cutoff))
        out = dens / self.normalizer
        return out if out.ndim else float(out)

    def cdf(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p > self.max_power)):
            raise ValueError("power outside [0, max_power]")
        out = -np.expm1(-self.measure(p / self.cutoff)) / self.normalizer
        return out if out.ndim else float(out)


def make_power_law(serving_tier: int, net: NetworkConfig) -> PowerLaw:
    """Bundle the multi-tier power law for users served by ``serving_tier``."""
    rho = net.tier(serving_tier).cutoff
    tiers = net.tiers

    def intensity(p):
        return sum(intensity_density(p, rho, t) for t in tiers)

    def measure(y):
        return sum(intensity_measure(y, t) for t in tiers)

    total = float(measure(net.max_power / rho))
    normalizer = -math.expm1(-total)
    return PowerLaw(serving_tier=serving_tier, intensity=intensity,
                    measure=measure, normalizer=normalizer,
                    cutoff=rho, max_power=net.max_power)


def power_pdf(p, serving_tier: int, net: NetworkConfig):
    """Transmit-power density of an active user served by ``serving_tier``."""
    return make_power_law(serving_tier, net).pdf(p)


def power_cdf(p, serving_tier: int, net: NetworkConfig):
    return make_power_law(serving_tier, net).cdf(p)


def power_pdf_single(p, net: NetworkConfig):
    """Single-tier transmit-power density written out without tier sums."""
    if net.num_tiers != 1:
        raise ValueError("single-tier path requires exactly one tier")
    tier = net.tier(1)
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > net.max_power)):
        raise ValueError("power outside [0, max_power]")
    norm = -math.expm1(-intensity_measure(net.max_power / tier.cutoff, tier))
    out = (intensity_density_single(p, tier)
           * np.exp(-intensity_measure(p / tier.cutoff, tier)) / norm)
    return out if out.ndim else float(out)


def truncation_outage(serving_tier: int, net: NetworkConfig) -> float:
    """Probability that pathloss inversion toward the serving BS exceeds
    the power budget."""
    rho = net.tier(serving_tier).cutoff
    total = sum(float(intensity_measure(net.max_power / rho, t)) for t in net.tiers)
    return math.exp(-total)


def truncation_outage_single(net: NetworkConfig) -> float:
    if net.num_tiers != 1:
        raise ValueError("single-tier path requires exactly one tier")
    tier = net.tier(1)
    return math.exp(-float(intensity_measure(net.max_power / tier.cutoff, tier)))


def power_support_floor(law: PowerLaw, mass_tol: float = 1e-12) -> float:
    """Lower integration limit below which the power law carries no mass.

    Returns p_min such that the normalized CDF at p_min is below
    ``mass_tol``; integrals over [0, max_power] may start there instead,
    which lets log-axis quadrature resolve densities whose mass sits many
    decades below max_power.
    """
    target = mass_tol * min(1.0, max(law.normalizer, 1e-300))
    lo, hi = math.log(law.max_power) - 700.0, math.log(law.max_power)
    if float(law.measure(math.exp(lo) / law.cutoff)) >= target:
        return math.exp(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(law.measure(math.exp(mid) / law.cutoff)) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-3:
            break
    return math.exp(lo)


def _log_axis_moment(law: PowerLaw, delta: float, spec: QuadSpec) -> float:
    """Moment integral on a log power axis (the density's mass can sit many
    decades below max_power, which linear-axis adaptivity resolves poorly)."""
    p_min = power_support_floor(law)
    u_lo, u_hi = math.log(p_min), math.log(law.max_power)

    def integrand(u):
        p = np.exp(u)
        return p ** (delta + 1.0) * law.pdf(p)

    return float(integrate_1d(integrand, u_lo, u_hi, spec))


def power_moment(delta: float, serving_tier: int, net: NetworkConfig,
                 spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Moment of order ``delta`` of the active-user transmit power."""
    if delta < 0:
        raise ValueError("moment order must be >= 0")
    if delta == 0:
        return 1.0
    return _log_axis_moment(make_power_law(serving_tier, net), delta, spec)


def power_moment_single(delta: float, net: NetworkConfig,
                        spec: QuadSpec = DEFAULT_QUAD) -> float:
    if net.num_tiers != 1:
        raise ValueError("single-tier path requires exactly one tier")
    if delta < 0:
        raise ValueError("moment order must be >= 0")
    if delta == 0:
        return 1.0
    tier = net.tier(1)
    norm = -math.expm1(-intensity_measure(net.max_power / tier.cutoff, tier))
    law = PowerLaw(
        serving_tier=1,
        intensity=lambda p: intensity_density_single(p, tier),
        measure=lambda y: intensity_measure(y, tier),
        normalizer=norm, cutoff=tier.cutoff, max_power=net.max_power)
    return _log_axis_moment(law, delta, spec)
