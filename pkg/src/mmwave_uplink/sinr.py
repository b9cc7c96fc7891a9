"""SINR outage via Laplace transforms of the aggregate interference.

The outage probability of an active user is expressed through an
alternating binomial sum over Laplace-functional evaluations of the LOS
and NLOS interference fields.  Each evaluation is a nested double
integral: inner over the interferer transmit power (on a log axis, since
its density spans many decades), outer over a scaled distance variable on
a semi-infinite range.

As with the power module, the single-tier assembly (``sinr_outage_single``)
and the general multi-tier assembly are independent code paths over a
shared quadrature kernel; for one tier they must agree and the tests check
that they do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import NetworkConfig, directivity_pmf
from .numerics import DEFAULT_QUAD, QuadSpec, integrate_1d, integrate_semi_infinite
from .power import (
    PowerLaw,
    intensity_density_single,
    intensity_measure,
    make_power_law,
    power_support_floor,
    truncation_outage,
)

__all__ = [
    "SinrQuery",
    "OutageResult",
    "CancellationError",
    "nakagami_eta",
    "laplace_exponent_los",
    "laplace_exponent_nlos",
    "sinr_outage",
    "sinr_outage_single",
    "total_outage",
]

MAX_NAKAGAMI_TERMS = 10


class CancellationError(ArithmeticError):
    """Alternating binomial sum lost too many digits to be trusted."""


def nakagami_eta(n_terms: int) -> float:
    """Sharpness constant N * (N!)^(-1/N) of the gamma-CDF bound."""
    return n_terms * math.factorial(n_terms) ** (-1.0 / n_terms)


@dataclass(frozen=True)
class SinrQuery:
    """One outage question: serving tier, linear SINR threshold, fading order."""

    serving_tier: int
    threshold: float
    terms: int
    eta: float = field(init=False)

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0 (linear SINR)")
        if not 1 <= self.terms <= MAX_NAKAGAMI_TERMS:
            raise ValueError(
                f"fading order must lie in 1..{MAX_NAKAGAMI_TERMS}; the "
                "alternating sum loses too many digits beyond that")
        object.__setattr__(self, "eta", nakagami_eta(self.terms))

    @classmethod
    def for_network(cls, net: NetworkConfig, serving_tier: int,
                    threshold: float) -> "SinrQuery":
        net.tier(serving_tier)
        return cls(serving_tier=serving_tier, threshold=threshold,
                   terms=net.nakagami)


@dataclass(frozen=True)
class OutageResult:
    """SINR, truncation and combined outage of one tier."""

    sinr_outage: float
    truncation_outage: float
    total_outage: float

    def __post_init__(self) -> None:
        for name in ("sinr_outage", "truncation_outage", "total_outage"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        op, os_ = self.truncation_outage, self.sinr_outage
        if abs(self.total_outage - (op + (1.0 - op) * os_)) > 1e-12:
            raise ValueError("total outage must combine truncation and SINR outage")

    @classmethod
    def combine(cls, trunc: float, sinr: float) -> "OutageResult":
        return cls(sinr_outage=sinr, truncation_outage=trunc,
                   total_outage=trunc + (1.0 - trunc) * sinr)


# --- shared double-integral kernel -----------------------------------------

def _gamma_tail_bound(n_terms: int, x):
    """1 - (1 + x)^-N, the fading-averaged outage weight, stable for small x."""
    return -np.expm1(-n_terms * np.log1p(x))


def _laplace_double_integral(kind: str, alpha: float, decay_rate: float,
                             lower_limit: float, law: PowerLaw, u_lo: float,
                             n_terms: int, spec: QuadSpec) -> float:
    """Distance/power double integral of one Laplace exponent term.

    Outer variable y runs over [lower_limit, inf); it is integrated in the
    scale-free variable z = y / lower_limit so the transform of
    ``integrate_semi_infinite`` sees O(1) structure regardless of the
    threshold.  Inner variable is log transmit power.  ``decay_rate`` is
    the blockage attenuation per unit y at unit power.
    """
    u_hi = math.log(law.max_power)
    inv_alpha = 1.0 / alpha

    def inner(y_arr: np.ndarray) -> np.ndarray:
        def f_inner(u: np.ndarray) -> np.ndarray:
            p = np.exp(u)
            weight = p ** (2.0 * inv_alpha + 1.0) * law.pdf(p)
            shed = np.outer(y_arr, decay_rate * p ** inv_alpha)
            if kind == "los":
                kern = np.exp(-shed)
            else:
                kern = -np.expm1(-shed)
            return kern * weight[None, :]

        return integrate_1d(f_inner, u_lo, u_hi, spec)

    def outer(z_arr: np.ndarray) -> np.ndarray:
        y = lower_limit * z_arr
        frac = _gamma_tail_bound(n_terms, y ** (-alpha) / n_terms)
        return lower_limit * frac * y * inner(y)

    return float(integrate_semi_infinite(outer, 1.0, spec))


def _exponent(kind: str, n: int, source_tier: int, query: SinrQuery,
              net: NetworkConfig, law: PowerLaw, spec: QuadSpec,
              u_lo: float | None = None) -> float:
    serving = net.tier(query.serving_tier)
    source = net.tier(source_tier)
    alpha = serving.alpha_los if kind == "los" else serving.alpha_nlos
    gain = serving.bs_main_gain * net.user_antenna.main_gain
    s_n = query.eta * n * query.threshold / (serving.cutoff * gain)
    if u_lo is None:
        u_lo = math.log(power_support_floor(law))
    pmf = directivity_pmf(serving, net.user_antenna)

    total = 0.0
    for a_v, b_v in zip(pmf.gains, pmf.probs):
        q_v = s_n * a_v
        lower = (q_v * source.cutoff) ** (-1.0 / alpha)
        decay = serving.blockage * q_v ** (1.0 / alpha)
        integral = _laplace_double_integral(
            kind, alpha, decay, lower, law, u_lo, query.terms, spec)
        total += b_v * q_v ** (2.0 / alpha) * integral
    return 2.0 * math.pi * source.density * total


def laplace_exponent_los(n: int, source_tier: int, query: SinrQuery,
                         net: NetworkConfig,
                         spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Exponent of the LOS-interference Laplace functional at order ``n``."""
    if not 1 <= n <= query.terms:
        raise ValueError(f"order must lie in 1..{query.terms}")
    law = make_power_law(source_tier, net)
    return _exponent("los", n, source_tier, query, net, law, spec)


def laplace_exponent_nlos(n: int, source_tier: int, query: SinrQuery,
                          net: NetworkConfig,
                          spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Exponent of the NLOS-interference Laplace functional at order ``n``."""
    if not 1 <= n <= query.terms:
        raise ValueError(f"order must lie in 1..{query.terms}")
    law = make_power_law(source_tier, net)
    return _exponent("nlos", n, source_tier, query, net, law, spec)


def _alternating_outage(per_order_log_terms: list[float], n_terms: int) -> float:
    """1 - sum of (-1)^(n+1) C(N,n) exp(log_term_n), with the cancellation guard."""
    acc = 0.0
    for n, log_t in enumerate(per_order_log_terms, start=1):
        acc += (-1.0) ** (n + 1) * math.comb(n_terms, n) * math.exp(log_t)
    raw = 1.0 - acc
    if raw < -1e-8 or raw > 1.0 + 1e-8:
        raise CancellationError(
            f"alternating sum left a residual outside [0, 1] by {raw:.3e}; "
            "the binomial terms cancelled too deeply to trust")
    return min(1.0, max(0.0, raw))


def sinr_outage(query: SinrQuery, net: NetworkConfig,
                spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Probability that an active user's SINR falls below the threshold."""
    serving = net.tier(query.serving_tier)
    gain = serving.bs_main_gain * net.user_antenna.main_gain
    laws = [make_power_law(k, net) for k in range(1, net.num_tiers + 1)]
    floors = [math.log(power_support_floor(law)) for law in laws]

    log_terms = []
    for n in range(1, query.terms + 1):
        noise = (query.eta * n * query.threshold * net.noise_power
                 / (serving.cutoff * gain))
        agg = 0.0
        for k, (law, u_lo) in enumerate(zip(laws, floors), start=1):
            agg += _exponent("los", n, k, query, net, law, spec, u_lo=u_lo)
            agg += _exponent("nlos", n, k, query, net, law, spec, u_lo=u_lo)
        log_terms.append(-noise - agg)
    return _alternating_outage(log_terms, query.terms)


def sinr_outage_single(query: SinrQuery, net: NetworkConfig,
                       spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Single-tier assembly, written out without tier sums."""
    if net.num_tiers != 1:
        raise ValueError("single-tier path requires exactly one tier")
    if query.serving_tier != 1:
        raise ValueError("single-tier path serves tier 1")
    tier = net.tier(1)
    gain = tier.bs_main_gain * net.user_antenna.main_gain
    norm = -math.expm1(-intensity_measure(net.max_power / tier.cutoff, tier))
    law = PowerLaw(
        serving_tier=1,
        intensity=lambda p: intensity_density_single(p, tier),
        measure=lambda y: intensity_measure(y, tier),
        normalizer=norm, cutoff=tier.cutoff, max_power=net.max_power)
    u_lo = math.log(power_support_floor(law))
    pmf = directivity_pmf(tier, net.user_antenna)

    log_terms = []
    for n in range(1, query.terms + 1):
        s_n = query.eta * n * query.threshold / (tier.cutoff * gain)
        noise = s_n * net.noise_power
        agg = 0.0
        for a_v, b_v in zip(pmf.gains, pmf.probs):
            q_v = s_n * a_v
            for kind, alpha in (("los", tier.alpha_los), ("nlos", tier.alpha_nlos)):
                lower = (q_v * tier.cutoff) ** (-1.0 / alpha)
                decay = tier.blockage * q_v ** (1.0 / alpha)
                integral = _laplace_double_integral(
                    kind, alpha, decay, lower, law, u_lo, query.terms, spec)
                agg += (2.0 * math.pi * tier.density * b_v
                        * q_v ** (2.0 / alpha) * integral)
        log_terms.append(-noise - agg)
    return _alternating_outage(log_terms, query.terms)


def total_outage(query: SinrQuery, net: NetworkConfig,
                 spec: QuadSpec = DEFAULT_QUAD) -> OutageResult:
    """Truncation and SINR outage combined: fail to transmit, or transmit
    and miss the threshold."""
    trunc = truncation_outage(query.serving_tier, net)
    sinr = sinr_outage(query, net, spec)
    return OutageResult.combine(trunc, sinr)
