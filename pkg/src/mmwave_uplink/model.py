"""Domain types, unit conversions, blockage model and beam-gain statistics.

Everything downstream of this module works in strict SI linear units
(meters, watts, radians).  dBm / dB / BS-per-km^2 / degrees exist only at
the boundary: scenario files and CLI flags carry external units, and
``config_from_external`` converts once at construction time.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

__all__ = [
    "ConfigError",
    "TierParams",
    "UserAntennaParams",
    "NetworkConfig",
    "DirectivityPmf",
    "dbm_to_watts",
    "watts_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "per_km2_to_per_m2",
    "per_m2_to_per_km2",
    "los_probability",
    "directivity_pmf",
    "config_from_external",
    "config_to_external",
    "load_scenario",
    "scenario_from_text",
]

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Raised when a scenario record violates a construction invariant."""


# --- external <-> internal unit maps -------------------------------------

def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_w: float) -> float:
    return 10.0 * math.log10(x_w) + 30.0


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def per_km2_to_per_m2(x: float) -> float:
    return x * 1e-6


def per_m2_to_per_km2(x: float) -> float:
    return x * 1e6


def _require(cond: bool, field_name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{field_name}: {msg}")


# --- immutable parameter records ------------------------------------------

@dataclass(frozen=True)
class TierParams:
    """One tier of base stations.

    density            BS per square meter
    blockage           blockage rate per meter; 1/blockage is the average
                       line-of-sight range
    cutoff             power-control target received power, watts
    receiver_sensitivity  minimum decodable received power, watts; stored
                       and validated (cutoff must exceed it) but not used
                       by any outage formula
    bs_main_gain / bs_side_gain   sectorized antenna gains, linear
    bs_beamwidth       main-lobe width, radians
    alpha_los / alpha_nlos        pathloss exponents
    """

    density: float
    blockage: float
    cutoff: float
    receiver_sensitivity: float
    bs_main_gain: float
    bs_side_gain: float
    bs_beamwidth: float
    alpha_los: float
    alpha_nlos: float

    def __post_init__(self) -> None:
        _require(self.density > 0, "density", "must be > 0")
        _require(self.blockage > 0, "blockage", "must be > 0")
        _require(self.cutoff > self.receiver_sensitivity, "cutoff",
                 "must exceed receiver_sensitivity")
        _require(self.alpha_los > 0, "alpha_los", "must be > 0")
        _require(self.alpha_nlos >= self.alpha_los, "alpha_nlos",
                 "must be >= alpha_los")
        _require(self.bs_side_gain > 0, "bs_side_gain", "must be > 0")
        _require(self.bs_main_gain >= self.bs_side_gain, "bs_main_gain",
                 "must be >= bs_side_gain")
        _require(0 < self.bs_beamwidth < TWO_PI, "bs_beamwidth",
                 "must lie in (0, 2*pi)")


@dataclass(frozen=True)
class UserAntennaParams:
    """Sectorized user antenna: main/side lobe gains (linear) and beamwidth (rad)."""

    main_gain: float
    side_gain: float
    beamwidth: float

    def __post_init__(self) -> None:
        _require(self.side_gain > 0, "side_gain", "must be > 0")
        _require(self.main_gain >= self.side_gain, "main_gain",
                 "must be >= side_gain")
        _require(0 < self.beamwidth < TWO_PI, "beamwidth",
                 "must lie in (0, 2*pi)")


@dataclass(frozen=True)
class NetworkConfig:
    """Full network description.

    Tiers are 1-based in scenario files and CLI output (matching common
    usage) and 0-based internally; helper ``tier(j)`` takes the 1-based
    index.  ``user_density`` only matters to the simulator; whether it is
    high enough that reference cells are populated is checked at
    simulation time, not here.
    """

    tiers: tuple[TierParams, ...]
    user_antenna: UserAntennaParams
    max_power: float
    noise_power: float
    nakagami: int
    user_density: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "tiers", tuple(self.tiers))
        _require(len(self.tiers) >= 1, "tiers", "need at least one tier")
        _require(self.max_power > 0, "max_power", "must be > 0")
        _require(isinstance(self.nakagami, int) and self.nakagami >= 1,
                 "nakagami", "must be an integer >= 1")
        _require(self.user_density >= 0, "user_density", "must be >= 0")

    @property
    def num_tiers(self) -> int:
        return len(self.tiers)

    def tier(self, j: int) -> TierParams:
        """Tier by 1-based index."""
        if not 1 <= j <= len(self.tiers):
            raise ConfigError(f"tier: index {j} out of range 1..{len(self.tiers)}")
        return self.tiers[j - 1]


@dataclass(frozen=True)
class DirectivityPmf:
    """Four-point distribution of the beam-gain product on an interfering link.

    Entry v carries gain ``gains[v]`` with probability ``probs[v]``:
    main*main, main*side (BS main), side*main, side*side.
    """

    gains: tuple[float, float, float, float]
    probs: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        g1, g2, g3, g4 = self.gains
        _require(all(g > 0 for g in self.gains), "gains", "must be > 0")
        _require(g1 >= g2 and g1 >= g3 and g4 <= g2 and g4 <= g3, "gains",
                 "must be ordered main*main >= mixed >= side*side")
        _require(all(b >= 0 for b in self.probs), "probs", "must be >= 0")
        _require(abs(sum(self.probs) - 1.0) <= 1e-12, "probs",
                 "must sum to 1 within 1e-12")


# --- elementary model operations -------------------------------------------

def los_probability(r: float, tier: TierParams) -> float:
    """Probability that a link of length ``r`` meters is line-of-sight."""
    if r < 0:
        raise ValueError(f"link length must be >= 0, got {r}")
    return math.exp(-tier.blockage * r)


def directivity_pmf(tier: TierParams, user: UserAntennaParams) -> DirectivityPmf:
    """Beam-gain PMF seen on an interfering link into a BS of this tier.

    Interferer beams are oriented uniformly at random, so each side of the
    link is independently in its main lobe with probability beamwidth/2pi.
    """
    fr = tier.bs_beamwidth / TWO_PI
    ft = user.beamwidth / TWO_PI
    gains = (
        tier.bs_main_gain * user.main_gain,
        tier.bs_main_gain * user.side_gain,
        tier.bs_side_gain * user.main_gain,
        tier.bs_side_gain * user.side_gain,
    )
    probs = (fr * ft, fr * (1.0 - ft), (1.0 - fr) * ft, (1.0 - fr) * (1.0 - ft))
    return DirectivityPmf(gains=gains, probs=probs)


# --- scenario records -------------------------------------------------------

_TIER_KEYS = (
    "lambda_bs_per_km2", "beta_per_m", "rho_o_dbm", "rho_min_dbm",
    "gb_max_db", "gb_min_db", "zeta_r_deg", "alpha_los", "alpha_nlos",
)
_NETWORK_KEYS = ("pu_dbm", "noise_dbm", "nakagami_n", "lambda_user_per_km2")
_USER_KEYS = ("gu_max_db", "gu_min_db", "zeta_t_deg")


def _get(section: Mapping[str, float], key: str, where: str) -> float:
    try:
        return float(section[key])
    except KeyError:
        raise ConfigError(f"{where}: missing key '{key}'") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: key '{key}' is not numeric") from None


def config_from_external(raw: Mapping) -> NetworkConfig:
    """Build a :class:`NetworkConfig` from an external-unit scenario record.

    ``raw`` is a mapping with entries ``network`` (pu_dbm, noise_dbm,
    nakagami_n, lambda_user_per_km2), ``tiers`` (ordered sequence of
    per-tier mappings) and ``user``.  Powers arrive in dBm, gains in dB,
    densities per km^2 and beamwidths in degrees; everything is converted
    to SI linear here.
    """
    try:
        net_sec = raw["network"]
        tier_secs: Sequence[Mapping[str, float]] = raw["tiers"]
        user_sec = raw["user"]
    except (KeyError, TypeError):
        raise ConfigError("scenario record needs 'network', 'tiers' and 'user' entries") from None
    if not tier_secs:
        raise ConfigError("tiers: need at least one tier section")

    tiers = []
    for i, sec in enumerate(tier_secs, start=1):
        where = f"tier.{i}"
        tiers.append(TierParams(
            density=per_km2_to_per_m2(_get(sec, "lambda_bs_per_km2", where)),
            blockage=_get(sec, "beta_per_m", where),
            cutoff=dbm_to_watts(_get(sec, "rho_o_dbm", where)),
            receiver_sensitivity=dbm_to_watts(_get(sec, "rho_min_dbm", where)),
            bs_main_gain=db_to_linear(_get(sec, "gb_max_db", where)),
            bs_side_gain=db_to_linear(_get(sec, "gb_min_db", where)),
            bs_beamwidth=math.radians(_get(sec, "zeta_r_deg", where)),
            alpha_los=_get(sec, "alpha_los", where),
            alpha_nlos=_get(sec, "alpha_nlos", where),
        ))
    user = UserAntennaParams(
        main_gain=db_to_linear(_get(user_sec, "gu_max_db", "user")),
        side_gain=db_to_linear(_get(user_sec, "gu_min_db", "user")),
        beamwidth=math.radians(_get(user_sec, "zeta_t_deg", "user")),
    )
    nakagami = _get(net_sec, "nakagami_n", "network")
    if nakagami != int(nakagami):
        raise ConfigError("network: nakagami_n must be an integer")
    return NetworkConfig(
        tiers=tuple(tiers),
        user_antenna=user,
        max_power=dbm_to_watts(_get(net_sec, "pu_dbm", "network")),
        noise_power=dbm_to_watts(_get(net_sec, "noise_dbm", "network")),
        nakagami=int(nakagami),
        user_density=per_km2_to_per_m2(_get(net_sec, "lambda_user_per_km2", "network")),
    )


def config_to_external(net: NetworkConfig) -> dict:
    """Inverse of :func:`config_from_external` (round-trips within 1e-9 relative)."""
    tiers = []
    for t in net.tiers:
        tiers.append({
            "lambda_bs_per_km2": per_m2_to_per_km2(t.density),
            "beta_per_m": t.blockage,
            "rho_o_dbm": watts_to_dbm(t.cutoff),
            "rho_min_dbm": watts_to_dbm(t.receiver_sensitivity),
            "gb_max_db": linear_to_db(t.bs_main_gain),
            "gb_min_db": linear_to_db(t.bs_side_gain),
            "zeta_r_deg": math.degrees(t.bs_beamwidth),
            "alpha_los": t.alpha_los,
            "alpha_nlos": t.alpha_nlos,
        })
    return {
        "network": {
            "pu_dbm": watts_to_dbm(net.max_power),
            "noise_dbm": watts_to_dbm(net.noise_power),
            "nakagami_n": net.nakagami,
            "lambda_user_per_km2": per_m2_to_per_km2(net.user_density),
        },
        "tiers": tiers,
        "user": {
            "gu_max_db": linear_to_db(net.user_antenna.main_gain),
            "gu_min_db": linear_to_db(net.user_antenna.side_gain),
            "zeta_t_deg": math.degrees(net.user_antenna.beamwidth),
        },
    }


def scenario_from_text(text: str) -> NetworkConfig:
    """Parse a scenario file given as a string.

    Format: INI-style sections ``[network]``, ``[tier.1]``, ``[tier.2]``,
    ..., ``[user]`` with the external-unit keys (see README).
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_file(io.StringIO(text))
    except configparser.Error as e:
        raise ConfigError(f"scenario parse error: {e}") from None

    if "network" not in cp:
        raise ConfigError("scenario: missing [network] section")
    if "user" not in cp:
        raise ConfigError("scenario: missing [user] section")

    tier_names = sorted(
        (s for s in cp.sections() if s.startswith("tier.")),
        key=lambda s: int(s.split(".", 1)[1]),
    )
    if not tier_names:
        raise ConfigError("scenario: need at least one [tier.N] section")
    expected = [f"tier.{i}" for i in range(1, len(tier_names) + 1)]
    if tier_names != expected:
        raise ConfigError(f"scenario: tier sections must be contiguous from tier.1, got {tier_names}")

    raw = {
        "network": dict(cp["network"]),
        "tiers": [dict(cp[name]) for name in tier_names],
        "user": dict(cp["user"]),
    }
    return config_from_external(raw)


def load_scenario(path: str) -> NetworkConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_text(fh.read())
