"""Monte-Carlo realization of the coupled point-process uplink model.

This is the oracle the closed-form engines are validated against.  Each
trial draws the full system: BS processes per tier, the user process,
per-pair blockage states, min-metric association, one scheduled user per
nonempty cell, channel-inversion powers with truncation, beam orientations
and Nakagami fading.  Nothing is imported from the analytic modules, so
agreement between the two engines is a genuine cross-check.

Trials are deterministic functions of (base_seed, trial_index): every
random draw comes from substreams hashed out of those two integers, so
results are bit-identical regardless of how trials are scheduled across
workers.

A key cost saver: the realized geometry does not depend on the cutoff
thresholds, the max power or the SINR threshold.  ``simulate_grid``
therefore evaluates a whole grid of (cutoffs, max power) variants, and any
number of thresholds, on one set of realizations.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import NetworkConfig, directivity_pmf

__all__ = [
    "SimConfig",
    "SimEstimate",
    "Realization",
    "SimulationError",
    "sample_ppp",
    "build_realization",
    "simulate_grid",
    "estimate_sinr_outage",
    "estimate_truncation_outage",
    "estimate_mean_power",
    "dump_realization",
]

_ASSOC_CHUNK = 4096
_MAX_REDRAWS = 1000


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Simulation window and budget.

    The reference BS is constrained to lie within ``window_radius -
    guard_radius`` of the center so that it is surrounded by at least a
    guard ring of simulated interferers.  ``workers`` > 1 runs trials in a
    process pool; results are identical either way.
    """

    window_radius: float = 3000.0
    guard_radius: float = 1000.0
    trials: int = 30000
    base_seed: int = 0
    antithetic: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.window_radius > self.guard_radius >= 0:
            raise ValueError("need window_radius > guard_radius >= 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class SimEstimate:
    """A Monte-Carlo estimate with a 95% normal-approximation half width."""

    value: float
    half_width_95: float
    trials_used: int

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("estimate must be >= 0")
        if self.trials_used < 1:
            raise ValueError("estimate needs at least one sample")


@dataclass
class Realization:
    """One drawn network: geometry, association, scheduling and channel draws.

    ``user_metric`` is the association metric y of each user (distance to
    the winning BS raised to the drawn LOS/NLOS exponent); the required
    transmit power toward tier j's cutoff rho is simply rho * y.  Per
    reference tier, the interferer link draws toward that tier's reference
    BS are stored for both gain models (geometric beams and categorical
    lobe products); estimators choose one.
    """

    trial_index: int
    redraws: int
    bs_xy: list  # per tier, (n_k, 2) float arrays
    users_xy: np.ndarray
    user_metric: np.ndarray
    user_tier: np.ndarray      # 0-based tier index per user
    user_bs: np.ndarray        # global BS id per user
    user_is_los: np.ndarray
    user_power_req: np.ndarray  # at the configured cutoffs
    user_truncated: np.ndarray
    scheduled_user: np.ndarray  # per global BS id, -1 when the cell is empty
    ref_bs: np.ndarray          # per tier, global BS id of the reference BS
    typical_user: np.ndarray    # per tier, user id scheduled at the reference
    signal_fade: np.ndarray     # per tier, |g|^2 of the typical user's link
    int_user: list    # per tier, interferer user ids
    int_dist: list    # per tier, distance to the reference BS
    int_is_los: list  # per tier, blockage draw toward the reference BS
    int_fade: list    # per tier, |g|^2 per interferer
    int_gain_geo: list
    int_gain_cat: list


def sample_ppp(density: float, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson process on a disc: (n, 2) positions in meters."""
    if density < 0:
        raise ValueError("density must be >= 0")
    n = rng.poisson(density * math.pi * radius * radius)
    r = radius * np.sqrt(rng.random(n))
    phi = rng.random(n) * 2.0 * math.pi
    return np.column_stack((r * np.cos(phi), r * np.sin(phi)))


def _associate_tier(users_xy, bs_xy, tier, rng):
    """Per-user best metric within one tier under per-pair blockage draws.

    A pair is LOS when an Exp(1) draw exceeds blockage * distance, which is
    the same event as a uniform draw falling below exp(-blockage * d) but
    needs no exponentials on the hot path.  Returns (metric, bs index,
    is_los) per user.
    """
    n_u = len(users_xy)
    n_b = len(bs_xy)
    metric = np.full(n_u, np.inf)
    best_bs = np.zeros(n_u, dtype=np.int64)
    best_los = np.zeros(n_u, dtype=bool)
    if n_b == 0:
        return metric, best_bs, best_los
    bx = bs_xy[:, 0].astype(np.float32)
    by = bs_xy[:, 1].astype(np.float32)
    ux = users_xy[:, 0].astype(np.float32)
    uy = users_xy[:, 1].astype(np.float32)
    beta = np.float32(tier.blockage)
    rows = np.arange(_ASSOC_CHUNK)
    for lo in range(0, n_u, _ASSOC_CHUNK):
        hi = min(lo + _ASSOC_CHUNK, n_u)
        d = np.sqrt((ux[lo:hi, None] - bx[None, :]) ** 2
                    + (uy[lo:hi, None] - by[None, :]) ** 2)
        los = rng.standard_exponential(d.shape, dtype=np.float32) > beta * d
        d_los = np.where(los, d, np.float32(np.inf))
        d_nlos = np.where(los, np.float32(np.inf), d)
        i_los = np.argmin(d_los, axis=1)
        i_nlos = np.argmin(d_nlos, axis=1)
        r = rows[: hi - lo]
        y_los = d_los[r, i_los].astype(np.float64) ** tier.alpha_los
        y_nlos = d_nlos[r, i_nlos].astype(np.float64) ** tier.alpha_nlos
        take_los = y_los <= y_nlos
        metric[lo:hi] = np.where(take_los, y_los, y_nlos)
        best_bs[lo:hi] = np.where(take_los, i_los, i_nlos)
        best_los[lo:hi] = take_los
    return metric, best_bs, best_los


def _wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _draw_channel(rng, n_draws: int, nakagami: int, antithetic_mode: bool,
                  twin: bool):
    """Uniforms behind one tier's interferer channel draws plus the signal fade.

    In antithetic mode both halves of a trial pair draw fading through the
    gamma inverse CDF so the twin's flipped uniforms produce genuinely
    antithetic fades; outside it the direct gamma sampler is faster.
    """
    u_los = rng.random(n_draws)
    u_beam = rng.random(n_draws)
    u_cat = rng.random(n_draws)
    if twin:
        u_los = 1.0 - u_los
        u_beam = (u_beam + 0.5) % 1.0
        u_cat = 1.0 - u_cat
    if antithetic_mode:
        from scipy import special as sp

        u_fade = rng.random(n_draws)
        u_fade_o = rng.random()
        if twin:
            u_fade = 1.0 - u_fade
            u_fade_o = 1.0 - u_fade_o
        fade = sp.gammaincinv(nakagami, u_fade) / nakagami
        fade_o = float(sp.gammaincinv(nakagami, u_fade_o)) / nakagami
    else:
        fade = rng.gamma(nakagami, 1.0 / nakagami, size=n_draws)
        fade_o = float(rng.gamma(nakagami, 1.0 / nakagami))
    return u_los, u_beam, u_cat, fade, fade_o


def build_realization(net: NetworkConfig, sim: SimConfig,
                      trial_index: int) -> Realization:
    """Draw one trial; a pure function of (base_seed, trial_index).

    Redraws the whole trial (counted) if some tier has no BS in the guard
    region or some reference cell is empty.
    """
    if net.user_density <= 0:
        raise SimulationError("simulation needs user_density > 0")
    antithetic_twin = sim.antithetic and (trial_index % 2 == 1)
    geometry_index = (trial_index - 1) if antithetic_twin else trial_index

    for attempt in range(_MAX_REDRAWS):
        ss = np.random.SeedSequence([sim.base_seed, geometry_index, attempt])
        s_points, s_assoc, s_sched, s_channel = ss.spawn(4)
        rng_points = np.random.default_rng(s_points)
        rng_assoc = np.random.default_rng(s_assoc)
        rng_sched = np.random.default_rng(s_sched)
        rng_channel = np.random.default_rng(s_channel)

        bs_xy = [sample_ppp(t.density, sim.window_radius, rng_points)
                 for t in net.tiers]
        users_xy = sample_ppp(net.user_density, sim.window_radius, rng_points)
        if any(len(b) == 0 for b in bs_xy) or len(users_xy) == 0:
            continue

        offsets = np.cumsum([0] + [len(b) for b in bs_xy])
        n_bs_total = int(offsets[-1])
        n_u = len(users_xy)

        # association: best metric across tiers with per-pair blockage draws
        metric = np.full(n_u, np.inf)
        tier_of = np.zeros(n_u, dtype=np.int64)
        bs_of = np.zeros(n_u, dtype=np.int64)
        is_los = np.zeros(n_u, dtype=bool)
        for k, tier in enumerate(net.tiers):
            m_k, b_k, l_k = _associate_tier(users_xy, bs_xy[k], tier, rng_assoc)
            better = m_k < metric
            metric[better] = m_k[better]
            tier_of[better] = k
            bs_of[better] = b_k[better] + offsets[k]
            is_los[better] = l_k[better]

        cutoffs = np.array([t.cutoff for t in net.tiers])
        power_req = cutoffs[tier_of] * metric
        truncated = power_req > net.max_power

        # scheduling: uniform member per nonempty cell via a random permutation
        perm = rng_sched.permutation(n_u)
        cells, first = np.unique(bs_of[perm], return_index=True)
        scheduled = np.full(n_bs_total, -1, dtype=np.int64)
        scheduled[cells] = perm[first]

        # reference BS per tier: nearest to the center inside the guard region
        inner = sim.window_radius - sim.guard_radius
        ref_bs = np.full(net.num_tiers, -1, dtype=np.int64)
        typical = np.full(net.num_tiers, -1, dtype=np.int64)
        ok = True
        for k in range(net.num_tiers):
            r_c = np.hypot(bs_xy[k][:, 0], bs_xy[k][:, 1])
            candidates = np.flatnonzero(r_c <= inner)
            if len(candidates) == 0:
                ok = False
                break
            local = candidates[np.argmin(r_c[candidates])]
            ref_bs[k] = local + offsets[k]
            typical[k] = scheduled[ref_bs[k]]
            if typical[k] < 0:
                ok = False
                break
        if not ok:
            continue

        # channel draws toward each tier's reference BS
        sched_ids = scheduled[scheduled >= 0]
        signal_fade = np.zeros(net.num_tiers)
        int_user, int_dist, int_los, int_fade = [], [], [], []
        int_gain_geo, int_gain_cat = [], []
        ua = net.user_antenna
        for k, tier in enumerate(net.tiers):
            z = sched_ids[sched_ids != typical[k]]
            ref_xy = bs_xy[k][ref_bs[k] - offsets[k]]
            dz = np.hypot(users_xy[z, 0] - ref_xy[0], users_xy[z, 1] - ref_xy[1])
            u_los, u_beam, u_cat, fade, fade_o = _draw_channel(
                rng_channel, len(z), net.nakagami, sim.antithetic,
                antithetic_twin)
            los_z = u_los < np.exp(-tier.blockage * dz)

            # geometric gains: interferer beam uniform, reference beam at its user
            to_ref = np.arctan2(ref_xy[1] - users_xy[z, 1],
                                ref_xy[0] - users_xy[z, 0])
            own_beam = u_beam * 2.0 * math.pi
            u_gain = np.where(np.abs(_wrap_angle(own_beam - to_ref)) <= ua.beamwidth / 2.0,
                              ua.main_gain, ua.side_gain)
            t_xy = users_xy[typical[k]]
            ref_beam = math.atan2(t_xy[1] - ref_xy[1], t_xy[0] - ref_xy[0])
            from_ref = np.arctan2(users_xy[z, 1] - ref_xy[1],
                                  users_xy[z, 0] - ref_xy[0])
            b_gain = np.where(np.abs(_wrap_angle(from_ref - ref_beam)) <= tier.bs_beamwidth / 2.0,
                              tier.bs_main_gain, tier.bs_side_gain)
            gain_geo = u_gain * b_gain

            # categorical gains from the four-lobe PMF
            pmf = directivity_pmf(tier, ua)
            edges = np.cumsum(pmf.probs)
            gain_cat = np.asarray(pmf.gains)[np.searchsorted(edges, u_cat)]

            signal_fade[k] = fade_o
            int_user.append(z)
            int_dist.append(dz)
            int_los.append(los_z)
            int_fade.append(fade)
            int_gain_geo.append(gain_geo)
            int_gain_cat.append(gain_cat)

        return Realization(
            trial_index=trial_index, redraws=attempt,
            bs_xy=bs_xy, users_xy=users_xy,
            user_metric=metric, user_tier=tier_of, user_bs=bs_of,
            user_is_los=is_los, user_power_req=power_req,
            user_truncated=truncated, scheduled_user=scheduled,
            ref_bs=ref_bs, typical_user=typical, signal_fade=signal_fade,
            int_user=int_user, int_dist=int_dist, int_is_los=int_los,
            int_fade=int_fade, int_gain_geo=int_gain_geo,
            int_gain_cat=int_gain_cat)

    raise SimulationError(
        f"trial {trial_index}: no valid draw in {_MAX_REDRAWS} attempts; "
        "raise user_density or the window radius")


# --- grid evaluation --------------------------------------------------------

def _eval_trial(real: Realization, net: NetworkConfig, tier_index: int,
                rho_grid: np.ndarray, pu_grid: np.ndarray, gain_model: str,
                collect_powers: int):
    """Reduce one realization against a grid of (cutoff-vector, max power)
    variants for one reference tier.  Returns per-variant interference,
    typical-user activity/power, and tier-associated user tallies."""
    k = tier_index - 1
    tier = net.tier(tier_index)
    n_var = len(pu_grid)

    z = real.int_user[k]
    alpha = np.where(real.int_is_los[k], tier.alpha_los, tier.alpha_nlos)
    gains = real.int_gain_geo[k] if gain_model == "geometric" else real.int_gain_cat[k]
    coeff = real.int_fade[k] * gains * real.int_dist[k] ** (-alpha)
    y_z = real.user_metric[z]
    t_z = real.user_tier[z]

    p_z = rho_grid[:, t_z] * y_z[None, :]          # (n_var, n_int)
    active_z = p_z <= pu_grid[:, None]
    interference = np.einsum("vz,z,vz->v", p_z, coeff, active_z)

    y_o = real.user_metric[real.typical_user[k]]
    p_o = rho_grid[:, k] * y_o
    active_o = p_o <= pu_grid

    users_j = np.flatnonzero(real.user_tier == k)
    y_u = real.user_metric[users_j]
    p_u = rho_grid[:, k][:, None] * y_u[None, :]   # (n_var, n_users_j)
    act_u = p_u <= pu_grid[:, None]
    trunc_counts = (~act_u).sum(axis=1)
    power_sum = np.where(act_u, p_u, 0.0).sum(axis=1)
    power_sqsum = np.where(act_u, p_u * p_u, 0.0).sum(axis=1)
    active_counts = act_u.sum(axis=1)

    sample = y_u[:collect_powers] if collect_powers > 0 else None
    return (interference, active_o, p_o, float(real.signal_fade[k]),
            len(users_j), trunc_counts, power_sum, power_sqsum,
            active_counts, sample, real.redraws)


@dataclass
class TierGridResult:
    """Per-trial reductions for one reference tier over the variant grid."""

    rho_grid: np.ndarray       # (n_var, num_tiers) cutoffs, watts
    pu_grid: np.ndarray        # (n_var,) max power, watts
    interference: np.ndarray   # (trials, n_var)
    typical_active: np.ndarray  # (trials, n_var)
    typical_power: np.ndarray  # (trials, n_var)
    signal_fade: np.ndarray    # (trials,)
    user_counts: np.ndarray    # (trials,)
    trunc_counts: np.ndarray   # (trials, n_var)
    power_sum: np.ndarray      # (trials, n_var)
    power_sqsum: np.ndarray    # (trials, n_var)
    active_counts: np.ndarray  # (trials, n_var)
    user_metric_sample: np.ndarray  # pooled association metrics, may be empty
    redraws: int

    def sinr_outage(self, net: NetworkConfig, tier_index: int,
                    threshold: float, variant: int = 0) -> SimEstimate:
        tier = net.tier(tier_index)
        gain = tier.bs_main_gain * net.user_antenna.main_gain
        act = self.typical_active[:, variant]
        n = int(act.sum())
        if n == 0:
            raise SimulationError("no active typical users; cannot estimate outage")
        rho = self.rho_grid[variant, tier_index - 1]
        sinr = (rho * self.signal_fade[act] * gain
                / (net.noise_power + self.interference[act, variant]))
        p = float(np.mean(sinr < threshold))
        return SimEstimate(p, 1.96 * math.sqrt(max(p * (1 - p), 0.0) / n), n)

    def truncation_outage(self, variant: int = 0) -> SimEstimate:
        n = int(self.user_counts.sum())
        p = float(self.trunc_counts[:, variant].sum()) / n
        return SimEstimate(p, 1.96 * math.sqrt(max(p * (1 - p), 0.0) / n), n)

    def mean_power(self, variant: int = 0) -> SimEstimate:
        n = int(self.active_counts[:, variant].sum())
        if n == 0:
            raise SimulationError("no active users; cannot estimate mean power")
        s = float(self.power_sum[:, variant].sum())
        sq = float(self.power_sqsum[:, variant].sum())
        mean = s / n
        var = max(sq / n - mean * mean, 0.0)
        return SimEstimate(mean, 1.96 * math.sqrt(var / n), n)

    def laplace_functional(self, s: float, variant: int = 0) -> SimEstimate:
        """Empirical E[exp(-s * interference)] over all trials."""
        vals = np.exp(-s * self.interference[:, variant])
        m = float(vals.mean())
        n = len(vals)
        return SimEstimate(m, 1.96 * float(vals.std()) / math.sqrt(n), n)


def _run_block(args):
    (net, sim, tiers_out, rho_grid, pu_grid, gain_model, collect_powers,
     lo, hi) = args
    out = {j: [] for j in tiers_out}
    for t in range(lo, hi):
        real = build_realization(net, sim, t)
        budget = max(0, collect_powers)
        for j in tiers_out:
            out[j].append(_eval_trial(real, net, j, rho_grid, pu_grid,
                                      gain_model, budget))
    return out


def simulate_grid(net: NetworkConfig, sim: SimConfig, tiers_out, variants,
                  gain_model: str = "geometric",
                  collect_powers: int = 0) -> dict:
    """Run ``sim.trials`` realizations and reduce them against a variant grid.

    ``variants`` is a sequence of (cutoff-vector, max-power) pairs in watts;
    the geometry is shared across all of them.  Returns a dict mapping each
    requested reference tier to a :class:`TierGridResult`.
    ``collect_powers`` > 0 pools up to that many association metrics per
    trial for distribution tests.
    """
    if gain_model not in ("geometric", "categorical"):
        raise ValueError("gain_model must be 'geometric' or 'categorical'")
    tiers_out = list(tiers_out)
    for j in tiers_out:
        net.tier(j)
    rho_grid = np.array([np.asarray(v[0], dtype=float) for v in variants])
    pu_grid = np.array([float(v[1]) for v in variants])
    if rho_grid.ndim != 2 or rho_grid.shape[1] != net.num_tiers:
        raise ValueError("each variant needs one cutoff per tier")

    blocks = []
    step = max(1, min(256, sim.trials // max(sim.workers, 1) + 1))
    for lo in range(0, sim.trials, step):
        blocks.append((net, sim, tiers_out, rho_grid, pu_grid, gain_model,
                       collect_powers, lo, min(lo + step, sim.trials)))

    if sim.workers > 1:
        with ProcessPoolExecutor(max_workers=sim.workers) as pool:
            results = list(pool.map(_run_block, blocks))
    else:
        results = [_run_block(b) for b in blocks]

    out = {}
    for j in tiers_out:
        rows = [r for block in results for r in block[j]]
        samples = [r[9] for r in rows if r[9] is not None and len(r[9])]
        out[j] = TierGridResult(
            rho_grid=rho_grid, pu_grid=pu_grid,
            interference=np.array([r[0] for r in rows]),
            typical_active=np.array([r[1] for r in rows]),
            typical_power=np.array([r[2] for r in rows]),
            signal_fade=np.array([r[3] for r in rows]),
            user_counts=np.array([r[4] for r in rows]),
            trunc_counts=np.array([r[5] for r in rows]),
            power_sum=np.array([r[6] for r in rows]),
            power_sqsum=np.array([r[7] for r in rows]),
            active_counts=np.array([r[8] for r in rows]),
            user_metric_sample=(np.concatenate(samples) if samples
                                else np.empty(0)),
            redraws=sum(r[10] for r in rows))
    return out


def _config_variant(net: NetworkConfig):
    return [(tuple(t.cutoff for t in net.tiers), net.max_power)]


def estimate_sinr_outage(query, net: NetworkConfig, sim: SimConfig,
                         gain_model: str = "geometric") -> SimEstimate:
    """Fraction of active typical users below the SINR threshold."""
    res = simulate_grid(net, sim, [query.serving_tier], _config_variant(net),
                        gain_model=gain_model)
    return res[query.serving_tier].sinr_outage(net, query.serving_tier,
                                               query.threshold)


def estimate_truncation_outage(net: NetworkConfig, sim: SimConfig,
                               tier_index: int) -> SimEstimate:
    """Fraction of tier-associated users whose required power exceeds the
    budget."""
    res = simulate_grid(net, sim, [tier_index], _config_variant(net))
    return res[tier_index].truncation_outage()


def estimate_mean_power(net: NetworkConfig, sim: SimConfig,
                        tier_index: int) -> SimEstimate:
    """Mean transmit power over active tier-associated users."""
    res = simulate_grid(net, sim, [tier_index], _config_variant(net))
    return res[tier_index].mean_power()


def dump_realization(real: Realization, fh) -> None:
    """Debug dump, one line per entity (schema is not stable):

    ``bs <tier> <x> <y> - <flags>`` and
    ``user <tier> <x> <y> <required_power> <flags>`` where flags are
    comma-joined from {ref, scheduled, typical, truncated, los, nlos}.
    """
    for k, pts in enumerate(real.bs_xy, start=1):
        for i, (x, y) in enumerate(pts):
            flags = []
            gid = i + sum(len(b) for b in real.bs_xy[: k - 1])
            if gid in real.ref_bs:
                flags.append("ref")
            fh.write(f"bs {k} {x:.3f} {y:.3f} - {','.join(flags) or '-'}\n")
    scheduled_set = set(real.scheduled_user[real.scheduled_user >= 0].tolist())
    typical_set = set(real.typical_user.tolist())
    for i, (x, y) in enumerate(real.users_xy):
        flags = ["los" if real.user_is_los[i] else "nlos"]
        if i in typical_set:
            flags.append("typical")
        elif i in scheduled_set:
            flags.append("scheduled")
        if real.user_truncated[i]:
            flags.append("truncated")
        fh.write(f"user {real.user_tier[i] + 1} {x:.3f} {y:.3f} "
                 f"{real.user_power_req[i]:.6e} {','.join(flags)}\n")
