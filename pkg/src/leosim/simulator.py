"""Scenario assembly and the slot-by-slot episode loop.

An episode follows the handover-aware association algorithm: the
initial association is minimum-distance, previous rates start at zero,
then each slot propagates the constellation, rebuilds geometry and
visibility, draws fresh channel realizations, computes SNR
coefficients, solves the slot problem (or applies the baseline), and
detects handovers against the previous association.

Monte Carlo replicates share the constellation geometry and, by
default, the user placement; channel draws are independent per
replicate through a documented seed-derivation scheme.
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from . import allocator, channel, orbital, policies
from .allocator import Association, SlotProblem, SlotSolution, Violation
from .config import ScenarioConfig
from .orbital import GroundUser, Tle
from .policies import HandoverLedger


# ---------------------------------------------------------------------------
# Reproducible random streams
# ---------------------------------------------------------------------------

def _purpose_key(purpose: str) -> tuple[int, int]:
    digest = hashlib.blake2s(purpose.encode("utf-8")).digest()
    return (
        int.from_bytes(digest[:4], "little"),
        int.from_bytes(digest[4:8], "little"),
    )


def derive_stream(master_seed: int, replicate: int, purpose: str) -> np.random.Generator:
    """Independent, reproducible stream for (seed, replicate, purpose).

    Built on a counter-based seed sequence: the replicate index and a
    hash of the purpose label are the spawn key, so identical inputs
    always give identical streams and distinct inputs give independent
    ones.
    """
    ss = np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(int(replicate), *_purpose_key(purpose))
    )
    return np.random.default_rng(ss)


def derive_seed(master_seed: int, replicate: int) -> int:
    """Scalar per-replicate seed derived from the master seed."""
    digest = hashlib.blake2s(
        f"{master_seed}/{replicate}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------------------
# User placement
# ---------------------------------------------------------------------------

def place_users(
    center_lat_deg: float,
    center_lon_deg: float,
    radius_km: float,
    n: int,
    rng: np.random.Generator,
) -> list[GroundUser]:
    """Drop ``n`` users uniformly over a disc around the center.

    The radius is sampled as R*sqrt(u) with a uniform bearing, displaced
    in the local tangent plane and re-projected onto the WGS-84 surface
    (altitude 0).
    """
    center = orbital.geodetic_to_ecef(center_lat_deg, center_lon_deg, 0.0)
    lat = np.radians(center_lat_deg)
    lon = np.radians(center_lon_deg)
    east = np.array([-np.sin(lon), np.cos(lon), 0.0])
    north = np.array(
        [-np.sin(lat) * np.cos(lon), -np.sin(lat) * np.sin(lon), np.cos(lat)]
    )
    out = []
    for i in range(n):
        u1, u2 = rng.random(2)
        r = radius_km * np.sqrt(u1)
        bearing = 2.0 * np.pi * u2
        displaced = center + r * (np.sin(bearing) * east + np.cos(bearing) * north)
        lat_deg, lon_deg, _ = orbital.ecef_to_geodetic(displaced)
        out.append(GroundUser(user_id=i, latitude_deg=lat_deg,
                              longitude_deg=lon_deg, altitude_m=0.0))
    return out


# ---------------------------------------------------------------------------
# Scenario timeline: constellation + geometry for every slot epoch
# ---------------------------------------------------------------------------

@dataclass
class ScenarioTimeline:
    """Geometry shared by every replicate of a scenario.

    Index 0 is the initial-association epoch; slots 1..T are the solved
    time slots.
    """

    users: list[GroundUser]
    times: list[datetime]
    sat_names: list[str]
    distances_km: np.ndarray   # (T+1, U, S)
    elevations_deg: np.ndarray  # (T+1, U, S)
    visible: np.ndarray        # (T+1, U, S) bool


def load_constellation(cfg: ScenarioConfig) -> list[Tle]:
    """TLE file or synthetic Walker constellation, pre-selection."""
    if cfg.tle_path is not None:
        with open(cfg.tle_path) as fh:
            tles = orbital.parse_tle(fh.read())
        if not tles:
            raise ValueError(f"{cfg.tle_path}: no element sets found")
        return tles
    wk = cfg.walker
    return orbital.walker_tles(
        wk.total_sats, wk.planes, wk.inclination_deg, wk.altitude_km,
        wk.phasing, epoch=cfg.start_time,
    )


def select_satellites(tles: list[Tle], cfg: ScenarioConfig) -> list[Tle]:
    """Reduce an oversized constellation to ``n_sats`` satellites.

    TLE-file sources keep the satellites with the highest elevation
    above the user center at the start epoch.  Synthetic Walker shells
    instead rank by how many slot epochs each satellite spends above the
    visibility threshold at the center (ties to higher mean elevation),
    which spreads the subset along the episode instead of clustering it
    around the start.  Both rules are deterministic.
    """
    if len(tles) < cfg.n_sats:
        raise ValueError(
            f"constellation provides {len(tles)} satellites, scenario needs {cfg.n_sats}"
        )
    if len(tles) == cfg.n_sats:
        return list(tles)
    center = GroundUser(
        user_id=-1,
        latitude_deg=cfg.user_center_lat_deg,
        longitude_deg=cfg.user_center_lon_deg,
        altitude_m=0.0,
    )
    if cfg.tle_path is not None:
        elev = []
        for tle in tles:
            state = orbital.propagate(tle, cfg.start_time)
            elev.append(orbital.elevation_and_range(center, state).elevation_deg)
        order = sorted(range(len(tles)), key=lambda i: (-elev[i], i))
        keep = sorted(order[: cfg.n_sats])
    else:
        epochs = [
            cfg.start_time + timedelta(seconds=cfg.slot_seconds * t)
            for t in range(cfg.n_slots + 1)
        ]
        vis = np.zeros((len(tles), len(epochs)), dtype=bool)
        for i, tle in enumerate(tles):
            for j, t in enumerate(epochs):
                geom = orbital.elevation_and_range(center, orbital.propagate(tle, t))
                vis[i, j] = geom.elevation_deg >= cfg.elevation_threshold_deg
        # Greedy cover: repeatedly take the satellite that contributes the
        # most to currently under-covered epochs, so the subset is spread
        # over the whole episode instead of clustered around the start.
        counts = np.zeros(len(epochs))
        chosen: list[int] = []
        remaining = set(range(len(tles)))
        for _ in range(cfg.n_sats):
            weights = 1.0 / (1.0 + counts) ** 2
            best_i, best_key = -1, (-1.0, -1, 0)
            for i in remaining:
                key = (float(vis[i] @ weights), int(vis[i].sum()), -i)
                if key > best_key:
                    best_i, best_key = i, key
            chosen.append(best_i)
            remaining.discard(best_i)
            counts += vis[best_i]
        keep = sorted(chosen)
    return [tles[i] for i in keep]


def build_timeline(cfg: ScenarioConfig, placement_replicate: int = 0) -> ScenarioTimeline:
    tles = select_satellites(load_constellation(cfg), cfg)
    placement_rng = derive_stream(cfg.master_seed, placement_replicate, "placement")
    users = place_users(
        cfg.user_center_lat_deg, cfg.user_center_lon_deg, cfg.user_radius_km,
        cfg.n_users, placement_rng,
    )

    n_epochs = cfg.n_slots + 1
    U, S = cfg.n_users, cfg.n_sats
    times = [cfg.start_time + timedelta(seconds=cfg.slot_seconds * t) for t in range(n_epochs)]
    dist = np.zeros((n_epochs, U, S))
    elev = np.zeros((n_epochs, U, S))
    for t_idx, t in enumerate(times):
        states = [orbital.propagate(tle, t) for tle in tles]
        for u, user in enumerate(users):
            for s, state in enumerate(states):
                geom = orbital.elevation_and_range(user, state)
                dist[t_idx, u, s] = geom.distance_km
                elev[t_idx, u, s] = geom.elevation_deg
    visible = elev >= cfg.elevation_threshold_deg
    return ScenarioTimeline(
        users=users,
        times=times,
        sat_names=[t.name or str(t.catalog_number) for t in tles],
        distances_km=dist,
        elevations_deg=elev,
        visible=visible,
    )


# ---------------------------------------------------------------------------
# Episode runner
# ---------------------------------------------------------------------------

@dataclass
class RunMetrics:
    policy: str
    rates_bps: np.ndarray              # (T, U) achieved per-user rates
    per_slot_objective_bps: np.ndarray  # (T,)
    per_slot_optimal: np.ndarray       # (T,) bool
    ledger: HandoverLedger
    assoc_history: list[Association]   # length T+1 (index 0 = initial)
    violations: list[tuple[int, Violation]] = field(default_factory=list)
    solutions: list[SlotSolution] = field(default_factory=list)

    @property
    def per_slot_total_rate_bps(self) -> np.ndarray:
        return self.rates_bps.sum(axis=1)

    @property
    def per_user_mean_rate_bps(self) -> np.ndarray:
        return self.rates_bps.mean(axis=0)

    @property
    def efc(self) -> float:
        return self.ledger.efc()


def _slot_gamma(
    cfg: ScenarioConfig,
    timeline: ScenarioTimeline,
    t_idx: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw channels and assemble the (gamma, visibility) tensors for one
    slot.  One independent fading draw per (user, satellite, beam); the
    loss stack is beam-independent because beams share their satellite's
    geometry."""
    U, S = cfg.n_users, cfg.n_sats
    B = cfg.n_beams
    gains = channel.draw_channel_gains(rng, cfg.k_factor_db, (U, S, B))
    vis_us = timeline.visible[t_idx]
    inv_loss = np.zeros((U, S))
    if vis_us.any():
        d = timeline.distances_km[t_idx][vis_us]
        elev = timeline.elevations_deg[t_idx][vis_us]
        loss_db = (
            channel.fspl(cfg.f_c_ghz * 1000.0, d)
            + channel.atm_loss(cfg.a_zenith_db, elev)
            + channel.iono_loss(cfg.f_c_ghz, elev, cfg.iono_table)
            + channel.rain_loss(cfg.rain_override_db)
        )
        inv_loss[vis_us] = 10.0 ** (-loss_db / 10.0)
    gamma = gains * inv_loss[:, :, None] / (cfg.n0_w_per_hz * cfg.bandwidth_hz)
    visibility = np.broadcast_to(vis_us[:, :, None], (U, S, B)).copy()
    gamma = np.where(visibility, gamma, 0.0)
    return gamma, visibility


def _solve(cfg: ScenarioConfig, prob: SlotProblem, policy: str,
           distances_km: np.ndarray) -> SlotSolution:
    if policy == "min_distance":
        return policies.min_distance_policy(distances_km, prob)
    if cfg.solver == "exact":
        return allocator.solve_slot_exact(prob, timeout_s=cfg.solver_timeout_s)
    if cfg.solver == "bruteforce":
        return allocator.solve_slot_bruteforce(prob)
    return allocator.solve_slot_heuristic(prob)


def run_episode(
    cfg: ScenarioConfig,
    policy: str = "optimized",
    seed: int | None = None,
    timeline: ScenarioTimeline | None = None,
) -> RunMetrics:
    """Run one full episode of the slot-by-slot association algorithm."""
    if policy not in ("optimized", "min_distance"):
        raise ValueError(f"unknown policy {policy!r}")
    if timeline is None:
        timeline = build_timeline(cfg)
    if seed is None:
        seed = cfg.master_seed
    rng = derive_stream(seed, 0, "channel")

    U, T = cfg.n_users, cfg.n_slots
    vis0 = np.broadcast_to(
        timeline.visible[0][:, :, None], (U, cfg.n_sats, cfg.n_beams)
    )
    prev_assoc = policies.min_distance_association(timeline.distances_km[0], vis0)
    prev_rates = np.zeros(U)
    ledger = HandoverLedger(n_users=U)
    assoc_history = [prev_assoc]
    rates = np.zeros((T, U))
    objectives = np.zeros(T)
    optimal = np.zeros(T, dtype=bool)
    violations: list[tuple[int, Violation]] = []
    solutions: list[SlotSolution] = []

    for t in range(1, T + 1):
        gamma, visibility = _slot_gamma(cfg, timeline, t, rng)
        prob = SlotProblem(
            gamma=gamma,
            visibility=visibility,
            prev_assoc=prev_assoc,
            prev_rates=prev_rates,
            alpha=cfg.alpha,
            p_max_w=cfg.p_max_w,
            rate_min_bps=cfg.rate_min_bps,
            bandwidth_hz=cfg.bandwidth_hz,
            budget_mode=cfg.budget_mode,
        )
        sol = _solve(cfg, prob, policy, timeline.distances_km[t])
        ledger.record(policies.handover_events(sol.assoc, prev_assoc))
        rates[t - 1] = sol.rates
        objectives[t - 1] = sol.objective
        optimal[t - 1] = sol.optimal
        violations.extend((t, v) for v in sol.violations)
        solutions.append(sol)
        assoc_history.append(sol.assoc)
        prev_assoc, prev_rates = sol.assoc, sol.rates

    return RunMetrics(
        policy=policy,
        rates_bps=rates,
        per_slot_objective_bps=objectives,
        per_slot_optimal=optimal,
        ledger=ledger,
        assoc_history=assoc_history,
        violations=violations,
        solutions=solutions,
    )


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _episode_stats(metrics: RunMetrics) -> dict:
    return {
        "per_user_mean_rate_bps": metrics.per_user_mean_rate_bps.tolist(),
        "handovers": float(metrics.ledger.total),
        "efc": metrics.efc,
    }


def _replicate_stats(cfg: ScenarioConfig, replicate: int,
                     run_policies: tuple[str, ...]) -> dict[str, dict]:
    if cfg.reshuffle_users_per_replicate:
        timeline = build_timeline(cfg, placement_replicate=replicate)
    else:
        timeline = build_timeline(cfg)
    seed = derive_seed(cfg.master_seed, replicate)
    return {
        policy: _episode_stats(run_episode(cfg, policy=policy, seed=seed, timeline=timeline))
        for policy in run_policies
    }


def monte_carlo(
    cfg: ScenarioConfig,
    n_runs: int,
    run_policies: tuple[str, ...] = ("optimized", "min_distance"),
    jobs: int = 1,
    timeline: ScenarioTimeline | None = None,
) -> dict[str, dict[str, float]]:
    """Replicated episodes with aggregate statistics per policy.

    Replicate ``r`` runs on the seed derived from (master_seed, r), so
    channel draws are independent across replicates while the
    constellation geometry (and by default the user placement) is
    shared.  Two spreads are reported: ``std_bps`` is the unbiased
    sample standard deviation of the replicate-level mean user rate
    (zero for a single run), and ``std_user_bps`` pools the per-user
    slot-mean rates over users x replicates.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(
                pool.map(_replicate_stats, [cfg] * n_runs, range(n_runs),
                         [run_policies] * n_runs)
            )
    else:
        if timeline is not None and not cfg.reshuffle_users_per_replicate:
            per_rep = []
            for r in range(n_runs):
                seed = derive_seed(cfg.master_seed, r)
                per_rep.append(
                    {
                        policy: _episode_stats(
                            run_episode(cfg, policy=policy, seed=seed, timeline=timeline)
                        )
                        for policy in run_policies
                    }
                )
        else:
            per_rep = [_replicate_stats(cfg, r, run_policies) for r in range(n_runs)]

    aggregate: dict[str, dict[str, float]] = {}
    for policy in run_policies:
        per_user = np.array([rep[policy]["per_user_mean_rate_bps"] for rep in per_rep])
        means = per_user.mean(axis=1)  # replicate-level mean user rate
        handovers = np.array([rep[policy]["handovers"] for rep in per_rep])
        efcs = np.array([rep[policy]["efc"] for rep in per_rep])
        std = float(np.std(means, ddof=1)) if n_runs > 1 else 0.0
        pooled = per_user.ravel()
        std_user = float(np.std(pooled, ddof=1)) if pooled.size > 1 else 0.0
        aggregate[policy] = {
            "mean_user_rate_bps": float(means.mean()),
            "std_bps": std,
            "std_user_bps": std_user,
            "mean_handovers": float(handovers.mean()),
            "mean_efc": float(efcs.mean()),
        }
    return aggregate


# ---------------------------------------------------------------------------
# CSV / file outputs
# ---------------------------------------------------------------------------

def write_episode_csv(path, metrics: RunMetrics) -> None:
    """Per-slot metrics: (t, policy, total_rate_bps, objective, cumulative
    handovers).  Floats are written with full round-trip precision so
    identical runs produce identical bytes."""
    totals = metrics.per_slot_total_rate_bps
    flags = metrics.ledger.flags_matrix()
    cumulative = np.cumsum(flags.sum(axis=0))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "policy", "total_rate_bps", "objective_bps",
                         "handovers_cumulative"])
        for t in range(totals.size):
            writer.writerow(
                [t + 1, metrics.policy, repr(float(totals[t])),
                 repr(float(metrics.per_slot_objective_bps[t])), int(cumulative[t])]
            )


def write_compare_csv(path, optimized: RunMetrics, baseline: RunMetrics) -> None:
    opt_tot = optimized.per_slot_total_rate_bps
    base_tot = baseline.per_slot_total_rate_bps
    opt_cum = np.cumsum(optimized.ledger.flags_matrix().sum(axis=0))
    base_cum = np.cumsum(baseline.ledger.flags_matrix().sum(axis=0))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "optimized_total_rate_bps", "min_distance_total_rate_bps",
             "optimized_objective_bps", "min_distance_objective_bps",
             "optimized_handovers_cumulative", "min_distance_handovers_cumulative"]
        )
        for t in range(opt_tot.size):
            writer.writerow(
                [t + 1,
                 repr(float(opt_tot[t])), repr(float(base_tot[t])),
                 repr(float(optimized.per_slot_objective_bps[t])),
                 repr(float(baseline.per_slot_objective_bps[t])),
                 int(opt_cum[t]), int(base_cum[t])]
            )


def write_geometry_csv(path, timeline: ScenarioTimeline) -> None:
    """Visibility timeline for slots 1..T: one row per (t, user, satellite)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "user_id", "sat_id", "distance_km", "elevation_deg",
                         "visible"])
        n_epochs, U, S = timeline.distances_km.shape
        for t in range(1, n_epochs):
            for u in range(U):
                for s in range(S):
                    writer.writerow(
                        [t, u, s,
                         repr(float(timeline.distances_km[t, u, s])),
                         repr(float(timeline.elevations_deg[t, u, s])),
                         int(timeline.visible[t, u, s])]
                    )
