"""Baseline minimum-distance association, handover event detection, and
handover statistics (per-user counters and the effective frequency of
change)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .allocator import (
    Association,
    PowerAllocation,
    SlotProblem,
    SlotSolution,
    _solution_violations,
    compute_rates,
    objective_value,
)


# ---------------------------------------------------------------------------
# Minimum-distance baseline
# ---------------------------------------------------------------------------

def min_distance_association(
    distances_km: np.ndarray, visibility: np.ndarray
) -> Association:
    """Greedy nearest-satellite assignment.

    Users are processed in ascending id; each takes the lowest-index
    free visible beam on its closest visible satellite that still has
    one (ties to the lower satellite id).  A user who sees no satellite,
    or whose visible satellites are all out of beams, stays unserved.
    """
    n_users, n_sats, n_beams = visibility.shape
    beam_free = np.ones((n_sats, n_beams), dtype=bool)
    pairs: list[tuple[int, int] | None] = []
    for u in range(n_users):
        vis = np.flatnonzero(visibility[u].any(axis=1))
        pair = None
        for s in sorted(vis, key=lambda s: (distances_km[u, s], s)):
            free = np.flatnonzero(beam_free[s] & visibility[u, s])
            if free.size:
                pair = (int(s), int(free[0]))
                beam_free[s, free[0]] = False
                break
        pairs.append(pair)
    return Association(pairs=tuple(pairs))


def min_distance_policy(distances_km: np.ndarray, prob: SlotProblem) -> SlotSolution:
    """Closest-visible-satellite baseline with no power optimization.

    Power is the full budget per link in ``per_beam`` mode and an equal
    split of the satellite budget across its served links in
    ``per_satellite_total`` mode.
    """
    U, S, B = prob.shape
    assoc = min_distance_association(distances_km, prob.visibility)

    p = np.zeros((U, S, B))
    if prob.budget_mode == "per_beam":
        for u, pair in enumerate(assoc.pairs):
            if pair is not None:
                p[u, pair[0], pair[1]] = prob.p_max_w
    else:
        served_per_sat = np.zeros(S, dtype=int)
        for pair in assoc.pairs:
            if pair is not None:
                served_per_sat[pair[0]] += 1
        for u, pair in enumerate(assoc.pairs):
            if pair is not None:
                p[u, pair[0], pair[1]] = prob.p_max_w / served_per_sat[pair[0]]

    power = PowerAllocation(p_w=p)
    rates = compute_rates(assoc, power, prob)
    return SlotSolution(
        assoc=assoc,
        power=power,
        rates=rates,
        objective=objective_value(assoc, power, prob),
        optimal=False,
        violations=_solution_violations(rates, prob),
    )


# ---------------------------------------------------------------------------
# Handover detection and statistics
# ---------------------------------------------------------------------------

def handover_events(curr: Association, prev: Association) -> np.ndarray:
    """Per-user handover flags between two consecutive associations.

    An event is any change of the serving pair, including new
    connections and disconnections; a user unserved in both slots has no
    event, and keeping the same pair has none either.
    """
    if curr.n_users != prev.n_users:
        raise ValueError("association sizes differ")
    return np.array(
        [
            (c != p) and not (c is None and p is None)
            for c, p in zip(curr.pairs, prev.pairs)
        ]
    )


def efc(flags: np.ndarray) -> float:
    """Effective frequency of change: events per user per transition,
    in [0, 1].  ``flags`` is a (n_users, n_transitions) boolean array."""
    flags = np.asarray(flags)
    if flags.size == 0:
        raise ValueError("efc requires at least one user and one transition")
    return float(np.mean(flags.astype(float)))


@dataclass
class HandoverLedger:
    """Per-user handover counters built by replaying per-slot event flags."""

    n_users: int
    flags: list[np.ndarray] = field(default_factory=list)

    def record(self, events: np.ndarray) -> None:
        events = np.asarray(events, dtype=bool)
        if events.shape != (self.n_users,):
            raise ValueError("event vector has the wrong size")
        self.flags.append(events)

    @property
    def counts(self) -> np.ndarray:
        """H_u: total handovers per user."""
        if not self.flags:
            return np.zeros(self.n_users, dtype=int)
        return np.sum(np.stack(self.flags, axis=1), axis=1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def flags_matrix(self) -> np.ndarray:
        """(n_users, n_transitions) boolean event matrix."""
        if not self.flags:
            return np.zeros((self.n_users, 0), dtype=bool)
        return np.stack(self.flags, axis=1)

    def efc(self) -> float:
        return efc(self.flags_matrix())


def write_handover_log(path, assoc_history: list[Association]) -> None:
    """CSV log of every (slot, user) transition with its event flag.

    Unserved users appear with satellite and beam -1.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "user_id", "prev_sat", "prev_beam", "curr_sat", "curr_beam", "event"]
        )
        for t in range(1, len(assoc_history)):
            prev, curr = assoc_history[t - 1], assoc_history[t]
            events = handover_events(curr, prev)
            for u in range(curr.n_users):
                ps, pb = prev.pairs[u] if prev.pairs[u] is not None else (-1, -1)
                cs, cb = curr.pairs[u] if curr.pairs[u] is not None else (-1, -1)
                writer.writerow([t, u, ps, pb, cs, cb, int(events[u])])
