"""Per-slot joint user-association / power-allocation solvers.

The slot problem maximizes the sum of user rates minus a handover
penalty ``alpha * R_prev`` for every user that does not keep its
previous (satellite, beam) pair, subject to: one user per beam, one
pair per user, visibility, per-user minimum rate, and the power budget.

Three solvers share one feasibility model:

* ``solve_slot_bruteforce`` - exhaustive enumeration, the ground truth.
* ``solve_slot_exact``      - branch-and-bound over per-user choices with
  an assignment-relaxation bound (max-weight bipartite matching of
  full-power link scores plus stay bonuses).  The penalty term is
  rewritten as a stay *bonus* plus a constant, which is what makes the
  matching an upper bound.
* ``solve_slot_heuristic``  - the matching step alone plus a power
  refit; scales to constellation-sized slots.

Power for a fixed association is exact: full power per active link in
``per_beam`` budget mode, and per-satellite water-filling with
minimum-rate floors in ``per_satellite_total`` mode.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import linear_sum_assignment

Pair = tuple[int, int]


class InfeasiblePowerFloors(ValueError):
    """Minimum-rate power floors exceed a satellite's budget."""


class SearchSpaceError(RuntimeError):
    """Brute-force enumeration guard tripped."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Association:
    """Per-user serving (satellite, beam) pair, or None when unserved.

    The representation itself guarantees at most one pair per user; beam
    exclusivity is validated separately.
    """

    pairs: tuple[Pair | None, ...]

    @property
    def n_users(self) -> int:
        return len(self.pairs)

    def to_tensor(self, n_sats: int, n_beams: int) -> np.ndarray:
        ind = np.zeros((len(self.pairs), n_sats, n_beams), dtype=bool)
        for u, pair in enumerate(self.pairs):
            if pair is not None:
                ind[u, pair[0], pair[1]] = True
        return ind

    def stay_flags(self, prev: "Association") -> np.ndarray:
        """True where a user keeps the exact pair it had before (served
        in both slots on the same satellite and beam)."""
        return np.array(
            [p is not None and p == q for p, q in zip(self.pairs, prev.pairs)]
        )

    @classmethod
    def empty(cls, n_users: int) -> "Association":
        return cls(pairs=(None,) * n_users)


@dataclass
class PowerAllocation:
    p_w: np.ndarray  # (n_users, n_sats, n_beams)


@dataclass
class SlotProblem:
    """Everything one slot's optimizer consumes."""

    gamma: np.ndarray          # (U, S, B) SNR-per-watt coefficients
    visibility: np.ndarray     # (U, S, B) boolean
    prev_assoc: Association
    prev_rates: np.ndarray     # (U,) bit/s achieved in the previous slot
    alpha: float
    p_max_w: float
    rate_min_bps: float
    bandwidth_hz: float
    budget_mode: str = "per_satellite_total"

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.visibility = np.asarray(self.visibility, dtype=bool)
        self.prev_rates = np.asarray(self.prev_rates, dtype=float)
        if self.gamma.shape != self.visibility.shape or self.gamma.ndim != 3:
            raise ValueError("gamma and visibility must share a (U, S, B) shape")
        if self.prev_rates.shape != (self.gamma.shape[0],):
            raise ValueError("prev_rates must have one entry per user")
        if self.prev_assoc.n_users != self.gamma.shape[0]:
            raise ValueError("prev_assoc size does not match gamma")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.p_max_w <= 0:
            raise ValueError("p_max_w must be positive")
        if self.budget_mode not in ("per_beam", "per_satellite_total"):
            raise ValueError(f"unknown budget_mode {self.budget_mode!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.gamma.shape  # type: ignore[return-value]


@dataclass
class Violation:
    constraint: str            # "8c" .. "8i"
    magnitude: float
    user_id: int | None = None
    sat_id: int | None = None
    beam_id: int | None = None
    message: str = ""


@dataclass
class SlotSolution:
    assoc: Association
    power: PowerAllocation
    rates: np.ndarray          # (U,) bit/s
    objective: float           # bit/s
    optimal: bool
    violations: list[Violation] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Rates and objective
# ---------------------------------------------------------------------------

def _link_rate(gamma: float, p_w: float, w_hz: float) -> float:
    return w_hz * math.log2(1.0 + gamma * p_w)


def compute_rates(assoc: Association, power: PowerAllocation, prob: SlotProblem) -> np.ndarray:
    rates = np.zeros(prob.shape[0])
    for u, pair in enumerate(assoc.pairs):
        if pair is not None:
            s, b = pair
            rates[u] = _link_rate(prob.gamma[u, s, b], power.p_w[u, s, b], prob.bandwidth_hz)
    return rates


def objective_value(assoc: Association, power: PowerAllocation, prob: SlotProblem) -> float:
    """Sum rate minus the handover penalty.

    Each user contributes R_u - alpha * R_u_prev * (1 - stay_u), where
    stay_u is 1 only when the user keeps its previous pair.
    """
    if power.p_w.shape != prob.shape:
        raise ValueError("power tensor shape does not match the problem")
    rates = compute_rates(assoc, power, prob)
    stay = assoc.stay_flags(prob.prev_assoc)
    penalty = prob.alpha * prob.prev_rates * (1.0 - stay.astype(float))
    return float(np.sum(rates - penalty))


# ---------------------------------------------------------------------------
# Water-filling
# ---------------------------------------------------------------------------

def waterfill(gains: np.ndarray, p_total: float, p_floor: np.ndarray) -> np.ndarray:
    """Maximize sum(log(1 + gains * p)) with sum(p) <= p_total and
    p >= p_floor, by exact sorted-breakpoint search of the KKT water
    level (no iterative tolerance).

    Zero-gain entries receive exactly their floor.  Raises
    :class:`InfeasiblePowerFloors` when the floors alone exceed the
    budget; floors are never silently clipped.
    """
    gains = np.asarray(gains, dtype=float)
    p_floor = np.asarray(p_floor, dtype=float)
    if gains.shape != p_floor.shape:
        raise ValueError("gains and p_floor must have equal length")
    if np.any(gains < 0) or np.any(p_floor < 0):
        raise ValueError("gains and floors must be non-negative")
    floor_sum = float(np.sum(p_floor))
    if floor_sum > p_total * (1.0 + 1e-12) + 1e-15:
        raise InfeasiblePowerFloors(
            f"power floors total {floor_sum} W exceed the {p_total} W budget"
        )

    p = p_floor.copy()
    pos = np.flatnonzero(gains > 0.0)
    if pos.size == 0:
        return p
    budget = p_total - float(np.sum(p_floor[np.flatnonzero(gains == 0.0)]))

    # Breakpoints: link i leaves the waterfilled set when the inverse
    # water level drops below floor_i + 1/gamma_i.
    inv_levels = p_floor[pos] + 1.0 / gains[pos]
    order = np.argsort(inv_levels)  # ascending leave-thresholds
    sorted_inv = inv_levels[order]
    floors_sorted = p_floor[pos][order]
    inv_gain_sorted = 1.0 / gains[pos][order]

    chosen = None
    suffix_floor = np.concatenate([np.cumsum(floors_sorted[::-1])[::-1], [0.0]])
    prefix_invgain = np.concatenate([[0.0], np.cumsum(inv_gain_sorted)])
    for k in range(1, pos.size + 1):
        # Active set = the k links with the smallest leave-thresholds.
        nu = (budget - suffix_floor[k] + prefix_invgain[k]) / k
        ok_active = nu >= sorted_inv[k - 1]
        ok_inactive = k == pos.size or nu <= sorted_inv[k]
        if ok_active and ok_inactive:
            chosen = (k, nu)
            break
    if chosen is None:  # numerically degenerate ties; largest set is safe
        k = pos.size
        chosen = (k, (budget - suffix_floor[k] + prefix_invgain[k]) / k)

    k, nu = chosen
    active = pos[order[:k]]
    p[active] = nu - 1.0 / gains[active]
    return p


def power_floor(gamma: float, rate_min_bps: float, w_hz: float) -> float:
    """Power needed to hit the minimum rate on a link with coefficient gamma."""
    if rate_min_bps <= 0.0:
        return 0.0
    if gamma <= 0.0:
        return math.inf
    return (2.0 ** (rate_min_bps / w_hz) - 1.0) / gamma


def optimal_power_for_assoc(
    assoc: Association,
    prob: SlotProblem,
    enforced: np.ndarray | None = None,
) -> tuple[PowerAllocation, np.ndarray]:
    """Exact optimal powers for a fixed association.

    ``per_beam`` mode: every active link transmits at full power (the
    rate is increasing in power and each beam has its own budget).
    ``per_satellite_total`` mode: water-filling across each satellite's
    active links, with floors that guarantee the minimum rate for the
    users in ``enforced`` (all served users by default).
    """
    U, S, B = prob.shape
    if enforced is None:
        enforced = np.ones(U, dtype=bool)
    p = np.zeros((U, S, B))

    if prob.budget_mode == "per_beam":
        for u, pair in enumerate(assoc.pairs):
            if pair is None:
                continue
            s, b = pair
            p[u, s, b] = prob.p_max_w
            if enforced[u]:
                got = _link_rate(prob.gamma[u, s, b], prob.p_max_w, prob.bandwidth_hz)
                if got < prob.rate_min_bps * (1.0 - 1e-12):
                    raise InfeasiblePowerFloors(
                        f"user {u} cannot reach the minimum rate on satellite {s} "
                        f"beam {b} even at full power"
                    )
    else:
        by_sat: dict[int, list[tuple[int, int]]] = {}
        for u, pair in enumerate(assoc.pairs):
            if pair is not None:
                by_sat.setdefault(pair[0], []).append((u, pair[1]))
        for s, links in by_sat.items():
            gains = np.array([prob.gamma[u, s, b] for u, b in links])
            floors = np.array(
                [
                    power_floor(prob.gamma[u, s, b], prob.rate_min_bps, prob.bandwidth_hz)
                    if enforced[u] else 0.0
                    for u, b in links
                ]
            )
            if np.any(np.isinf(floors)):
                bad = links[int(np.flatnonzero(np.isinf(floors))[0])][0]
                raise InfeasiblePowerFloors(
                    f"user {bad} has a zero SNR coefficient but a positive minimum rate"
                )
            powers = waterfill(gains, prob.p_max_w, floors)
            for (u, b), pw in zip(links, powers):
                p[u, s, b] = pw

    alloc = PowerAllocation(p_w=p)
    return alloc, compute_rates(assoc, alloc, prob)


# ---------------------------------------------------------------------------
# Shared feasibility plan
# ---------------------------------------------------------------------------

@dataclass
class _Plan:
    """Per-user candidate pairs and minimum-rate enforcement flags.

    A user is *enforced* when at least one visible link can deliver the
    minimum rate within the satellite budget; an enforced user's
    candidates are restricted to those links, and a served enforced user
    carries a power floor that guarantees the minimum rate.  Users with
    no such link anywhere have the constraint dropped for the slot (the
    final solution records the violation) - aborting a Monte Carlo run
    over one starved slot would be worse.

    When beam or power contention makes it impossible to serve every
    enforced user, the solvers maximize the number of enforced users
    served before maximizing the objective, dropping the constraint for
    as few users as possible.
    """

    options: list[list[Pair | None]]
    enforced: np.ndarray  # (U,) bool

    def served_enforced(self, pairs: tuple[Pair | None, ...]) -> int:
        return sum(
            1 for u, p in enumerate(pairs) if p is not None and self.enforced[u]
        )


def _make_plan(prob: SlotProblem) -> _Plan:
    U, S, B = prob.shape
    options: list[list[Pair | None]] = []
    enforced = np.zeros(U, dtype=bool)
    for u in range(U):
        vis_pairs: list[Pair] = [
            (s, b) for s in range(S) for b in range(B) if prob.visibility[u, s, b]
        ]
        if prob.rate_min_bps > 0.0:
            achievable = [
                (s, b)
                for (s, b) in vis_pairs
                if power_floor(prob.gamma[u, s, b], prob.rate_min_bps, prob.bandwidth_hz)
                <= prob.p_max_w
            ]
            if achievable:
                enforced[u] = True
                options.append([*achievable, None])
                continue
        options.append([*vis_pairs, None])
    return _Plan(options=options, enforced=enforced)


def _solution_violations(sol_rates: np.ndarray, prob: SlotProblem) -> list[Violation]:
    out = []
    if prob.rate_min_bps > 0.0:
        for u in range(prob.shape[0]):
            deficit = prob.rate_min_bps - sol_rates[u]
            if deficit > 1e-9 * max(1.0, prob.rate_min_bps):
                out.append(
                    Violation(
                        constraint="8c",
                        magnitude=float(deficit),
                        user_id=u,
                        message=f"user {u} below the minimum rate by {deficit:.6g} bit/s",
                    )
                )
    return out


# ---------------------------------------------------------------------------
# Brute force
# ---------------------------------------------------------------------------

def solve_slot_bruteforce(prob: SlotProblem, guard: int = 1_000_000) -> SlotSolution:
    """Exhaustive ground-truth solver.

    Enumerates every association that respects beam exclusivity,
    per-user exclusivity, and visibility; evaluates each with exact
    powers; returns the lexicographic maximum of (minimum-rate users
    served, objective).  Ties go to the lexicographically smallest
    assignment vector (unserved sorts after every real pair).  Raises
    :class:`SearchSpaceError` past ``guard`` feasible associations.
    """
    plan = _make_plan(prob)
    best = _enumerate_all(prob, plan, guard)
    assoc, power, rates, obj = best
    return SlotSolution(
        assoc=assoc,
        power=power,
        rates=rates,
        objective=obj,
        optimal=True,
        violations=_solution_violations(rates, prob),
    )


def _enumerate_all(prob, plan: _Plan, guard: int):
    U = prob.shape[0]
    best: tuple[Association, PowerAllocation, np.ndarray, float] | None = None
    best_key = (-1, -math.inf)
    count = 0
    choice: list[Pair | None] = [None] * U
    used: set[Pair] = set()

    def recurse(u: int):
        nonlocal best, best_key, count
        if u == U:
            count += 1
            if count > guard:
                raise SearchSpaceError(
                    f"more than {guard} feasible associations; brute force refused"
                )
            pairs = tuple(choice)
            assoc = Association(pairs=pairs)
            try:
                power, rates = optimal_power_for_assoc(assoc, prob, plan.enforced)
            except InfeasiblePowerFloors:
                return
            obj = objective_value(assoc, power, prob)
            key = (plan.served_enforced(pairs), obj)
            if key > best_key:
                best_key = key
                best = (assoc, power, rates, obj)
            return
        for opt in plan.options[u]:
            if opt is not None and opt in used:
                continue
            choice[u] = opt
            if opt is not None:
                used.add(opt)
            recurse(u + 1)
            if opt is not None:
                used.discard(opt)
        choice[u] = None

    recurse(0)
    assert best is not None  # the all-unserved association is always feasible
    return best


# ---------------------------------------------------------------------------
# Matching machinery shared by the exact solver and the heuristic
# ---------------------------------------------------------------------------

def _score_matrix(prob: SlotProblem, plan: _Plan) -> np.ndarray:
    """(U, S*B + U) weights: full-power link rate plus the stay bonus,
    -inf where a pair is not admissible.  Column S*B + u is user u's
    'stay unserved' option (weight 0)."""
    U, S, B = prob.shape
    n_pairs = S * B
    w = np.full((U, n_pairs + U), -np.inf)
    for u in range(U):
        for opt in plan.options[u]:
            if opt is None:
                w[u, n_pairs + u] = 0.0
                continue
            s, b = opt
            score = _link_rate(prob.gamma[u, s, b], prob.p_max_w, prob.bandwidth_hz)
            if prob.prev_assoc.pairs[u] == opt:
                score += prob.alpha * prob.prev_rates[u]
            w[u, s * B + b] = score
    return w


def _match(weights: np.ndarray, free_users: np.ndarray, blocked_pairs: set[int],
           n_pairs: int) -> tuple[float, dict[int, int]] | None:
    """Max-weight matching of the free users onto unblocked columns.

    Returns (value, {user: column}) or None when structurally infeasible.
    """
    if free_users.size == 0:
        return 0.0, {}
    cols = np.array(
        [c for c in range(weights.shape[1]) if c < n_pairs and c not in blocked_pairs]
        + [n_pairs + u for u in free_users],
        dtype=int,
    )
    sub = weights[np.ix_(free_users, cols)]
    try:
        rows, col_idx = linear_sum_assignment(sub, maximize=True)
    except ValueError:
        return None
    value = float(sub[rows, col_idx].sum())
    if not np.isfinite(value):
        return None
    return value, {int(free_users[r]): int(cols[c]) for r, c in zip(rows, col_idx)}


def _cardinality_first_pairs(
    prob: SlotProblem, plan: _Plan, weights: np.ndarray
) -> tuple[Pair | None, ...]:
    """Full matching that serves as many minimum-rate users as possible
    first (via a dominating bonus), then maximizes the score sum."""
    U, S, B = prob.shape
    n_pairs = S * B
    finite = weights[np.isfinite(weights)]
    bonus = (U + 1.0) * (float(finite.max()) + 1.0) if finite.size else 1.0
    boosted = weights.copy()
    for u in range(U):
        if plan.enforced[u]:
            cols = np.isfinite(boosted[u, :n_pairs])
            boosted[u, :n_pairs][cols] += bonus
    res = _match(boosted, np.arange(U), set(), n_pairs)
    assert res is not None  # every user has the unserved column
    _, matched = res
    return tuple(_column_to_pair(matched[u], n_pairs, B) for u in range(U))


def _max_enforced_served(plan: _Plan, free_users: np.ndarray,
                         blocked_pairs: set[int], n_pairs: int, n_beams: int) -> int:
    """Largest number of free enforced users that can be served
    simultaneously on the unblocked pairs (unit-weight matching)."""
    enforced_free = np.array([u for u in free_users if plan.enforced[u]], dtype=int)
    if enforced_free.size == 0:
        return 0
    w = np.zeros((enforced_free.size, n_pairs + enforced_free.size))
    for i, u in enumerate(enforced_free):
        for opt in plan.options[u]:
            if opt is None:
                continue
            col = opt[0] * n_beams + opt[1]
            if col not in blocked_pairs:
                w[i, col] = 1.0
    rows, cols = linear_sum_assignment(w, maximize=True)
    return int(round(w[rows, cols].sum()))


def _column_to_pair(col: int, n_pairs: int, n_beams: int) -> Pair | None:
    if col >= n_pairs:
        return None
    return (col // n_beams, col % n_beams)


# ---------------------------------------------------------------------------
# Exact branch-and-bound
# ---------------------------------------------------------------------------

def solve_slot_exact(prob: SlotProblem, timeout_s: float = 30.0) -> SlotSolution:
    """Branch-and-bound solver with matching upper bounds.

    Branches over per-user pair choices in user order.  Nodes carry a
    lexicographic bound (servable minimum-rate users, objective): the
    cardinality part is a unit-weight matching, the objective part is
    the sum of the fixed choices' full-power scores plus a max-weight
    matching of the free users onto the remaining pairs.  Leaves are
    evaluated with exact powers.  On timeout the incumbent is returned
    with ``optimal=False``.
    """
    deadline = time.monotonic() + timeout_s
    plan = _make_plan(prob)
    assoc, power, rates, obj, proven = _branch_and_bound(prob, plan, deadline)
    return SlotSolution(
        assoc=assoc,
        power=power,
        rates=rates,
        objective=obj,
        optimal=proven,
        violations=_solution_violations(rates, prob),
    )


def _evaluate_leaf(prob, plan, pairs: tuple[Pair | None, ...]):
    assoc = Association(pairs=pairs)
    try:
        power, rates = optimal_power_for_assoc(assoc, prob, plan.enforced)
    except InfeasiblePowerFloors:
        return None
    return assoc, power, rates, objective_value(assoc, power, prob)


def _evaluate_repaired(prob, plan, weights, pairs: tuple[Pair | None, ...]):
    """Leaf evaluation that falls back to unserving overloaded users
    instead of discarding the candidate; used to seed incumbents."""
    assoc, power, rates = _power_step_with_repair(prob, plan, weights, list(pairs))
    return assoc, power, rates, objective_value(assoc, power, prob)


def _branch_and_bound(prob: SlotProblem, plan: _Plan, deadline: float):
    U, S, B = prob.shape
    n_pairs = S * B
    weights = _score_matrix(prob, plan)
    # Constant dropped by the stay-bonus rewrite; added back to convert
    # matching values into true objective values.
    rewrite_const = -float(prob.alpha * np.sum(prob.prev_rates))

    incumbent = None
    incumbent_key = (-1, -math.inf)

    def consider(pairs, bound_obj=None):
        nonlocal incumbent, incumbent_key
        leaf = _evaluate_leaf(prob, plan, pairs)
        if leaf is not None and bound_obj is not None:
            # the matching bound must dominate every leaf under its node
            assert leaf[3] <= bound_obj + 1e-6 * max(1.0, abs(leaf[3]))
        if leaf is None:
            # Power floors overflow somewhere: repair the candidate so the
            # search still gets a feasible incumbent out of it.
            leaf = _evaluate_repaired(prob, plan, weights, pairs)
        key = (plan.served_enforced(leaf[0].pairs), leaf[3])
        if key > incumbent_key:
            incumbent, incumbent_key = leaf, key

    def node_bound(fixed: tuple[Pair | None, ...]):
        """Lexicographic upper bound over the subtree plus the objective
        matching's own completion as an incumbent candidate."""
        fixed_score = 0.0
        blocked: set[int] = set()
        for u, pair in enumerate(fixed):
            if pair is None:
                continue
            col = pair[0] * B + pair[1]
            fixed_score += weights[u, col]
            blocked.add(col)
        free = np.arange(len(fixed), U)
        res = _match(weights, free, blocked, n_pairs)
        if res is None:
            return None
        value, matched = res
        card_bound = plan.served_enforced(fixed) + _max_enforced_served(
            plan, free, blocked, n_pairs, B
        )
        completion = list(fixed) + [
            _column_to_pair(matched[int(u)], n_pairs, B) for u in free
        ]
        return (card_bound, fixed_score + value + rewrite_const), tuple(completion)

    def beaten(key) -> bool:
        """True when a bound key cannot improve on the incumbent."""
        if incumbent is None:
            return False
        card, obj = key
        if card != incumbent_key[0]:
            return card < incumbent_key[0]
        return obj <= incumbent_key[1] + 1e-10 * max(1.0, abs(incumbent_key[1]))

    consider((None,) * U)  # always-feasible fallback incumbent
    consider(_cardinality_first_pairs(prob, plan, weights))
    root = node_bound(())
    assert root is not None  # every user has the unserved column
    root_key, root_completion = root
    consider(root_completion, bound_obj=root_key[1])

    heap: list[tuple[int, float, int, tuple[Pair | None, ...]]] = []
    counter = itertools.count()
    heapq.heappush(heap, (-root_key[0], -root_key[1], next(counter), ()))
    proven = True

    while heap:
        if time.monotonic() > deadline:
            proven = False
            break
        neg_card, neg_obj, _, fixed = heapq.heappop(heap)
        if beaten((-neg_card, -neg_obj)):
            break  # best-first: nothing left can beat the incumbent
        u = len(fixed)
        taken = {p for p in fixed if p is not None}
        for opt in plan.options[u]:
            if opt is not None and opt in taken:
                continue
            child = fixed + (opt,)
            if len(child) == U:
                consider(child, bound_obj=-neg_obj)
                continue
            res = node_bound(child)
            if res is None:
                continue
            child_key, completion = res
            consider(completion, bound_obj=child_key[1])
            if not beaten(child_key):
                heapq.heappush(
                    heap, (-child_key[0], -child_key[1], next(counter), child)
                )

    assert incumbent is not None  # the root completion is always feasible
    assoc, power, rates, obj = incumbent
    return assoc, power, rates, obj, proven


def node_upper_bound(prob: SlotProblem, fixed: tuple[Pair | None, ...]) -> float | None:
    """Matching bound for a partial assignment (users beyond the fixed
    prefix are free).  Exposed for bound-validity checks."""
    plan = _make_plan(prob)
    U, S, B = prob.shape
    weights = _score_matrix(prob, plan)
    rewrite_const = -float(prob.alpha * np.sum(prob.prev_rates))
    fixed_score = 0.0
    blocked: set[int] = set()
    for u, pair in enumerate(fixed):
        if pair is None:
            continue
        col = pair[0] * B + pair[1]
        if not np.isfinite(weights[u, col]):
            return None
        fixed_score += weights[u, col]
        blocked.add(col)
    res = _match(weights, np.arange(len(fixed), U), blocked, S * B)
    if res is None:
        return None
    return fixed_score + res[0] + rewrite_const


# ---------------------------------------------------------------------------
# Heuristic
# ---------------------------------------------------------------------------

def solve_slot_heuristic(prob: SlotProblem, max_rounds: int = 20) -> SlotSolution:
    """Alternating association/power heuristic.

    Round structure: (i) with powers pinned at full power, pick the
    max-weight matching including the stay bonus; (ii) with the
    association pinned, refit powers exactly.  Stops when the objective
    improves by less than 1e-6 relative or after ``max_rounds`` rounds;
    the reported objective never decreases across rounds.

    The matching adds a dominating bonus to enforced users' links so it
    serves as many minimum-rate users as possible before trading rate,
    mirroring the exact solver's lexicographic behavior.
    """
    plan = _make_plan(prob)
    weights = _score_matrix(prob, plan)
    pairs = _cardinality_first_pairs(prob, plan, weights)

    best: tuple[Association, PowerAllocation, np.ndarray, float] | None = None
    best_obj = -math.inf
    last_pairs = None
    for _ in range(max_rounds):
        if pairs == last_pairs:
            break  # the association step reached a fixed point
        assoc, power, rates = _power_step_with_repair(prob, plan, weights, list(pairs))
        obj = objective_value(assoc, power, prob)
        if obj > best_obj:
            best = (assoc, power, rates, obj)
        improvement = obj - best_obj
        best_obj = max(best_obj, obj)
        if improvement < 1e-6 * max(1.0, abs(best_obj)):
            break
        last_pairs = pairs
        pairs = _cardinality_first_pairs(prob, plan, weights)

    assert best is not None
    assoc, power, rates, obj = best
    return SlotSolution(
        assoc=assoc,
        power=power,
        rates=rates,
        objective=obj,
        optimal=False,
        violations=_solution_violations(rates, prob),
    )


def _power_step_with_repair(prob, plan, weights, pairs):
    """Exact power refit; when minimum-rate floors overload a satellite,
    deterministically unserve the lowest-scored users until they fit."""
    B = prob.shape[2]
    enforced = plan.enforced.copy()
    pairs = list(pairs)
    if prob.budget_mode == "per_satellite_total" and prob.rate_min_bps > 0.0:
        _shed_floor_overloads(prob, enforced, weights, pairs)
    while True:
        assoc = Association(pairs=tuple(pairs))
        try:
            power, rates = optimal_power_for_assoc(assoc, prob, enforced)
            return assoc, power, rates
        except InfeasiblePowerFloors:
            victim = None
            victim_score = math.inf
            floors_by_sat: dict[int, float] = {}
            for u, pair in enumerate(pairs):
                if pair is None or not enforced[u]:
                    continue
                s, b = pair
                floors_by_sat[s] = floors_by_sat.get(s, 0.0) + power_floor(
                    prob.gamma[u, s, b], prob.rate_min_bps, prob.bandwidth_hz
                )
            overloaded = sorted(
                s for s, f in floors_by_sat.items() if f > prob.p_max_w * (1 + 1e-12)
            )
            if not overloaded:
                # per_beam-style single-link failure; drop that user's floor
                dropped = False
                for u, pair in enumerate(pairs):
                    if pair is None or not enforced[u]:
                        continue
                    if power_floor(
                        prob.gamma[u, pair[0], pair[1]], prob.rate_min_bps, prob.bandwidth_hz
                    ) > prob.p_max_w * (1.0 - 1e-12):
                        enforced[u] = False
                        dropped = True
                if not dropped:
                    raise
                continue
            s = overloaded[0]
            for u, pair in enumerate(pairs):
                if pair is None or pair[0] != s or not enforced[u]:
                    continue
                score = weights[u, pair[0] * B + pair[1]]
                if score < victim_score:
                    victim, victim_score = u, score
            assert victim is not None
            pairs[victim] = None


def _shed_floor_overloads(prob, enforced, weights, pairs):
    """Drop the lowest-scored minimum-rate users from satellites whose
    combined floors exceed the budget (one pass; satellites are
    independent).  Same victims as the reactive loop, without paying for
    a full power solve per drop."""
    B = prob.shape[2]
    by_sat: dict[int, list[tuple[float, float, int]]] = {}
    for u, pair in enumerate(pairs):
        if pair is None or not enforced[u]:
            continue
        s, b = pair
        floor = power_floor(prob.gamma[u, s, b], prob.rate_min_bps, prob.bandwidth_hz)
        by_sat.setdefault(s, []).append((weights[u, s * B + b], floor, u))
    for s, entries in by_sat.items():
        total = sum(f for _, f, _ in entries)
        entries.sort()  # ascending score: cheapest users shed first
        i = 0
        while total > prob.p_max_w * (1 + 1e-12) and i < len(entries):
            _, floor, u = entries[i]
            pairs[u] = None
            total -= floor
            i += 1


# ---------------------------------------------------------------------------
# Feasibility audit
# ---------------------------------------------------------------------------

def check_feasibility(sol: SlotSolution, prob: SlotProblem) -> list[Violation]:
    """Evaluate every slot constraint against a solution and return the
    typed violations.  Per-user exclusivity and binariness hold by
    construction of :class:`Association`; the remaining constraints are
    checked numerically.
    """
    U, S, B = prob.shape
    tol = 1e-9
    out: list[Violation] = []
    p = sol.power.p_w
    ind = sol.assoc.to_tensor(S, B)

    rates = compute_rates(sol.assoc, sol.power, prob)
    if prob.rate_min_bps > 0.0:
        for u in range(U):
            deficit = prob.rate_min_bps - rates[u]
            if deficit > tol * max(1.0, prob.rate_min_bps):
                out.append(Violation("8c", float(deficit), user_id=u,
                                     message=f"user {u} rate below minimum"))

    excess = p - ind * prob.p_max_w
    for u, s, b in zip(*np.nonzero(excess > tol * prob.p_max_w)):
        out.append(Violation("8d", float(excess[u, s, b]), user_id=int(u),
                             sat_id=int(s), beam_id=int(b),
                             message="power on a link that is not selected or above cap"))

    if prob.budget_mode == "per_beam":
        totals = p.sum(axis=0)  # (S, B)
        for s, b in zip(*np.nonzero(totals > prob.p_max_w * (1 + tol))):
            out.append(Violation("8e", float(totals[s, b] - prob.p_max_w),
                                 sat_id=int(s), beam_id=int(b),
                                 message="beam power budget exceeded"))
    else:
        totals = p.sum(axis=(0, 2))  # (S,)
        for s in np.nonzero(totals > prob.p_max_w * (1 + tol))[0]:
            out.append(Violation("8e", float(totals[s] - prob.p_max_w), sat_id=int(s),
                                 message="satellite power budget exceeded"))

    users_per_pair = ind.sum(axis=0)
    for s, b in zip(*np.nonzero(users_per_pair > 1)):
        out.append(Violation("8f", float(users_per_pair[s, b] - 1), sat_id=int(s),
                             beam_id=int(b), message="beam serves more than one user"))

    for u, pair in enumerate(sol.assoc.pairs):
        if pair is not None and not prob.visibility[u, pair[0], pair[1]]:
            out.append(Violation("8h", 1.0, user_id=u, sat_id=pair[0], beam_id=pair[1],
                                 message="assignment to an invisible beam"))

    for u, s, b in zip(*np.nonzero(p < -tol * prob.p_max_w)):
        out.append(Violation("8i", float(-p[u, s, b]), user_id=int(u), sat_id=int(s),
                             beam_id=int(b), message="negative power"))
    for u, s, b in zip(*np.nonzero(p > prob.p_max_w * (1 + tol))):
        out.append(Violation("8i", float(p[u, s, b] - prob.p_max_w), user_id=int(u),
                             sat_id=int(s), beam_id=int(b),
                             message="link power above the per-link cap"))
    return out


# ---------------------------------------------------------------------------
# JSON serialization (debugging and golden tests)
# ---------------------------------------------------------------------------

def problem_to_dict(prob: SlotProblem) -> dict[str, Any]:
    return {
        "gamma": prob.gamma.tolist(),
        "visibility": prob.visibility.astype(int).tolist(),
        "prev_assoc": [list(p) if p is not None else None for p in prob.prev_assoc.pairs],
        "prev_rates_bps": prob.prev_rates.tolist(),
        "alpha": prob.alpha,
        "p_max_w": prob.p_max_w,
        "rate_min_bps": prob.rate_min_bps,
        "bandwidth_hz": prob.bandwidth_hz,
        "budget_mode": prob.budget_mode,
    }


def problem_from_dict(data: dict[str, Any]) -> SlotProblem:
    return SlotProblem(
        gamma=np.array(data["gamma"], dtype=float),
        visibility=np.array(data["visibility"], dtype=bool),
        prev_assoc=Association(
            pairs=tuple(tuple(p) if p is not None else None for p in data["prev_assoc"])
        ),
        prev_rates=np.array(data["prev_rates_bps"], dtype=float),
        alpha=float(data["alpha"]),
        p_max_w=float(data["p_max_w"]),
        rate_min_bps=float(data["rate_min_bps"]),
        bandwidth_hz=float(data["bandwidth_hz"]),
        budget_mode=str(data["budget_mode"]),
    )


def solution_to_dict(sol: SlotSolution) -> dict[str, Any]:
    return {
        "assignment": [list(p) if p is not None else None for p in sol.assoc.pairs],
        "power_w": sol.power.p_w.tolist(),
        "rates_bps": sol.rates.tolist(),
        "objective_bps": sol.objective,
        "optimal": sol.optimal,
        "violations": [
            {
                "constraint": v.constraint,
                "magnitude": v.magnitude,
                "user_id": v.user_id,
                "sat_id": v.sat_id,
                "beam_id": v.beam_id,
                "message": v.message,
            }
            for v in sol.violations
        ],
    }


def solution_from_dict(data: dict[str, Any]) -> SlotSolution:
    return SlotSolution(
        assoc=Association(
            pairs=tuple(tuple(p) if p is not None else None for p in data["assignment"])
        ),
        power=PowerAllocation(p_w=np.array(data["power_w"], dtype=float)),
        rates=np.array(data["rates_bps"], dtype=float),
        objective=float(data["objective_bps"]),
        optimal=bool(data["optimal"]),
        violations=[
            Violation(
                constraint=v["constraint"],
                magnitude=v["magnitude"],
                user_id=v.get("user_id"),
                sat_id=v.get("sat_id"),
                beam_id=v.get("beam_id"),
                message=v.get("message", ""),
            )
            for v in data["violations"]
        ],
    )


def problem_to_json(prob: SlotProblem, indent: int = 2) -> str:
    return json.dumps(problem_to_dict(prob), indent=indent)


def solution_to_json(sol: SlotSolution, indent: int = 2) -> str:
    return json.dumps(solution_to_dict(sol), indent=indent)
