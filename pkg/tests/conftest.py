import numpy as np
import pytest

from leosim.allocator import Association, SlotProblem

# Canonical well-formed ISS element set (both checksums valid).
ISS_LINE1 = "1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2927"
ISS_LINE2 = "2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391563537"
ISS_TLE_TEXT = f"ISS (ZARYA)\n{ISS_LINE1}\n{ISS_LINE2}\n"


@pytest.fixture
def iss_text() -> str:
    return ISS_TLE_TEXT


def random_problem(rng: np.random.Generator, n_users=None, n_sats=None, n_beams=None,
                   budget_mode=None, rate_min_bps=None, alpha=None) -> SlotProblem:
    """Small random slot problem for solver cross-checks."""
    U = n_users if n_users is not None else int(rng.integers(1, 5))
    S = n_sats if n_sats is not None else int(rng.integers(1, 4))
    B = n_beams if n_beams is not None else int(rng.integers(1, 3))
    gamma = rng.uniform(0.0, 3.0, (U, S, B))
    vis = rng.random((U, S, B)) < 0.7
    prev_pairs = []
    for _ in range(U):
        if rng.random() < 0.5:
            prev_pairs.append((int(rng.integers(0, S)), int(rng.integers(0, B))))
        else:
            prev_pairs.append(None)
    prev = Association(pairs=tuple(prev_pairs))
    prev_rates = rng.uniform(0, 3e6, U) * np.array(
        [1.0 if p is not None else 0.0 for p in prev_pairs]
    )
    if budget_mode is None:
        budget_mode = ("per_beam", "per_satellite_total")[int(rng.integers(0, 2))]
    if rate_min_bps is None:
        rate_min_bps = float(rng.choice([0.0, 0.2e6, 1.0e6]))
    if alpha is None:
        alpha = float(rng.uniform(0.0, 2.0))
    return SlotProblem(
        gamma=gamma,
        visibility=vis,
        prev_assoc=prev,
        prev_rates=prev_rates,
        alpha=alpha,
        p_max_w=3.0,
        rate_min_bps=rate_min_bps,
        bandwidth_hz=1e6,
        budget_mode=budget_mode,
    )
