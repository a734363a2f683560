"""leosim: desk-scale LEO constellation downlink simulator.

Jointly optimizes user-satellite-beam association and transmit power
slot by slot, penalizing handovers, and compares the result against a
minimum-distance baseline over Monte Carlo replicates.
"""

from .allocator import (
    Association,
    PowerAllocation,
    SlotProblem,
    SlotSolution,
    Violation,
    check_feasibility,
    objective_value,
    solve_slot_bruteforce,
    solve_slot_exact,
    solve_slot_heuristic,
    waterfill,
)
from .channel import (
    ChannelRealization,
    LinkQuality,
    LossTable,
    PathLossBreakdown,
    atm_loss,
    draw_channel,
    fspl,
    iono_loss,
    rain_loss,
    rate,
    snr_coeff,
    total_loss,
)
from .config import ScenarioConfig, WalkerConfig
from .orbital import (
    GroundUser,
    LinkGeometry,
    SatelliteState,
    Tle,
    elevation_and_range,
    parse_tle,
    propagate,
    synth_walker,
    visibility,
)
from .policies import HandoverLedger, efc, handover_events, min_distance_policy
from .simulator import (
    RunMetrics,
    build_timeline,
    derive_stream,
    monte_carlo,
    place_users,
    run_episode,
)

__version__ = "0.1.0"

__all__ = [
    "Association",
    "ChannelRealization",
    "GroundUser",
    "HandoverLedger",
    "LinkGeometry",
    "LinkQuality",
    "LossTable",
    "PathLossBreakdown",
    "PowerAllocation",
    "RunMetrics",
    "SatelliteState",
    "ScenarioConfig",
    "SlotProblem",
    "SlotSolution",
    "Tle",
    "Violation",
    "WalkerConfig",
    "atm_loss",
    "build_timeline",
    "check_feasibility",
    "derive_stream",
    "draw_channel",
    "efc",
    "elevation_and_range",
    "fspl",
    "handover_events",
    "iono_loss",
    "min_distance_policy",
    "monte_carlo",
    "objective_value",
    "parse_tle",
    "place_users",
    "propagate",
    "rain_loss",
    "rate",
    "run_episode",
    "snr_coeff",
    "solve_slot_bruteforce",
    "solve_slot_exact",
    "solve_slot_heuristic",
    "synth_walker",
    "total_loss",
    "visibility",
    "waterfill",
]
