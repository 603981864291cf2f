"""Constructive-interference precoding for the multiuser MISO downlink."""

from .ci import (
    MulticastSolution,
    solve_balancing_bisect,
    solve_balancing_direct,
    solve_bpsk,
    solve_broadcast,
    solve_dual_gp,
    solve_qpsk_axis,
    solve_relaxed_direct,
    solve_relaxed_gp,
    solve_strict,
    split_precoders,
)
from .conic import ConicProblem, ConicSolution, SolverOptions, Status
from .conventional import ConventionalSolution, solve_conventional_balance, solve_conventional_powermin
from .harness import ExperimentConfig
from .model import (
    BPSK,
    PSK8,
    QPSK,
    ChannelSet,
    ModulationSpec,
    Outcome,
    Scenario,
    SymbolFrame,
    gen_channels,
    gen_symbols,
    lift_real,
    rotate_channels,
)
from .robust import RobustScenario, RobustSolution, solve_robust_balance, solve_robust_powermin

__version__ = "0.1.0"

__all__ = [
    "BPSK", "PSK8", "QPSK", "ChannelSet", "ConicProblem", "ConicSolution", "ConventionalSolution",
    "ExperimentConfig", "ModulationSpec", "MulticastSolution", "Outcome", "RobustScenario",
    "RobustSolution", "Scenario", "SolverOptions", "Status", "SymbolFrame", "gen_channels",
    "gen_symbols", "lift_real", "rotate_channels", "solve_balancing_bisect", "solve_balancing_direct",
    "solve_bpsk", "solve_broadcast", "solve_conventional_balance", "solve_conventional_powermin",
    "solve_dual_gp", "solve_qpsk_axis", "solve_relaxed_direct", "solve_relaxed_gp",
    "solve_robust_balance", "solve_robust_powermin", "solve_strict", "split_precoders",
]
