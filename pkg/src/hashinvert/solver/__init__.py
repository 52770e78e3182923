"""CDCL SAT solver with bandit-arbitrated restart policies."""
from .core import RESTART_MODES, SolveResult, Solver, SolverConfig, SolverStats, compute_lbd, solve
from .restarts import POLICY_KINDS, DiscountedUCB, RestartPolicy, luby

__all__ = [
    "DiscountedUCB", "POLICY_KINDS", "RESTART_MODES", "RestartPolicy", "SolveResult", "Solver",
    "SolverConfig", "SolverStats", "compute_lbd", "luby", "solve",
]
