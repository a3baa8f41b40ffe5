"""Sequential social learning with locally private action reports."""

from .binary_model import analyze, correct_cascade_prob, epsilon_breakpoints, gambler_ruin_oracle
from .continuous_model import Mechanism, MechanismKind, optimal_epsilon
from .core import (
    BinaryParams,
    BudgetSpec,
    GaussianParams,
    NoCascadeError,
    ParameterError,
    PublicBelief,
    WorldState,
)
from .montecarlo import SimSpec, run_ensemble
from .privacy_verify import Notion, certify

__version__ = "0.1.0"

__all__ = [
    "BinaryParams",
    "BudgetSpec",
    "GaussianParams",
    "Mechanism",
    "MechanismKind",
    "NoCascadeError",
    "Notion",
    "ParameterError",
    "PublicBelief",
    "SimSpec",
    "WorldState",
    "analyze",
    "certify",
    "correct_cascade_prob",
    "epsilon_breakpoints",
    "gambler_ruin_oracle",
    "optimal_epsilon",
    "run_ensemble",
]
