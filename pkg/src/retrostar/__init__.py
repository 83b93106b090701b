"""Best-first AND-OR tree search for retrosynthesis-style planning."""

from .instance import ExpansionResult, PlanningInstance, Proposal, Route, RouteStep
from .search import HaltMode, SearchConfig, SearchOutcome, Status, run_search, select_next
from .tree import SearchTree, new_tree
from .value import LearnedModel, ValueOracle

__version__ = "0.1.0"

__all__ = [
    "ExpansionResult", "PlanningInstance", "Proposal", "Route", "RouteStep",
    "HaltMode", "SearchConfig", "SearchOutcome", "Status", "run_search", "select_next",
    "SearchTree", "new_tree", "LearnedModel", "ValueOracle",
]
