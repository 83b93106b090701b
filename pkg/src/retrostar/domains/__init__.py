from .cache import ExpansionCache, ParseError, load_blocks, load_cache
from .htn import TEST_SEEDS, TRAIN_SEEDS, HtnParams, generate_htn, htn_reactions, htn_route_dataset
from .oracle import brute_force_optimal
from .routes import RouteDataset, extract_route_dataset, hash_features

__all__ = [
    "ExpansionCache", "ParseError", "load_blocks", "load_cache",
    "HtnParams", "generate_htn", "htn_reactions", "htn_route_dataset", "TEST_SEEDS", "TRAIN_SEEDS", "brute_force_optimal",
    "RouteDataset", "extract_route_dataset", "hash_features",
]
