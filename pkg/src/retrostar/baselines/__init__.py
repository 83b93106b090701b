from .greedy import greedy_dfs
from .mcts import mcts_search
from .pns import PnsNode, dfpn_e_search, pns_recompute

__all__ = ["greedy_dfs", "mcts_search", "dfpn_e_search", "pns_recompute", "PnsNode"]
