"""Transition-based parsing of task-oriented (TOP) intent/slot trees."""

from .tree import Label, Leaf, Constituent, TopTree, parse_tree, serialize_tree, validate_tree, tree_stats
from .transitions import System, execute, legal_actions, apply_action, init_config, is_final
from .oracle import oracle_actions
from .metrics import exact_match, labeled_bracketing_f1, tree_labeled_f1, evaluate

__version__ = "0.1.0"
