"""Static oracles: the gold action sequence of a tree under each system."""
from __future__ import annotations

from .errors import InvalidTree
from .transitions import FINISH, REDUCE, SHIFT, NonTerminal, ReduceK, System
from .tree import Constituent, Leaf, TopTree, validate_tree


def _top_down(node, out):
    if isinstance(node, Leaf):
        out.append(SHIFT)
        return
    out.append(NonTerminal(node.label))
    for child in node.children:
        _top_down(child, out)
    out.append(REDUCE)


def _bottom_up(node, out):
    if isinstance(node, Leaf):
        out.append(SHIFT)
        return
    for child in node.children:
        _bottom_up(child, out)
    out.append(ReduceK(len(node.children), node.label))


def _in_order(node, out):
    if isinstance(node, Leaf):
        out.append(SHIFT)
        return
    _in_order(node.children[0], out)
    out.append(NonTerminal(node.label))
    for child in node.children[1:]:
        _in_order(child, out)
    out.append(REDUCE)


def oracle_actions(tree: TopTree, system) -> list:
    """Gold transition sequence that builds ``tree`` with ``system``.

    Top-down is a pre-order walk, bottom-up a post-order walk, and in-order
    emits a constituent's label right after its first child is complete.
    """
    if not isinstance(tree, TopTree):
        raise InvalidTree(f"expected a TopTree, got {type(tree).__name__}")
    if not isinstance(tree.root, Constituent) or validate_tree(tree.root, tree.utterance):
        raise InvalidTree("tree is not a valid TOP representation")
    system = System(system)
    out = []
    if system is System.TOPDOWN:
        _top_down(tree.root, out)
    elif system is System.BOTTOMUP:
        _bottom_up(tree.root, out)
        out.append(FINISH)
    else:
        _in_order(tree.root, out)
        out.append(FINISH)
    return out
