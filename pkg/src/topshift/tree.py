"""TOP trees: data model, bracketed serialization and validity checking.

A TOP tree is written as nested brackets, e.g.::

    [IN:PLAY_MUSIC Play [SL:MUSIC_TRACK_TITLE Paradise ] by [SL:MUSIC_ARTIST_NAME Coldplay ] ]

Token positions are 1-based throughout the package.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence, Union

from .errors import (
    EmptyConstituent,
    EmptyUtterance,
    InvalidLabel,
    InvalidTopStructure,
    InvalidUtterance,
    UnbalancedBrackets,
    UnknownLabelPrefix,
)

INTENT = "IN"
SLOT = "SL"

_NAME_RE = re.compile(r"^[A-Z0-9_]+$")
_TOKEN_RE = re.compile(r"\[|\]|[^\s\[\]]+")


@dataclass(frozen=True, order=True)
class Label:
    kind: str
    name: str

    def __post_init__(self):
        if self.kind not in (INTENT, SLOT):
            raise UnknownLabelPrefix(f"unknown label kind {self.kind!r}")
        if not _NAME_RE.match(self.name):
            raise InvalidLabel(f"bad label name {self.name!r}")

    @classmethod
    def parse(cls, text: str) -> "Label":
        prefix, sep, name = text.partition(":")
        if not sep or prefix not in (INTENT, SLOT):
            raise UnknownLabelPrefix(f"label {text!r} is neither IN: nor SL:")
        return cls(prefix, name)

    @property
    def is_intent(self) -> bool:
        return self.kind == INTENT

    @property
    def is_slot(self) -> bool:
        return self.kind == SLOT

    def __str__(self):
        return f"{self.kind}:{self.name}"


@dataclass(frozen=True)
class Leaf:
    position: int
    word: str

    @property
    def start(self) -> int:
        return self.position

    @property
    def end(self) -> int:
        return self.position

    def __str__(self):
        return self.word


@dataclass(frozen=True)
class Constituent:
    label: Label
    children: tuple

    @property
    def is_intent(self) -> bool:
        return self.label.is_intent

    @property
    def is_slot(self) -> bool:
        return self.label.is_slot

    @property
    def start(self) -> int:
        node = self
        while isinstance(node, Constituent):
            node = node.children[0]
        return node.position

    @property
    def end(self) -> int:
        node = self
        while isinstance(node, Constituent):
            node = node.children[-1]
        return node.position

    def __str__(self):
        return serialize_node(self)


Node = Union[Leaf, Constituent]


class Violation(NamedTuple):
    rule: str
    path: str

    def __str__(self):
        return f"{self.rule} (at {self.path})"


class Span(NamedTuple):
    label: Label
    start: int
    end: int
    length: int


@dataclass(frozen=True)
class TreeStats:
    depth: int
    intent_count: int
    slot_count: int
    is_compositional: bool
    spans: tuple


def make_utterance(tokens: Sequence[str]) -> tuple:
    """Validate a token sequence and return it as a tuple."""
    tokens = tuple(tokens)
    if not tokens:
        raise EmptyUtterance("utterance has no tokens")
    for tok in tokens:
        if not isinstance(tok, str) or not tok:
            raise InvalidUtterance(f"empty token in {tokens!r}")
        if any(c.isspace() for c in tok) or "[" in tok or "]" in tok:
            raise InvalidUtterance(f"token {tok!r} contains whitespace or brackets")
    return tokens


@dataclass(frozen=True)
class TopTree:
    root: Constituent
    utterance: tuple

    def __post_init__(self):
        object.__setattr__(self, "utterance", make_utterance(self.utterance))
        problems = validate_tree(self.root, self.utterance)
        if problems:
            raise InvalidTopStructure(problems)

    @classmethod
    def from_string(cls, text: str) -> "TopTree":
        return parse_tree(text)

    @property
    def n(self) -> int:
        return len(self.utterance)

    def __str__(self):
        return serialize_tree(self)


def iter_leaves(node: Node) -> Iterator[Leaf]:
    if isinstance(node, Leaf):
        yield node
        return
    for child in node.children:
        yield from iter_leaves(child)


def iter_constituents(node: Node) -> Iterator[Constituent]:
    """Pre-order traversal over the constituents of ``node``."""
    if isinstance(node, Leaf):
        return
    yield node
    for child in node.children:
        yield from iter_constituents(child)


def parse_tree(text: str) -> TopTree:
    items = _TOKEN_RE.findall(text)
    stack = []  # list of (label, children)
    root = None
    pos = 0
    i = 0
    while i < len(items):
        item = items[i]
        if item == "[":
            if root is not None:
                raise InvalidTopStructure([Violation("text after root constituent", "/")])
            if i + 1 >= len(items) or items[i + 1] in ("[", "]"):
                raise UnknownLabelPrefix("'[' not followed by a label")
            stack.append((Label.parse(items[i + 1]), []))
            i += 2
            continue
        if item == "]":
            if not stack:
                raise UnbalancedBrackets("unmatched ']'")
            label, children = stack.pop()
            if not children:
                raise EmptyConstituent(f"constituent {label} has no children")
            node = Constituent(label, tuple(children))
            if stack:
                stack[-1][1].append(node)
            else:
                root = node
        else:
            if not stack:
                rule = "text after root constituent" if root is not None else "token outside root constituent"
                raise InvalidTopStructure([Violation(rule, "/")])
            pos += 1
            stack[-1][1].append(Leaf(pos, item))
        i += 1
    if stack:
        raise UnbalancedBrackets(f"{len(stack)} unclosed constituent(s)")
    if root is None:
        raise InvalidTopStructure([Violation("no root constituent", "/")])
    words = tuple(leaf.word for leaf in iter_leaves(root))
    return TopTree(root, words)


def serialize_node(node: Node) -> str:
    if isinstance(node, Leaf):
        return node.word
    parts = ["[" + str(node.label)]
    parts.extend(serialize_node(c) for c in node.children)
    parts.append("]")
    return " ".join(parts)


def serialize_tree(tree: Union[TopTree, Node]) -> str:
    if isinstance(tree, TopTree):
        return serialize_node(tree.root)
    return serialize_node(tree)


def validate_tree(root, utterance) -> list:
    """Check every TOP constraint; return the list of violations (empty if valid)."""
    out = []
    if not isinstance(root, Constituent):
        return [Violation("root not constituent", "/")]
    if not root.is_intent:
        out.append(Violation("root not intent", "/"))
    _check_node(root, "", out)
    leaves = list(iter_leaves(root))
    utterance = tuple(utterance)
    if len(leaves) != len(utterance):
        out.append(Violation("root does not cover utterance", "/"))
    for k, leaf in enumerate(leaves):
        if leaf.position != k + 1:
            out.append(Violation("leaf position out of order", f"leaf {k + 1}"))
            break
    for k, (leaf, word) in enumerate(zip(leaves, utterance)):
        if leaf.word != word:
            out.append(Violation("leaf differs from utterance", f"leaf {k + 1}"))
            break
    return out


def _check_node(node, path, out):
    here = path or "/"
    if not node.children:
        out.append(Violation("empty constituent", here))
        return
    n_intents = n_tokens = 0
    for k, child in enumerate(node.children):
        sub = f"{path}/{k}"
        if isinstance(child, Leaf):
            n_tokens += 1
            continue
        if not isinstance(child, Constituent):
            out.append(Violation("unknown node type", sub))
            continue
        if node.is_intent and child.is_intent:
            out.append(Violation("intent child of intent", sub))
        if node.is_slot and child.is_slot:
            out.append(Violation("slot child of slot", sub))
        if child.is_intent:
            n_intents += 1
        _check_node(child, sub, out)
    if node.is_slot:
        if n_intents > 1:
            out.append(Violation("slot has >1 intent child", here))
        elif n_intents == 1 and n_tokens:
            out.append(Violation("slot mixes tokens and intent", here))


def node_depth(node: Node) -> int:
    """Number of constituent levels on the deepest root-to-leaf path."""
    if isinstance(node, Leaf):
        return 0
    return 1 + max(node_depth(c) for c in node.children)


def tree_stats(tree: TopTree) -> TreeStats:
    spans = []
    intents = slots = 0
    for c in iter_constituents(tree.root):
        if c.is_intent:
            intents += 1
        else:
            slots += 1
        s, e = c.start, c.end
        spans.append(Span(c.label, s, e, e - s + 1))
    depth = node_depth(tree.root)
    return TreeStats(depth, intents, slots, depth > 2, tuple(spans))
