"""Datasets: TOP-format ingestion, synthetic grammars, SPIS sampling and statistics."""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import (
    EmptyDataset,
    EmptyFile,
    InfeasibleSpec,
    LeafMismatchAt,
    ParseErrorAt,
    TreeError,
)
from .tree import (
    Constituent,
    Label,
    Leaf,
    TopTree,
    iter_constituents,
    parse_tree,
    serialize_tree,
    tree_stats,
)

FORMATS = ("tsv3", "lines")


@dataclass(frozen=True)
class Example:
    tree: TopTree
    raw: Optional[str] = None      # untokenised utterance, when the source had one
    source: str = ""               # provenance tag (domain / file)

    @property
    def utterance(self) -> tuple:
        return self.tree.utterance


@dataclass
class Dataset:
    examples: list
    split: str = ""

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def trees(self) -> list:
        return [ex.tree for ex in self.examples]

    @property
    def label_vocab(self) -> set:
        return {c.label for ex in self.examples for c in iter_constituents(ex.tree.root)}

    def __add__(self, other: "Dataset") -> "Dataset":
        split = self.split if self.split == other.split else f"{self.split}+{other.split}"
        return Dataset(self.examples + other.examples, split)

    def tagged(self, source: str) -> "Dataset":
        return Dataset([replace(ex, source=source) for ex in self.examples], self.split)


def load_dataset(path, format: str = "lines", split: str = "", source: str = "") -> Dataset:
    """Read a TOP dataset.

    ``tsv3``: raw utterance, tokenised utterance, tree (tab separated).
    ``lines``: one tree per line; the utterance is the tree's leaves.
    Blank lines are skipped.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            raw = None
            if format == "tsv3":
                cols = line.split("\t")
                if len(cols) != 3:
                    raise ParseErrorAt(lineno, f"expected 3 tab-separated columns, got {len(cols)}")
                raw, tokenized, text = cols
            else:
                text = line
            try:
                tree = parse_tree(text)
            except TreeError as e:
                raise ParseErrorAt(lineno, str(e)) from e
            if format == "tsv3" and tuple(tokenized.split()) != tree.utterance:
                raise LeafMismatchAt(lineno, "tree leaves differ from the tokenised utterance")
            examples.append(Example(tree, raw, source))
    if not examples:
        raise EmptyFile(f"{path} contains no examples")
    return Dataset(examples, split or Path(path).stem)


def dump_dataset(dataset: Dataset, format: str = "lines") -> str:
    lines = []
    for ex in dataset:
        tree = serialize_tree(ex.tree)
        if format == "tsv3":
            raw = ex.raw if ex.raw is not None else " ".join(ex.utterance)
            lines.append(f"{raw}\t{' '.join(ex.utterance)}\t{tree}")
        else:
            lines.append(tree)
    return "".join(line + "\n" for line in lines)


def save_dataset(dataset: Dataset, path, format: str = "lines"):
    Path(path).write_text(dump_dataset(dataset, format), encoding="utf-8")


# --------------------------------------------------------------------------
# synthetic grammars

@dataclass
class GrammarSpec:
    """Recipe for a deterministic toy TOP grammar.

    Every intent owns a fixed template alternating carrier words and slots;
    every label owns a disjoint pool of words, so the tree is recoverable
    from the tokens. Slots hold either 1-2 value words or, with probability
    ``compositionality``, a nested intent.
    """
    intents: Sequence[str] = ("IN:I0", "IN:I1", "IN:I2", "IN:I3", "IN:I4")
    slots: Sequence[str] = ("SL:S0", "SL:S1", "SL:S2", "SL:S3", "SL:S4")
    max_depth: int = 4
    max_children: int = 6
    vocabulary: Sequence[str] = ()      # empty: generate w0, w1, ...
    words_per_label: int = 3
    compositionality: float = 0.3
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "GrammarSpec":
        kw = {}
        for key, value in d.items():
            if key in ("intents", "slots", "vocabulary"):
                kw[key] = tuple(v for v in str(value).replace(",", " ").split() if v)
            elif key in ("max_depth", "max_children", "words_per_label", "seed"):
                kw[key] = int(value)
            elif key == "compositionality":
                kw[key] = float(value)
            else:
                raise InfeasibleSpec(f"unknown grammar key {key!r}")
        return cls(**kw)


class _Grammar:
    def __init__(self, spec: GrammarSpec):
        try:
            self.intents = [Label.parse(x) for x in spec.intents]
            self.slots = [Label.parse(x) for x in spec.slots]
        except TreeError as e:
            raise InfeasibleSpec(str(e)) from e
        if not self.intents or any(not l.is_intent for l in self.intents):
            raise InfeasibleSpec("need at least one IN: label and only IN: labels in intents")
        if any(not l.is_slot for l in self.slots):
            raise InfeasibleSpec("slots must be SL: labels")
        if spec.max_depth < 1:
            raise InfeasibleSpec("max_depth must be >= 1")
        if spec.max_children < 1:
            raise InfeasibleSpec("max_children must be >= 1")
        if self.slots and spec.max_depth < 2:
            raise InfeasibleSpec("slots need max_depth >= 2")
        if not 0.0 <= spec.compositionality <= 1.0:
            raise InfeasibleSpec("compositionality must be in [0, 1]")
        if spec.compositionality > 0 and spec.max_depth < 3:
            raise InfeasibleSpec("nested intents need max_depth >= 3")
        labels = self.intents + self.slots
        per = spec.words_per_label
        if per < 1:
            raise InfeasibleSpec("words_per_label must be >= 1")
        vocab = list(spec.vocabulary) or [f"w{i}" for i in range(per * len(labels))]
        if len(vocab) < len(labels):
            raise InfeasibleSpec(f"{len(vocab)} words cannot cover {len(labels)} labels")
        self.pools = {lab: vocab[i::len(labels)] for i, lab in enumerate(labels)}
        self.spec = spec
        rng = random.Random(spec.seed)
        # fixed templates; slots are dealt round-robin so every slot is reachable
        self.templates = {}
        order = list(self.slots)
        rng.shuffle(order)
        n_slots = 0
        if self.slots:
            need = -(-len(self.slots) // len(self.intents))
            if need > spec.max_children:
                raise InfeasibleSpec(f"{len(self.slots)} slots do not fit in {len(self.intents)} "
                                     f"templates of {spec.max_children} children")
            n_slots = max(need, (spec.max_children - 1) // 2)
        k = 0
        for intent in self.intents:
            items = []
            spare = spec.max_children - n_slots
            for s in range(n_slots):
                if spare > 0:
                    items.append(None)              # carrier word
                    spare -= 1
                items.append(order[k % len(order)])
                k += 1
            if not items:
                items = [None]
            if len(items) < spec.max_children and rng.random() < 0.5:
                items.append(None)
            self.templates[intent] = items

    def intent(self, rng, label, depth, words):
        children = []
        for item in self.templates[label]:
            if item is None:
                children.append(self._word(rng, label, words))
            else:
                children.append(self.slot(rng, item, depth + 1, words))
        return Constituent(label, tuple(children))

    def slot(self, rng, label, depth, words):
        if depth + 2 <= self.spec.max_depth and rng.random() < self.spec.compositionality:
            return Constituent(label, (self.intent(rng, rng.choice(self.intents), depth + 1, words),))
        n = rng.randint(1, 2)
        return Constituent(label, tuple(self._word(rng, label, words) for _ in range(n)))

    def _word(self, rng, label, words):
        w = rng.choice(self.pools[label])
        words.append(w)
        return Leaf(len(words), w)

    def example(self, rng, root_label=None):
        words = []
        root = self.intent(rng, root_label or rng.choice(self.intents), 1, words)
        return TopTree(root, tuple(words))


def gen_synthetic(spec: GrammarSpec, count: int, split: str = "synthetic") -> Dataset:
    """Generate ``count`` valid trees; deterministic for a fixed ``spec.seed``.

    If some label never occurs, examples are resampled with the missing
    label forced at the root (intents) or via an intent whose template uses
    it (slots).
    """
    if count < 1:
        raise InfeasibleSpec("count must be >= 1")
    grammar = _Grammar(spec)
    rng = random.Random(spec.seed + 1)
    examples = [Example(grammar.example(rng), source=split) for _ in range(count)]
    wanted = set(grammar.intents) | set(grammar.slots)
    for _ in range(10 * len(wanted)):
        present = Counter(c.label for ex in examples for c in iter_constituents(ex.tree.root))
        missing = sorted(wanted - set(present))
        if not missing:
            break
        lab = missing[0]
        if lab.is_intent:
            root = lab
        else:
            root = next(i for i, t in grammar.templates.items() if lab in t)
        new = Example(grammar.example(rng, root), source=split)
        # replace an example whose labels all stay covered without it
        for j in rng.sample(range(len(examples)), len(examples)):
            labs = Counter(c.label for c in iter_constituents(examples[j].tree.root))
            if all(present[l] > 1 for l in labs):
                examples[j] = new
                break
        else:
            break
    return Dataset(examples, split)


def compositional_fraction(dataset: Dataset) -> float:
    if not len(dataset):
        return 0.0
    return sum(tree_stats(ex.tree).is_compositional for ex in dataset) / len(dataset)


# --------------------------------------------------------------------------
# SPIS sampling

@dataclass
class SpisResult:
    dataset: Dataset
    support: Counter                # label -> number of selected examples containing it
    total_support: Counter          # label -> number of source examples containing it
    under_supported: list           # labels whose total support is below the target
    order: list = field(default_factory=list)   # shuffled source indices (selection = prefix)

    @property
    def size(self) -> int:
        return len(self.dataset)


def label_support(examples: Iterable[Example]) -> Counter:
    """Number of examples in which each label occurs at least once."""
    out = Counter()
    for ex in examples:
        out.update({c.label for c in iter_constituents(ex.tree.root)})
    return out


def spis_sample(dataset: Dataset, spis: int, seed: int = 0) -> SpisResult:
    """Samples-per-intent-and-slot selection.

    Shuffle with ``seed``, then take examples in order until every label has
    support >= min(spis, its total support).
    """
    if spis < 1:
        raise ValueError("spis must be a positive integer")
    total = label_support(dataset.examples)
    target = {lab: min(spis, c) for lab, c in total.items()}
    order = list(range(len(dataset)))
    random.Random(seed).shuffle(order)
    support = Counter()
    deficit = sum(1 for lab in target if target[lab] > 0)
    chosen = []
    for idx in order:
        if deficit == 0:
            break
        ex = dataset.examples[idx]
        chosen.append(ex)
        for lab in {c.label for c in iter_constituents(ex.tree.root)}:
            support[lab] += 1
            if support[lab] == target[lab]:
                deficit -= 1
    under = sorted(lab for lab, c in total.items() if c < spis)
    return SpisResult(Dataset(chosen, f"{dataset.split}.spis{spis}"), support, total, under, order)


# --------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class DatasetStats:
    examples: int
    intents: int
    slots: int
    compositional: float        # fraction of trees with depth > 2
    mean_length: float
    mean_depth: float
    max_depth: int

    def format(self) -> str:
        return "\n".join([
            f"examples\t{self.examples}",
            f"intents\t{self.intents}",
            f"slots\t{self.slots}",
            f"%compos\t{100 * self.compositional:.2f}",
            f"mean_length\t{self.mean_length:.2f}",
            f"mean_depth\t{self.mean_depth:.2f}",
            f"max_depth\t{self.max_depth}",
        ])


def dataset_stats(dataset: Dataset) -> DatasetStats:
    if not len(dataset):
        raise EmptyDataset("dataset has no examples")
    stats = [tree_stats(ex.tree) for ex in dataset]
    labels = dataset.label_vocab
    return DatasetStats(
        examples=len(dataset),
        intents=sum(1 for l in labels if l.is_intent),
        slots=sum(1 for l in labels if l.is_slot),
        compositional=sum(s.is_compositional for s in stats) / len(stats),
        mean_length=sum(len(ex.utterance) for ex in dataset) / len(dataset),
        mean_depth=sum(s.depth for s in stats) / len(stats),
        max_depth=max(s.depth for s in stats),
    )
