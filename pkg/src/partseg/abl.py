"""Argumentation-based category recognition from sets of part labels.

An argument ``pre -> post`` says that observing every symbol of ``pre``
argues for ``post``; its weight is the number of training examples that
produced it.  Two arguments attack each other when they share ``pre`` but
conclude differently, and ``A`` supports ``B`` when ``A.post`` is one of the
symbols ``B`` needs.  Recognition keeps only undefeated arguments whose
premises are observed and answers with the most specific, best supported one,
together with the chain of arguments that led to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

ARROW = "->"
EXPLAIN_ARROW = "→"


class ArgumentError(ValueError):
    pass


class UnknownObject(LookupError):
    """No stored argument applies to the observed symbols."""

    def __init__(self, symbols=()):
        self.symbols = frozenset(symbols)
        super().__init__("unknown object")


def _check_symbol(sym) -> str:
    sym = str(sym)
    if not sym or sym != sym.strip() or any(c in sym for c in ",:\n") or ARROW in sym:
        raise ArgumentError(f"invalid symbol {sym!r}")
    return sym


@dataclass(frozen=True)
class Argument:
    pre: frozenset
    post: str
    weight: int = 1

    def __post_init__(self):
        pre = frozenset(_check_symbol(s) for s in self.pre)
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post", _check_symbol(self.post))
        if not pre:
            raise ArgumentError("argument premise must be non-empty")
        if self.post in pre:
            raise ArgumentError(f"argument concludes one of its own premises: {self.post!r}")
        if int(self.weight) != self.weight or self.weight < 1:
            raise ArgumentError("argument weight must be a positive integer")
        object.__setattr__(self, "weight", int(self.weight))

    @property
    def key(self) -> tuple:
        return (self.pre, self.post)

    def premise_text(self) -> str:
        return ",".join(sorted(self.pre))

    def __str__(self):
        return f"{self.premise_text()} {EXPLAIN_ARROW} {self.post}"


def attacks(a: Argument, b: Argument) -> bool:
    return a.pre == b.pre and a.post != b.post


def supports(a: Argument, b: Argument) -> bool:
    return a.post in b.pre


@dataclass
class Explanation:
    chain: list
    predicted: str

    def __post_init__(self):
        if not self.chain:
            raise ArgumentError("an explanation needs at least one argument")
        if self.chain[-1].post != self.predicted:
            raise ArgumentError("explanation does not end in the predicted category")
        for prev, nxt in zip(self.chain, self.chain[1:]):
            if not supports(prev, nxt):
                raise ArgumentError("explanation chain is not linked by support")


def explain(explanation: Explanation) -> str:
    return "\n".join(str(arg) for arg in explanation.chain)


@dataclass
class ArgumentationModel:
    max_subset: int = 2
    arguments: dict = field(default_factory=dict)  # (pre, post) -> Argument
    categories: set = field(default_factory=set)

    def __post_init__(self):
        if self.max_subset < 1:
            raise ArgumentError("max_subset must be at least 1")

    def __len__(self):
        return len(self.arguments)

    def add(self, argument: Argument) -> Argument:
        """Insert ``argument``, merging its weight into an existing (pre, post)."""
        old = self.arguments.get(argument.key)
        if old is not None:
            argument = Argument(old.pre, old.post, old.weight + argument.weight)
        self.arguments[argument.key] = argument
        return argument

    def weight(self, pre: Iterable, post) -> int:
        arg = self.arguments.get((frozenset(map(str, pre)), str(post)))
        return 0 if arg is None else arg.weight

    def sorted_arguments(self) -> list:
        return sorted(self.arguments.values(), key=lambda a: (sorted(a.pre), a.post))


def train(model: ArgumentationModel, part_labels: Iterable, category) -> ArgumentationModel:
    """Count one example: every premise subset of up to ``max_subset`` labels argues for ``category``."""
    labels = sorted({_check_symbol(s) for s in part_labels})
    if not labels:
        raise ArgumentError("training example has no part labels")
    category = _check_symbol(category)
    if category in labels:
        raise ArgumentError("category name collides with a part label")
    for size in range(1, min(model.max_subset, len(labels)) + 1):
        for subset in combinations(labels, size):
            model.add(Argument(frozenset(subset), category, 1))
    model.categories.add(category)
    return model


def import_arguments(model: ArgumentationModel, arguments: Iterable[Argument],
                     categories: Optional[Iterable] = None) -> ArgumentationModel:
    """Inject hand-written arguments (weights add to existing ones).

    Conclusions listed in ``categories`` become recognisable categories; other
    conclusions act as intermediate symbols.
    """
    for arg in arguments:
        model.add(arg)
    if categories is not None:
        model.categories.update(_check_symbol(c) for c in categories)
    return model


def _undefeated(candidates: list) -> list:
    """Resolve attacks inside each same-premise group: a strictly heaviest argument survives."""
    groups: dict = {}
    for arg in candidates:
        groups.setdefault(arg.pre, []).append(arg)
    out = []
    for group in groups.values():
        if len(group) == 1:
            out.append(group[0])
            continue
        weights = sorted((a.weight for a in group), reverse=True)
        if weights[0] > weights[1]:
            out.append(max(group, key=lambda a: a.weight))
    return out


def _preference(arg: Argument) -> tuple:
    # smaller is better: most specific, then heaviest, then lexicographic
    return (-len(arg.pre), -arg.weight, arg.post, sorted(arg.pre))


def _derive(model: ArgumentationModel, observed: frozenset):
    """Forward-chain intermediate conclusions.

    Returns the closure of symbols and, for every derived symbol, the argument
    that produced it.  An argument may use at most one derived premise so that
    every explanation is a single support chain.
    """
    derived: dict = {}
    known = set(observed)
    intermediate = [a for a in model.arguments.values() if a.post not in model.categories]
    changed = True
    while changed:
        changed = False
        applicable = [a for a in intermediate
                      if a.pre <= known and len(a.pre & derived.keys()) <= 1 and a.post not in known]
        best: dict = {}
        for arg in sorted(_undefeated(applicable), key=_preference):
            best.setdefault(arg.post, arg)
        for sym in sorted(best):
            derived[sym] = best[sym]
            known.add(sym)
            changed = True
    return frozenset(known), derived


def _chain(arg: Argument, derived: dict) -> list:
    chain = [arg]
    while True:
        feeders = sorted(chain[0].pre & derived.keys())
        if not feeders:
            return chain
        chain.insert(0, derived[feeders[0]])


def candidate_arguments(model: ArgumentationModel, part_labels: Iterable) -> list:
    """Undefeated category arguments applicable to ``part_labels``, best first."""
    observed = frozenset(str(s) for s in part_labels)
    known, derived = _derive(model, observed)
    applicable = [a for a in model.arguments.values()
                  if a.post in model.categories and a.pre <= known and len(a.pre & derived.keys()) <= 1]
    survivors = _undefeated(applicable)
    survivors.sort(key=_preference)
    return survivors


def predict(model: ArgumentationModel, part_labels: Iterable) -> tuple[str, Explanation]:
    """Category for a set of observed part labels, with its explanation.

    The winner is the undefeated argument with the largest premise, then the
    largest weight; remaining ties go to the lexicographically first
    category.  Raises :class:`UnknownObject` when nothing applies.
    """
    if not model.categories:
        raise ArgumentError("model knows no categories")
    observed = frozenset(str(s) for s in part_labels)
    if not observed:
        raise UnknownObject(observed)
    applicable = [a for a in model.arguments.values() if a.post in model.categories]
    if not applicable:
        raise UnknownObject(observed)
    _, derived = _derive(model, observed)
    ranked = candidate_arguments(model, observed)
    if not ranked:
        raise UnknownObject(observed)
    winner = ranked[0]
    return winner.post, Explanation(_chain(winner, derived), winner.post)


def label_set(labels, min_fraction: float = 0.0) -> frozenset:
    """Distinct labels of a segmentation, dropping those rarer than ``min_fraction``.

    The most frequent label(s) always survive, so a non-empty segmentation
    never yields an empty set.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        return frozenset()
    values, counts = np.unique(labels.astype(str), return_counts=True)
    keep = (counts >= min_fraction * labels.size) | (counts == counts.max())
    return frozenset(values[keep].tolist())


# ---------------------------------------------------------------------------
# text store: "pre1,pre2 -> post : weight"
# ---------------------------------------------------------------------------


def format_arguments(model: ArgumentationModel) -> str:
    lines = [f"# categories: {','.join(sorted(model.categories))}", f"# max_subset: {model.max_subset}"]
    for arg in model.sorted_arguments():
        lines.append(f"{arg.premise_text()} {ARROW} {arg.post} : {arg.weight}")
    return "\n".join(lines) + "\n"


def parse_arguments(text: str, max_subset: int = 2) -> ArgumentationModel:
    """Inverse of :func:`format_arguments`.

    Without a ``# categories:`` header every conclusion counts as a category.
    """
    model = ArgumentationModel(max_subset=max_subset)
    categories = None
    args = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            key, value = key.strip(), value.strip()
            if key == "categories":
                categories = [c for c in value.split(",") if c]
            elif key == "max_subset":
                try:
                    model.max_subset = int(value)
                except ValueError:
                    raise ArgumentError(f"line {lineno}: bad max_subset {value!r}") from None
            continue
        try:
            rule, weight = line.rsplit(":", 1)
            pre, post = rule.split(ARROW)
            pre_syms = [s.strip() for s in pre.split(",")]
            args.append(Argument(frozenset(pre_syms), post.strip(), int(weight)))
        except (ValueError, ArgumentError) as exc:
            raise ArgumentError(f"line {lineno}: malformed argument {raw!r} ({exc})") from None
    if categories is None:
        categories = [a.post for a in args]
    return import_arguments(model, args, categories)


def save_arguments(model: ArgumentationModel, path) -> None:
    Path(path).write_text(format_arguments(model))


def load_arguments(path) -> ArgumentationModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArgumentError(f"cannot read {path}: {exc}") from exc
    return parse_arguments(text)
