"""Structured yes/no predicates over the hypothesis space.

Three forms cover every question the rule agents ask:

* ``AttributeIn(level, values)`` — "is the target's <level> one of <values>?"
* ``CityIn(values)``             — "is the target one of these cities?"
* ``CityGuess(name)``            — a direct guess at the answer.

Each predicate has a canonical string form used in transcripts, and two
predicates with the same canonical form render to identical English.
Name matching is case-insensitive; display case is preserved from input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .metrics import information_gain
from .taxonomy import ATTRIBUTE_LEVELS, GraphError, HypothesisGraph, Level, NodeId


class PredicateError(Exception):
    pass


class TargetNotActiveError(GraphError):
    pass


def _normalize_values(values: tuple[str, ...]) -> tuple[str, ...]:
    """Strip, drop case-duplicates (first spelling wins), sort casefolded."""
    seen: dict[str, str] = {}
    for v in values:
        v = v.strip()
        if not v:
            raise PredicateError("empty value in predicate")
        seen.setdefault(v.casefold(), v)
    return tuple(sorted(seen.values(), key=lambda v: (v.casefold(), v)))


def _join_or(values: tuple[str, ...]) -> str:
    if len(values) == 1:
        return values[0]
    if len(values) == 2:
        return f"{values[0]} or {values[1]}"
    return f"{', '.join(values[:-1])} or {values[-1]}"


@dataclass(frozen=True)
class AttributeIn:
    """Membership test on an ancestor attribute (region through state)."""

    level: Level
    values: tuple[str, ...]
    _folded: frozenset[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.level not in ATTRIBUTE_LEVELS:
            raise PredicateError(f"attribute questions use region..state, got {self.level.value}")
        if not self.values:
            raise PredicateError("attribute predicate needs at least one value")
        object.__setattr__(self, "values", _normalize_values(tuple(self.values)))
        object.__setattr__(self, "_folded", frozenset(v.casefold() for v in self.values))

    def matches(self, graph: HypothesisGraph, city_id: NodeId) -> bool:
        return graph.attribute_name(city_id, self.level).casefold() in self._folded

    def canonical(self) -> str:
        return f"attr:{self.level.value}:{'|'.join(self.values)}"

    def render(self) -> str:
        if self.level is Level.REGION and len(self.values) == 1:
            return f"Is the target city in {self.values[0]}?"
        if len(self.values) == 1:
            return f"Is the target city's {self.level.value} {self.values[0]}?"
        return f"Is the target city's {self.level.value} one of {_join_or(self.values)}?"


@dataclass(frozen=True)
class CityIn:
    """Membership test on an explicit set of city names."""

    values: tuple[str, ...]
    _folded: frozenset[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.values:
            raise PredicateError("city-set predicate needs at least one value")
        object.__setattr__(self, "values", _normalize_values(tuple(self.values)))
        object.__setattr__(self, "_folded", frozenset(v.casefold() for v in self.values))

    def matches(self, graph: HypothesisGraph, city_id: NodeId) -> bool:
        return graph.attribute_name(city_id, Level.CITY).casefold() in self._folded

    def canonical(self) -> str:
        return f"cityin:{'|'.join(self.values)}"

    def render(self) -> str:
        if len(self.values) == 1:
            return f"Is the target city {self.values[0]}?"
        return f"Is the target city one of {_join_or(self.values)}?"


@dataclass(frozen=True)
class CityGuess:
    """Direct guess: correct ends the game, wrong eliminates one city."""

    name: str
    _folded: str = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        name = self.name.strip()
        if not name:
            raise PredicateError("empty guess")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "_folded", name.casefold())

    def matches(self, graph: HypothesisGraph, city_id: NodeId) -> bool:
        return graph.attribute_name(city_id, Level.CITY).casefold() == self._folded

    def canonical(self) -> str:
        return f"guess:{self.name}"

    def render(self) -> str:
        return f"Is the target city {self.name}?"


Predicate = AttributeIn | CityIn | CityGuess


def evaluate(predicate: Predicate, graph: HypothesisGraph, city_id: NodeId) -> bool:
    """Ground-truth answer for this predicate about a specific city."""
    return predicate.matches(graph, city_id)


def render(predicate: Predicate) -> str:
    return predicate.render()


def canonical(predicate: Predicate) -> str:
    return predicate.canonical()


def parse_canonical(text: str) -> Predicate:
    """Inverse of canonical(). Raises PredicateError on malformed input."""
    kind, _, rest = text.partition(":")
    if kind == "attr":
        level_text, sep, values_text = rest.partition(":")
        if not sep:
            raise PredicateError(f"malformed attribute predicate: {text!r}")
        try:
            level = Level(level_text)
        except ValueError:
            raise PredicateError(f"unknown level {level_text!r} in {text!r}") from None
        return AttributeIn(level, tuple(values_text.split("|")))
    if kind == "cityin":
        return CityIn(tuple(rest.split("|")))
    if kind == "guess":
        return CityGuess(rest)
    raise PredicateError(f"unknown predicate kind in {text!r}")


def prune_set(predicate: Predicate, answer: bool, graph: HypothesisGraph) -> set[NodeId]:
    """Active cities eliminated by hearing `answer` to this predicate.

    Yes removes the non-matching cities; no removes the matching ones.
    """
    if answer:
        return {c for c in graph.active_cities if not predicate.matches(graph, c)}
    return {c for c in graph.active_cities if predicate.matches(graph, c)}


def counterfactual_ig(
    predicate: Predicate, graph: HypothesisGraph, target: NodeId
) -> float:
    """Bits this question would yield against this target. Pure; no mutation.

    A correct guess collapses the space to one candidate, so a guess scores
    the full remaining entropy when right and the one-elimination gain when
    wrong — same arithmetic either way, since the truthful answer leaves
    exactly the matching (or non-matching) candidates standing.
    """
    if target not in graph.active_cities:
        raise TargetNotActiveError(f"target not active: {target}")
    answer = predicate.matches(graph, target)
    removed = prune_set(predicate, answer, graph)
    n_before = graph.active_count()
    return information_gain(n_before, n_before - len(removed))
