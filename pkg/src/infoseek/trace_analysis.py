"""Decision-quality analysis of seeker reasoning traces.

For every turn with a reasoning trace we extract the candidate questions
the seeker weighed, score each one counterfactually (bits it would have
gained against the actual target and the actual graph state before that
turn), and compare the executed question against the best alternative.
"""

from __future__ import annotations

import json
import re
import statistics
from dataclasses import dataclass
from typing import Iterable, Iterator, Protocol, Sequence

from .engine import FingerprintMismatchError, GameTranscript, ReplayDivergenceError
from .llm import ChatMessage, EndpointConfig, WireError, complete
from .metrics import entropy
from .questions import (
    AttributeIn,
    CityGuess,
    CityIn,
    Predicate,
    PredicateError,
    counterfactual_ig,
    parse_canonical,
)
from .taxonomy import ATTRIBUTE_LEVELS, HypothesisGraph, Level, NodeId


class ExtractorFailureError(Exception):
    pass


@dataclass(frozen=True)
class CandidateQuestion:
    text: str
    predicate: Predicate | None = None
    counterfactual_ig: float | None = None
    chosen: bool = False


@dataclass(frozen=True)
class TurnDecision:
    turn_index: int
    candidates: tuple[CandidateQuestion, ...]
    optimal_ig: float
    chosen_ig: float
    is_optimal: bool
    unparseable_count: int


@dataclass(frozen=True)
class MeanStd:
    """Sample mean and standard deviation (ddof=1; 0 for n<2)."""

    mean: float
    std: float

    @classmethod
    def of(cls, values: Sequence[float]) -> MeanStd:
        mean = statistics.fmean(values)
        return cls(mean, statistics.stdev(values) if len(values) >= 2 else 0.0)

    def __str__(self) -> str:
        return f"{self.mean:.2f} ± {self.std:.2f}"


@dataclass(frozen=True)
class DecisionQualityReport:
    avg_optimal_rate: MeanStd
    avg_chosen_ig: MeanStd
    avg_optimal_ig: MeanStd
    avg_questions_per_turn: MeanStd
    turns_analyzed: int
    turns_skipped: int


_POSSESSIVE_LEVELS = {
    "region": Level.REGION,
    "subregion": Level.SUBREGION,
    "country": Level.COUNTRY,
    "state": Level.STATE,
    "province": Level.STATE,
}

# Longest first so "is the target city" wins over "is the target".
_QUESTION_PREFIXES = (
    "is the target city",
    "is the secret city",
    "is the target",
    "is the city",
    "is your city",
    "is it",
)

_LIST_SPLIT_RE = re.compile(r"\s+(?:or|and)\s+", re.IGNORECASE)


def _split_list(text: str) -> list[str]:
    parts = []
    for chunk in text.split(","):
        for piece in _LIST_SPLIT_RE.split(chunk):
            piece = piece.strip(" \t\"'")
            if piece:
                parts.append(piece)
    return parts


class QuestionParser:
    """Heuristic English-question → predicate parser, bound to one dataset.

    Returns None for anything it cannot read with confidence; a wrong
    guess at semantics would silently corrupt counterfactual scores.
    """

    def __init__(self, graph: HypothesisGraph) -> None:
        self._values: dict[Level, dict[str, str]] = {level: {} for level in ATTRIBUTE_LEVELS}
        self._cities: dict[str, str] = {}
        for city in graph.city_leaves:
            for level in ATTRIBUTE_LEVELS:
                name = graph.attribute_name(city, level)
                self._values[level].setdefault(name.casefold(), name)
            name = graph.attribute_name(city, Level.CITY)
            self._cities.setdefault(name.casefold(), name)

    def _displayed(self, level: Level | None, names: list[str]) -> tuple[str, ...]:
        lookup = self._cities if level is None else self._values[level]
        return tuple(lookup.get(n.casefold(), n) for n in names)

    def parse(self, text: str) -> Predicate | None:
        t = text.strip()
        if t.startswith(("attr:", "cityin:", "guess:")):
            try:
                return parse_canonical(t)
            except PredicateError:
                return None
        t = t.strip(" \t\"'").rstrip("?").strip()
        low = t.casefold()
        for prefix in _QUESTION_PREFIXES:
            if low.startswith(prefix):
                rest = t[len(prefix):].strip()
                break
        else:
            return None
        if not rest:
            return None
        rest_low = rest.casefold()

        try:
            if rest_low.startswith("'s "):
                return self._parse_possessive(rest[3:].strip())
            if rest_low.startswith("in "):
                return self._parse_membership(rest[3:].strip())
            if rest_low.startswith("one of "):
                names = _split_list(rest[7:])
                return CityIn(self._displayed(None, names)) if names else None
            for marker in ("called ", "named "):
                if rest_low.startswith(marker):
                    return CityGuess(self._displayed(None, [rest[len(marker):]])[0])
            return CityGuess(self._displayed(None, [rest])[0])
        except PredicateError:
            return None

    def _parse_possessive(self, rest: str) -> Predicate | None:
        word, _, remainder = rest.partition(" ")
        level = _POSSESSIVE_LEVELS.get(word.casefold())
        remainder = remainder.strip()
        if level is None or not remainder:
            return None
        if remainder.casefold().startswith("one of "):
            names = _split_list(remainder[7:])
        elif remainder.casefold().startswith("in "):
            names = _split_list(remainder[3:])
        else:
            names = [remainder]
        if not names:
            return None
        return AttributeIn(level, self._displayed(level, names))

    def _parse_membership(self, rest: str) -> Predicate | None:
        names = _split_list(rest)
        if not names:
            return None
        folded = [n.casefold() for n in names]
        for level in ATTRIBUTE_LEVELS:
            if all(f in self._values[level] for f in folded):
                return AttributeIn(level, self._displayed(level, names))
        if all(f in self._cities for f in folded):
            return CityIn(self._displayed(None, names))
        return None


_SPAN_RE = re.compile(r"[^?]*\?")
_YESNO_START_RE = re.compile(
    r"^(is|are|was|were|does|do|did|has|have|had|can|could|will|would|should|shall|may|might|am)\b",
    re.IGNORECASE,
)
_LEADING_JUNK_RE = re.compile(r"^[\s\"'*\-–—\d.)(:“”‘’]+")


class Extractor(Protocol):
    def extract(self, trace: str) -> list[str]: ...


class HeuristicExtractor:
    """Pull candidate yes/no questions out of free-form reasoning text."""

    def extract(self, trace: str) -> list[str]:
        found = []
        for match in _SPAN_RE.finditer(trace):
            span = match.group().replace("\n", " ")
            variants = [span]
            for splitter in ('"', "“", ":"):
                if splitter in span:
                    variants.append(span.rsplit(splitter, 1)[1])
            for variant in variants:
                cleaned = _LEADING_JUNK_RE.sub("", variant).strip()
                if cleaned and _YESNO_START_RE.match(cleaned):
                    found.append(cleaned)
                    break
        return _dedupe(found)


def _dedupe(texts: Iterable[str]) -> list[str]:
    seen = set()
    out = []
    for text in texts:
        key = text.strip().casefold()
        if key and key not in seen:
            seen.add(key)
            out.append(text.strip())
    return out


LLM_EXTRACTION_PROMPT = (
    "You extract candidate questions from a thinking trace produced while "
    "playing a yes/no guessing game. Identify every distinct candidate "
    "yes/no question the trace considers asking, quoted or paraphrased. "
    "Return ONLY a JSON array of strings, one per candidate question, in "
    "order of first appearance. No commentary, no code fences."
)


class LLMExtractor:
    """Model-backed candidate extraction; opt-in, needs a served endpoint."""

    def __init__(self, endpoint: EndpointConfig) -> None:
        self.endpoint = endpoint

    def extract(self, trace: str) -> list[str]:
        messages = [
            ChatMessage("system", LLM_EXTRACTION_PROMPT),
            ChatMessage("user", trace),
        ]
        try:
            result = complete(self.endpoint, messages)
        except WireError as exc:
            raise ExtractorFailureError(str(exc)) from exc
        decoder = json.JSONDecoder()
        for i, ch in enumerate(result.text):
            if ch != "[":
                continue
            try:
                arr, _ = decoder.raw_decode(result.text, i)
            except ValueError:
                continue
            if isinstance(arr, list) and all(isinstance(x, str) for x in arr):
                return _dedupe(arr)
        raise ExtractorFailureError(f"no JSON string array in reply: {result.text[:200]!r}")


def extract_candidates(
    trace: str, extractor: Extractor, executed_question: str | None = None
) -> list[str]:
    """Candidate texts from a trace; the executed question is always included."""
    texts = _dedupe(extractor.extract(trace)) if trace else []
    if executed_question:
        folded = {t.casefold() for t in texts}
        if executed_question.strip().casefold() not in folded:
            texts.append(executed_question.strip())
    return texts


def score_turn(
    candidate_texts: Sequence[str],
    graph: HypothesisGraph,
    target: NodeId,
    parser: QuestionParser,
    turn_index: int,
    executed_question: str,
    realized_ig: float | None = None,
) -> TurnDecision | None:
    """Score one turn's candidates; None means nothing was scorable.

    The executed question falls back to its realized gain when its text
    does not parse — it actually ran, so its value is known either way.
    """
    executed_fold = executed_question.strip().casefold()
    candidates = []
    unparseable = 0
    for text in candidate_texts:
        predicate = parser.parse(text)
        ig = counterfactual_ig(predicate, graph, target) if predicate is not None else None
        if predicate is None:
            unparseable += 1
        candidates.append(
            CandidateQuestion(
                text=text,
                predicate=predicate,
                counterfactual_ig=ig,
                chosen=text.strip().casefold() == executed_fold,
            )
        )
    if unparseable == len(candidates):
        return None
    chosen = next((c for c in candidates if c.chosen), None)
    if chosen is None:
        return None
    chosen_ig = chosen.counterfactual_ig if chosen.counterfactual_ig is not None else realized_ig
    if chosen_ig is None:
        return None
    scored = [c.counterfactual_ig for c in candidates if c.counterfactual_ig is not None]
    optimal_ig = max([*scored, chosen_ig])
    return TurnDecision(
        turn_index=turn_index,
        candidates=tuple(candidates),
        optimal_ig=optimal_ig,
        chosen_ig=chosen_ig,
        is_optimal=chosen_ig >= optimal_ig - 1e-9,
        unparseable_count=unparseable,
    )


def iter_turn_decisions(
    transcripts: Sequence[GameTranscript],
    graph: HypothesisGraph,
    extractor: Extractor | None = None,
    parser: QuestionParser | None = None,
) -> Iterator[tuple[int, TurnDecision | None]]:
    """(game index, decision-or-None) per turn, walking each game's graph state.

    None marks a skipped turn (no trace, or nothing scorable).
    """
    extractor = extractor or HeuristicExtractor()
    parser = parser or QuestionParser(graph)
    for game_index, transcript in enumerate(transcripts):
        if transcript.dataset_fingerprint != graph.fingerprint:
            raise FingerprintMismatchError(
                f"game {game_index}: transcript fingerprint does not match the dataset"
            )
        g = graph.fresh_copy()
        for turn in transcript.turns:
            if abs(entropy(g.active_count()) - turn.metrics.h_before) > 1e-9:
                raise ReplayDivergenceError(
                    f"game {game_index} turn {turn.turn_index}: "
                    "reconstructed state disagrees with recorded entropy"
                )
            decision = None
            if turn.seeker_trace:
                texts = extract_candidates(
                    turn.seeker_trace, extractor, executed_question=turn.question_text
                )
                decision = score_turn(
                    texts,
                    g,
                    transcript.config.target,
                    parser,
                    turn.turn_index,
                    turn.question_text,
                    realized_ig=turn.metrics.ig,
                )
            yield game_index, decision
            if turn.pruned_ids:
                g.prune(turn.pruned_ids)


def decision_quality(
    transcripts: Sequence[GameTranscript],
    graph: HypothesisGraph,
    extractor: Extractor | None = None,
    parser: QuestionParser | None = None,
) -> DecisionQualityReport:
    """Aggregate per-turn decisions into per-game means, then mean ± std."""
    by_game: dict[int, list[TurnDecision]] = {}
    analyzed = 0
    skipped = 0
    for game_index, decision in iter_turn_decisions(transcripts, graph, extractor, parser):
        if decision is None:
            skipped += 1
        else:
            analyzed += 1
            by_game.setdefault(game_index, []).append(decision)

    if not by_game:
        zero = MeanStd(0.0, 0.0)
        return DecisionQualityReport(zero, zero, zero, zero, 0, skipped)

    rates, chosens, optimals, counts = [], [], [], []
    for decisions in by_game.values():
        rates.append(statistics.fmean(1.0 if d.is_optimal else 0.0 for d in decisions))
        chosens.append(statistics.fmean(d.chosen_ig for d in decisions))
        optimals.append(statistics.fmean(d.optimal_ig for d in decisions))
        counts.append(statistics.fmean(len(d.candidates) for d in decisions))
    return DecisionQualityReport(
        avg_optimal_rate=MeanStd.of(rates),
        avg_chosen_ig=MeanStd.of(chosens),
        avg_optimal_ig=MeanStd.of(optimals),
        avg_questions_per_turn=MeanStd.of(counts),
        turns_analyzed=analyzed,
        turns_skipped=skipped,
    )
