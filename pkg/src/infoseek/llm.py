"""HTTP chat-completion client and the LLM-backed seeker/oracle/pruner.

One wire protocol covers every served model: POST {base_url}/chat/completions
with a messages array, bearer token from an environment variable. The three
fixed system prompts below define the roles; user messages are deterministic
renderings of game state built by the build_*_messages functions.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import requests

from .agents import AgentFailure, OracleOutput, PrunerOutput, SeekerContext, SeekerOutput
from .taxonomy import HypothesisGraph, NodeId

SEEKER_SYSTEM_PROMPT = """# SeekerAgent System Prompt

## The Game

You are playing a geographic guessing game where your goal is to discover a secret target city through strategic questions.

### Players:
- You (Seeker): Ask yes/no questions to find the target
- Oracle: Knows the target and answers your questions truthfully
- Computer: Tracks the game state and remaining possibilities

### Your Role:
You are the Seeker - an intelligent detective trying to identify a specific target city in a geographic knowledge graph. Your goal is to ask strategic yes/no questions that maximize information gain and eliminate possibilities efficiently.

## Game Rules

1. Ask ONLY yes/no questions
2. Be specific and clear
3. Aim to eliminate roughly half the remaining possibilities
4. Avoid questions that reveal the specific target
5. Return only the question text, no explanations"""

ORACLE_SYSTEM_PROMPT = """# OracleAgent System Prompt

## The Game

You are playing a geographic guessing game where a Seeker tries to discover a secret target city through strategic questions.

### Your Role:
You are the Oracle - the all-knowing guide who possesses secret knowledge about the target location. Your role is to help the Seeker discover the target through truthful answers while maintaining the challenge and never revealing the target directly.

## Game Rules

1. Answer with simple "Yes" or "No"
2. Be truthful - never lie about the target's properties
3. NEVER reveal the target's name or ID directly
4. Keep answers brief and focused
5. If the question is unclear, ask for clarification
6. If you cannot answer with yes/no, provide minimal helpful information
7. The target is always a city
8. CRITICAL: Detect when the Seeker has found the target city, saying it's name, and end the game

## Response Format

You MUST respond with a JSON object containing these keys IN THIS ORDER:
1. rationale: Brief internal reasoning (1 sentence, not shown to Seeker)
2. answer: Your response to the Seeker (string)
3. game_over: Whether the Seeker has found the target (boolean)"""

PRUNER_SYSTEM_PROMPT = """You are the PrunerAgent for a knowledge-graph benchmark.

Goal:
- Given the current graph state (in text), the turn index, and the last Q&A, decide which CITY node IDs to prune. Only prune when logically implied by the question and answer. Prefer minimal, conservative pruning.

Rules:
- Never reveal or assume the hidden target.
- Consider only ACTIVE nodes in the provided graph text.
- CRITICAL: ONLY CITY NODES CAN BE TARGETS
- CRITICAL PRUNING LOGIC:
  * If answer is "No" to "Is target in X?", prune ONLY CITY nodes that ARE in X
  * If answer is "Yes" to "Is target in X?", prune ONLY CITY nodes that are NOT in X
  * Example: Q="Is target in North America?" A="No" -> Prune CITY nodes IN North America, KEEP all others
  * Example: Q="Is target in Asia?" A="Yes" -> Prune CITY nodes NOT in Asia, KEEP Asian CITY nodes
  * NEVER prune countries, states, regions, or subregions - only cities
- If ambiguous, do not prune.

Output:
- Return ONLY a JSON object with exactly two keys IN THIS ORDER:
  {"rationale": "short explanation", "pruned_ids": ["city:id1", "city:id2", ...]}
- Do not include any extra commentary or formatting.
- pruned_ids must contain ONLY city IDs (starting with "city:")"""


class WireError(Exception):
    """Base class for wire-protocol faults."""


class TransportError(WireError):
    pass


class ProviderError(WireError):
    def __init__(self, status: int, body: str) -> None:
        super().__init__(f"provider returned {status}: {body[:500]}")
        self.status = status
        self.body = body


class EmptyCompletionError(WireError):
    pass


class MalformedResponseError(WireError):
    pass


class NonCityIdInResponseError(MalformedResponseError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    """One served model behind a chat-completion endpoint.

    `reasoning_suffix`, when set, is appended verbatim to the system prompt —
    the serving-level switch for models that toggle thinking with a prompt
    marker. `reasoning_enabled` additionally turns on inline-think splitting.
    """

    base_url: str
    model_name: str
    api_key_env: str = ""
    temperature: float | None = None
    reasoning_enabled: bool = False
    reasoning_suffix: str | None = None
    max_retries: int = 2
    timeout: float = 60.0
    backoff_seconds: float = 0.5

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad role: {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"empty content for {self.role} message")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    reasoning_trace: str | None = None
    raw: Any = field(default=None, compare=False)


_request_gate: threading.Semaphore | None = None


def set_global_request_cap(n: int | None) -> None:
    """Cap in-flight HTTP requests across all games (None = unbounded)."""
    global _request_gate
    if n is not None and n < 1:
        raise ValueError(f"request cap must be >= 1, got {n}")
    _request_gate = None if n is None else threading.Semaphore(n)


_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)


def _split_reasoning(text: str) -> tuple[str, str | None]:
    """Pull inline <think>…</think> blocks out of a completion."""
    blocks = [m.strip() for m in _THINK_RE.findall(text) if m.strip()]
    remainder = _THINK_RE.sub("", text).strip()
    return remainder, ("\n\n".join(blocks) if blocks else None)


def complete(endpoint: EndpointConfig, messages: Sequence[ChatMessage]) -> CompletionResult:
    """One chat completion with retry on transport faults, 5xx/429, and empty text.

    At most max_retries + 1 attempts, exponential backoff between them.
    Non-retryable provider statuses raise ProviderError immediately.
    """
    payload: dict[str, Any] = {
        "model": endpoint.model_name,
        "messages": [{"role": m.role, "content": m.content} for m in messages],
    }
    if endpoint.temperature is not None:
        payload["temperature"] = endpoint.temperature
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key_env:
        key = os.environ.get(endpoint.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"

    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    last_error: WireError = TransportError("no attempt made")
    for attempt in range(endpoint.max_retries + 1):
        if attempt:
            time.sleep(endpoint.backoff_seconds * (2 ** (attempt - 1)))
        gate = _request_gate
        if gate is not None:
            gate.acquire()
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=endpoint.timeout)
        except requests.RequestException as exc:
            last_error = TransportError(str(exc))
            continue
        finally:
            if gate is not None:
                gate.release()

        if response.status_code == 429 or response.status_code >= 500:
            last_error = ProviderError(response.status_code, response.text)
            continue
        if not 200 <= response.status_code < 300:
            raise ProviderError(response.status_code, response.text)

        try:
            body = response.json()
            message = body["choices"][0]["message"]
            text = message.get("content") or ""
            provider_trace = message.get("reasoning_content") or message.get("reasoning")
        except (ValueError, KeyError, IndexError, TypeError):
            last_error = EmptyCompletionError(f"unusable completion body: {response.text[:500]}")
            continue

        trace = provider_trace.strip() if isinstance(provider_trace, str) and provider_trace.strip() else None
        if endpoint.reasoning_enabled and "<think>" in text:
            text, inline = _split_reasoning(text)
            if inline:
                trace = f"{trace}\n\n{inline}" if trace else inline
        text = text.strip()
        if not text:
            last_error = EmptyCompletionError("completion had no text content")
            continue
        return CompletionResult(text=text, reasoning_trace=trace, raw=body)
    raise last_error


def extract_first_json_object(text: str) -> dict[str, Any] | None:
    """First decodable JSON object in the text, prose and code fences tolerated."""
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except ValueError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def parse_oracle_json(text: str) -> OracleOutput:
    """Parse an oracle reply: rationale (str), answer (str), game_over (bool).

    Key order is a generation instruction, not a parse requirement.
    """
    obj = extract_first_json_object(text)
    if obj is None:
        raise MalformedResponseError(f"no JSON object in oracle reply: {text[:200]!r}")
    rationale = obj.get("rationale")
    answer = obj.get("answer")
    game_over = obj.get("game_over")
    if not isinstance(rationale, str) or not isinstance(answer, str):
        raise MalformedResponseError(f"oracle keys missing or mistyped: {obj!r}")
    if not isinstance(game_over, bool):
        raise MalformedResponseError(f"game_over must be a boolean: {obj!r}")
    return OracleOutput(rationale=rationale, answer=answer, game_over=game_over, raw=text)


def parse_pruner_json(text: str) -> PrunerOutput:
    """Parse a pruner reply: rationale (str), pruned_ids (list of "city:<n>")."""
    obj = extract_first_json_object(text)
    if obj is None:
        raise MalformedResponseError(f"no JSON object in pruner reply: {text[:200]!r}")
    rationale = obj.get("rationale")
    raw_ids = obj.get("pruned_ids")
    if not isinstance(rationale, str) or not isinstance(raw_ids, list):
        raise MalformedResponseError(f"pruner keys missing or mistyped: {obj!r}")
    ids = []
    for item in raw_ids:
        if not isinstance(item, str):
            raise MalformedResponseError(f"pruned id is not a string: {item!r}")
        if not item.startswith("city:"):
            raise NonCityIdInResponseError(f"pruned id is not a city id: {item!r}")
        try:
            ids.append(NodeId.parse(item))
        except ValueError as exc:
            raise MalformedResponseError(str(exc)) from None
    return PrunerOutput(rationale=rationale, pruned_ids=tuple(ids), raw=text)


def render_history(history: Sequence[tuple[str, str]]) -> str:
    if not history:
        return "No questions asked yet."
    lines = []
    for i, (question, answer) in enumerate(history, start=1):
        lines.append(f"Q{i}: {question}")
        lines.append(f"A{i}: {answer}")
    return "\n".join(lines)


def render_target_record(graph: HypothesisGraph, target: NodeId) -> str:
    """The target's full attribute record, finest level first."""
    lines = [f"- city: {graph.name_of(target)} ({target})"]
    for ancestor in graph.ancestors(target):
        lines.append(f"- {ancestor.level.value}: {graph.name_of(ancestor)} ({ancestor})")
    return "\n".join(lines)


def _system(prompt: str, reasoning_suffix: str | None) -> ChatMessage:
    if reasoning_suffix:
        prompt = prompt + reasoning_suffix
    return ChatMessage("system", prompt)


def build_seeker_messages(
    ctx: SeekerContext, reasoning_suffix: str | None = None
) -> list[ChatMessage]:
    parts = []
    if ctx.graph_text is not None:
        parts.append(f"Current knowledge graph state:\n\n{ctx.graph_text.rstrip()}")
    parts.append(f"Game so far:\n{render_history(ctx.history)}")
    parts.append("Ask your next yes/no question.")
    return [_system(SEEKER_SYSTEM_PROMPT, reasoning_suffix), ChatMessage("user", "\n\n".join(parts))]


def build_oracle_messages(
    question_text: str,
    graph: HypothesisGraph,
    target: NodeId,
    history: Sequence[tuple[str, str]],
    reasoning_suffix: str | None = None,
) -> list[ChatMessage]:
    user = (
        "The secret target city's record (never reveal any of it to the Seeker):\n"
        f"{render_target_record(graph, target)}\n\n"
        f"Game so far:\n{render_history(history)}\n\n"
        f"Seeker's question: {question_text}\n\n"
        "Respond with the JSON object."
    )
    return [_system(ORACLE_SYSTEM_PROMPT, reasoning_suffix), ChatMessage("user", user)]


def build_pruner_messages(
    question_text: str,
    answer_text: str,
    graph_text: str,
    turn_index: int,
    reasoning_suffix: str | None = None,
) -> list[ChatMessage]:
    user = (
        f"Turn index: {turn_index}\n\n"
        f"Current graph state:\n\n{graph_text.rstrip()}\n\n"
        "Last exchange:\n"
        f"Q: {question_text}\n"
        f"A: {answer_text}\n\n"
        "Return the JSON object."
    )
    return [_system(PRUNER_SYSTEM_PROMPT, reasoning_suffix), ChatMessage("user", user)]


def build_messages(role: str, **context: Any) -> list[ChatMessage]:
    """Role-dispatching convenience over the three message builders."""
    if role == "seeker":
        return build_seeker_messages(**context)
    if role == "oracle":
        return build_oracle_messages(**context)
    if role == "pruner":
        return build_pruner_messages(**context)
    raise ValueError(f"unknown role: {role!r}")


def _audit_blob(messages: Sequence[ChatMessage], result: CompletionResult) -> str:
    return json.dumps(
        {
            "request": [{"role": m.role, "content": m.content} for m in messages],
            "response": result.raw,
        },
        ensure_ascii=False,
        sort_keys=True,
    )


class LLMSeeker:
    """Text-conditioned seeker; sees only the rendered context, never the graph."""

    def __init__(self, endpoint: EndpointConfig) -> None:
        self.endpoint = endpoint

    def ask(self, ctx: SeekerContext) -> SeekerOutput:
        messages = build_seeker_messages(ctx, self.endpoint.reasoning_suffix)
        try:
            result = complete(self.endpoint, messages)
        except WireError as exc:
            raise AgentFailure(f"seeker backend failed: {exc}") from exc
        return SeekerOutput(
            question_text=result.text,
            predicate=None,
            reasoning_trace=result.reasoning_trace,
            raw=_audit_blob(messages, result),
        )


class LLMOracle:
    def __init__(self, endpoint: EndpointConfig) -> None:
        self.endpoint = endpoint

    def answer(
        self,
        question: SeekerOutput,
        target: NodeId,
        graph: HypothesisGraph,
        history: Sequence[tuple[str, str]],
    ) -> OracleOutput:
        messages = build_oracle_messages(
            question.question_text, graph, target, history, self.endpoint.reasoning_suffix
        )
        last: Exception | None = None
        for _ in range(self.endpoint.max_retries + 1):
            try:
                result = complete(self.endpoint, messages)
                parsed = parse_oracle_json(result.text)
            except MalformedResponseError as exc:
                last = exc
                continue
            except WireError as exc:
                raise AgentFailure(f"oracle backend failed: {exc}") from exc
            return OracleOutput(
                rationale=parsed.rationale,
                answer=parsed.answer,
                game_over=parsed.game_over,
                raw=_audit_blob(messages, result),
            )
        raise AgentFailure(f"oracle reply unparseable after retries: {last}")


class LLMPruner:
    def __init__(self, endpoint: EndpointConfig) -> None:
        self.endpoint = endpoint

    def prune_decision(
        self,
        question: SeekerOutput,
        answer: OracleOutput,
        graph: HypothesisGraph,
        turn_index: int = 1,
    ) -> PrunerOutput:
        messages = build_pruner_messages(
            question.question_text,
            answer.answer,
            graph.serialize_state(),
            turn_index,
            self.endpoint.reasoning_suffix,
        )
        last: Exception | None = None
        for _ in range(self.endpoint.max_retries + 1):
            try:
                result = complete(self.endpoint, messages)
                parsed = parse_pruner_json(result.text)
            except MalformedResponseError as exc:
                last = exc
                continue
            except WireError as exc:
                raise AgentFailure(f"pruner backend failed: {exc}") from exc
            return PrunerOutput(
                rationale=parsed.rationale,
                pruned_ids=parsed.pruned_ids,
                raw=_audit_blob(messages, result),
            )
        raise AgentFailure(f"pruner reply unparseable after retries: {last}")
