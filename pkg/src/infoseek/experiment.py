"""Batch orchestration: every city as target × several runs, aggregated.

A run produces one transcript per (target, run) pair under a bounded
worker pool, persists them all, then aggregates into a results table row
and a per-turn gain timeline. Per-game seeds are derived from the base
seed so adding targets never shifts other games' randomness.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .agents import (
    GreedyHalvingSeeker,
    Observability,
    Oracle,
    Pruner,
    RandomSeeker,
    RuleOracle,
    RulePruner,
    Seeker,
)
from .dataset import DatasetManifest, load_dataset
from .engine import (
    OUTCOME_AGENT_FAILURE,
    GameConfig,
    GameTranscript,
    play_game,
    save_transcript,
)
from .llm import EndpointConfig, LLMOracle, LLMPruner, LLMSeeker
from .metrics import AggregateMetrics, MeanSE, TimelinePoint, aggregate, ig_timeline
from .taxonomy import NodeId, build_graph

CONFIG_SCHEMA_VERSION = 1

SEEKER_KINDS = ("greedy", "random", "llm")
ORACLE_KINDS = ("rule", "llm")
PRUNER_KINDS = ("rule", "llm")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class AgentSpec:
    kind: str
    endpoint: EndpointConfig | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.endpoint is not None:
            d["endpoint"] = {
                "base_url": self.endpoint.base_url,
                "model_name": self.endpoint.model_name,
                "api_key_env": self.endpoint.api_key_env,
                "temperature": self.endpoint.temperature,
                "reasoning_enabled": self.endpoint.reasoning_enabled,
                "reasoning_suffix": self.endpoint.reasoning_suffix,
                "max_retries": self.endpoint.max_retries,
                "timeout": self.endpoint.timeout,
                "backoff_seconds": self.endpoint.backoff_seconds,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AgentSpec:
        endpoint = None
        if "endpoint" in d and d["endpoint"] is not None:
            try:
                endpoint = EndpointConfig(**d["endpoint"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad endpoint config: {exc}") from exc
        return cls(kind=d.get("kind", ""), endpoint=endpoint)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str
    runs_per_target: int = 3
    max_turns: int = 30
    observability: Observability = Observability.FULL
    seeker: AgentSpec = AgentSpec("greedy")
    oracle: AgentSpec = AgentSpec("rule")
    pruner: AgentSpec = AgentSpec("rule")
    reasoning_enabled: bool = False
    base_seed: int = 0
    parallelism: int = 1
    output_dir: str | None = None
    label: str | None = None
    audit: bool = False
    count_failures_as_losses: bool = True

    def __post_init__(self) -> None:
        if self.runs_per_target < 1:
            raise ConfigError(f"runs_per_target must be >= 1, got {self.runs_per_target}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.max_turns < 1:
            raise ConfigError(f"max_turns must be >= 1, got {self.max_turns}")
        for spec, kinds, role in (
            (self.seeker, SEEKER_KINDS, "seeker"),
            (self.oracle, ORACLE_KINDS, "oracle"),
            (self.pruner, PRUNER_KINDS, "pruner"),
        ):
            if spec.kind not in kinds:
                raise ConfigError(f"unknown {role} kind {spec.kind!r}; expected one of {kinds}")
            if spec.kind == "llm" and spec.endpoint is None:
                raise ConfigError(f"{role} kind 'llm' needs an endpoint")

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "dataset_path": self.dataset_path,
            "runs_per_target": self.runs_per_target,
            "max_turns": self.max_turns,
            "observability": self.observability.value,
            "seeker": self.seeker.to_dict(),
            "oracle": self.oracle.to_dict(),
            "pruner": self.pruner.to_dict(),
            "reasoning_enabled": self.reasoning_enabled,
            "base_seed": self.base_seed,
            "parallelism": self.parallelism,
            "output_dir": self.output_dir,
            "label": self.label,
            "audit": self.audit,
            "count_failures_as_losses": self.count_failures_as_losses,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperimentConfig:
        version = d.get("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version!r}")
        if "dataset_path" not in d:
            raise ConfigError("config needs dataset_path")
        try:
            observability = Observability(d.get("observability", "fo"))
        except ValueError:
            raise ConfigError(f"observability must be 'fo' or 'po', got {d['observability']!r}") from None
        try:
            return cls(
                dataset_path=d["dataset_path"],
                runs_per_target=int(d.get("runs_per_target", 3)),
                max_turns=int(d.get("max_turns", 30)),
                observability=observability,
                seeker=AgentSpec.from_dict(d.get("seeker", {"kind": "greedy"})),
                oracle=AgentSpec.from_dict(d.get("oracle", {"kind": "rule"})),
                pruner=AgentSpec.from_dict(d.get("pruner", {"kind": "rule"})),
                reasoning_enabled=bool(d.get("reasoning_enabled", False)),
                base_seed=int(d.get("base_seed", 0)),
                parallelism=int(d.get("parallelism", 1)),
                output_dir=d.get("output_dir"),
                label=d.get("label"),
                audit=bool(d.get("audit", False)),
                count_failures_as_losses=bool(d.get("count_failures_as_losses", True)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    manifest: DatasetManifest
    per_game: tuple[str, ...]
    aggregate: AggregateMetrics
    timeline: tuple[TimelinePoint, ...]
    fault_summary: dict[str, int]
    failure_count: int
    transcripts: tuple[GameTranscript, ...] = field(default=(), compare=False, repr=False)


def derived_seed(base_seed: int, target: NodeId, run: int) -> int:
    """Stable per-game seed; independent of target enumeration order."""
    digest = hashlib.sha256(f"{base_seed}|{target}|{run}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_agents(cfg: ExperimentConfig) -> tuple[Seeker, Oracle, Pruner]:
    """Instantiate the three roles; one instance each is shared by all games."""

    def endpoint_for(spec: AgentSpec) -> EndpointConfig:
        assert spec.endpoint is not None  # enforced in ExperimentConfig
        return replace(spec.endpoint, reasoning_enabled=cfg.reasoning_enabled)

    seeker: Seeker
    if cfg.seeker.kind == "greedy":
        seeker = GreedyHalvingSeeker()
    elif cfg.seeker.kind == "random":
        seeker = RandomSeeker()
    else:
        seeker = LLMSeeker(endpoint_for(cfg.seeker))
    oracle: Oracle = RuleOracle() if cfg.oracle.kind == "rule" else LLMOracle(endpoint_for(cfg.oracle))
    pruner: Pruner = RulePruner() if cfg.pruner.kind == "rule" else LLMPruner(endpoint_for(cfg.pruner))
    return seeker, oracle, pruner


def transcript_filename(target: NodeId, run: int) -> str:
    return f"{str(target).replace(':', '-')}_run{run}.jsonl"


def run_experiment(
    cfg: ExperimentConfig,
    progress: Callable[[GameTranscript], None] | None = None,
) -> ExperimentReport:
    records, manifest = load_dataset(cfg.dataset_path)
    base_graph = build_graph(records)
    seeker, oracle, pruner = build_agents(cfg)
    targets = sorted(base_graph.city_leaves, key=lambda i: i.numeric_id)
    jobs = [(target, run) for target in targets for run in range(1, cfg.runs_per_target + 1)]

    transcripts_dir: Path | None = None
    if cfg.output_dir is not None:
        transcripts_dir = Path(cfg.output_dir) / "transcripts"
        transcripts_dir.mkdir(parents=True, exist_ok=True)

    def one_game(target: NodeId, run: int) -> GameTranscript:
        game_cfg = GameConfig(
            target=target,
            max_turns=cfg.max_turns,
            observability=cfg.observability,
            rng_seed=derived_seed(cfg.base_seed, target, run),
            audit=cfg.audit,
        )
        transcript = play_game(seeker, oracle, pruner, base_graph.fresh_copy(), game_cfg)
        if transcripts_dir is not None:
            save_transcript(transcript, transcripts_dir / transcript_filename(target, run))
        return transcript

    transcripts: list[GameTranscript] = []
    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        for transcript in pool.map(lambda job: one_game(*job), jobs):
            transcripts.append(transcript)
            if progress is not None:
                progress(transcript)

    per_game = tuple(
        str(transcripts_dir / transcript_filename(t, r)) if transcripts_dir is not None
        else transcript_filename(t, r)
        for t, r in jobs
    )
    failure_count = sum(1 for t in transcripts if t.outcome == OUTCOME_AGENT_FAILURE)
    counted = (
        transcripts
        if cfg.count_failures_as_losses
        else [t for t in transcripts if t.outcome != OUTCOME_AGENT_FAILURE]
    )
    games = [t.game_metrics for t in counted]
    fault_summary: Counter[str] = Counter()
    for transcript in transcripts:
        for turn in transcript.turns:
            for fault in turn.consistency_faults:
                fault_summary[fault.split(":", 1)[0]] += 1

    report = ExperimentReport(
        config=cfg,
        manifest=manifest,
        per_game=per_game,
        aggregate=aggregate(games),
        timeline=tuple(ig_timeline(games, cfg.max_turns)),
        fault_summary=dict(sorted(fault_summary.items())),
        failure_count=failure_count,
        transcripts=tuple(transcripts),
    )
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        (out / "config.json").write_text(
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        save_report(report, out / "report.json")
        (out / "timeline.csv").write_text(export_timeline(report), encoding="utf-8")
    return report


def _mean_se_dict(value: MeanSE) -> dict[str, float]:
    return {"mean": value.mean, "se": value.se}


def report_to_dict(report: ExperimentReport) -> dict[str, Any]:
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "config": report.config.to_dict(),
        "manifest": {
            "source": report.manifest.source,
            "record_count": report.manifest.record_count,
            "content_hash": report.manifest.content_hash,
            "top_n": report.manifest.top_n,
        },
        "per_game": list(report.per_game),
        "n_games": report.aggregate.n_games,
        "aggregate": {
            "win_rate": _mean_se_dict(report.aggregate.win_rate),
            "avg_turns": _mean_se_dict(report.aggregate.avg_turns),
            "ig_per_turn": _mean_se_dict(report.aggregate.ig_per_turn),
            "total_ig": _mean_se_dict(report.aggregate.total_ig),
        },
        "timeline": [
            {"turn_index": p.turn_index, "mean_ig": p.mean_ig, "n_games": p.n_games}
            for p in report.timeline
        ],
        "fault_summary": report.fault_summary,
        "failure_count": report.failure_count,
    }


def save_report(report: ExperimentReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_report(path: str | Path) -> ExperimentReport:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        config = ExperimentConfig.from_dict(raw["config"])
        manifest = DatasetManifest(**raw["manifest"])
        agg = raw["aggregate"]
        aggregate_metrics = AggregateMetrics(
            n_games=int(raw["n_games"]),
            win_rate=MeanSE(**agg["win_rate"]),
            avg_turns=MeanSE(**agg["avg_turns"]),
            ig_per_turn=MeanSE(**agg["ig_per_turn"]),
            total_ig=MeanSE(**agg["total_ig"]),
        )
        timeline = tuple(
            TimelinePoint(int(p["turn_index"]), p["mean_ig"], int(p["n_games"]))
            for p in raw["timeline"]
        )
        return ExperimentReport(
            config=config,
            manifest=manifest,
            per_game=tuple(raw["per_game"]),
            aggregate=aggregate_metrics,
            timeline=timeline,
            fault_summary=dict(raw["fault_summary"]),
            failure_count=int(raw["failure_count"]),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad report file ({exc})") from exc


def _row_label(cfg: ExperimentConfig) -> str:
    if cfg.label:
        return cfg.label
    if cfg.seeker.kind == "llm" and cfg.seeker.endpoint is not None:
        return cfg.seeker.endpoint.model_name
    return cfg.seeker.kind


TABLE_COLUMNS = ("Model", "Obs.", "CoT", "Win Rate", "Avg Turns", "IG/Turn", "Total IG")


def render_results_table(reports: list[ExperimentReport]) -> str:
    """Plain-text results table, one row per report, metrics as mean ± SE."""
    rows = []
    for report in reports:
        cfg = report.config
        agg = report.aggregate
        rows.append(
            (
                _row_label(cfg),
                cfg.observability.value.upper(),
                "Yes" if cfg.reasoning_enabled else "No",
                str(agg.win_rate),
                str(agg.avg_turns),
                str(agg.ig_per_turn),
                str(agg.total_ig),
            )
        )
    widths = [
        max(len(TABLE_COLUMNS[i]), *(len(r[i]) for r in rows)) if rows else len(TABLE_COLUMNS[i])
        for i in range(len(TABLE_COLUMNS))
    ]
    def fmt(row: tuple[str, ...]) -> str:
        return " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()

    lines = [fmt(TABLE_COLUMNS), "-+-".join("-" * w for w in widths)]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"


def export_timeline(report: ExperimentReport, path: str | Path | None = None) -> str:
    """Timeline as CSV text (turn_index, mean_ig, n_games); optionally written."""
    lines = ["turn_index,mean_ig,n_games"]
    for point in report.timeline:
        mean = "" if point.mean_ig is None else repr(point.mean_ig)
        lines.append(f"{point.turn_index},{mean},{point.n_games}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
