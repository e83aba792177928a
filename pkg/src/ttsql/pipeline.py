"""End-to-end orchestration: index building, benchmark runs, ablation, eval.

A benchmark run processes tasks through understanding, generation,
refinement, and selection, writing one atomic JSON trace per task. Traces
make runs resumable (complete tasks are skipped) and auditable (every
gateway call is recorded, which is how ablation containment is verified).
The per-task work is a pure function of (task, config, backends), so any
worker count produces byte-identical predictions.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import yaml

from . import catalog, dataset, metrics, refinement, retrieval, selection
from .dataset import Task, database_path, databases_root, ingest_dataset
from .errors import AllVariantsFailed, ConfigError, TtsqlError
from .gateway import Backend, EndpointSpec, Gateway, HttpBackend, Profile, TraceSink
from .generation import (
    CandidatePool,
    GenerationTask,
    IclVariant,
    assemble_pool,
    default_icl_variants,
    generate_icl,
    generate_reasoning,
)
from .metrics import EvalItem, MetricsReport, evaluate_items
from .retrieval import (
    Embedder,
    TrigramEmbedder,
    UnderstandingContext,
    VectorIndex,
    build_cell_index,
    build_example_index,
    build_understanding,
)

logger = logging.getLogger(__name__)

ABLATION_SWITCHES = (
    "understanding",
    "reasoning_gen",
    "icl_gen",
    "refinement",
    "selection_scaling",
)

_PROFILE_FIELDS = tuple(p.value for p in Profile)


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from arbitrary parts (never Python's salted hash)."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass
class RunConfig:
    """Everything one benchmark run depends on; loadable from a YAML file."""

    dataset_root: str
    run_dir: str
    split: str = "dev"
    index_dir: str | None = None  # defaults to <dataset_root>/index
    endpoints: dict[str, EndpointSpec] = field(default_factory=dict)
    profiles: dict[str, str] = field(default_factory=dict)  # profile -> endpoint name
    secondary_icl_backend: str | None = None
    icl_variants: list[IclVariant] | None = None  # None uses the default grid
    reasoning_samples: int = 8
    reasoning_temperature: float = 1.0
    refinement_rounds: int = 2
    selection_mode: str = "tournament"  # "tournament" | "majority"
    double_round_robin: bool = False  # judge each pair in both presentation orders
    comparison_mode: str = "row_set"  # "row_set" | "strict"
    seed: int = 0
    workers: int = 1
    execution_timeout: float = 30.0
    k_cells: int = retrieval.DEFAULT_K_CELLS
    k_examples: int = retrieval.DEFAULT_K_EXAMPLES
    cell_cap: int = catalog.DEFAULT_CELL_CAP
    sample_values: int = catalog.DEFAULT_SAMPLE_VALUES
    understanding_llm: bool = True
    disable: frozenset = frozenset()
    timing_in_run_report: bool = False

    def resolved_index_dir(self) -> Path:
        return Path(self.index_dir) if self.index_dir else Path(self.dataset_root) / "index"

    def is_disabled(self, switch: str) -> bool:
        return switch in self.disable

    @classmethod
    def from_yaml(cls, path: str | Path) -> "RunConfig":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        endpoints = {
            name: EndpointSpec(**spec) for name, spec in (raw.pop("endpoints", {}) or {}).items()
        }
        disable = frozenset(raw.pop("disable", []) or [])
        variants = raw.pop("icl_variants", None)
        icl_variants = (
            [IclVariant(**v) for v in variants] if variants is not None else None
        )
        return cls(endpoints=endpoints, disable=disable, icl_variants=icl_variants, **raw)

    def validate(self, backends: dict[str, Backend]) -> None:
        unknown = self.disable - set(ABLATION_SWITCHES)
        if unknown:
            raise ConfigError(f"unknown ablation switches: {sorted(unknown)}")
        if self.is_disabled("reasoning_gen") and self.is_disabled("icl_gen"):
            raise ConfigError("both generators disabled; nothing can produce candidates")
        if self.selection_mode not in ("tournament", "majority"):
            raise ConfigError(f"unknown selection mode {self.selection_mode!r}")
        if self.comparison_mode not in ("row_set", "strict"):
            raise ConfigError(f"unknown comparison mode {self.comparison_mode!r}")
        needed = set()
        if not self.is_disabled("understanding") and self.understanding_llm:
            needed.add(Profile.UNDERSTANDING)
        if not self.is_disabled("icl_gen"):
            needed.add(Profile.ICL_GENERATOR)
        if not self.is_disabled("reasoning_gen"):
            needed.add(Profile.REASONING_GENERATOR)
        if not self.is_disabled("refinement") and self.refinement_rounds > 0:
            needed.add(Profile.FIXER)
            needed.add(Profile.REVISER)
        if not self.is_disabled("selection_scaling") and self.selection_mode == "tournament":
            needed.add(Profile.SELECTOR)
        for profile in needed:
            endpoint = self.profiles.get(profile.value)
            if endpoint is None:
                raise ConfigError(f"profile {profile.value!r} has no endpoint mapping")
            if endpoint not in backends:
                raise ConfigError(
                    f"profile {profile.value!r} maps to unknown endpoint {endpoint!r}"
                )
        if self.secondary_icl_backend and self.secondary_icl_backend not in backends:
            raise ConfigError(
                f"secondary ICL backend {self.secondary_icl_backend!r} is not configured"
            )

    def profile_map(self) -> dict[Profile, str]:
        return {Profile(name): endpoint for name, endpoint in self.profiles.items()}


def build_http_backends(config: RunConfig) -> dict[str, Backend]:
    return {name: HttpBackend(name, spec) for name, spec in config.endpoints.items()}


# -- offline index building ---------------------------------------------------

def build_indexes(
    dataset_root: str | Path,
    split: str = "dev",
    index_dir: str | Path | None = None,
    train_split: str = "train",
    embedder: Embedder | None = None,
    cell_cap: int = catalog.DEFAULT_CELL_CAP,
    sample_values: int = catalog.DEFAULT_SAMPLE_VALUES,
) -> dict:
    """Build schema docs, per-database cell indexes, and the example index."""
    embedder = embedder or TrigramEmbedder()
    root = Path(dataset_root)
    out_dir = Path(index_dir) if index_dir else root / "index"
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = ingest_dataset(root, split)
    db_root = databases_root(root, split)
    summary: dict = {"databases": {}, "examples": 0, "index_dir": str(out_dir)}
    for db_id in sorted({t.database_id for t in tasks}):
        db_path = database_path(db_root, db_id)
        snapshot = catalog.introspect(db_path, sample_values_per_column=sample_values)
        ddl = catalog.render_ddl(snapshot)
        light = catalog.render_light(snapshot, cell_samples_per_column=sample_values)
        (out_dir / f"{db_id}.ddl.sql").write_text(ddl.text, encoding="utf-8")
        (out_dir / f"{db_id}.light.md").write_text(light.text, encoding="utf-8")
        cells = catalog.extract_text_cells(db_path, per_column_cap=cell_cap)
        if cells:
            index = build_cell_index(cells, embedder)
            index.save(out_dir / f"cells-{db_id}.npz")
        summary["databases"][db_id] = {"tables": len(snapshot.tables), "cells": len(cells)}
    train_path = root / f"{train_split}.json"
    if train_path.is_file():
        records = json.loads(train_path.read_text(encoding="utf-8"))
        items = [
            (r["question"], r["SQL"], r.get("db_id", ""))
            for r in records
            if r.get("question") and r.get("SQL")
        ]
        if items:
            build_example_index(items, embedder).save(out_dir / "examples.npz")
            summary["examples"] = len(items)
    return summary


# -- per-task resources --------------------------------------------------------

@dataclass
class DbResources:
    db_path: Path
    schema_ddl: catalog.SchemaDoc
    schema_light: catalog.SchemaDoc
    cell_index: VectorIndex | None


def _load_resources(
    config: RunConfig, db_ids: Sequence[str], embedder: Embedder
) -> tuple[dict[str, DbResources], VectorIndex | None]:
    db_root = databases_root(config.dataset_root, config.split)
    index_dir = config.resolved_index_dir()
    resources: dict[str, DbResources] = {}
    need_cells = not config.is_disabled("understanding")
    for db_id in sorted(set(db_ids)):
        db_path = database_path(db_root, db_id)
        snapshot = catalog.introspect(db_path, sample_values_per_column=config.sample_values)
        cell_index = None
        if need_cells:
            index_path = index_dir / f"cells-{db_id}.npz"
            if index_path.is_file():
                cell_index = VectorIndex.load(index_path)
            else:
                cells = catalog.extract_text_cells(db_path, per_column_cap=config.cell_cap)
                cell_index = build_cell_index(cells, embedder) if cells else None
        resources[db_id] = DbResources(
            db_path=db_path,
            schema_ddl=catalog.render_ddl(snapshot),
            schema_light=catalog.render_light(snapshot, config.sample_values),
            cell_index=cell_index,
        )
    example_index = None
    examples_path = index_dir / "examples.npz"
    if need_cells and examples_path.is_file():
        example_index = VectorIndex.load(examples_path)
    return resources, example_index


# -- per-task execution ---------------------------------------------------------

def _understanding_to_json(ctx: UnderstandingContext) -> dict:
    return {
        "keywords": list(ctx.keywords),
        "skeleton": ctx.skeleton,
        "cells": [
            [r.table, r.column, r.value, round(score, 6)] for r, score in ctx.retrieved_cells
        ],
        "examples": [
            [r.question, r.sql, round(score, 6)] for r, score in ctx.retrieved_examples
        ],
    }


def _pool_to_json(pool: CandidatePool, outcomes, order_sensitive: bool) -> list[dict]:
    from .executor import fingerprint

    rows = []
    for candidate in pool:
        outcome = outcomes.get(candidate.candidate_id)
        rows.append(
            {
                "candidate_id": candidate.candidate_id,
                "sql": candidate.sql,
                "origin": candidate.origin,
                "prompt_style": candidate.prompt_style,
                "temperature": candidate.temperature,
                "backend_id": candidate.backend_id,
                "lineage": list(candidate.lineage),
                "status": outcome.status if outcome else None,
                "fingerprint": fingerprint(outcome, order_sensitive).digest if outcome else None,
            }
        )
    return rows


def run_task(
    task: Task,
    config: RunConfig,
    backends: dict[str, Backend],
    resources: dict[str, DbResources],
    example_index: VectorIndex | None,
    embedder: Embedder | None = None,
) -> dict:
    """Run one task through every enabled stage and return its trace dict.

    Stage failures are recorded in the trace; the result always carries
    either a final SQL string or an explicit unanswered marker.
    """
    embedder = embedder or TrigramEmbedder()
    sink = TraceSink()
    gateway = Gateway(backends, config.profile_map(), sink)
    res = resources[task.database_id]
    order_sensitive = config.comparison_mode == "strict"
    t_seed = derive_seed(config.seed, task.task_id)
    timings: dict[str, float] = {}
    trace: dict = {
        "task_id": task.task_id,
        "index": task.index,
        "question": task.question,
        "evidence": task.evidence,
        "db_id": task.database_id,
        "difficulty": task.difficulty,
        "disable": sorted(config.disable),
        "final_sql": None,
        "unanswered": False,
        "error": None,
    }
    try:
        start = time.perf_counter()
        if config.is_disabled("understanding"):
            ctx = UnderstandingContext.empty()
        else:
            ctx = build_understanding(
                task.question,
                task.evidence,
                res.cell_index,
                example_index,
                embedder=embedder,
                gateway=gateway if config.understanding_llm else None,
                k_cells=config.k_cells,
                k_examples=config.k_examples,
                seed=t_seed,
            )
        timings["understanding"] = time.perf_counter() - start
        trace["understanding"] = None if config.is_disabled("understanding") else _understanding_to_json(ctx)

        gen_task = GenerationTask(
            task_id=task.task_id,
            question=task.question,
            evidence=task.evidence,
            database_id=task.database_id,
            understanding=ctx,
            schema_ddl=res.schema_ddl,
            schema_light=res.schema_light,
        )

        start = time.perf_counter()
        icl_candidates = []
        if not config.is_disabled("icl_gen"):
            variants = config.icl_variants or default_icl_variants(
                base_seed=t_seed, secondary_backend=config.secondary_icl_backend
            )
            try:
                icl_candidates = generate_icl(gen_task, variants, gateway)
            except AllVariantsFailed as exc:
                logger.warning("task %s: %s", task.task_id, exc)
        reasoning_candidates = []
        if not config.is_disabled("reasoning_gen"):
            try:
                reasoning_candidates = generate_reasoning(
                    gen_task,
                    n=config.reasoning_samples,
                    gateway=gateway,
                    temperature=config.reasoning_temperature,
                    base_seed=derive_seed(config.seed, task.task_id, "reasoning"),
                )
            except AllVariantsFailed as exc:
                logger.warning("task %s: %s", task.task_id, exc)
        timings["generation"] = time.perf_counter() - start

        pool = assemble_pool(icl_candidates, reasoning_candidates)

        start = time.perf_counter()
        if config.is_disabled("refinement") or config.refinement_rounds == 0:
            outcomes: dict = {}
            refinement.execute_pool(pool, res.db_path, outcomes, timeout=config.execution_timeout)
            rounds_log = []
        else:
            result = refinement.refine_pool(
                pool,
                res.db_path,
                rounds=config.refinement_rounds,
                gateway=gateway,
                task=gen_task,
                seed=derive_seed(config.seed, task.task_id, "refine"),
                timeout=config.execution_timeout,
                order_sensitive=order_sensitive,
            )
            outcomes = result.outcomes
            rounds_log = result.rounds
        timings["refinement"] = time.perf_counter() - start
        trace["rounds"] = [
            {
                "round_index": r.round_index,
                "repaired": [[old, child.candidate_id] for old, child in r.repaired],
                "revised": [[old, child.candidate_id] for old, child in r.revised],
                "pool_size_after": r.pool_size_after,
            }
            for r in rounds_log
        ]
        trace["pool"] = _pool_to_json(pool, outcomes, order_sensitive)

        start = time.perf_counter()
        groups = selection.group_candidates(pool, outcomes, order_sensitive)
        trace["groups"] = [
            {
                "fingerprint": g.fingerprint.digest,
                "member_ids": list(g.member_ids),
                "representative_id": g.representative_id,
                "fallback": g.fallback,
            }
            for g in groups
        ]
        use_tournament = (
            config.selection_mode == "tournament"
            and not config.is_disabled("selection_scaling")
        )
        if use_tournament:
            outcome = selection.run_tournament(
                groups,
                gen_task,
                gateway,
                seed=derive_seed(config.seed, task.task_id, "tourney"),
                double_round_robin=config.double_round_robin,
            )
            final_id = outcome.final_id
            trace["selection"] = {
                "mode": "tournament",
                "final_id": final_id,
                "scores": {str(k): v for k, v in outcome.scores.items()},
                "fallback": outcome.fallback,
                "matches": [
                    {
                        "left_id": m.left_id,
                        "right_id": m.right_id,
                        "presentation_order": list(m.presentation_order),
                        "winner_id": m.winner_id,
                        "flagged": m.flagged,
                    }
                    for m in outcome.matches
                ],
            }
        else:
            final_id = selection.majority_vote(groups)
            trace["selection"] = {
                "mode": "majority",
                "final_id": final_id,
                "fallback": any(g.fallback for g in groups),
            }
        timings["selection"] = time.perf_counter() - start
        trace["final_sql"] = pool.get(final_id).sql
    except TtsqlError as exc:
        logger.error("task %s unanswered: %s", task.task_id, exc)
        trace["unanswered"] = True
        trace["error"] = str(exc)
    trace["timings"] = timings
    trace["gateway_records"] = sink.records
    return trace


# -- benchmark runs --------------------------------------------------------------

@dataclass
class BenchmarkResult:
    predictions_path: Path
    traces_dir: Path
    report: MetricsReport | None
    tasks: list[Task]


def _trace_path(traces_dir: Path, task: Task) -> Path:
    return traces_dir / f"{task.index:05d}.json"


def _trace_complete(path: Path) -> bool:
    if not path.is_file():
        return False
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError):
        return False
    return "final_sql" in data and "unanswered" in data


def _write_trace(path: Path, trace: dict) -> None:
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(trace, ensure_ascii=False, indent=1), encoding="utf-8")
    os.replace(tmp, path)


def run_benchmark(
    config: RunConfig,
    backends: dict[str, Backend] | None = None,
    on_task_done: Callable[[Task], None] | None = None,
) -> BenchmarkResult:
    """Process every task (resuming from existing traces) and emit predictions.

    A report is attached when the split carries gold SQL. Partial failures
    leave unanswered traces; the run continues.
    """
    if backends is None:
        backends = build_http_backends(config)
    config.validate(backends)
    tasks = ingest_dataset(config.dataset_root, config.split)
    embedder = TrigramEmbedder()
    resources, example_index = _load_resources(
        config, [t.database_id for t in tasks], embedder
    )
    run_dir = Path(config.run_dir)
    traces_dir = run_dir / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)

    pending = [t for t in tasks if not _trace_complete(_trace_path(traces_dir, t))]
    logger.info(
        "run: %d tasks (%d already complete)", len(tasks), len(tasks) - len(pending)
    )

    def _process(task: Task) -> Task:
        trace = run_task(task, config, backends, resources, example_index, embedder)
        _write_trace(_trace_path(traces_dir, task), trace)
        return task

    if config.workers <= 1:
        for task in pending:
            _process(task)
            if on_task_done is not None:
                on_task_done(task)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            futures = {executor.submit(_process, task): task for task in pending}
            for future in as_completed(futures):
                done = future.result()
                if on_task_done is not None:
                    on_task_done(done)

    entries = []
    for task in tasks:
        trace = json.loads(_trace_path(traces_dir, task).read_text(encoding="utf-8"))
        entries.append((task.index, trace.get("final_sql") or "", task.database_id))
    predictions_path = run_dir / "predictions.json"
    dataset.write_predictions(predictions_path, entries)

    report = None
    if all(t.gold_sql for t in tasks):
        items = [
            EvalItem(
                task_id=t.task_id,
                difficulty=t.difficulty,
                pred_sql=entries[t.index][1],
                gold_sql=t.gold_sql or "",
                database_id=t.database_id,
            )
            for t in tasks
        ]
        report = evaluate_items(
            items,
            databases_root(config.dataset_root, config.split),
            mode=config.comparison_mode,
            timeout=config.execution_timeout,
            with_timing=config.timing_in_run_report,
        )
        (run_dir / "report.json").write_text(
            json.dumps(report.to_json(), indent=2), encoding="utf-8"
        )
        (run_dir / "report.md").write_text(report.to_markdown(), encoding="utf-8")
    return BenchmarkResult(
        predictions_path=predictions_path, traces_dir=traces_dir, report=report, tasks=tasks
    )


# -- ablation ---------------------------------------------------------------------

def run_ablation(
    config: RunConfig,
    backends: dict[str, Backend] | None = None,
    switches: Sequence[str] = ABLATION_SWITCHES,
) -> dict:
    """Baseline plus one run per disabled switch; Δ-total against baseline."""
    base_dir = Path(config.run_dir)
    baseline_config = dataclasses.replace(
        config, run_dir=str(base_dir / "baseline"), disable=frozenset()
    )
    baseline = run_benchmark(baseline_config, backends)
    if baseline.report is None:
        raise ConfigError("ablation requires a split with gold SQL")
    rows = [
        {
            "name": "baseline",
            **{tier: baseline.report.ex[tier] for tier in (*metrics.TIERS, "total")},
            "delta_total": 0.0,
        }
    ]
    reports = {"baseline": baseline.report}
    for switch in switches:
        variant_config = dataclasses.replace(
            config, run_dir=str(base_dir / f"wo_{switch}"), disable=frozenset({switch})
        )
        variant = run_benchmark(variant_config, backends)
        assert variant.report is not None
        reports[f"wo_{switch}"] = variant.report
        rows.append(
            {
                "name": f"wo_{switch}",
                **{tier: variant.report.ex[tier] for tier in (*metrics.TIERS, "total")},
                "delta_total": round(
                    variant.report.ex["total"] - baseline.report.ex["total"], 2
                ),
            }
        )
    summary = {"rows": rows}
    base_dir.mkdir(parents=True, exist_ok=True)
    (base_dir / "ablation.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    lines = [
        "| Variant | Simple | Moderate | Challenging | Total | ΔTotal |",
        "|---|---|---|---|---|---|",
    ]
    for row in rows:
        lines.append(
            f"| {row['name']} | {row['simple']:.2f} | {row['moderate']:.2f} "
            f"| {row['challenging']:.2f} | {row['total']:.2f} | {row['delta_total']:+.2f} |"
        )
    (base_dir / "ablation.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return summary


# -- evaluation of a predictions file ----------------------------------------------

def eval_predictions(
    dataset_root: str | Path,
    predictions_path: str | Path,
    split: str = "dev",
    mode: str = "row_set",
    timeout: float = 30.0,
    timing_repeats: int = metrics.DEFAULT_TIMING_REPEATS,
    timing_outer: int = metrics.DEFAULT_TIMING_OUTER,
    with_timing: bool = True,
) -> MetricsReport:
    """Score a BIRD-format predictions file against the split's gold SQL."""
    tasks = ingest_dataset(dataset_root, split)
    missing_gold = [t.task_id for t in tasks if not t.gold_sql]
    if missing_gold:
        raise ConfigError(f"split {split!r} lacks gold SQL for tasks {missing_gold[:5]}")
    predictions = dataset.read_predictions(predictions_path)
    items = []
    for task in tasks:
        pred_sql, _db = predictions.get(task.index, ("", ""))
        items.append(
            EvalItem(
                task_id=task.task_id,
                difficulty=task.difficulty,
                pred_sql=pred_sql,
                gold_sql=task.gold_sql or "",
                database_id=task.database_id,
            )
        )
    return evaluate_items(
        items,
        databases_root(dataset_root, split),
        mode=mode,
        timeout=timeout,
        timing_repeats=timing_repeats,
        timing_outer=timing_outer,
        with_timing=with_timing,
    )


def count_profile_calls(traces_dir: str | Path) -> dict[str, int]:
    """Aggregate gateway-call counts per profile over all traces in a run."""
    counts = {name: 0 for name in _PROFILE_FIELDS}
    for path in sorted(Path(traces_dir).glob("*.json")):
        trace = json.loads(path.read_text(encoding="utf-8"))
        for record in trace.get("gateway_records", []):
            profile = record.get("profile")
            if profile in counts:
                counts[profile] += 1
    return counts
