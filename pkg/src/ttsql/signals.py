"""Training-signal math as pure functions: rewards, clipped surrogate, samples.

Nothing here updates weights. The functions compute the execution-grounded
generation reward, the binary selection reward, the clipped-surrogate and
KL-penalized objectives over pre-computed likelihood ratios and advantages,
and the paired training samples an external selector trainer consumes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import GoldExecutionFailed
from .executor import DEFAULT_TIMEOUT, ExecutionOutcome, compare_ex, execute
from .generation import CandidatePool, GenerationTask
from .selection import group_candidates

EXECUTABLE_REWARD = 0.1
DEFAULT_PAIR_CAP = 4


@dataclass(frozen=True)
class GrpoBatch:
    """One batch of rollout statistics: likelihood ratios and advantages."""

    ratios: tuple[float, ...]
    advantages: tuple[float, ...]
    epsilon: float
    beta: float = 0.0
    kl_divergence: float = 0.0

    def __post_init__(self) -> None:
        if len(self.ratios) != len(self.advantages):
            raise ValueError(
                f"{len(self.ratios)} ratios vs {len(self.advantages)} advantages"
            )
        if not self.ratios:
            raise ValueError("batch must contain at least one sample")
        for r in self.ratios:
            if not math.isfinite(r) or r <= 0:
                raise ValueError(f"likelihood ratios must be finite and > 0, got {r}")
        for a in self.advantages:
            if not math.isfinite(a):
                raise ValueError(f"advantages must be finite, got {a}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.kl_divergence < 0:
            raise ValueError(f"kl_divergence must be >= 0, got {self.kl_divergence}")


def grpo_surrogate(batch: GrpoBatch) -> float:
    """Mean over samples of min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    total = 0.0
    for r, a in zip(batch.ratios, batch.advantages):
        clipped = min(max(r, 1.0 - batch.epsilon), 1.0 + batch.epsilon)
        total += min(r * a, clipped * a)
    return total / len(batch.ratios)


def grpo_objective(batch: GrpoBatch) -> float:
    """Surrogate minus the KL penalty."""
    return grpo_surrogate(batch) - batch.beta * batch.kl_divergence


def reward_generation(
    candidate_outcome: ExecutionOutcome,
    gold_outcome: ExecutionOutcome,
    mode: str = "row_set",
) -> float:
    """1.0 on a result match, 0.1 for merely executable SQL, else 0.0."""
    if compare_ex(candidate_outcome, gold_outcome, mode=mode) == 1:
        return 1.0
    if candidate_outcome.is_success:
        return EXECUTABLE_REWARD
    return 0.0


def reward_selection(
    chosen_outcome: ExecutionOutcome,
    gold_outcome: ExecutionOutcome,
    mode: str = "row_set",
) -> float:
    """1.0 when the chosen candidate's result matches gold, else 0.0."""
    if not gold_outcome.is_success:
        raise GoldExecutionFailed(gold_outcome.error or "gold execution failed")
    if not chosen_outcome.is_success:
        return 0.0
    return float(compare_ex(chosen_outcome, gold_outcome, mode=mode))


@dataclass(frozen=True)
class SelectionSample:
    """One A/B training pair for the selector; exactly one side matches gold."""

    task_id: str
    question: str
    schema_light: str
    sql_a: str
    result_a: str
    sql_b: str
    result_b: str
    correct_label: str  # "A" | "B"

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "question": self.question,
            "schema_light": self.schema_light,
            "sql_a": self.sql_a,
            "result_a": self.result_a,
            "sql_b": self.sql_b,
            "result_b": self.result_b,
            "correct_label": self.correct_label,
        }


def _task_rng(seed: int, task_id: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{task_id}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def build_selection_samples(
    entries: Sequence[tuple[GenerationTask, CandidatePool, dict[int, ExecutionOutcome], str]],
    db_paths: Mapping[str, str | Path],
    mode: str = "row_set",
    seed: int = 0,
    per_task_cap: int = DEFAULT_PAIR_CAP,
    timeout: float = DEFAULT_TIMEOUT,
) -> tuple[list[SelectionSample], list[tuple[str, str]]]:
    """Pair correct and incorrect group representatives per task.

    ``entries`` are (task, executed pool, outcomes, gold sql). Tasks with no
    correct candidate or no incorrect candidate are skipped and reported in
    the second return value as (task_id, reason).
    """
    samples: list[SelectionSample] = []
    skipped: list[tuple[str, str]] = []
    for task, pool, outcomes, gold_sql in entries:
        gold_outcome = execute(db_paths[task.database_id], gold_sql, timeout=timeout)
        if not gold_outcome.is_success:
            raise GoldExecutionFailed(f"gold SQL for task {task.task_id}: {gold_outcome.error}")
        groups = group_candidates(pool, outcomes)
        correct = []
        incorrect = []
        for group in groups:
            if group.fallback:
                continue
            rep_outcome = outcomes[group.representative_id]
            if compare_ex(rep_outcome, gold_outcome, mode=mode) == 1:
                correct.append(group)
            else:
                incorrect.append(group)
        if not correct:
            skipped.append((task.task_id, "no correct candidate"))
            continue
        if not incorrect:
            skipped.append((task.task_id, "no incorrect candidate"))
            continue
        rng = _task_rng(seed, task.task_id)
        count = 0
        for good in correct:
            for bad in incorrect:
                if count >= per_task_cap:
                    break
                correct_first = rng.random() < 0.5
                first, second = (good, bad) if correct_first else (bad, good)
                samples.append(
                    SelectionSample(
                        task_id=task.task_id,
                        question=task.question,
                        schema_light=task.schema_light.text,
                        sql_a=first.representative_sql,
                        result_a=first.result_preview,
                        sql_b=second.representative_sql,
                        result_b=second.result_preview,
                        correct_label="A" if correct_first else "B",
                    )
                )
                count += 1
            if count >= per_task_cap:
                break
    return samples, skipped


def write_selection_samples(samples: Sequence[SelectionSample], path: str | Path) -> None:
    """Emit samples as JSONL for external trainers."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_json(), ensure_ascii=False) + "\n")


def write_candidate_rewards(
    path: str | Path,
    task_id: str,
    pool: CandidatePool,
    outcomes: dict[int, ExecutionOutcome],
    gold_outcome: ExecutionOutcome,
    mode: str = "row_set",
) -> None:
    """Per-candidate generation rewards as CSV for offline analysis."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["task_id", "candidate_id", "origin", "prompt_style", "status", "reward"]
        )
        for candidate in pool:
            outcome = outcomes[candidate.candidate_id]
            reward = reward_generation(outcome, gold_outcome, mode=mode)
            writer.writerow(
                [
                    task_id,
                    candidate.candidate_id,
                    candidate.origin,
                    candidate.prompt_style,
                    outcome.status,
                    reward,
                ]
            )
