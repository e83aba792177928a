"""Evaluation metrics: execution accuracy, R-VES, Soft F1, and pass@k.

All three headline metrics execute predicted and gold SQL against the
source databases. Scores are reported per difficulty tier and in total, as
percentages with two decimals, alongside the comparison mode that produced
them (the strict/row-set discrepancy is surfaced, never hidden).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .dataset import database_path
from .errors import GoldExecutionFailed, KTooLarge, QueryTimeout
from .executor import (
    DEFAULT_TIMEOUT,
    ExecutionOutcome,
    ResultTable,
    canonicalize,
    compare_ex,
    execute,
    time_query,
)

logger = logging.getLogger(__name__)

TIERS = ("simple", "moderate", "challenging")
DEFAULT_TIMING_REPEATS = 3
DEFAULT_TIMING_OUTER = 3
_MIN_DURATION = 1e-9


@dataclass(frozen=True)
class EvalItem:
    task_id: str
    difficulty: str
    pred_sql: str
    gold_sql: str
    database_id: str

    def __post_init__(self) -> None:
        if self.difficulty not in TIERS:
            raise ValueError(f"difficulty must be one of {TIERS}, got {self.difficulty!r}")


@dataclass(frozen=True)
class SoftF1Counts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class SoftF1Result:
    precision: float
    recall: float
    f1: float
    counts: SoftF1Counts


def _row_multisets(table: ResultTable) -> tuple[list[Counter], int]:
    canonical = canonicalize(table, order_sensitive=False)
    return [Counter(row) for row in canonical.rows], canonical.n_columns


def _greedy_pairs(overlaps: list[tuple[int, int, int]], n_pred: int, n_gold: int):
    """Largest overlap first, ties by row order; each row used at most once."""
    taken_pred: set[int] = set()
    taken_gold: set[int] = set()
    for overlap, pi, gi in sorted(overlaps, key=lambda t: (-t[0], t[1], t[2])):
        if pi in taken_pred or gi in taken_gold:
            continue
        taken_pred.add(pi)
        taken_gold.add(gi)
        yield overlap, pi, gi


def _exact_pairs(overlaps: list[tuple[int, int, int]], n_pred: int, n_gold: int):
    """Maximum-overlap assignment via the Hungarian method (audit mode)."""
    import numpy as np
    from scipy.optimize import linear_sum_assignment

    cost = np.zeros((n_pred, n_gold))
    for overlap, pi, gi in overlaps:
        cost[pi, gi] = -overlap
    rows, cols = linear_sum_assignment(cost)
    for pi, gi in zip(rows, cols):
        overlap = int(-cost[pi, gi])
        if overlap > 0:
            yield overlap, int(pi), int(gi)


def soft_f1(
    pred_table: ResultTable, gold_table: ResultTable, pairing: str = "greedy"
) -> SoftF1Result:
    """Cell-level F1 between two result tables.

    Rows are canonicalized and paired with their best-matching counterpart
    by cell-multiset overlap; matched cells count as true positives,
    leftover predicted cells as false positives, leftover gold cells as
    false negatives. Insensitive to row and column order; any 0/0 is 0.
    """
    if pairing not in ("greedy", "exact"):
        raise ValueError(f"unknown pairing {pairing!r}")
    pred_rows, pred_width = _row_multisets(pred_table)
    gold_rows, gold_width = _row_multisets(gold_table)
    overlaps = []
    for pi, pred_row in enumerate(pred_rows):
        for gi, gold_row in enumerate(gold_rows):
            overlap = sum((pred_row & gold_row).values())
            if overlap > 0:
                overlaps.append((overlap, pi, gi))
    pair_fn = _greedy_pairs if pairing == "greedy" else _exact_pairs
    tp = fp = fn = 0
    matched_pred: set[int] = set()
    matched_gold: set[int] = set()
    for overlap, pi, gi in pair_fn(overlaps, len(pred_rows), len(gold_rows)):
        tp += overlap
        fp += pred_width - overlap
        fn += gold_width - overlap
        matched_pred.add(pi)
        matched_gold.add(gi)
    fp += pred_width * (len(pred_rows) - len(matched_pred))
    fn += gold_width * (len(gold_rows) - len(matched_gold))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return SoftF1Result(precision, recall, f1, SoftF1Counts(tp, fp, fn))


@dataclass
class TierBreakdown:
    """Per-tier and total values (percentages) with the item counts behind them."""

    values: dict[str, float]
    counts: dict[str, int]


def _tier_means(per_item: list[tuple[str, float]]) -> TierBreakdown:
    values: dict[str, float] = {}
    counts: dict[str, int] = {}
    for tier in TIERS:
        scores = [score for difficulty, score in per_item if difficulty == tier]
        counts[tier] = len(scores)
        values[tier] = round(100.0 * sum(scores) / len(scores), 2) if scores else 0.0
    all_scores = [score for _d, score in per_item]
    counts["total"] = len(all_scores)
    values["total"] = round(100.0 * sum(all_scores) / len(all_scores), 2) if all_scores else 0.0
    return TierBreakdown(values=values, counts=counts)


@dataclass
class _ScoredItem:
    item: EvalItem
    ex: int
    f1: float
    pred_outcome: ExecutionOutcome
    gold_outcome: ExecutionOutcome


def _score_items(
    items: Sequence[EvalItem],
    db_root: str | Path,
    mode: str,
    timeout: float,
) -> list[_ScoredItem]:
    scored = []
    for item in items:
        db = database_path(db_root, item.database_id)
        gold_outcome = execute(db, item.gold_sql, timeout=timeout)
        if not gold_outcome.is_success or gold_outcome.table is None:
            raise GoldExecutionFailed(
                f"gold SQL for {item.task_id} failed: {gold_outcome.error}"
            )
        pred_outcome = execute(db, item.pred_sql, timeout=timeout)
        ex = compare_ex(pred_outcome, gold_outcome, mode=mode)
        if pred_outcome.is_success and pred_outcome.table is not None:
            f1 = soft_f1(pred_outcome.table, gold_outcome.table).f1
        else:
            f1 = 0.0
        scored.append(_ScoredItem(item, ex, f1, pred_outcome, gold_outcome))
    return scored


def execution_accuracy(
    items: Sequence[EvalItem],
    db_root: str | Path,
    mode: str = "row_set",
    timeout: float = DEFAULT_TIMEOUT,
) -> TierBreakdown:
    """Mean binary execution-accuracy per tier and overall, in percent."""
    if not items:
        raise ValueError("no items to score")
    scored = _score_items(items, db_root, mode, timeout)
    return _tier_means([(s.item.difficulty, float(s.ex)) for s in scored])


def soft_f1_accuracy(
    items: Sequence[EvalItem],
    db_root: str | Path,
    mode: str = "row_set",
    timeout: float = DEFAULT_TIMEOUT,
) -> TierBreakdown:
    """Mean per-item Soft F1 per tier and overall, in percent."""
    if not items:
        raise ValueError("no items to score")
    scored = _score_items(items, db_root, mode, timeout)
    return _tier_means([(s.item.difficulty, s.f1) for s in scored])


def timing_reward(t_pred: float, t_gold: float) -> float:
    """1 when the prediction is faster, else 2/(1 + time ratio)."""
    t_pred = max(t_pred, _MIN_DURATION)
    t_gold = max(t_gold, _MIN_DURATION)
    if t_pred < t_gold:
        return 1.0
    return 2.0 / (1.0 + t_pred / t_gold)


def _single_rves_run(
    passing: list[EvalItem],
    all_items: Sequence[EvalItem],
    db_root: str | Path,
    repeats: int,
    timeout: float,
    denominator: str,
) -> TierBreakdown:
    rewards: list[tuple[str, float]] = []
    for item in passing:
        db = database_path(db_root, item.database_id)
        try:
            t_pred = min(time_query(db, item.pred_sql, repeats=repeats, timeout=timeout))
            t_gold = min(time_query(db, item.gold_sql, repeats=repeats, timeout=timeout))
        except QueryTimeout:
            continue  # timing-invalid: excluded from N_valid entirely
        rewards.append((item.difficulty, timing_reward(t_pred, t_gold)))
    if denominator == "valid":
        return _tier_means(rewards)
    # Alternative leaderboard-style denominator: every item counts, non-rewarded as 0.
    rewarded_per_tier = Counter(difficulty for difficulty, _ in rewards)
    zero_padded = list(rewards)
    total_per_tier = Counter(item.difficulty for item in all_items)
    for tier in TIERS:
        for _ in range(total_per_tier[tier] - rewarded_per_tier[tier]):
            zero_padded.append((tier, 0.0))
    return _tier_means(zero_padded)


def r_ves(
    items: Sequence[EvalItem],
    db_root: str | Path,
    repeats: int = DEFAULT_TIMING_REPEATS,
    timeout: float = DEFAULT_TIMEOUT,
    mode: str = "row_set",
    outer: int = DEFAULT_TIMING_OUTER,
    denominator: str = "valid",
) -> TierBreakdown:
    """Reward-based valid efficiency score.

    Only items passing EX are rewarded; per item, T is the minimum of
    ``repeats`` timed runs for both queries. The whole evaluation repeats
    ``outer`` times and the run with the highest total is reported.
    ``denominator="all"`` divides by every item instead of only valid ones.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if outer < 1:
        raise ValueError("outer must be >= 1")
    if denominator not in ("valid", "all"):
        raise ValueError(f"unknown denominator {denominator!r}")
    scored = _score_items(items, db_root, mode, timeout)
    passing = [s.item for s in scored if s.ex == 1]
    best: TierBreakdown | None = None
    for _ in range(outer):
        run = _single_rves_run(passing, items, db_root, repeats, timeout, denominator)
        if best is None or run.values["total"] > best.values["total"]:
            best = run
    assert best is not None
    return best


def pass_at_k(
    judged_pools: Sequence[tuple[str, Sequence[bool]]], k: int
) -> dict[str, float]:
    """Fraction of tasks whose first k candidates include a correct one.

    ``judged_pools`` holds (difficulty, correctness flags in birth order)
    per task. Returns percentages per tier plus "total".
    """
    if not judged_pools:
        raise ValueError("no pools to score")
    if k < 1 or any(k > len(flags) for _d, flags in judged_pools):
        raise KTooLarge(f"k={k} outside [1, smallest pool size]")
    per_item = [
        (difficulty, 1.0 if any(flags[:k]) else 0.0) for difficulty, flags in judged_pools
    ]
    return _tier_means(per_item).values


@dataclass
class MetricsReport:
    """Per-tier metric table plus the configuration that produced it."""

    counts: dict[str, int]
    ex: dict[str, float]
    soft_f1: dict[str, float]
    r_ves: dict[str, float] | None
    comparison_mode: str
    timing: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "counts": self.counts,
            "ex": self.ex,
            "soft_f1": self.soft_f1,
            "r_ves": self.r_ves,
            "comparison_mode": self.comparison_mode,
            "timing": self.timing,
            "notes": self.notes,
        }

    def to_markdown(self) -> str:
        columns = ["Simple", "Moderate", "Challenging", "Total"]
        keys = [*TIERS, "total"]
        lines = [
            f"Comparison mode: **{self.comparison_mode}**"
            " (strict = row/column order must match; row_set = order-insensitive)",
            "",
            "| Metric | " + " | ".join(columns) + " |",
            "|" + "---|" * (len(columns) + 1),
            "| Count | " + " | ".join(str(self.counts.get(key, 0)) for key in keys) + " |",
            "| EX | " + " | ".join(f"{self.ex.get(key, 0.0):.2f}" for key in keys) + " |",
            "| Soft F1 | "
            + " | ".join(f"{self.soft_f1.get(key, 0.0):.2f}" for key in keys)
            + " |",
        ]
        if self.r_ves is not None:
            lines.append(
                "| R-VES | "
                + " | ".join(f"{self.r_ves.get(key, 0.0):.2f}" for key in keys)
                + " |"
            )
        for note in self.notes:
            lines.append(f"\n> {note}")
        return "\n".join(lines) + "\n"


def evaluate_items(
    items: Sequence[EvalItem],
    db_root: str | Path,
    mode: str = "row_set",
    timeout: float = DEFAULT_TIMEOUT,
    timing_repeats: int = DEFAULT_TIMING_REPEATS,
    timing_outer: int = DEFAULT_TIMING_OUTER,
    with_timing: bool = True,
    denominator: str = "valid",
) -> MetricsReport:
    """Score EX and Soft F1 (and optionally R-VES) in a single pass."""
    if not items:
        raise ValueError("no items to score")
    scored = _score_items(items, db_root, mode, timeout)
    ex = _tier_means([(s.item.difficulty, float(s.ex)) for s in scored])
    f1 = _tier_means([(s.item.difficulty, s.f1) for s in scored])
    rves_values = None
    timing: dict = {}
    if with_timing:
        rves = r_ves(
            items,
            db_root,
            repeats=timing_repeats,
            timeout=timeout,
            mode=mode,
            outer=timing_outer,
            denominator=denominator,
        )
        rves_values = rves.values
        timing = {
            "repeats": timing_repeats,
            "outer": timing_outer,
            "timeout": timeout,
            "denominator": denominator,
        }
    return MetricsReport(
        counts=ex.counts,
        ex=ex.values,
        soft_f1=f1.values,
        r_ves=rves_values,
        comparison_mode=mode,
        timing=timing,
        notes=[
            "EX compared with mode="
            + mode
            + "; the strict appendix-style comparison is available via mode=strict."
        ],
    )
