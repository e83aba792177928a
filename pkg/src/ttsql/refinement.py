"""Iterative pool refinement: conditional syntax repair plus group revision.

Each round executes whatever is new, routes compile failures through the
fixer, regroups everything by execution fingerprint, and sends one sampled
representative per group to the reviser. Parents are never removed, so the
pool only grows; the loop stops early once a round stops changing execution
results (every child fingerprints identically to its parent).
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BackendError, EmptyPool, SqlNotFound
from .executor import (
    DEFAULT_TIMEOUT,
    ExecutionOutcome,
    execute,
    fingerprint,
    preview_text,
)
from .gateway import ChatRequest, Gateway, Profile, parse_sql
from .generation import CandidatePool, CandidateSql, GenerationTask
from .prompts import render_prompt

logger = logging.getLogger(__name__)

DEFAULT_ROUNDS = 2
FIXER_TEMPERATURE = 0.2
REVISER_TEMPERATURE = 0.2
PREVIEW_ROWS = 20
PREVIEW_CHARS = 2000


@dataclass
class RefinementRound:
    round_index: int
    repaired: list[tuple[int, CandidateSql]] = field(default_factory=list)
    revised: list[tuple[int, CandidateSql]] = field(default_factory=list)
    pool_size_after: int = 0


@dataclass
class RefinementResult:
    pool: CandidatePool
    outcomes: dict[int, ExecutionOutcome]
    rounds: list[RefinementRound]
    early_stopped: bool = False


def execute_pool(
    pool: CandidatePool,
    db_path: str | Path,
    outcomes: dict[int, ExecutionOutcome],
    timeout: float = DEFAULT_TIMEOUT,
) -> None:
    """Execute every candidate that has no recorded outcome yet."""
    for candidate in pool:
        if candidate.candidate_id not in outcomes:
            outcomes[candidate.candidate_id] = execute(db_path, candidate.sql, timeout=timeout)


def fix_syntax(
    candidate: CandidateSql,
    error_message: str,
    schema_light: str,
    gateway: Gateway,
    question: str,
    seed: int = 0,
    step_id: str = "fix",
) -> CandidateSql | None:
    """One fixer call for a candidate whose last execution failed to compile.

    Returns the repaired candidate (lineage extended) or None when the fixer
    output is unusable, in which case the original simply stays in the pool.
    """
    messages = render_prompt(
        "fixer",
        {
            "question": question,
            "schema": schema_light,
            "sql": candidate.sql,
            "error": error_message,
        },
    )
    request = ChatRequest(
        profile=Profile.FIXER, messages=messages, temperature=FIXER_TEMPERATURE, seed=seed
    )
    try:
        response = gateway.complete(request)
        sql = parse_sql(response.text)
    except (BackendError, SqlNotFound) as exc:
        logger.warning("fixer failed for candidate %d: %s", candidate.candidate_id, exc)
        return None
    return CandidateSql(
        sql=sql,
        origin=candidate.origin,
        prompt_style=candidate.prompt_style,
        temperature=candidate.temperature,
        backend_id=response.backend_id,
        lineage=candidate.lineage + (step_id,),
    )


def _group_ids(
    pool: CandidatePool,
    outcomes: dict[int, ExecutionOutcome],
    order_sensitive: bool,
) -> list[list[int]]:
    """Group all executed candidates by fingerprint; deterministic group order."""
    groups: dict[str, list[int]] = {}
    for candidate in pool:
        digest = fingerprint(outcomes[candidate.candidate_id], order_sensitive).digest
        groups.setdefault(digest, []).append(candidate.candidate_id)
    return sorted(groups.values(), key=lambda ids: min(ids))


def revise_group_representatives(
    pool: CandidatePool,
    outcomes: dict[int, ExecutionOutcome],
    rng_seed: int,
    gateway: Gateway,
    task: GenerationTask,
    order_sensitive: bool = False,
    step_id: str = "revise",
) -> list[tuple[int, CandidateSql]]:
    """Sample one member per execution-result group and send it to the reviser.

    Parseable outputs are appended to the pool as new candidates (parents
    retained); a failing reviser call just skips its group.
    """
    rng = random.Random(rng_seed)
    revised: list[tuple[int, CandidateSql]] = []
    for i, member_ids in enumerate(_group_ids(pool, outcomes, order_sensitive)):
        rep_id = rng.choice(member_ids)
        parent = pool.get(rep_id)
        preview = preview_text(outcomes[rep_id], PREVIEW_ROWS, PREVIEW_CHARS)
        messages = render_prompt(
            "reviser",
            {
                "question": task.question,
                "evidence": task.evidence,
                "schema": task.schema_light.text,
                "sql": parent.sql,
                "result_preview": preview,
            },
        )
        request = ChatRequest(
            profile=Profile.REVISER,
            messages=messages,
            temperature=REVISER_TEMPERATURE,
            seed=rng_seed + i,
        )
        try:
            response = gateway.complete(request)
            sql = parse_sql(response.text)
        except (BackendError, SqlNotFound) as exc:
            logger.warning("reviser failed for group of candidate %d: %s", rep_id, exc)
            continue
        child = CandidateSql(
            sql=sql,
            origin=parent.origin,
            prompt_style=parent.prompt_style,
            temperature=parent.temperature,
            backend_id=response.backend_id,
            lineage=parent.lineage + (step_id,),
        )
        revised.append((rep_id, pool.append(child)))
    return revised


def refine_pool(
    pool: CandidatePool,
    db_path: str | Path,
    rounds: int,
    gateway: Gateway,
    task: GenerationTask,
    seed: int = 0,
    timeout: float = DEFAULT_TIMEOUT,
    order_sensitive: bool = False,
) -> RefinementResult:
    """Run up to ``rounds`` refinement rounds over the pool.

    Per round: execute new candidates, fix every compile failure, regroup,
    revise one representative per group. Stops early at a fixed point, i.e.
    when every candidate a round added fingerprints identically to its
    parent.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    if len(pool) == 0:
        raise EmptyPool("cannot refine an empty pool")
    outcomes: dict[int, ExecutionOutcome] = {}
    rounds_log: list[RefinementRound] = []
    early_stopped = False
    for round_index in range(rounds):
        execute_pool(pool, db_path, outcomes, timeout=timeout)
        record = RefinementRound(round_index=round_index)

        broken = [c for c in pool if outcomes[c.candidate_id].status == "syntax_error"]
        for k, parent in enumerate(broken):
            child = fix_syntax(
                parent,
                outcomes[parent.candidate_id].error or "",
                task.schema_light.text,
                gateway,
                question=task.question,
                seed=seed * 1000 + round_index * 100 + k,
                step_id=f"r{round_index}:fix",
            )
            if child is not None:
                record.repaired.append((parent.candidate_id, pool.append(child)))
        execute_pool(pool, db_path, outcomes, timeout=timeout)

        record.revised = revise_group_representatives(
            pool,
            outcomes,
            rng_seed=seed + round_index,
            gateway=gateway,
            task=task,
            order_sensitive=order_sensitive,
            step_id=f"r{round_index}:revise",
        )
        execute_pool(pool, db_path, outcomes, timeout=timeout)
        record.pool_size_after = len(pool)
        rounds_log.append(record)

        children = record.repaired + record.revised
        fixed_point = all(
            fingerprint(outcomes[parent_id], order_sensitive)
            == fingerprint(outcomes[child.candidate_id], order_sensitive)
            for parent_id, child in children
        )
        if fixed_point:
            early_stopped = round_index < rounds - 1
            break
    else:
        # Loop ran to completion (or rounds == 0): make sure everything executed.
        execute_pool(pool, db_path, outcomes, timeout=timeout)
    return RefinementResult(
        pool=pool, outcomes=outcomes, rounds=rounds_log, early_stopped=early_stopped
    )
