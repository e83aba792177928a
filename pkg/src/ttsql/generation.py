"""Diverse candidate synthesis: the reasoning channel and the ICL channel.

The reasoning channel samples a reasoning-tuned endpoint n times over the
DDL schema. The ICL channel fans out over a variant grid (prompt style x
temperature x endpoint x example order) over the Markdown schema with
retrieved few-shot examples. Both channels degrade gracefully: a failed
variant is logged and skipped, and only a fully empty pool is an error.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

from .catalog import SchemaDoc
from .errors import AllVariantsFailed, BackendError, EmptyPool, SqlNotFound
from .gateway import ChatRequest, Gateway, Profile, parse_sql
from .prompts import render_prompt
from .retrieval import UnderstandingContext, format_cells

logger = logging.getLogger(__name__)

DEFAULT_REASONING_SAMPLES = 8
DEFAULT_REASONING_TEMPERATURE = 1.0
PRIMARY_ICL_TEMPERATURES = (0.5, 1.8)
SECONDARY_ICL_TEMPERATURE = 1.0
SECONDARY_ICL_SAMPLES = 3


@dataclass(frozen=True)
class GenerationTask:
    """One question plus everything prompt construction needs."""

    task_id: str
    question: str
    evidence: str
    database_id: str
    understanding: UnderstandingContext
    schema_ddl: SchemaDoc
    schema_light: SchemaDoc

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise ValueError("question must be non-empty")
        for doc in (self.schema_ddl, self.schema_light):
            if doc.database_id != self.database_id:
                raise ValueError(
                    f"schema doc for {doc.database_id!r} attached to task on {self.database_id!r}"
                )


@dataclass(frozen=True)
class CandidateSql:
    sql: str
    origin: str  # "reasoning" | "icl"
    prompt_style: str  # "direct" | "cot" | "decompose" | "native"
    temperature: float
    backend_id: str
    lineage: tuple[str, ...] = ()
    candidate_id: int = -1  # assigned when added to a pool


class CandidatePool:
    """Ordered candidate collection; ids are birth order and never reused."""

    def __init__(self) -> None:
        self._candidates: list[CandidateSql] = []

    def append(self, candidate: CandidateSql) -> CandidateSql:
        assigned = replace(candidate, candidate_id=len(self._candidates))
        self._candidates.append(assigned)
        return assigned

    def get(self, candidate_id: int) -> CandidateSql:
        return self._candidates[candidate_id]

    def __len__(self) -> int:
        return len(self._candidates)

    def __iter__(self) -> Iterator[CandidateSql]:
        return iter(self._candidates)

    @property
    def candidates(self) -> tuple[CandidateSql, ...]:
        return tuple(self._candidates)


@dataclass(frozen=True)
class IclVariant:
    prompt_style: str  # "direct" | "cot" | "decompose"
    temperature: float
    backend: str | None  # named endpoint override; None uses the profile default
    example_order_seed: int


def default_icl_variants(
    base_seed: int = 0, secondary_backend: str | None = None
) -> list[IclVariant]:
    """The default 9-variant grid: 3 styles x 2 temperatures, plus 3 direct
    samples at temperature 1.0 on a secondary endpoint (or the primary one
    when no secondary is configured)."""
    variants = []
    i = 0
    for style in ("direct", "cot", "decompose"):
        for temperature in PRIMARY_ICL_TEMPERATURES:
            variants.append(IclVariant(style, temperature, None, base_seed + i))
            i += 1
    for _ in range(SECONDARY_ICL_SAMPLES):
        variants.append(
            IclVariant("direct", SECONDARY_ICL_TEMPERATURE, secondary_backend, base_seed + i)
        )
        i += 1
    return variants


def _generation_context(task: GenerationTask, schema: SchemaDoc, examples) -> dict:
    return {
        "question": task.question,
        "evidence": task.evidence,
        "schema": schema.text,
        "cells": format_cells(task.understanding.retrieved_cells),
        "examples": examples,
    }


def generate_icl(
    task: GenerationTask, variants: Sequence[IclVariant], gateway: Gateway
) -> list[CandidateSql]:
    """One candidate per variant that yields parseable SQL.

    Example order is shuffled by the variant's seed; variants that fail
    (backend error or unparseable output) are logged and skipped.
    """
    if not variants:
        raise ValueError("need at least one ICL variant")
    candidates = []
    example_records = [record for record, _score in task.understanding.retrieved_examples]
    for variant in variants:
        ordered = list(example_records)
        random.Random(variant.example_order_seed).shuffle(ordered)
        messages = render_prompt(
            variant.prompt_style, _generation_context(task, task.schema_light, ordered)
        )
        request = ChatRequest(
            profile=Profile.ICL_GENERATOR,
            messages=messages,
            temperature=variant.temperature,
            seed=variant.example_order_seed,
            backend=variant.backend,
        )
        try:
            response = gateway.complete(request)
            sql = parse_sql(response.text)
        except (BackendError, SqlNotFound) as exc:
            logger.warning(
                "ICL variant %s/t=%.1f failed on task %s: %s",
                variant.prompt_style,
                variant.temperature,
                task.task_id,
                exc,
            )
            continue
        candidates.append(
            CandidateSql(
                sql=sql,
                origin="icl",
                prompt_style=variant.prompt_style,
                temperature=variant.temperature,
                backend_id=response.backend_id,
            )
        )
    if not candidates:
        raise AllVariantsFailed(f"all {len(variants)} ICL variants failed on task {task.task_id}")
    return candidates


def generate_reasoning(
    task: GenerationTask,
    n: int = DEFAULT_REASONING_SAMPLES,
    gateway: Gateway | None = None,
    temperature: float = DEFAULT_REASONING_TEMPERATURE,
    base_seed: int = 0,
) -> list[CandidateSql]:
    """n samples from the reasoning endpoint over the DDL schema, no examples."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if gateway is None:
        raise ValueError("a gateway is required")
    messages = render_prompt("direct", _generation_context(task, task.schema_ddl, []))
    candidates = []
    for i in range(n):
        request = ChatRequest(
            profile=Profile.REASONING_GENERATOR,
            messages=messages,
            temperature=temperature,
            seed=base_seed + i,
        )
        try:
            response = gateway.complete(request)
            sql = parse_sql(response.text)
        except (BackendError, SqlNotFound) as exc:
            logger.warning("reasoning sample %d failed on task %s: %s", i, task.task_id, exc)
            continue
        candidates.append(
            CandidateSql(
                sql=sql,
                origin="reasoning",
                prompt_style="native",
                temperature=temperature,
                backend_id=response.backend_id,
            )
        )
    if not candidates:
        raise AllVariantsFailed(f"all {n} reasoning samples failed on task {task.task_id}")
    return candidates


def assemble_pool(
    icl_candidates: Sequence[CandidateSql], reasoning_candidates: Sequence[CandidateSql]
) -> CandidatePool:
    """Concatenate the channels (ICL first) and assign birth-order ids.

    Duplicate SQL strings are kept on purpose: frequency carries signal for
    execution-result voting.
    """
    pool = CandidatePool()
    for candidate in list(icl_candidates) + list(reasoning_candidates):
        pool.append(candidate)
    if len(pool) == 0:
        raise EmptyPool("no candidates from either channel")
    return pool
