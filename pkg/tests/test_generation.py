from __future__ import annotations

import pytest

from ttsql.catalog import SchemaDoc
from ttsql.errors import AllVariantsFailed, EmptyPool
from ttsql.gateway import Gateway, MockBackend, Profile
from ttsql.generation import (
    CandidateSql,
    GenerationTask,
    IclVariant,
    assemble_pool,
    default_icl_variants,
    generate_icl,
    generate_reasoning,
)
from ttsql.retrieval import ExampleRecord, UnderstandingContext


def make_task(db_id="db", n_examples=3):
    examples = tuple(
        (
            ExampleRecord(
                question=f"example question {i}",
                skeleton=f"example question {i}",
                sql=f"SELECT {i}",
                database_id=db_id,
            ),
            1.0 - i * 0.1,
        )
        for i in range(n_examples)
    )
    ctx = UnderstandingContext(keywords=("k",), skeleton="s", retrieved_examples=examples)
    return GenerationTask(
        task_id="t0",
        question="How many things?",
        evidence="things live in table t",
        database_id=db_id,
        understanding=ctx,
        schema_ddl=SchemaDoc("ddl", "CREATE TABLE t (a INTEGER)", db_id),
        schema_light=SchemaDoc("light", "## t\n| a | INTEGER |", db_id),
    )


def make_gateway(responders):
    backend = MockBackend()
    for profile, fn in responders.items():
        backend.script_responder(profile, fn)
    profile_map = {p: "mock" for p in Profile}
    return Gateway({"mock": backend}, profile_map)


class TestGenerateIcl:
    def test_nine_variants_yield_nine_candidates(self):
        gateway = make_gateway({Profile.ICL_GENERATOR: lambda r: "```sql\nSELECT 1\n```"})
        candidates = generate_icl(make_task(), default_icl_variants(0), gateway)
        assert len(candidates) == 9
        assert all(c.origin == "icl" for c in candidates)
        styles = {c.prompt_style for c in candidates}
        assert styles == {"direct", "cot", "decompose"}

    def test_unparseable_variant_skipped(self):
        def respond(request):
            if request.temperature == 1.8:
                return "sorry, cannot help with that"
            return "```sql\nSELECT 1\n```"

        gateway = make_gateway({Profile.ICL_GENERATOR: respond})
        candidates = generate_icl(make_task(), default_icl_variants(0), gateway)
        assert len(candidates) == 6  # three 1.8-variants dropped

    def test_same_seed_same_example_order(self):
        prompts: list[str] = []

        def capture(request):
            prompts.append(request.messages[-1][1])
            return "```sql\nSELECT 1\n```"

        gateway = make_gateway({Profile.ICL_GENERATOR: capture})
        variant = [IclVariant("direct", 0.5, None, example_order_seed=42)]
        generate_icl(make_task(), variant, gateway)
        generate_icl(make_task(), variant, gateway)
        assert prompts[0] == prompts[1]

    def test_seed_shuffles_example_order(self):
        orders: list[tuple] = []

        def capture(request):
            text = request.messages[-1][1]
            positions = sorted(range(3), key=lambda i: text.index(f"example question {i}"))
            orders.append(tuple(positions))
            return "```sql\nSELECT 1\n```"

        gateway = make_gateway({Profile.ICL_GENERATOR: capture})
        seeds = [IclVariant("direct", 0.5, None, s) for s in range(8)]
        generate_icl(make_task(), seeds, gateway)
        assert len(set(orders)) > 1  # at least two distinct orders across seeds

    def test_all_variants_failed(self):
        gateway = make_gateway({Profile.ICL_GENERATOR: lambda r: "no sql at all"})
        with pytest.raises(AllVariantsFailed):
            generate_icl(make_task(), default_icl_variants(0), gateway)

    def test_channel_uses_light_schema_and_examples(self):
        seen = {}

        def capture(request):
            seen["text"] = request.messages[-1][1]
            return "```sql\nSELECT 1\n```"

        gateway = make_gateway({Profile.ICL_GENERATOR: capture})
        task = make_task()
        generate_icl(task, [IclVariant("direct", 0.5, None, 0)], gateway)
        assert task.schema_light.text in seen["text"]
        assert task.schema_ddl.text not in seen["text"]
        assert "Reference examples" in seen["text"]


class TestGenerateReasoning:
    def test_n_samples(self):
        gateway = make_gateway(
            {Profile.REASONING_GENERATOR: lambda r: f"```sql\nSELECT {r.seed}\n```"}
        )
        candidates = generate_reasoning(make_task(), n=8, gateway=gateway)
        assert len(candidates) == 8
        assert all(c.origin == "reasoning" and c.prompt_style == "native" for c in candidates)

    def test_single_sample(self):
        gateway = make_gateway({Profile.REASONING_GENERATOR: lambda r: "```sql\nSELECT 1\n```"})
        assert len(generate_reasoning(make_task(), n=1, gateway=gateway)) == 1

    def test_backend_down_raises_all_variants_failed(self):
        gateway = make_gateway({})  # unscripted mock: every call fails
        with pytest.raises(AllVariantsFailed):
            generate_reasoning(make_task(), n=3, gateway=gateway)

    def test_channel_uses_ddl_without_examples(self):
        seen = {}

        def capture(request):
            seen["text"] = request.messages[-1][1]
            return "```sql\nSELECT 1\n```"

        gateway = make_gateway({Profile.REASONING_GENERATOR: capture})
        task = make_task()
        generate_reasoning(task, n=1, gateway=gateway)
        assert task.schema_ddl.text in seen["text"]
        assert "Reference examples" not in seen["text"]


class TestAssemblePool:
    def _candidate(self, sql, origin="icl"):
        return CandidateSql(
            sql=sql, origin=origin, prompt_style="direct", temperature=0.5, backend_id="m"
        )

    def test_ids_in_birth_order_icl_first(self):
        icl = [self._candidate(f"SELECT {i}") for i in range(9)]
        reasoning = [self._candidate(f"SELECT {i}", "reasoning") for i in range(8)]
        pool = assemble_pool(icl, reasoning)
        assert len(pool) == 17
        assert [c.candidate_id for c in pool] == list(range(17))
        assert [c.origin for c in pool][:9] == ["icl"] * 9

    def test_duplicates_retained(self):
        pool = assemble_pool([self._candidate("SELECT 1"), self._candidate("SELECT 1")], [])
        assert len(pool) == 2

    def test_empty_pool_raises(self):
        with pytest.raises(EmptyPool):
            assemble_pool([], [])


def test_replay_determinism():
    """Same task + seeds + script => byte-identical pool."""

    def run():
        gateway = make_gateway(
            {
                Profile.ICL_GENERATOR: lambda r: f"```sql\nSELECT {r.seed} + {r.temperature}\n```",
                Profile.REASONING_GENERATOR: lambda r: f"```sql\nSELECT {r.seed}\n```",
            }
        )
        task = make_task()
        pool = assemble_pool(
            generate_icl(task, default_icl_variants(7), gateway),
            generate_reasoning(task, n=4, gateway=gateway, base_seed=100),
        )
        return [(c.candidate_id, c.sql, c.origin, c.prompt_style, c.temperature) for c in pool]

    assert run() == run()


def test_task_requires_matching_schema_db():
    task = make_task()
    with pytest.raises(ValueError):
        GenerationTask(
            task_id="x",
            question="q?",
            evidence="",
            database_id="other",
            understanding=task.understanding,
            schema_ddl=task.schema_ddl,
            schema_light=task.schema_light,
        )
