from __future__ import annotations

import itertools

import pytest

from ttsql.catalog import SchemaDoc
from ttsql.errors import EmptyPool
from ttsql.executor import ExecutionOutcome, ResultTable
from ttsql.gateway import Gateway, MockBackend, Profile
from ttsql.generation import CandidatePool, CandidateSql, GenerationTask
from ttsql.retrieval import UnderstandingContext
from ttsql.selection import (
    group_candidates,
    majority_vote,
    pairwise_judge,
    run_tournament,
)


def make_task():
    return GenerationTask(
        task_id="t",
        question="Which?",
        evidence="",
        database_id="db",
        understanding=UnderstandingContext.empty(),
        schema_ddl=SchemaDoc("ddl", "CREATE TABLE t (a)", "db"),
        schema_light=SchemaDoc("light", "## t", "db"),
    )


def success(value):
    return ExecutionOutcome(
        "success", 0.0, table=ResultTable(column_names=("v",), rows=((value,),))
    )


def failure(status="runtime_error"):
    return ExecutionOutcome(status, 0.0, error="boom")


def make_pool_with_outcomes(spec):
    """spec: list of (sql, outcome)."""
    pool = CandidatePool()
    outcomes = {}
    for sql, outcome in spec:
        candidate = pool.append(
            CandidateSql(sql=sql, origin="icl", prompt_style="direct", temperature=0.5, backend_id="m")
        )
        outcomes[candidate.candidate_id] = outcome
    return pool, outcomes


def make_judge_gateway(fn):
    backend = MockBackend()
    backend.script_responder(Profile.SELECTOR, fn)
    return Gateway({"mock": backend}, {Profile.SELECTOR: "mock"})


def rank_judge(order):
    """Transitive judge: candidate whose SQL ranks earlier in ``order`` wins."""

    def judge(request):
        text = request.messages[-1][1]
        sql_a = text.split("Candidate A:\n```sql\n", 1)[1].split("\n```", 1)[0]
        sql_b = text.split("Candidate B:\n```sql\n", 1)[1].split("\n```", 1)[0]
        return "A" if order.index(sql_a) < order.index(sql_b) else "B"

    return judge


class TestGroupCandidates:
    def test_two_distinct_results_two_groups(self):
        pool, outcomes = make_pool_with_outcomes(
            [
                ("SELECT 1", success(1)),
                ("SELECT 1 ", success(1)),
                ("SELECT 2", success(2)),
                ("SELECT 02", success(2)),
                ("SELECT 2  ", success(2)),
            ]
        )
        groups = group_candidates(pool, outcomes)
        assert len(groups) == 2
        assert sorted(len(g.member_ids) for g in groups) == [2, 3]

    def test_failed_candidates_excluded(self):
        pool, outcomes = make_pool_with_outcomes(
            [("SELECT 1", success(1)), ("SELEC", failure("syntax_error"))]
        )
        groups = group_candidates(pool, outcomes)
        assert len(groups) == 1
        assert groups[0].member_ids == (0,)

    def test_all_failed_fallback_flagged(self):
        pool, outcomes = make_pool_with_outcomes(
            [(f"SELECT {i}", failure()) for i in range(4)]
        )
        groups = group_candidates(pool, outcomes)
        assert len(groups) == 1
        assert groups[0].fallback
        assert groups[0].member_ids == (0,)

    def test_representative_shortest_sql_tie_smallest_id(self):
        pool, outcomes = make_pool_with_outcomes(
            [
                ("SELECT 1 FROM t WHERE 1", success(1)),
                ("SELECT 1", success(1)),
                ("SELECT 2", success(1)),  # same length as id=1
            ]
        )
        groups = group_candidates(pool, outcomes)
        assert groups[0].representative_id == 1
        assert groups[0].representative_sql == "SELECT 1"

    def test_unexecuted_candidate_rejected(self):
        pool, outcomes = make_pool_with_outcomes([("SELECT 1", success(1))])
        pool.append(
            CandidateSql(sql="SELECT 2", origin="icl", prompt_style="direct", temperature=0.5, backend_id="m")
        )
        with pytest.raises(ValueError):
            group_candidates(pool, outcomes)

    def test_empty_pool(self):
        with pytest.raises(EmptyPool):
            group_candidates(CandidatePool(), {})


class TestMajorityVote:
    def test_largest_group_wins(self):
        pool, outcomes = make_pool_with_outcomes(
            [
                ("SELECT 1", success(1)),
                ("SELECT 1", success(1)),
                ("SELECT 1", success(1)),
                ("SELECT 2", success(2)),
            ]
        )
        groups = group_candidates(pool, outcomes)
        assert majority_vote(groups) == 0

    def test_tie_goes_to_group_with_smallest_candidate_id(self):
        pool, outcomes = make_pool_with_outcomes(
            [
                ("SELECT 10", success(1)),
                ("SELECT 20", success(2)),
                ("SELECT 10", success(1)),
                ("SELECT 20", success(2)),
            ]
        )
        groups = group_candidates(pool, outcomes)
        assert majority_vote(groups) == 0

    def test_single_group(self):
        pool, outcomes = make_pool_with_outcomes([("SELECT 1", success(1))])
        assert majority_vote(group_candidates(pool, outcomes)) == 0


def _two_groups():
    pool, outcomes = make_pool_with_outcomes(
        [("SELECT 1", success(1)), ("SELECT 2", success(2))]
    )
    return group_candidates(pool, outcomes)


class TestPairwiseJudge:
    def test_scripted_b_wins(self):
        g0, g1 = _two_groups()
        gateway = make_judge_gateway(lambda r: "B")
        winner, _raw, flagged = pairwise_judge(g0, g1, make_task(), gateway)
        assert winner is g1
        assert not flagged

    def test_label_inside_prose_parsed(self):
        g0, g1 = _two_groups()
        gateway = make_judge_gateway(lambda r: "after careful thought, the answer is A")
        winner, _raw, flagged = pairwise_judge(g0, g1, make_task(), gateway)
        assert winner is g0
        assert not flagged

    def test_garbage_twice_defaults_to_first_flagged(self):
        g0, g1 = _two_groups()
        calls = []

        def garbage(request):
            calls.append(request.seed)
            return "no label anywhere"

        gateway = make_judge_gateway(garbage)
        winner, _raw, flagged = pairwise_judge(g0, g1, make_task(), gateway, seed=5)
        assert winner is g0
        assert flagged
        assert calls == [5, 6]  # retried once with a different seed

    def test_same_group_rejected(self):
        g0, _g1 = _two_groups()
        with pytest.raises(ValueError):
            pairwise_judge(g0, g0, make_task(), make_judge_gateway(lambda r: "A"))


class TestRunTournament:
    def _groups(self, m):
        pool, outcomes = make_pool_with_outcomes(
            [(f"SELECT {i}", success(i)) for i in range(m)]
        )
        return group_candidates(pool, outcomes), pool

    def test_m3_transitive_scores(self):
        groups, _pool = self._groups(3)
        order = [g.representative_sql for g in groups]  # g0 beats g1 beats g2
        gateway = make_judge_gateway(rank_judge(order))
        outcome = run_tournament(groups, make_task(), gateway, seed=11)
        assert len(outcome.matches) == 3
        assert outcome.scores[groups[0].representative_id] == 2
        assert outcome.scores[groups[1].representative_id] == 1
        assert outcome.scores[groups[2].representative_id] == 0
        assert outcome.final_id == groups[0].representative_id

    def test_m1_immediate_winner(self):
        groups, _pool = self._groups(1)
        outcome = run_tournament(groups, make_task(), make_judge_gateway(lambda r: "A"), 0)
        assert outcome.matches == []
        assert outcome.final_id == groups[0].representative_id

    def test_m4_six_matches(self):
        groups, _pool = self._groups(4)
        order = [g.representative_sql for g in groups]
        outcome = run_tournament(groups, make_task(), make_judge_gateway(rank_judge(order)), 3)
        assert len(outcome.matches) == 6
        assert sum(outcome.scores.values()) == 6

    def test_oracle_consistency_over_permutations_and_seeds(self):
        base_groups, _pool = self._groups(4)
        order = [g.representative_sql for g in base_groups]
        best_sql = order[0]
        gateway = make_judge_gateway(rank_judge(order))
        for permutation in itertools.permutations(base_groups):
            for seed in range(5):
                outcome = run_tournament(list(permutation), make_task(), gateway, seed)
                winner = next(
                    g for g in base_groups if g.representative_id == outcome.final_id
                )
                assert winner.representative_sql == best_sql

    def test_majority_agreement_with_frequency_oracle(self):
        # One group holds a strict majority; a judge preferring bigger groups
        # must agree with majority voting.
        pool, outcomes = make_pool_with_outcomes(
            [
                ("SELECT 1", success(1)),
                ("SELECT 1", success(1)),
                ("SELECT 1", success(1)),
                ("SELECT 2", success(2)),
                ("SELECT 3", success(3)),
            ]
        )
        groups = group_candidates(pool, outcomes)
        sizes = {g.representative_sql: len(g.member_ids) for g in groups}

        def frequency_judge(request):
            text = request.messages[-1][1]
            sql_a = text.split("Candidate A:\n```sql\n", 1)[1].split("\n```", 1)[0]
            sql_b = text.split("Candidate B:\n```sql\n", 1)[1].split("\n```", 1)[0]
            return "A" if sizes[sql_a] >= sizes[sql_b] else "B"

        outcome = run_tournament(groups, make_task(), make_judge_gateway(frequency_judge), 2)
        assert outcome.final_id == majority_vote(groups)

    def test_seeded_presentation_order_varies_but_is_deterministic(self):
        groups, _pool = self._groups(4)
        order = [g.representative_sql for g in groups]
        gateway = make_judge_gateway(rank_judge(order))
        orders_by_seed = {}
        for seed in range(6):
            outcome = run_tournament(groups, make_task(), gateway, seed)
            orders_by_seed[seed] = tuple(m.presentation_order for m in outcome.matches)
            again = run_tournament(groups, make_task(), gateway, seed)
            assert orders_by_seed[seed] == tuple(m.presentation_order for m in again.matches)
        assert len(set(orders_by_seed.values())) > 1

    def test_double_round_robin_judges_both_orders(self):
        groups, _pool = self._groups(3)
        order = [g.representative_sql for g in groups]
        gateway = make_judge_gateway(rank_judge(order))
        outcome = run_tournament(
            groups, make_task(), gateway, seed=1, double_round_robin=True
        )
        assert len(outcome.matches) == 6  # each of the 3 pairs judged twice
        assert sum(outcome.scores.values()) == 6
        assert outcome.final_id == groups[0].representative_id
        for i, j in itertools.combinations(range(3), 2):
            pair_orders = {
                m.presentation_order
                for m in outcome.matches
                if {m.left_id, m.right_id}
                == {groups[i].representative_id, groups[j].representative_id}
            }
            assert len(pair_orders) == 2  # both presentation orders seen

    def test_no_failed_candidate_final_without_fallback(self):
        pool, outcomes = make_pool_with_outcomes(
            [("SELECT 1", success(1)), ("BROKEN", failure())]
        )
        groups = group_candidates(pool, outcomes)
        outcome = run_tournament(groups, make_task(), make_judge_gateway(lambda r: "A"), 0)
        assert outcome.final_id == 0
        assert not outcome.fallback

    def test_all_failed_fallback_final_is_flagged(self):
        pool, outcomes = make_pool_with_outcomes(
            [("SELECT 1", failure()), ("SELECT 2", failure("timeout"))]
        )
        groups = group_candidates(pool, outcomes)
        outcome = run_tournament(groups, make_task(), make_judge_gateway(lambda r: "A"), 0)
        assert outcome.fallback
        assert outcome.final_id == 0
