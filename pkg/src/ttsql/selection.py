"""Final answer selection: execution-result grouping, voting, and tournament.

Successful candidates collapse into groups by execution fingerprint; each
group elects a representative. The baseline picks the largest group
(self-consistency). The scaled path runs a pairwise round-robin tournament
in which a judge backend sees both SQLs with their execution results and
names a winner; the group with the most wins supplies the final SQL.
"""

from __future__ import annotations

import itertools
import logging
import random
import re
from dataclasses import dataclass

from .errors import EmptyPool
from .executor import ExecutionOutcome, Fingerprint, fingerprint, preview_text
from .gateway import ChatRequest, Gateway, Profile
from .generation import CandidatePool, GenerationTask
from .prompts import render_prompt

logger = logging.getLogger(__name__)

JUDGE_TEMPERATURE = 0.2
PREVIEW_ROWS = 20
PREVIEW_CHARS = 2000


@dataclass(frozen=True)
class CandidateGroup:
    fingerprint: Fingerprint
    member_ids: tuple[int, ...]
    representative_id: int
    representative_sql: str
    result_preview: str
    fallback: bool = False  # set only for the all-failed fallback group

    def __post_init__(self) -> None:
        if not self.member_ids:
            raise ValueError("a group needs at least one member")
        if self.representative_id not in self.member_ids:
            raise ValueError("representative must be a group member")


@dataclass(frozen=True)
class MatchRecord:
    left_id: int
    right_id: int
    presentation_order: tuple[int, int]  # (first shown, second shown)
    winner_id: int
    judge_raw_output: str
    flagged: bool = False


@dataclass
class TournamentOutcome:
    scores: dict[int, int]
    matches: list[MatchRecord]
    final_id: int
    fallback: bool = False


def _pick_representative(pool: CandidatePool, member_ids: list[int]) -> int:
    """Shortest SQL text wins; ties go to the smallest candidate id."""
    return min(member_ids, key=lambda cid: (len(pool.get(cid).sql), cid))


def group_candidates(
    pool: CandidatePool,
    outcomes: dict[int, ExecutionOutcome],
    order_sensitive: bool = False,
) -> list[CandidateGroup]:
    """One group per distinct fingerprint among successful candidates.

    Failed candidates never enter the candidate set; if everything failed, a
    single flagged fallback group holding the lowest-id candidate is
    returned so the pipeline stays total.
    """
    if len(pool) == 0:
        raise EmptyPool("cannot group an empty pool")
    missing = [c.candidate_id for c in pool if c.candidate_id not in outcomes]
    if missing:
        raise ValueError(f"candidates not yet executed: {missing}")
    by_digest: dict[str, list[int]] = {}
    for candidate in pool:
        outcome = outcomes[candidate.candidate_id]
        if outcome.is_success:
            digest = fingerprint(outcome, order_sensitive).digest
            by_digest.setdefault(digest, []).append(candidate.candidate_id)
    if not by_digest:
        lowest = min(c.candidate_id for c in pool)
        logger.warning("all %d candidates failed; emitting fallback group", len(pool))
        return [
            CandidateGroup(
                fingerprint=fingerprint(outcomes[lowest], order_sensitive),
                member_ids=(lowest,),
                representative_id=lowest,
                representative_sql=pool.get(lowest).sql,
                result_preview=preview_text(outcomes[lowest], PREVIEW_ROWS, PREVIEW_CHARS),
                fallback=True,
            )
        ]
    groups = []
    for member_ids in sorted(by_digest.values(), key=lambda ids: min(ids)):
        rep = _pick_representative(pool, member_ids)
        groups.append(
            CandidateGroup(
                fingerprint=fingerprint(outcomes[rep], order_sensitive),
                member_ids=tuple(sorted(member_ids)),
                representative_id=rep,
                representative_sql=pool.get(rep).sql,
                result_preview=preview_text(outcomes[rep], PREVIEW_ROWS, PREVIEW_CHARS),
            )
        )
    return groups


def majority_vote(groups: list[CandidateGroup]) -> int:
    """Representative of the largest group; ties keep the earliest candidate."""
    if not groups:
        raise EmptyPool("no groups to vote over")
    best = min(groups, key=lambda g: (-len(g.member_ids), min(g.member_ids)))
    return best.representative_id


_LABEL_RE = re.compile(r"\b([AB])\b")


def _parse_choice(text: str) -> str | None:
    """Strict A/B label scan; None when the answer is absent or ambiguous."""
    labels = set(_LABEL_RE.findall(text))
    if len(labels) == 1:
        return labels.pop()
    lines = [line for line in text.splitlines() if line.strip()]
    if lines:
        last = set(_LABEL_RE.findall(lines[-1]))
        if len(last) == 1:
            return last.pop()
    return None


def pairwise_judge(
    group_a: CandidateGroup,
    group_b: CandidateGroup,
    task: GenerationTask,
    gateway: Gateway,
    seed: int = 0,
) -> tuple[CandidateGroup, str, bool]:
    """Judge one pair; the first argument is presented as A, the second as B.

    Unparseable output is retried once with a different seed, then defaults
    to A with the match flagged. Returns (winner, raw judge output, flagged).
    """
    if group_a.representative_id == group_b.representative_id:
        raise ValueError("cannot judge a group against itself")
    messages = render_prompt(
        "selector",
        {
            "question": task.question,
            "schema": task.schema_light.text,
            "sql_a": group_a.representative_sql,
            "result_a": group_a.result_preview,
            "sql_b": group_b.representative_sql,
            "result_b": group_b.result_preview,
        },
    )
    raw = ""
    for attempt_seed in (seed, seed + 1):
        request = ChatRequest(
            profile=Profile.SELECTOR,
            messages=messages,
            temperature=JUDGE_TEMPERATURE,
            seed=attempt_seed,
        )
        raw = gateway.complete(request).text
        choice = _parse_choice(raw)
        if choice == "A":
            return group_a, raw, False
        if choice == "B":
            return group_b, raw, False
    logger.warning("judge output unparseable twice; defaulting to first-presented group")
    return group_a, raw, True


def run_tournament(
    groups: list[CandidateGroup],
    task: GenerationTask,
    gateway: Gateway,
    seed: int = 0,
    double_round_robin: bool = False,
) -> TournamentOutcome:
    """Round-robin over all group pairs; final answer is the win-count argmax.

    By default each unordered pair is judged exactly once with presentation
    order randomized by ``seed``; ``double_round_robin`` judges every pair in
    both orders instead (position-bias audit at twice the cost). Score ties
    break by larger group size, then smaller candidate id.
    """
    if not groups:
        raise EmptyPool("no groups to run a tournament over")
    scores = {g.representative_id: 0 for g in groups}
    matches: list[MatchRecord] = []
    if len(groups) == 1:
        return TournamentOutcome(
            scores=scores,
            matches=matches,
            final_id=groups[0].representative_id,
            fallback=groups[0].fallback,
        )
    rng = random.Random(seed)
    for i, j in itertools.combinations(range(len(groups)), 2):
        left, right = groups[i], groups[j]
        if double_round_robin:
            orderings = [(left, right), (right, left)]
        else:
            flipped = rng.random() < 0.5
            orderings = [(right, left) if flipped else (left, right)]
        for ordering_index, (first, second) in enumerate(orderings):
            match_seed = seed * 1_000_003 + i * 1009 + j * 2 + ordering_index
            winner, raw, flagged = pairwise_judge(first, second, task, gateway, seed=match_seed)
            scores[winner.representative_id] += 1
            matches.append(
                MatchRecord(
                    left_id=left.representative_id,
                    right_id=right.representative_id,
                    presentation_order=(first.representative_id, second.representative_id),
                    winner_id=winner.representative_id,
                    judge_raw_output=raw,
                    flagged=flagged,
                )
            )
    ranked = sorted(
        groups,
        key=lambda g: (-scores[g.representative_id], -len(g.member_ids), min(g.member_ids)),
    )
    return TournamentOutcome(
        scores=scores,
        matches=matches,
        final_id=ranked[0].representative_id,
        fallback=any(g.fallback for g in groups),
    )
