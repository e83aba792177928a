"""Scripted mock backend that plays a gold-emitting model for the toy bench.

The responders are deterministic functions of the request: they locate the
dev question inside the rendered prompt, look up its gold SQL, and answer
accordingly. The selector responder is a result oracle: it executes the gold
query and picks whichever presented candidate shows the same result preview.
"""

from __future__ import annotations

import re
from pathlib import Path

from ttsql.dataset import database_path, databases_root
from ttsql.executor import execute, preview_text
from ttsql.gateway import ChatRequest, MockBackend, Profile
from ttsql.retrieval import extract_keywords, extract_skeleton
from ttsql.toy import SPLIT, gold_by_question

_QUESTION_RE = re.compile(r"^Question: (.*)$", re.MULTILINE)
_FENCED_SQL_RE = re.compile(r"```sql\n(.*?)```", re.DOTALL)

WRONG_SQL = "SELECT -999"

# Real write attempts (not compile errors) need a table that exists per db.
_WRITE_TARGETS = {"shop": "customers", "school": "schools", "library": "books"}


def _prompt_text(request: ChatRequest) -> str:
    return "\n".join(text for _role, text in request.messages)


def _find_dev_question(request: ChatRequest, gold: dict) -> str | None:
    # Few-shot example questions also appear as "Question:" lines, but they
    # come from the train split, so only the dev question hits the gold map.
    for match in _QUESTION_RE.findall(_prompt_text(request)):
        if match in gold:
            return match
    return None


def make_oracle_backend(
    toy_root: str | Path,
    wrong_icl_questions: frozenset[str] = frozenset(),
    write_sql_questions: frozenset[str] = frozenset(),
) -> MockBackend:
    """Backend whose generators emit gold SQL for every toy dev question.

    ``wrong_icl_questions``: ICL variants at temperature 1.8 return an
    executable-but-wrong query instead, producing a second result group.
    ``write_sql_questions``: every reasoning sample returns a write statement
    (exercising the read-only executor path).
    """
    gold = gold_by_question()
    db_root = databases_root(toy_root, SPLIT)
    backend = MockBackend("mock")

    def _gold_sql(request: ChatRequest) -> str:
        question = _find_dev_question(request, gold)
        if question is None:
            raise AssertionError("no toy dev question found in prompt")
        return gold[question][1]

    def icl(request: ChatRequest) -> str:
        question = _find_dev_question(request, gold)
        if question in wrong_icl_questions and request.temperature == 1.8:
            return f"```sql\n{WRONG_SQL}\n```"
        return f"```sql\n{_gold_sql(request)}\n```"

    def reasoning(request: ChatRequest) -> str:
        question = _find_dev_question(request, gold)
        if question in write_sql_questions:
            db_id, _sql = gold[question]
            return f"```sql\nDELETE FROM {_WRITE_TARGETS[db_id]}\n```"
        return f"```sql\n{_gold_sql(request)}\n```"

    def keywords_or_skeleton(request: ChatRequest) -> str:
        text = _prompt_text(request)
        if "one keyword per line" in text:
            question = _QUESTION_RE.search(text)
            assert question is not None
            hint = re.search(r"^Hint: (.*)$", text, re.MULTILINE)
            return "\n".join(
                extract_keywords(question.group(1), hint.group(1) if hint else "")
            )
        # skeleton prompt: the question is the entire user message
        return extract_skeleton(request.messages[-1][1])

    def fixer(request: ChatRequest) -> str:
        return f"```sql\n{_gold_sql(request)}\n```"

    def reviser(request: ChatRequest) -> str:
        block = _FENCED_SQL_RE.search(_prompt_text(request))
        assert block is not None, "reviser prompt carries the current query"
        return f"```sql\n{block.group(1).strip()}\n```"

    def selector(request: ChatRequest) -> str:
        text = _prompt_text(request)
        question = _find_dev_question(request, gold)
        assert question is not None
        db_id, sql = gold[question]
        gold_preview = preview_text(execute(database_path(db_root, db_id), sql))
        result_a = text.split("Result A:\n", 1)[1].split("\n\nCandidate B:", 1)[0]
        result_b = text.split("Result B:\n", 1)[1].split("\n\nWhich candidate", 1)[0]
        if result_a == gold_preview:
            return "A"
        if result_b == gold_preview:
            return "B"
        return "A"

    backend.script_responder(Profile.ICL_GENERATOR, icl)
    backend.script_responder(Profile.REASONING_GENERATOR, reasoning)
    backend.script_responder(Profile.UNDERSTANDING, keywords_or_skeleton)
    backend.script_responder(Profile.FIXER, fixer)
    backend.script_responder(Profile.REVISER, reviser)
    backend.script_responder(Profile.SELECTOR, selector)
    return backend
