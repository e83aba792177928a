"""Prompt templates for every model-facing step.

Each template is a pure function from a context dict to an ordered message
list. Required keys are enforced; a missing key raises
:class:`MissingPlaceholder` instead of silently rendering a broken prompt.
"""

from __future__ import annotations

from .errors import MissingPlaceholder
from .gateway import Message

GENERATION_TEMPLATES = ("direct", "cot", "decompose")
TEMPLATE_IDS = GENERATION_TEMPLATES + ("fixer", "reviser", "selector", "keywords", "skeleton")

_SQL_SYSTEM = (
    "You translate natural-language questions into a single SQLite query. "
    "Always end your answer with the final query in a ```sql fenced block."
)

_STYLE_INSTRUCTIONS = {
    "direct": "Write the query directly, without explanation.",
    "cot": (
        "Reason step by step: identify the tables, the join conditions, the filters, "
        "and any aggregation or ordering. Then write the final query."
    ),
    "decompose": (
        "Break the question into sub-questions, write a fragment for each, "
        "then compose them into one final query."
    ),
}


def _need(context: dict, key: str, template_id: str):
    if key not in context:
        raise MissingPlaceholder(f"template {template_id!r} requires {key!r}")
    return context[key]


def _format_examples(examples) -> str:
    parts = []
    for i, example in enumerate(examples, 1):
        parts.append(f"Example {i}:\nQuestion: {example.question}\nSQL: {example.sql}")
    return "\n\n".join(parts)


def _generation_prompt(template_id: str, context: dict) -> tuple[Message, ...]:
    question = _need(context, "question", template_id)
    evidence = _need(context, "evidence", template_id)
    schema = _need(context, "schema", template_id)
    cells = _need(context, "cells", template_id)
    examples = _need(context, "examples", template_id)

    sections = [f"Database schema:\n{schema}"]
    if cells:
        sections.append(f"Potentially relevant stored values:\n{cells}")
    if examples:
        sections.append(f"Reference examples:\n{_format_examples(examples)}")
    sections.append(f"Question: {question}")
    if evidence:
        sections.append(f"Hint: {evidence}")
    sections.append(_STYLE_INSTRUCTIONS[template_id])
    return (("system", _SQL_SYSTEM), ("user", "\n\n".join(sections)))


def _fixer_prompt(context: dict) -> tuple[Message, ...]:
    question = _need(context, "question", "fixer")
    schema = _need(context, "schema", "fixer")
    sql = _need(context, "sql", "fixer")
    error = _need(context, "error", "fixer")
    user = (
        f"Database schema:\n{schema}\n\n"
        f"Question: {question}\n\n"
        f"This query fails to compile:\n```sql\n{sql}\n```\n\n"
        f"Engine error: {error}\n\n"
        "Repair the query so it runs. Keep the intent unchanged."
    )
    return (("system", _SQL_SYSTEM), ("user", user))


def _reviser_prompt(context: dict) -> tuple[Message, ...]:
    question = _need(context, "question", "reviser")
    evidence = _need(context, "evidence", "reviser")
    schema = _need(context, "schema", "reviser")
    sql = _need(context, "sql", "reviser")
    preview = _need(context, "result_preview", "reviser")
    sections = [
        f"Database schema:\n{schema}",
        f"Question: {question}",
    ]
    if evidence:
        sections.append(f"Hint: {evidence}")
    sections.append(f"Current query:\n```sql\n{sql}\n```")
    sections.append(f"Its execution result:\n{preview}")
    sections.append(
        "Check the query against the question. If it has a logical flaw, fix it; "
        "otherwise return it unchanged."
    )
    return (("system", _SQL_SYSTEM), ("user", "\n\n".join(sections)))


def _selector_prompt(context: dict) -> tuple[Message, ...]:
    question = _need(context, "question", "selector")
    schema = _need(context, "schema", "selector")
    sql_a = _need(context, "sql_a", "selector")
    result_a = _need(context, "result_a", "selector")
    sql_b = _need(context, "sql_b", "selector")
    result_b = _need(context, "result_b", "selector")
    system = (
        "You judge which of two SQL queries correctly answers a question, "
        "using their execution results. Respond with exactly one letter: A or B."
    )
    user = (
        f"Question: {question}\n\n"
        f"Database schema:\n{schema}\n\n"
        f"Candidate A:\n```sql\n{sql_a}\n```\nResult A:\n{result_a}\n\n"
        f"Candidate B:\n```sql\n{sql_b}\n```\nResult B:\n{result_b}\n\n"
        "Which candidate answers the question correctly? Answer A or B."
    )
    return (("system", system), ("user", user))


def _keywords_prompt(context: dict) -> tuple[Message, ...]:
    question = _need(context, "question", "keywords")
    evidence = _need(context, "evidence", "keywords")
    system = (
        "Extract the entities, values, and domain terms a database query would need. "
        "Return one keyword per line, nothing else."
    )
    user = f"Question: {question}"
    if evidence:
        user += f"\nHint: {evidence}"
    return (("system", system), ("user", user))


def _skeleton_prompt(context: dict) -> tuple[Message, ...]:
    question = _need(context, "question", "skeleton")
    system = (
        "Rewrite the question masking literal values: numbers become <NUM>, "
        "quoted strings become <STR>, named entities become <ENT>. "
        "Return only the masked question."
    )
    return (("system", system), ("user", question))


def render_prompt(template_id: str, context: dict) -> tuple[Message, ...]:
    """Render a template to messages; deterministic for a given context."""
    if template_id in GENERATION_TEMPLATES:
        return _generation_prompt(template_id, context)
    if template_id == "fixer":
        return _fixer_prompt(context)
    if template_id == "reviser":
        return _reviser_prompt(context)
    if template_id == "selector":
        return _selector_prompt(context)
    if template_id == "keywords":
        return _keywords_prompt(context)
    if template_id == "skeleton":
        return _skeleton_prompt(context)
    raise ValueError(f"unknown template id: {template_id!r}")
