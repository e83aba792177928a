"""BIRD-style dataset ingestion and the predictions file format."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedRecord, MissingDatabase

BIRD_SEPARATOR = "\t----- bird -----\t"
_DIFFICULTIES = ("simple", "moderate", "challenging")


@dataclass(frozen=True)
class Task:
    """One benchmark item; ``gold_sql`` is None for unlabeled splits."""

    task_id: str
    index: int
    question: str
    evidence: str
    database_id: str
    difficulty: str
    gold_sql: str | None = None


def database_path(db_root: str | Path, db_id: str) -> Path:
    """BIRD layout: ``<root>/<db_id>/<db_id>.sqlite``."""
    return Path(db_root) / db_id / f"{db_id}.sqlite"


def databases_root(dataset_root: str | Path, split: str) -> Path:
    return Path(dataset_root) / f"{split}_databases"


def ingest_dataset(dataset_root: str | Path, split: str = "dev") -> list[Task]:
    """Load ``<root>/<split>.json`` and validate database presence.

    Evidence defaults to the empty string; missing difficulty labels fall
    back to "simple". Raises ``MalformedRecord`` / ``MissingDatabase``.
    """
    root = Path(dataset_root)
    json_path = root / f"{split}.json"
    if not json_path.is_file():
        raise MalformedRecord(f"dataset file not found: {json_path}")
    try:
        records = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"{json_path}: {exc}") from exc
    if not isinstance(records, list):
        raise MalformedRecord(f"{json_path}: expected a JSON array")
    db_root = databases_root(root, split)
    tasks = []
    for i, record in enumerate(records):
        if not isinstance(record, dict):
            raise MalformedRecord(f"record {i} is not an object")
        question = (record.get("question") or "").strip()
        db_id = (record.get("db_id") or "").strip()
        if not question or not db_id:
            raise MalformedRecord(f"record {i} is missing question or db_id")
        if not database_path(db_root, db_id).is_file():
            raise MissingDatabase(f"record {i}: database {db_id!r} not found under {db_root}")
        difficulty = str(record.get("difficulty") or "simple").strip().lower()
        if difficulty not in _DIFFICULTIES:
            difficulty = "simple"
        tasks.append(
            Task(
                task_id=str(record.get("question_id", i)),
                index=i,
                question=question,
                evidence=str(record.get("evidence") or ""),
                database_id=db_id,
                difficulty=difficulty,
                gold_sql=(record.get("SQL") or None),
            )
        )
    return tasks


def write_predictions(path: str | Path, entries: list[tuple[int, str, str]]) -> None:
    """BIRD submission format: index -> "SQL<tab>----- bird -----<tab>db_id"."""
    payload = {
        str(index): f"{sql}{BIRD_SEPARATOR}{db_id}"
        for index, sql, db_id in sorted(entries, key=lambda e: e[0])
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def read_predictions(path: str | Path) -> dict[int, tuple[str, str]]:
    """Inverse of :func:`write_predictions`: index -> (sql, db_id)."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    out: dict[int, tuple[str, str]] = {}
    for key, value in raw.items():
        if BIRD_SEPARATOR in value:
            sql, db_id = value.rsplit(BIRD_SEPARATOR, 1)
        else:
            sql, db_id = value, ""
        out[int(key)] = (sql, db_id)
    return out
