"""Sandboxed SQL execution: read-only runs, canonical result tables, fingerprints.

Every candidate and gold query goes through :func:`execute`, which opens the
database in read-only mode, enforces a wall-clock timeout, and classifies
failures into syntax errors (compile phase), runtime errors, and timeouts.
Execution results are canonicalized and hashed into fingerprints so that
candidates producing identical results can be grouped.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import GoldExecutionFailed, QueryTimeout

DEFAULT_TIMEOUT = 30.0
FLOAT_DECIMALS = 6

# Reserved fingerprint digests: failures group by status class, never by message.
SYNTAX_ERROR_TOKEN = "!syntax_error"
RUNTIME_ERROR_TOKEN = "!runtime_error"
TIMEOUT_TOKEN = "!timeout"

# How often (in SQLite VM instructions) the timeout deadline is checked.
_PROGRESS_INTERVAL = 1000


@dataclass(frozen=True)
class ResultTable:
    """Raw execution result: ordered column names plus rows of SQLite values."""

    column_names: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self) -> None:
        width = len(self.column_names)
        for row in self.rows:
            if len(row) != width:
                raise ValueError(f"row width {len(row)} != column count {width}")


@dataclass(frozen=True)
class ExecutionOutcome:
    """Status plus timing for one query run; ``table`` present iff success."""

    status: str  # "success" | "syntax_error" | "runtime_error" | "timeout"
    elapsed: float
    table: ResultTable | None = None
    error: str | None = None

    @property
    def is_success(self) -> bool:
        return self.status == "success"


@dataclass(frozen=True)
class Fingerprint:
    digest: str
    row_count: int

    @property
    def is_failure(self) -> bool:
        return self.digest.startswith("!")


@dataclass(frozen=True)
class CanonicalTable:
    """Normalized form used for comparisons and fingerprints."""

    n_columns: int
    rows: tuple[tuple[tuple[str, ...], ...], ...]


def connect_readonly(db_path: str | Path) -> sqlite3.Connection:
    """Open a read-only connection; the file bytes cannot change through it."""
    uri = f"file:{Path(db_path).as_posix()}?mode=ro"
    conn = sqlite3.connect(uri, uri=True, timeout=1.0)
    conn.execute("PRAGMA query_only = ON")
    return conn


def _normalize_value(value) -> tuple[str, ...]:
    """Map a SQLite value to a tagged, hashable canonical token.

    Integers and integral reals unify; reals round to 6 decimals; NULL is its
    own token; blobs collapse to a content digest.
    """
    if value is None:
        return ("null",)
    if isinstance(value, bool):  # sqlite3 never returns bool, but be safe
        return ("n", str(int(value)))
    if isinstance(value, int):
        return ("n", str(value))
    if isinstance(value, float):
        if value != value:  # NaN
            return ("f", "nan")
        if value in (float("inf"), float("-inf")):
            return ("f", repr(value))
        rounded = round(value, FLOAT_DECIMALS)
        if rounded == int(rounded):
            return ("n", str(int(rounded)))
        return ("n", repr(rounded))
    if isinstance(value, (bytes, memoryview)):
        raw = bytes(value)
        return ("b", hashlib.sha256(raw).hexdigest()[:32])
    return ("t", str(value))


def canonicalize(table: ResultTable, order_sensitive: bool) -> CanonicalTable:
    """Normalize values; sort rows lexicographically unless order matters."""
    rows = [tuple(_normalize_value(v) for v in row) for row in table.rows]
    if not order_sensitive:
        rows.sort()
    return CanonicalTable(n_columns=len(table.column_names), rows=tuple(rows))


def fingerprint(outcome: ExecutionOutcome, order_sensitive: bool = False) -> Fingerprint:
    """Hash a canonical result; failures map to reserved per-status tokens."""
    if outcome.status == "syntax_error":
        return Fingerprint(SYNTAX_ERROR_TOKEN, 0)
    if outcome.status == "runtime_error":
        return Fingerprint(RUNTIME_ERROR_TOKEN, 0)
    if outcome.status == "timeout":
        return Fingerprint(TIMEOUT_TOKEN, 0)
    assert outcome.table is not None
    canonical = canonicalize(outcome.table, order_sensitive)
    payload = json.dumps(
        {"cols": canonical.n_columns, "rows": canonical.rows},
        separators=(",", ":"),
        ensure_ascii=False,
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:32]
    return Fingerprint(digest, len(canonical.rows))


class _Deadline:
    """Progress-handler hook that aborts a statement past its deadline."""

    def __init__(self, timeout: float):
        self.expires = time.monotonic() + timeout
        self.fired = False

    def __call__(self) -> int:
        if time.monotonic() > self.expires:
            self.fired = True
            return 1  # nonzero aborts the statement ("interrupted")
        return 0


def execute(db_path: str | Path, sql: str, timeout: float = DEFAULT_TIMEOUT) -> ExecutionOutcome:
    """Run ``sql`` read-only against ``db_path`` and classify the outcome.

    Compile-phase failures (bad syntax, unknown tables/columns) come back as
    ``syntax_error``; failures while stepping the query (including attempts
    to write, which the read-only connection rejects) as ``runtime_error``;
    deadline aborts as ``timeout``. The operation itself never raises for a
    bad query.
    """
    if timeout <= 0:
        raise ValueError("timeout must be > 0")
    start = time.perf_counter()
    try:
        conn = connect_readonly(db_path)
    except sqlite3.Error as exc:
        return ExecutionOutcome("runtime_error", time.perf_counter() - start, error=str(exc))
    deadline = _Deadline(timeout)
    conn.set_progress_handler(deadline, _PROGRESS_INTERVAL)
    try:
        # Compile probe: EXPLAIN prepares the statement without running it,
        # which splits prepare-phase errors from run-phase errors.
        try:
            conn.execute(f"EXPLAIN {sql}").fetchall()
        except sqlite3.Error as exc:
            return ExecutionOutcome(
                "syntax_error", time.perf_counter() - start, error=str(exc)
            )
        try:
            cursor = conn.execute(sql)
            rows = cursor.fetchall()
            columns = tuple(d[0] for d in cursor.description) if cursor.description else ()
        except sqlite3.Error as exc:
            elapsed = time.perf_counter() - start
            if deadline.fired:
                return ExecutionOutcome("timeout", elapsed, error=f"timeout after {timeout}s")
            message = str(exc)
            if "readonly" in message or "read-only" in message:
                message = f"read-only: {message}"
            return ExecutionOutcome("runtime_error", elapsed, error=message)
        elapsed = time.perf_counter() - start
        table = ResultTable(column_names=columns, rows=tuple(tuple(r) for r in rows))
        return ExecutionOutcome("success", elapsed, table=table)
    finally:
        conn.close()


def compare_ex(
    pred_outcome: ExecutionOutcome,
    gold_outcome: ExecutionOutcome,
    mode: str = "row_set",
) -> int:
    """Binary execution-accuracy comparison.

    ``strict`` compares canonical tables including row order; ``row_set``
    compares order-insensitively. A failed prediction scores 0 in both modes.
    """
    if mode not in ("strict", "row_set"):
        raise ValueError(f"unknown comparison mode: {mode!r}")
    if not gold_outcome.is_success or gold_outcome.table is None:
        raise GoldExecutionFailed(gold_outcome.error or "gold execution failed")
    if not pred_outcome.is_success or pred_outcome.table is None:
        return 0
    order_sensitive = mode == "strict"
    pred = canonicalize(pred_outcome.table, order_sensitive)
    gold = canonicalize(gold_outcome.table, order_sensitive)
    return int(pred == gold)


def time_query(
    db_path: str | Path,
    sql: str,
    repeats: int = 3,
    timeout: float = DEFAULT_TIMEOUT,
) -> list[float]:
    """Time ``repeats`` cold-connection runs of ``sql``; raise on any timeout."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    durations: list[float] = []
    for _ in range(repeats):
        outcome = execute(db_path, sql, timeout=timeout)
        if outcome.status == "timeout":
            raise QueryTimeout(f"query timed out after {timeout}s")
        if not outcome.is_success:
            raise QueryTimeout(f"query failed while timing: {outcome.error}")
        durations.append(outcome.elapsed)
    return durations


def preview_text(
    outcome: ExecutionOutcome, max_rows: int = 20, max_chars: int = 2000
) -> str:
    """Short, human/judge-readable rendering of an execution result."""
    if not outcome.is_success or outcome.table is None:
        return f"[{outcome.status}] {outcome.error or ''}".strip()
    table = outcome.table
    lines = [" | ".join(table.column_names) if table.column_names else "(no columns)"]
    for row in table.rows[:max_rows]:
        lines.append(" | ".join(_render_cell(v) for v in row))
    if len(table.rows) > max_rows:
        lines.append(f"... ({len(table.rows)} rows total)")
    text = "\n".join(lines)
    if len(text) > max_chars:
        text = text[: max_chars - 3] + "..."
    return text


def _render_cell(value) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, (bytes, memoryview)):
        return f"<blob:{hashlib.sha256(bytes(value)).hexdigest()[:8]}>"
    return str(value)
