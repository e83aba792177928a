from __future__ import annotations

import sqlite3
from pathlib import Path

import pytest

from ttsql.metrics import EvalItem
from ttsql.toy import build_toy_benchmark


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory) -> Path:
    return build_toy_benchmark(tmp_path_factory.mktemp("toy") / "bench")


@pytest.fixture(scope="session")
def shop_db(toy_root) -> Path:
    return toy_root / "dev_databases" / "shop" / "shop.sqlite"


@pytest.fixture(scope="session")
def school_db(toy_root) -> Path:
    return toy_root / "dev_databases" / "school" / "school.sqlite"


# -- metric mini-corpus --------------------------------------------------------

_INFINITE_CTE = (
    "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) "
    "SELECT count(*) FROM c"
)

# R-VES timing tolerance demands that every EX-passing pair sit in a flat
# region of the reward curve: gold queries carry a mandatory heavy subquery
# (pred clearly faster, reward pinned at 1), except slow_pred where the pred
# is enormously slower (reward pinned near 0). Near-equal timings would put
# the reward on the noisy ratio~1 boundary.
_HEAVY_FROM = (
    "(WITH RECURSIVE g(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM g WHERE x < 60000) "
    "SELECT max(x) AS m FROM g)"
)

_HEAVY_SAME_RESULT = (
    "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c WHERE x < 400000) "
    "SELECT 42 WHERE (SELECT max(x) FROM c) = 400000"
)

# (name, pred, gold, difficulty) - 12 cases covering correct, shuffled, wrong,
# syntax-error, timeout, partial-overlap, column-order, numeric-unify,
# rounding, empty, NULL, and slow-pred efficiency.
MINI_CASES = [
    (
        "identical",
        "SELECT i, s FROM t ORDER BY i",
        f"SELECT t.i, t.s FROM t, {_HEAVY_FROM} h WHERE h.m > 0 ORDER BY t.i",
        "simple",
    ),
    (
        "shuffled",
        "SELECT i, s FROM t ORDER BY i DESC",
        f"SELECT t.i, t.s FROM t, {_HEAVY_FROM} h WHERE h.m > 0 ORDER BY t.i",
        "simple",
    ),
    ("wrong_rows", "SELECT i FROM t WHERE i > 1", "SELECT i FROM t", "moderate"),
    ("syntax_error", "SELEC i FROM t", "SELECT i FROM t", "moderate"),
    ("timeout", _INFINITE_CTE, "SELECT 1", "challenging"),
    ("partial_overlap", "SELECT i, 'x' FROM t", "SELECT i, s FROM t", "challenging"),
    ("column_order", "SELECT s, i FROM t", "SELECT i, s FROM t", "moderate"),
    (
        "numeric_unify",
        "SELECT 1",
        f"SELECT 1.0 FROM {_HEAVY_FROM} h WHERE h.m > 0",
        "simple",
    ),
    (
        "rounding",
        "SELECT 0.12345670001",
        f"SELECT t.r FROM t, {_HEAVY_FROM} h WHERE t.i = 3 AND h.m > 0",
        "simple",
    ),
    (
        "empty_both",
        "SELECT i FROM t WHERE 0",
        "WITH RECURSIVE g(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM g WHERE x < 60000) "
        "SELECT x FROM g WHERE x > 60000",
        "moderate",
    ),
    ("null_match", "SELECT NULL", f"SELECT NULL FROM {_HEAVY_FROM} h", "challenging"),
    ("slow_pred", _HEAVY_SAME_RESULT, "SELECT 42 WHERE 1 = 1", "challenging"),
]

MINI_TIMEOUT = 1.0


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory) -> tuple[Path, list[EvalItem]]:
    """(db_root, items) for the hand-built 12-case metric fixture."""
    root = tmp_path_factory.mktemp("mini")
    db_dir = root / "mini"
    db_dir.mkdir()
    db_path = db_dir / "mini.sqlite"
    conn = sqlite3.connect(db_path)
    conn.execute("CREATE TABLE t (i INTEGER PRIMARY KEY, r REAL, s TEXT)")
    conn.executemany(
        "INSERT INTO t VALUES (?, ?, ?)",
        [(1, 1.0, "a"), (2, 2.5, "b"), (3, 0.1234567, "c")],
    )
    conn.commit()
    conn.close()
    items = [
        EvalItem(
            task_id=name,
            difficulty=difficulty,
            pred_sql=pred,
            gold_sql=gold,
            database_id="mini",
        )
        for name, pred, gold, difficulty in MINI_CASES
    ]
    return root, items
