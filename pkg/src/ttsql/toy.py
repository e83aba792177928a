"""Deterministic 30-question toy benchmark in BIRD layout.

Three small SQLite databases plus dev/train JSON splits. Every gold query is
executed at build time, so the fixture can never ship a broken label. Used
by the offline end-to-end tests and handy for smoke-testing the CLI:

    python -m ttsql.toy /tmp/toy
    ttsql index --dataset-root /tmp/toy
"""

from __future__ import annotations

import json
import sqlite3
from pathlib import Path

from .dataset import database_path, databases_root
from .executor import execute

SPLIT = "dev"

_SHOP_SCHEMA = """
CREATE TABLE customers (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  city TEXT,
  signup_year INTEGER
);
CREATE TABLE orders (
  id INTEGER PRIMARY KEY,
  customer_id INTEGER REFERENCES customers(id),
  amount REAL,
  year INTEGER,
  status TEXT
);
"""

_SHOP_ROWS = {
    "customers": [
        (1, "Alice Reyes", "Lisbon", 2018),
        (2, "Bruno Costa", "Porto", 2019),
        (3, "Carla Mota", "Lisbon", 2020),
        (4, "Diego Sousa", "Madrid", 2019),
        (5, "Elena Prado", "Madrid", 2021),
        (6, "Filipe Novo", "Porto", 2018),
        (7, "Greta Lima", "Lisbon", 2022),
        (8, "Hugo Dias", "Porto", 2021),
    ],
    "orders": [
        (1, 1, 120.5, 2019, "shipped"),
        (2, 1, 75.0, 2020, "returned"),
        (3, 2, 200.0, 2019, "shipped"),
        (4, 2, 35.25, 2021, "pending"),
        (5, 3, 60.0, 2020, "shipped"),
        (6, 3, 90.0, 2021, "shipped"),
        (7, 4, 150.75, 2019, "shipped"),
        (8, 4, 20.0, 2022, "pending"),
        (9, 5, 310.4, 2021, "shipped"),
        (10, 5, 45.0, 2022, "shipped"),
        (11, 6, 80.0, 2019, "returned"),
        (12, 6, 95.5, 2020, "shipped"),
        (13, 7, 130.0, 2022, "shipped"),
        (14, 8, 55.0, 2021, "pending"),
        (15, 8, 240.0, 2022, "shipped"),
        (16, 1, 65.0, 2022, "shipped"),
    ],
}

_SCHOOL_SCHEMA = """
CREATE TABLE schools (
  id INTEGER PRIMARY KEY,
  name TEXT NOT NULL,
  county TEXT,
  charter INTEGER
);
CREATE TABLE scores (
  school_id INTEGER REFERENCES schools(id),
  year INTEGER,
  avg_score REAL,
  PRIMARY KEY (school_id, year)
);
"""

_SCHOOL_ROWS = {
    "schools": [
        (1, "Lincoln High", "Alameda County", 0),
        (2, "Mission Charter", "Alameda County", 1),
        (3, "Bay Prep", "Contra Costa", 1),
        (4, "Valley School", "Fresno", 0),
        (5, "Summit Academy", "Contra Costa", 0),
        (6, "Delta Charter", "Fresno", 1),
    ],
    "scores": [
        (1, 2019, 71.5),
        (1, 2020, 73.2),
        (2, 2019, 81.0),
        (2, 2020, 79.5),
        (3, 2019, 64.8),
        (3, 2020, 66.0),
        (4, 2019, 58.0),
        (4, 2020, 61.3),
        (5, 2019, 77.7),
        (5, 2020, 75.2),
        (6, 2019, 69.9),
        (6, 2020, 72.4),
    ],
}

_LIBRARY_SCHEMA = """
CREATE TABLE books (
  id INTEGER PRIMARY KEY,
  title TEXT NOT NULL,
  genre TEXT,
  year INTEGER
);
CREATE TABLE loans (
  id INTEGER PRIMARY KEY,
  book_id INTEGER REFERENCES books(id),
  member TEXT,
  weeks INTEGER
);
"""

_LIBRARY_ROWS = {
    "books": [
        (1, "The Silent Sea", "mystery", 2015),
        (2, "Iron Harvest", "history", 2018),
        (3, "Paper Moons", "romance", 2012),
        (4, "Deep Circuits", "science", 2020),
        (5, "The Long Walk", "history", 2016),
        (6, "Glass Gardens", "romance", 2019),
        (7, "Night Signals", "mystery", 2021),
        (8, "Quiet Rivers", "poetry", 2014),
    ],
    "loans": [
        (1, 1, "Ana", 2),
        (2, 1, "Rui", 3),
        (3, 2, "Ana", 1),
        (4, 3, "Sofia", 4),
        (5, 4, "Marco", 2),
        (6, 4, "Ana", 1),
        (7, 4, "Rui", 2),
        (8, 5, "Sofia", 3),
        (9, 6, "Marco", 1),
        (10, 7, "Rui", 5),
        (11, 7, "Sofia", 2),
        (12, 8, "Ana", 1),
    ],
}

_DATABASES = {
    "shop": (_SHOP_SCHEMA, _SHOP_ROWS),
    "school": (_SCHOOL_SCHEMA, _SCHOOL_ROWS),
    "library": (_LIBRARY_SCHEMA, _LIBRARY_ROWS),
}

# (db_id, question, evidence, gold SQL, difficulty)
DEV_QUESTIONS = [
    ("shop", "How many customers are there?", "", "SELECT COUNT(*) FROM customers", "simple"),
    (
        "shop",
        "List the names of customers who live in 'Lisbon'.",
        "",
        "SELECT name FROM customers WHERE city = 'Lisbon'",
        "simple",
    ),
    ("shop", "What is the total amount of all orders?", "", "SELECT SUM(amount) FROM orders", "simple"),
    (
        "shop",
        "How many orders did Alice Reyes place?",
        "customer names are stored in customers.name",
        "SELECT COUNT(*) FROM orders o JOIN customers c ON o.customer_id = c.id "
        "WHERE c.name = 'Alice Reyes'",
        "moderate",
    ),
    (
        "shop",
        "What is the average order amount in 2021?",
        "",
        "SELECT AVG(amount) FROM orders WHERE year = 2021",
        "moderate",
    ),
    ("shop", "List all distinct order statuses.", "", "SELECT DISTINCT status FROM orders", "simple"),
    (
        "shop",
        "Which city has the most customers?",
        "",
        "SELECT city FROM customers GROUP BY city ORDER BY COUNT(*) DESC, city LIMIT 1",
        "moderate",
    ),
    (
        "shop",
        "What is the name of the customer with the highest total order amount?",
        "",
        "SELECT c.name FROM customers c JOIN orders o ON o.customer_id = c.id "
        "GROUP BY c.id, c.name ORDER BY SUM(o.amount) DESC LIMIT 1",
        "challenging",
    ),
    (
        "shop",
        "How many customers placed at least one order with amount greater than 100?",
        "",
        "SELECT COUNT(DISTINCT customer_id) FROM orders WHERE amount > 100",
        "challenging",
    ),
    (
        "shop",
        "How many orders were shipped in 2022?",
        "shipped refers to status = 'shipped'",
        "SELECT COUNT(*) FROM orders WHERE status = 'shipped' AND year = 2022",
        "moderate",
    ),
    ("school", "How many schools are there?", "", "SELECT COUNT(*) FROM schools", "simple"),
    (
        "school",
        "List schools in 'Alameda County'.",
        "",
        "SELECT name FROM schools WHERE county = 'Alameda County'",
        "simple",
    ),
    (
        "school",
        "How many charter schools are in 'Fresno'?",
        "charter = 1 means a charter school",
        "SELECT COUNT(*) FROM schools WHERE charter = 1 AND county = 'Fresno'",
        "moderate",
    ),
    (
        "school",
        "What was the average score of Lincoln High in 2020?",
        "",
        "SELECT s.avg_score FROM scores s JOIN schools sc ON s.school_id = sc.id "
        "WHERE sc.name = 'Lincoln High' AND s.year = 2020",
        "moderate",
    ),
    (
        "school",
        "Which school had the highest average score in 2019?",
        "",
        "SELECT sc.name FROM scores s JOIN schools sc ON s.school_id = sc.id "
        "WHERE s.year = 2019 ORDER BY s.avg_score DESC LIMIT 1",
        "challenging",
    ),
    ("school", "List the distinct counties.", "", "SELECT DISTINCT county FROM schools", "simple"),
    (
        "school",
        "How many schools scored above 70 in 2020?",
        "",
        "SELECT COUNT(*) FROM scores WHERE year = 2020 AND avg_score > 70",
        "moderate",
    ),
    (
        "school",
        "What is the average 2020 score of charter schools?",
        "charter = 1 means a charter school",
        "SELECT AVG(s.avg_score) FROM scores s JOIN schools sc ON s.school_id = sc.id "
        "WHERE sc.charter = 1 AND s.year = 2020",
        "challenging",
    ),
    ("school", "How many score records are there?", "", "SELECT COUNT(*) FROM scores", "simple"),
    (
        "school",
        "Which county has the highest average score across all years?",
        "",
        "SELECT sc.county FROM scores s JOIN schools sc ON s.school_id = sc.id "
        "GROUP BY sc.county ORDER BY AVG(s.avg_score) DESC LIMIT 1",
        "challenging",
    ),
    ("library", "How many books are in the library?", "", "SELECT COUNT(*) FROM books", "simple"),
    (
        "library",
        "List the titles of mystery books.",
        "mystery refers to genre = 'mystery'",
        "SELECT title FROM books WHERE genre = 'mystery'",
        "simple",
    ),
    ("library", "How many loans are recorded?", "", "SELECT COUNT(*) FROM loans", "simple"),
    (
        "library",
        "Which book has been loaned the most times?",
        "",
        "SELECT b.title FROM books b JOIN loans l ON l.book_id = b.id "
        "GROUP BY b.id, b.title ORDER BY COUNT(*) DESC, b.title LIMIT 1",
        "moderate",
    ),
    (
        "library",
        "How many books were published after 2015?",
        "",
        "SELECT COUNT(*) FROM books WHERE year > 2015",
        "moderate",
    ),
    (
        "library",
        "What is the total number of weeks books were on loan?",
        "",
        "SELECT SUM(weeks) FROM loans",
        "moderate",
    ),
    (
        "library",
        "Which member borrowed the most books?",
        "",
        "SELECT member FROM loans GROUP BY member ORDER BY COUNT(*) DESC, member LIMIT 1",
        "challenging",
    ),
    ("library", "List distinct genres.", "", "SELECT DISTINCT genre FROM books", "simple"),
    (
        "library",
        "What is the title of the newest history book?",
        "",
        "SELECT title FROM books WHERE genre = 'history' ORDER BY year DESC LIMIT 1",
        "challenging",
    ),
    (
        "library",
        "How many members borrowed a science book?",
        "",
        "SELECT COUNT(DISTINCT l.member) FROM loans l JOIN books b ON l.book_id = b.id "
        "WHERE b.genre = 'science'",
        "challenging",
    ),
]

TRAIN_QUESTIONS = [
    ("shop", "How many orders are there?", "SELECT COUNT(*) FROM orders"),
    ("shop", "List the names of customers in 'Porto'.", "SELECT name FROM customers WHERE city = 'Porto'"),
    ("shop", "What is the average amount of orders in 2019?", "SELECT AVG(amount) FROM orders WHERE year = 2019"),
    ("school", "How many schools are in 'Contra Costa'?", "SELECT COUNT(*) FROM schools WHERE county = 'Contra Costa'"),
    ("school", "List the names of charter schools.", "SELECT name FROM schools WHERE charter = 1"),
    (
        "school",
        "What was the average score of Bay Prep in 2019?",
        "SELECT s.avg_score FROM scores s JOIN schools sc ON s.school_id = sc.id "
        "WHERE sc.name = 'Bay Prep' AND s.year = 2019",
    ),
    ("library", "How many romance books are there?", "SELECT COUNT(*) FROM books WHERE genre = 'romance'"),
    ("library", "List titles of books published before 2015.", "SELECT title FROM books WHERE year < 2015"),
    ("library", "How many books did Ana borrow?", "SELECT COUNT(*) FROM loans WHERE member = 'Ana'"),
]


def _create_database(path: Path, schema: str, rows: dict[str, list[tuple]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    try:
        conn.executescript(schema)
        for table, table_rows in rows.items():
            placeholders = ",".join("?" * len(table_rows[0]))
            conn.executemany(f"INSERT INTO {table} VALUES ({placeholders})", table_rows)
        conn.commit()
    finally:
        conn.close()


def build_toy_benchmark(root: str | Path) -> Path:
    """Write databases plus dev/train splits; validates every gold query."""
    root = Path(root)
    db_root = databases_root(root, SPLIT)
    for db_id, (schema, rows) in _DATABASES.items():
        _create_database(database_path(db_root, db_id), schema, rows)

    dev_records = []
    for i, (db_id, question, evidence, sql, difficulty) in enumerate(DEV_QUESTIONS):
        outcome = execute(database_path(db_root, db_id), sql)
        if not outcome.is_success:
            raise RuntimeError(f"toy gold SQL {i} failed: {outcome.error}")
        dev_records.append(
            {
                "question_id": i,
                "db_id": db_id,
                "question": question,
                "evidence": evidence,
                "SQL": sql,
                "difficulty": difficulty,
            }
        )
    (root / f"{SPLIT}.json").write_text(
        json.dumps(dev_records, indent=2, ensure_ascii=False), encoding="utf-8"
    )

    train_records = []
    for i, (db_id, question, sql) in enumerate(TRAIN_QUESTIONS):
        outcome = execute(database_path(db_root, db_id), sql)
        if not outcome.is_success:
            raise RuntimeError(f"toy train SQL {i} failed: {outcome.error}")
        train_records.append(
            {"question_id": i, "db_id": db_id, "question": question, "SQL": sql}
        )
    (root / "train.json").write_text(
        json.dumps(train_records, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    return root


def gold_by_question() -> dict[str, tuple[str, str]]:
    """question -> (db_id, gold sql); used by scripted test backends."""
    return {q: (db, sql) for db, q, _e, sql, _d in DEV_QUESTIONS}


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "toy_benchmark"
    built = build_toy_benchmark(target)
    print(f"toy benchmark written to {built}")
