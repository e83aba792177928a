"""Database introspection and the two schema renderings (DDL and Markdown).

A :class:`CatalogSnapshot` captures everything the generators need to know
about one SQLite database: tables in storage order, columns with declared
types and optional descriptions, primary/foreign keys, and a few sample
values per column. The snapshot renders to a standard DDL document (for the
reasoning generator) and a compact Markdown document (for in-context
learning), and the raw text cells feed the retrieval index.
"""

from __future__ import annotations

import csv
import sqlite3
from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyDatabase, UnreadableDatabase

DEFAULT_SAMPLE_VALUES = 3
DEFAULT_CELL_CAP = 2000

# Fraction of sampled values that must fail numeric parsing for a column with
# non-text affinity to still count as textual (schemaless stores type loosely).
_TEXTUAL_FRACTION = 0.5
_TYPE_SNIFF_LIMIT = 100


@dataclass(frozen=True)
class ColumnInfo:
    name: str
    declared_type: str
    nullable: bool
    description: str | None = None
    sample_values: tuple[str, ...] = ()


@dataclass(frozen=True)
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class TableInfo:
    name: str
    columns: tuple[ColumnInfo, ...]
    primary_keys: tuple[str, ...] = ()
    foreign_keys: tuple[ForeignKey, ...] = ()

    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)


@dataclass(frozen=True)
class CatalogSnapshot:
    database_id: str
    tables: tuple[TableInfo, ...]

    def __post_init__(self) -> None:
        names = [t.name for t in self.tables]
        if len(names) != len(set(names)):
            raise ValueError("table names must be unique within a snapshot")
        by_name = {t.name: t for t in self.tables}
        for table in self.tables:
            for fk in table.foreign_keys:
                parent = by_name.get(fk.ref_table)
                if parent is None:
                    raise ValueError(f"foreign key references unknown table {fk.ref_table!r}")
                if fk.ref_column and fk.ref_column not in parent.column_names():
                    raise ValueError(
                        f"foreign key references unknown column {fk.ref_table}.{fk.ref_column}"
                    )

    def table(self, name: str) -> TableInfo:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)


@dataclass(frozen=True)
class SchemaDoc:
    format: str  # "ddl" | "light"
    text: str
    database_id: str


@dataclass(frozen=True)
class CellRecord:
    database_id: str
    table: str
    column: str
    value: str
    weight: int = 1

    def key(self) -> tuple[str, str, str]:
        return (self.table, self.column, self.value)


def _connect(db_path: str | Path) -> sqlite3.Connection:
    path = Path(db_path)
    if not path.is_file():
        raise UnreadableDatabase(f"database file not found: {path}")
    try:
        uri = f"file:{path.as_posix()}?mode=ro"
        conn = sqlite3.connect(uri, uri=True)
        conn.execute("SELECT 1 FROM sqlite_master LIMIT 1").fetchall()
    except sqlite3.Error as exc:
        raise UnreadableDatabase(f"cannot read {path}: {exc}") from exc
    return conn


def _quote(identifier: str) -> str:
    return '"' + identifier.replace('"', '""') + '"'


def _user_tables(conn: sqlite3.Connection) -> list[str]:
    rows = conn.execute(
        "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%'"
    ).fetchall()
    return [r[0] for r in rows]


def _order_clause(primary_keys: tuple[str, ...]) -> str:
    if primary_keys:
        return ", ".join(_quote(c) for c in primary_keys)
    return "rowid"


def _sample_column(
    conn: sqlite3.Connection, table: str, column: str, order_by: str, limit: int
) -> tuple[str, ...]:
    """First ``limit`` distinct non-null values of a column in PK-scan order."""
    if limit <= 0:
        return ()
    seen: list[str] = []
    try:
        cursor = conn.execute(
            f"SELECT {_quote(column)} FROM {_quote(table)} ORDER BY {order_by}"
        )
    except sqlite3.Error:
        cursor = conn.execute(f"SELECT {_quote(column)} FROM {_quote(table)}")
    for (value,) in cursor:
        if value is None:
            continue
        if isinstance(value, (bytes, memoryview)):
            continue
        text = str(value)
        if text not in seen:
            seen.append(text)
            if len(seen) >= limit:
                break
    return tuple(seen)


def load_descriptions(description_dir: str | Path) -> dict[tuple[str, str], str]:
    """Parse BIRD-style ``database_description/*.csv`` files.

    Returns a map from (table, column) to description text. Missing or
    malformed files are skipped; this input is best-effort by design.
    """
    out: dict[tuple[str, str], str] = {}
    directory = Path(description_dir)
    if not directory.is_dir():
        return out
    for csv_path in sorted(directory.glob("*.csv")):
        table = csv_path.stem
        try:
            raw = csv_path.read_text(encoding="utf-8-sig", errors="replace")
        except OSError:
            continue
        reader = csv.DictReader(raw.splitlines())
        if not reader.fieldnames:
            continue
        fields = {f.strip().lower(): f for f in reader.fieldnames if f}
        col_field = fields.get("original_column_name") or fields.get("column_name")
        desc_field = fields.get("column_description")
        if not col_field or not desc_field:
            continue
        for row in reader:
            column = (row.get(col_field) or "").strip()
            description = " ".join(((row.get(desc_field) or "").strip()).split())
            if column and description:
                out[(table, column)] = description
    return out


def introspect(
    db_path: str | Path,
    sample_values_per_column: int = DEFAULT_SAMPLE_VALUES,
    description_dir: str | Path | None = None,
) -> CatalogSnapshot:
    """Build a snapshot of every user table in a SQLite database.

    Column order matches storage order; sample values are the first-N
    distinct non-null values in primary-key scan order. Raises
    ``UnreadableDatabase`` / ``EmptyDatabase``.
    """
    path = Path(db_path)
    database_id = path.stem
    if description_dir is None:
        candidate = path.parent / "database_description"
        description_dir = candidate if candidate.is_dir() else None
    descriptions = load_descriptions(description_dir) if description_dir else {}

    conn = _connect(path)
    try:
        table_names = _user_tables(conn)
        if not table_names:
            raise EmptyDatabase(f"no user tables in {path}")
        tables = []
        for name in table_names:
            info_rows = conn.execute(f"PRAGMA table_info({_quote(name)})").fetchall()
            pk_cols = [(r[5], r[1]) for r in info_rows if r[5] > 0]
            primary_keys = tuple(c for _, c in sorted(pk_cols))
            order_by = _order_clause(primary_keys)
            columns = []
            for _cid, col_name, col_type, not_null, _default, _pk in info_rows:
                columns.append(
                    ColumnInfo(
                        name=col_name,
                        declared_type=col_type or "",
                        nullable=not not_null,
                        description=descriptions.get((name, col_name)),
                        sample_values=_sample_column(
                            conn, name, col_name, order_by, sample_values_per_column
                        ),
                    )
                )
            fk_rows = conn.execute(f"PRAGMA foreign_key_list({_quote(name)})").fetchall()
            foreign_keys = tuple(
                ForeignKey(column=r[3], ref_table=r[2], ref_column=r[4] or "")
                for r in sorted(fk_rows, key=lambda r: (r[0], r[1]))
            )
            tables.append(
                TableInfo(
                    name=name,
                    columns=tuple(columns),
                    primary_keys=primary_keys,
                    foreign_keys=foreign_keys,
                )
            )
        return CatalogSnapshot(database_id=database_id, tables=tuple(tables))
    finally:
        conn.close()


def render_ddl(snapshot: CatalogSnapshot) -> SchemaDoc:
    """One CREATE TABLE statement per table, in snapshot order."""
    if not snapshot.tables:
        raise ValueError("snapshot has no tables")
    statements = []
    for table in snapshot.tables:
        lines = []
        for col in table.columns:
            decl = f"  {_quote(col.name)}"
            if col.declared_type:
                decl += f" {col.declared_type}"
            if not col.nullable:
                decl += " NOT NULL"
            lines.append(decl)
        if table.primary_keys:
            keys = ", ".join(_quote(c) for c in table.primary_keys)
            lines.append(f"  PRIMARY KEY ({keys})")
        for fk in table.foreign_keys:
            ref = _quote(fk.ref_table)
            if fk.ref_column:
                ref += f" ({_quote(fk.ref_column)})"
            lines.append(f"  FOREIGN KEY ({_quote(fk.column)}) REFERENCES {ref}")
        body = ",\n".join(lines)
        statements.append(f"CREATE TABLE {_quote(table.name)} (\n{body}\n);")
    return SchemaDoc(format="ddl", text="\n\n".join(statements) + "\n", database_id=snapshot.database_id)


def render_light(
    snapshot: CatalogSnapshot, cell_samples_per_column: int = DEFAULT_SAMPLE_VALUES
) -> SchemaDoc:
    """Markdown document: one section per table, one row per column.

    With ``cell_samples_per_column == 0`` the examples column is omitted
    entirely. Output is byte-deterministic for a given snapshot.
    """
    if cell_samples_per_column < 0:
        raise ValueError("cell_samples_per_column must be >= 0")
    show_examples = cell_samples_per_column > 0
    parts = [f"# Database: {snapshot.database_id}", ""]
    for table in snapshot.tables:
        parts.append(f"## {table.name}")
        parts.append("")
        header = ["Column", "Type", "Description"]
        if show_examples:
            header.append("Examples")
        parts.append("| " + " | ".join(header) + " |")
        parts.append("|" + "|".join(" --- " for _ in header) + "|")
        for col in table.columns:
            flags = []
            if col.name in table.primary_keys:
                flags.append("PK")
            for fk in table.foreign_keys:
                if fk.column == col.name:
                    target = fk.ref_table + (f".{fk.ref_column}" if fk.ref_column else "")
                    flags.append(f"FK -> {target}")
            description = col.description or ""
            if flags:
                suffix = "; ".join(flags)
                description = f"{description} ({suffix})" if description else f"({suffix})"
            row = [
                _md_escape(col.name),
                col.declared_type or "",
                _md_escape(description),
            ]
            if show_examples:
                samples = col.sample_values[:cell_samples_per_column]
                row.append(_md_escape(", ".join(_clip(s) for s in samples)))
            parts.append("| " + " | ".join(row) + " |")
        parts.append("")
    return SchemaDoc(format="light", text="\n".join(parts), database_id=snapshot.database_id)


def _md_escape(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def _clip(text: str, limit: int = 40) -> str:
    return text if len(text) <= limit else text[: limit - 3] + "..."


def _is_textual(conn: sqlite3.Connection, table: str, column: str, declared: str) -> bool:
    affinity = declared.upper()
    if "CHAR" in affinity or "CLOB" in affinity or "TEXT" in affinity:
        return True
    rows = conn.execute(
        f"SELECT {_quote(column)} FROM {_quote(table)} "
        f"WHERE {_quote(column)} IS NOT NULL LIMIT {_TYPE_SNIFF_LIMIT}"
    ).fetchall()
    values = [r[0] for r in rows if not isinstance(r[0], (bytes, memoryview))]
    if not values:
        return False
    non_numeric = 0
    for value in values:
        try:
            float(value)
        except (TypeError, ValueError):
            non_numeric += 1
    return non_numeric / len(values) > _TEXTUAL_FRACTION


def extract_text_cells(
    db_path: str | Path, per_column_cap: int = DEFAULT_CELL_CAP
) -> list[CellRecord]:
    """Distinct non-null values of textual columns with occurrence weights.

    Per column, records are ordered most-frequent first (ties lexicographic)
    and truncated to ``per_column_cap``.
    """
    if per_column_cap < 1:
        raise ValueError("per_column_cap must be >= 1")
    path = Path(db_path)
    database_id = path.stem
    conn = _connect(path)
    try:
        records: list[CellRecord] = []
        for table in _user_tables(conn):
            info_rows = conn.execute(f"PRAGMA table_info({_quote(table)})").fetchall()
            for _cid, col_name, col_type, _nn, _default, _pk in info_rows:
                if not _is_textual(conn, table, col_name, col_type or ""):
                    continue
                counts: dict[str, int] = {}
                cursor = conn.execute(
                    f"SELECT {_quote(col_name)}, COUNT(*) FROM {_quote(table)} "
                    f"WHERE {_quote(col_name)} IS NOT NULL GROUP BY {_quote(col_name)}"
                )
                for value, count in cursor:
                    if isinstance(value, (bytes, memoryview)):
                        continue
                    text = str(value)
                    if not text.strip():
                        continue
                    counts[text] = counts.get(text, 0) + count
                ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
                for value, weight in ordered[:per_column_cap]:
                    records.append(
                        CellRecord(
                            database_id=database_id,
                            table=table,
                            column=col_name,
                            value=value,
                            weight=weight,
                        )
                    )
        return records
    finally:
        conn.close()
