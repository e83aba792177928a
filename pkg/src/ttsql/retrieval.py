"""Vector stores over cell values and train examples, plus task understanding.

Two indexes drive prompt construction: one over textual cell values (queried
with extracted keywords) and one over training questions keyed by their
literal-masked skeletons (queried with the skeleton of the incoming
question). Retrieval is an exact cosine scan; the bundled embedder is a
deterministic hashed character-trigram bag so everything runs offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .catalog import CellRecord
from .errors import (
    BackendError,
    DuplicateCellRecord,
    EmptyIndex,
    EmptyText,
)
from .gateway import ChatRequest, Gateway, Profile
from .prompts import render_prompt

logger = logging.getLogger(__name__)

DEFAULT_K_CELLS = 5
DEFAULT_K_EXAMPLES = 3
UNDERSTANDING_TEMPERATURE = 0.2

INDEX_FORMAT_VERSION = 1


class Embedder(Protocol):
    id: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class TrigramEmbedder:
    """Deterministic hashed character-trigram embedder (no model, no network).

    Trigrams of the lowercased, space-padded text are hashed into a fixed
    number of signed buckets; the result is unit-normalized. Similar surface
    forms share trigrams and therefore score high cosine similarity.
    """

    id = "hashed-trigram-384"
    dimension = 384

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        padded = f" {text.lower().strip()} "
        vec = np.zeros(self.dimension, dtype=np.float64)
        for i in range(len(padded) - 2):
            trigram = padded[i : i + 3]
            digest = hashlib.blake2b(trigram.encode("utf-8"), digest_size=8).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # Adversarial cancellation; fall back to a one-hot on the text hash.
            bucket = int.from_bytes(
                hashlib.blake2b(padded.encode("utf-8"), digest_size=4).digest(), "big"
            ) % self.dimension
            vec[bucket] = 1.0
            norm = 1.0
        return vec / norm


@dataclass(frozen=True)
class ExampleRecord:
    question: str
    skeleton: str
    sql: str
    database_id: str

    def key(self) -> tuple[str, str]:
        return (self.question, self.sql)


class VectorIndex:
    """Flat index: payload rows plus a (n, dim) matrix of unit vectors."""

    def __init__(
        self,
        kind: str,
        embedder_id: str,
        dimension: int,
        payloads: list,
        vectors: np.ndarray,
    ):
        if kind not in ("cell", "example"):
            raise ValueError(f"unknown index kind {kind!r}")
        if vectors.shape != (len(payloads), dimension):
            raise ValueError(
                f"vector matrix shape {vectors.shape} does not match "
                f"{len(payloads)} payloads x {dimension} dims"
            )
        self.kind = kind
        self.embedder_id = embedder_id
        self.dimension = dimension
        self.payloads = payloads
        self.vectors = vectors

    def __len__(self) -> int:
        return len(self.payloads)

    def save(self, path: str | Path) -> None:
        header = {
            "version": INDEX_FORMAT_VERSION,
            "kind": self.kind,
            "embedder_id": self.embedder_id,
            "dimension": self.dimension,
        }
        if self.kind == "cell":
            payloads = [
                [p.database_id, p.table, p.column, p.value, p.weight] for p in self.payloads
            ]
        else:
            payloads = [
                [p.question, p.skeleton, p.sql, p.database_id] for p in self.payloads
            ]
        np.savez(
            Path(path),
            header=np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8),
            payloads=np.frombuffer(
                json.dumps(payloads, ensure_ascii=False).encode("utf-8"), dtype=np.uint8
            ),
            vectors=self.vectors,
        )

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        with np.load(Path(path)) as data:
            header = json.loads(bytes(data["header"].tobytes()).decode("utf-8"))
            if header.get("version") != INDEX_FORMAT_VERSION:
                raise ValueError(f"unsupported index version: {header.get('version')}")
            raw_payloads = json.loads(bytes(data["payloads"].tobytes()).decode("utf-8"))
            vectors = data["vectors"]
        if header["kind"] == "cell":
            payloads = [
                CellRecord(database_id=p[0], table=p[1], column=p[2], value=p[3], weight=p[4])
                for p in raw_payloads
            ]
        else:
            payloads = [
                ExampleRecord(question=p[0], skeleton=p[1], sql=p[2], database_id=p[3])
                for p in raw_payloads
            ]
        return cls(
            kind=header["kind"],
            embedder_id=header["embedder_id"],
            dimension=header["dimension"],
            payloads=payloads,
            vectors=vectors,
        )


def build_cell_index(cells: Sequence[CellRecord], embedder: Embedder) -> VectorIndex:
    """One entry per record, embedding the raw cell value."""
    if not cells:
        raise ValueError("cannot build an index from zero cell records")
    seen = set()
    for record in cells:
        if record.key() in seen:
            raise DuplicateCellRecord(f"duplicate cell record {record.key()}")
        seen.add(record.key())
    vectors = np.stack([embedder.embed(record.value) for record in cells])
    return VectorIndex("cell", embedder.id, embedder.dimension, list(cells), vectors)


def build_example_index(
    train_items: Sequence[tuple[str, str, str]], embedder: Embedder
) -> VectorIndex:
    """Index of (question, sql, db_id) triples keyed on question skeletons."""
    if not train_items:
        raise ValueError("cannot build an index from zero training items")
    records = []
    for question, sql, db_id in train_items:
        if not sql or not sql.strip():
            raise ValueError(f"training item for {question!r} has empty SQL")
        skeleton = extract_skeleton(question)
        records.append(
            ExampleRecord(question=question, skeleton=skeleton, sql=sql, database_id=db_id)
        )
    vectors = np.stack([embedder.embed(r.skeleton or r.question) for r in records])
    return VectorIndex("example", embedder.id, embedder.dimension, records, vectors)


# -- keyword extraction -------------------------------------------------------

_STOPWORDS = frozenset(
    """
    a about above after all an and any are as at be been before being below between both but by
    can could did do does doing down during each few for from further had has have having he her
    here hers him his how i if in into is it its just like list many me more most much my no nor
    not number of off on once only or other our out over own per please same she should show so
    some such than that the their theirs them then there these they this those through to too
    under until up very was we were what when where which while who whom why will with would you
    your give
    """.split()
)

_QUOTED_RE = re.compile(r"'([^']+)'|\"([^\"]+)\"|`([^`]+)`")
_TOKEN_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.\-]*")


def _rule_keywords(question: str, evidence: str) -> list[str]:
    text = question if not evidence else f"{question}\n{evidence}"
    keywords: list[str] = []
    seen: set[str] = set()

    def _add(candidate: str) -> None:
        candidate = candidate.strip()
        if candidate and candidate.lower() not in seen:
            seen.add(candidate.lower())
            keywords.append(candidate)

    for match in _QUOTED_RE.finditer(text):
        _add(next(g for g in match.groups() if g))
    unquoted = _QUOTED_RE.sub(" ", text)
    for token in _TOKEN_RE.findall(unquoted):
        if token.lower() not in _STOPWORDS:
            _add(token)
    if not keywords:
        # Degenerate all-stopword question: use the question itself as the probe.
        keywords = [question.strip()]
    return keywords


def _parse_keyword_lines(text: str) -> list[str]:
    keywords: list[str] = []
    seen: set[str] = set()
    for line in text.splitlines():
        cleaned = re.sub(r"^[\s\-*\d.)]+", "", line).strip().strip("'\"`").strip()
        if cleaned and cleaned.lower() not in seen:
            seen.add(cleaned.lower())
            keywords.append(cleaned)
    return keywords


def extract_keywords(
    question: str,
    evidence: str = "",
    gateway: Gateway | None = None,
    seed: int = 0,
) -> list[str]:
    """Keywords for cell retrieval.

    With a gateway, a constrained list-output prompt runs on the
    understanding profile; on backend failure (recorded in the gateway
    trace) or unusable output this falls back to the rule extractor:
    quoted literals plus non-stopword content tokens, in original order.
    """
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    if gateway is not None:
        request = ChatRequest(
            profile=Profile.UNDERSTANDING,
            messages=render_prompt("keywords", {"question": question, "evidence": evidence}),
            temperature=UNDERSTANDING_TEMPERATURE,
            seed=seed,
        )
        try:
            response = gateway.complete(request)
            keywords = _parse_keyword_lines(response.text)
            if keywords:
                return keywords
            logger.warning("keyword extraction returned no usable lines; using rule mode")
        except BackendError as exc:
            logger.warning("keyword extraction backend failed (%s); using rule mode", exc)
    return _rule_keywords(question, evidence)


# -- skeleton extraction ------------------------------------------------------

_NUM_RE = re.compile(r"\b\d+(?:\.\d+)?\b")
_ENT_RE = re.compile(r"\b[A-Z][a-z0-9'’-]+(?:\s+[A-Z][a-z0-9'’-]+)+\b")


def _rule_skeleton(question: str) -> str:
    masked = _QUOTED_RE.sub("<STR>", question)
    masked = _NUM_RE.sub("<NUM>", masked)
    masked = _ENT_RE.sub("<ENT>", masked)
    return re.sub(r"\s+", " ", masked).strip()


def extract_skeleton(
    question: str,
    gateway: Gateway | None = None,
    seed: int = 0,
) -> str:
    """Mask literals in a question; the rule form is idempotent.

    Numbers become ``<NUM>``, quoted strings ``<STR>``, and residual
    capitalized multiword spans ``<ENT>``.
    """
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    if gateway is not None:
        request = ChatRequest(
            profile=Profile.UNDERSTANDING,
            messages=render_prompt("skeleton", {"question": question}),
            temperature=UNDERSTANDING_TEMPERATURE,
            seed=seed,
        )
        try:
            response = gateway.complete(request)
            skeleton = response.text.strip()
            if skeleton:
                return skeleton
            logger.warning("skeleton extraction returned empty text; using rule mode")
        except BackendError as exc:
            logger.warning("skeleton extraction backend failed (%s); using rule mode", exc)
    return _rule_skeleton(question)


# -- retrieval ----------------------------------------------------------------

def _top_k(index: VectorIndex, query: np.ndarray, k: int) -> list[tuple[int, float]]:
    scores = index.vectors @ query
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return [(i, float(np.clip(scores[i], -1.0, 1.0))) for i in order[:k]]


def retrieve_cells(
    index: VectorIndex,
    keywords: Sequence[str],
    k_per_keyword: int = DEFAULT_K_CELLS,
    embedder: Embedder | None = None,
) -> list[tuple[CellRecord, float]]:
    """Top-k cells per keyword by cosine, merged and deduplicated.

    Duplicates keep their maximum score; the merged list is sorted by
    descending score with lexicographic (table, column, value) tie-breaks.
    """
    if index.kind != "cell":
        raise ValueError(f"expected a cell index, got {index.kind!r}")
    if k_per_keyword < 1:
        raise ValueError("k_per_keyword must be >= 1")
    if len(index) == 0:
        raise EmptyIndex("cell index has no entries")
    embedder = embedder or TrigramEmbedder()
    if embedder.id != index.embedder_id:
        raise ValueError(
            f"index built with embedder {index.embedder_id!r}, queried with {embedder.id!r}"
        )
    best: dict[tuple[str, str, str], tuple[float, CellRecord]] = {}
    for keyword in keywords:
        for i, score in _top_k(index, embedder.embed(keyword), k_per_keyword):
            record = index.payloads[i]
            key = record.key()
            if key not in best or score > best[key][0]:
                best[key] = (score, record)
    merged = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0]))
    return [(record, score) for _key, (score, record) in merged]


def retrieve_examples(
    index: VectorIndex,
    skeleton: str,
    k: int = DEFAULT_K_EXAMPLES,
    embedder: Embedder | None = None,
) -> list[tuple[ExampleRecord, float]]:
    """Top-k training examples by cosine over skeleton embeddings."""
    if index.kind != "example":
        raise ValueError(f"expected an example index, got {index.kind!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise EmptyIndex("example index has no entries")
    embedder = embedder or TrigramEmbedder()
    if embedder.id != index.embedder_id:
        raise ValueError(
            f"index built with embedder {index.embedder_id!r}, queried with {embedder.id!r}"
        )
    hits = _top_k(index, embedder.embed(skeleton), k)
    ranked = sorted(
        ((index.payloads[i], score) for i, score in hits),
        key=lambda pair: (-pair[1], pair[0].key()),
    )
    return ranked


# -- understanding ------------------------------------------------------------

@dataclass(frozen=True)
class UnderstandingContext:
    keywords: tuple[str, ...]
    skeleton: str
    retrieved_cells: tuple[tuple[CellRecord, float], ...] = ()
    retrieved_examples: tuple[tuple[ExampleRecord, float], ...] = ()

    @classmethod
    def empty(cls) -> "UnderstandingContext":
        return cls(keywords=(), skeleton="")


def format_cells(retrieved_cells: Sequence[tuple[CellRecord, float]]) -> str:
    """Render retrieved cells for prompt embedding, one per line."""
    return "\n".join(
        f"{record.table}.{record.column} = {record.value!r}" for record, _ in retrieved_cells
    )


def build_understanding(
    question: str,
    evidence: str,
    cell_index: VectorIndex | None,
    example_index: VectorIndex | None,
    embedder: Embedder | None = None,
    gateway: Gateway | None = None,
    k_cells: int = DEFAULT_K_CELLS,
    k_examples: int = DEFAULT_K_EXAMPLES,
    seed: int = 0,
) -> UnderstandingContext:
    """Run the full understanding step: extract, then retrieve both contexts."""
    embedder = embedder or TrigramEmbedder()
    keywords = extract_keywords(question, evidence, gateway=gateway, seed=seed)
    skeleton = extract_skeleton(question, gateway=gateway, seed=seed)
    cells: list[tuple[CellRecord, float]] = []
    examples: list[tuple[ExampleRecord, float]] = []
    if cell_index is not None and len(cell_index) > 0:
        cells = retrieve_cells(cell_index, keywords, k_per_keyword=k_cells, embedder=embedder)
    if example_index is not None and len(example_index) > 0:
        probe = skeleton if skeleton.strip() else question
        examples = retrieve_examples(example_index, probe, k=k_examples, embedder=embedder)
    return UnderstandingContext(
        keywords=tuple(keywords),
        skeleton=skeleton,
        retrieved_cells=tuple(cells),
        retrieved_examples=tuple(examples),
    )
