"""Embedding and preference-pair file formats, ingestion, and splitting.

Embeddings travel in a small binary container ("PEMB"):

    offset  size  field
    0       4     magic, ASCII "PEMB"
    4       1     version, currently 1
    5       3     reserved, zero
    8       4     dimension d, little-endian u32
    12      8     row count n, little-endian u64
    20      n*d*4 IEEE-754 binary32 values, little-endian, row-major

Values are stored at 32-bit precision (matching common embedding dumps) and
widened to float64 on load; all in-memory math runs at 64 bits. A JSONL
sidecar carries one record per row: {"row": k, "id": "...", "uri": ...,
"score": ...} with uri and score optional.

Preference pairs are JSONL too, one record per line with string fields
``winner`` and ``loser``, an optional ``query_id``, and an optional boolean
``tie``. Tie records are dropped at ingestion and counted, so the data loss
is visible; self-pairs are rejected outright.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CorruptionError,
    DomainError,
    FormatError,
    ParseError,
    ValidationError,
)
from .prefcore import Embedding, PreferencePair

__all__ = [
    "PEMB_MAGIC",
    "PEMB_VERSION",
    "EmbeddingTable",
    "PreferenceDataset",
    "save_embeddings",
    "load_embeddings",
    "save_pairs",
    "load_pairs",
    "split",
    "pairs_from_scores",
]

PEMB_MAGIC = b"PEMB"
PEMB_VERSION = 1

_HEADER = struct.Struct("<4sB3sIQ")


@dataclass
class EmbeddingTable:
    """An id-addressable set of same-dimension embeddings with optional
    per-row display uri and score.

    Treat instances as immutable after construction; the vector block is
    marked read-only.
    """

    ids: list[str]
    vectors: np.ndarray
    uris: list[str | None] | None = None
    scores: list[float | None] | None = None
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got shape {vectors.shape}")
        n, d = vectors.shape
        if d < 1:
            raise ValidationError("table dimension must be >= 1")
        if len(self.ids) != n:
            raise ValidationError(f"{len(self.ids)} ids for {n} rows")
        if self.uris is None:
            self.uris = [None] * n
        if self.scores is None:
            self.scores = [None] * n
        if len(self.uris) != n or len(self.scores) != n:
            raise ValidationError("uris/scores length must match row count")
        index: dict[str, int] = {}
        for row, rid in enumerate(self.ids):
            if not isinstance(rid, str) or not rid:
                raise ValidationError(f"row {row} has an empty or non-string id")
            if rid in index:
                raise ValidationError(f"duplicate id {rid!r}")
            index[rid] = row
        bad = np.argwhere(~np.isfinite(vectors))
        if bad.size:
            row, col = (int(v) for v in bad[0])
            raise ValidationError(
                f"non-finite component for id {self.ids[row]!r} at index {col}"
            )
        for row, score in enumerate(self.scores):
            if score is not None and not math.isfinite(score):
                raise ValidationError(f"non-finite score for id {self.ids[row]!r}")
        vectors = vectors.copy() if vectors is self.vectors else vectors
        vectors.setflags(write=False)
        self.vectors = vectors
        self._index = index

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def has_id(self, rid: str) -> bool:
        return rid in self._index

    def row_index(self, rid: str) -> int:
        try:
            return self._index[rid]
        except KeyError:
            raise ValidationError(f"unknown id {rid!r}") from None

    def vector(self, rid: str) -> np.ndarray:
        return self.vectors[self.row_index(rid)]

    def embedding(self, rid: str) -> Embedding:
        return Embedding(self.vector(rid))

    def pair(self, winner_id: str, loser_id: str) -> PreferencePair:
        return PreferencePair(
            winner=self.embedding(winner_id), loser=self.embedding(loser_id)
        )


@dataclass
class PreferenceDataset:
    """Winner/loser id pairs resolved against one embedding table."""

    pairs: list[tuple[str, str]]
    table: EmbeddingTable
    query_ids: list[str | None] | None = None
    ties_dropped: int = 0
    winner_rows: np.ndarray = field(init=False, repr=False)
    loser_rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.query_ids is None:
            self.query_ids = [None] * len(self.pairs)
        if len(self.query_ids) != len(self.pairs):
            raise ValidationError("query_ids length must match pairs")
        winner_rows = np.empty(len(self.pairs), dtype=np.int64)
        loser_rows = np.empty(len(self.pairs), dtype=np.int64)
        for i, (winner_id, loser_id) in enumerate(self.pairs):
            if winner_id == loser_id:
                raise ValidationError(f"self-pair {winner_id!r} at position {i}")
            winner_rows[i] = self.table.row_index(winner_id)
            loser_rows[i] = self.table.row_index(loser_id)
        self.winner_rows = winner_rows
        self.loser_rows = loser_rows

    def __len__(self) -> int:
        return len(self.pairs)

    def subset(self, indices: Sequence[int]) -> "PreferenceDataset":
        idx = [int(i) for i in indices]
        return PreferenceDataset(
            pairs=[self.pairs[i] for i in idx],
            table=self.table,
            query_ids=[self.query_ids[i] for i in idx],
        )

    def winner_vectors(self) -> np.ndarray:
        return self.table.vectors[self.winner_rows]

    def loser_vectors(self) -> np.ndarray:
        return self.table.vectors[self.loser_rows]

    def winner_embeddings(self) -> list[Embedding]:
        return [Embedding(v) for v in self.winner_vectors()]

    def preference_pairs(self) -> list[PreferencePair]:
        return [
            self.table.pair(winner_id, loser_id)
            for winner_id, loser_id in self.pairs
        ]


def save_embeddings(table: EmbeddingTable, matrix_path, meta_path) -> None:
    """Write the PEMB container and its JSONL sidecar.

    Byte output is deterministic: identical tables produce identical files.
    """
    header = _HEADER.pack(
        PEMB_MAGIC, PEMB_VERSION, b"\x00\x00\x00", table.dim, len(table)
    )
    payload = np.ascontiguousarray(table.vectors, dtype="<f4").tobytes()
    with open(matrix_path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        for row, rid in enumerate(table.ids):
            record: dict = {"row": row, "id": rid}
            if table.uris[row] is not None:
                record["uri"] = table.uris[row]
            if table.scores[row] is not None:
                record["score"] = table.scores[row]
            fh.write(json.dumps(record) + "\n")


def load_embeddings(matrix_path, meta_path) -> EmbeddingTable:
    """Read a PEMB container, validate it, and widen values to float64."""
    raw = Path(matrix_path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptionError(
            f"{matrix_path}: {len(raw)} bytes is too short for a PEMB header"
        )
    magic, version, reserved, dim, count = _HEADER.unpack_from(raw)
    if magic != PEMB_MAGIC:
        raise FormatError(f"{matrix_path}: bad magic {magic!r}")
    if version != PEMB_VERSION:
        raise FormatError(f"{matrix_path}: unsupported version {version}")
    if reserved != b"\x00\x00\x00":
        raise FormatError(f"{matrix_path}: reserved header bytes are not zero")
    if dim < 1:
        raise FormatError(f"{matrix_path}: dimension must be positive")
    expected = dim * count * 4
    actual = len(raw) - _HEADER.size
    if actual != expected:
        raise CorruptionError(
            f"{matrix_path}: payload is {actual} bytes, header implies {expected}"
        )
    values = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    vectors = values.reshape(count, dim).astype(np.float64)

    ids: list[str | None] = [None] * count
    uris: list[str | None] = [None] * count
    scores: list[float | None] = [None] * count
    seen_rows = set()
    with open(meta_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{meta_path}: line {lineno}: {exc}") from None
            if not isinstance(record, dict):
                raise ParseError(f"{meta_path}: line {lineno}: record must be an object")
            row = record.get("row")
            rid = record.get("id")
            if not isinstance(row, int) or isinstance(row, bool):
                raise ParseError(f"{meta_path}: line {lineno}: 'row' must be an integer")
            if not isinstance(rid, str) or not rid:
                raise ParseError(f"{meta_path}: line {lineno}: 'id' must be a non-empty string")
            if not 0 <= row < count:
                raise ValidationError(
                    f"{meta_path}: line {lineno}: row {row} outside [0, {count})"
                )
            if row in seen_rows:
                raise ValidationError(f"{meta_path}: line {lineno}: duplicate row {row}")
            seen_rows.add(row)
            uri = record.get("uri")
            if uri is not None and not isinstance(uri, str):
                raise ParseError(f"{meta_path}: line {lineno}: 'uri' must be a string")
            score = record.get("score")
            if score is not None:
                if isinstance(score, bool) or not isinstance(score, (int, float)):
                    raise ParseError(f"{meta_path}: line {lineno}: 'score' must be a number")
                score = float(score)
            ids[row] = rid
            uris[row] = uri
            scores[row] = score
    if len(seen_rows) != count:
        missing = sorted(set(range(count)) - seen_rows)[:5]
        raise ValidationError(f"{meta_path}: missing metadata for rows {missing}")
    return EmbeddingTable(ids=list(ids), vectors=vectors, uris=uris, scores=scores)


def save_pairs(dataset: PreferenceDataset, path) -> None:
    """Write winner/loser pairs as JSONL, preserving per-pair query ids."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (winner_id, loser_id), query_id in zip(dataset.pairs, dataset.query_ids):
            record: dict = {"winner": winner_id, "loser": loser_id}
            if query_id is not None:
                record["query_id"] = query_id
            fh.write(json.dumps(record) + "\n")


def load_pairs(path, table: EmbeddingTable) -> PreferenceDataset:
    """Read JSONL preference records against ``table``.

    Tie records are dropped and counted in ``ties_dropped``. Unresolvable
    ids and self-pairs fail with the offending line number.
    """
    pairs: list[tuple[str, str]] = []
    query_ids: list[str | None] = []
    ties = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if not isinstance(record, dict):
                raise ParseError(f"{path}: line {lineno}: record must be an object")
            tie = record.get("tie", False)
            if not isinstance(tie, bool):
                raise ParseError(f"{path}: line {lineno}: 'tie' must be a boolean")
            if tie:
                ties += 1
                continue
            winner_id = record.get("winner")
            loser_id = record.get("loser")
            if not isinstance(winner_id, str) or not isinstance(loser_id, str):
                raise ParseError(
                    f"{path}: line {lineno}: 'winner' and 'loser' must be strings"
                )
            if winner_id == loser_id:
                raise ValidationError(f"{path}: line {lineno}: self-pair {winner_id!r}")
            for rid in (winner_id, loser_id):
                if not table.has_id(rid):
                    raise ValidationError(f"{path}: line {lineno}: unknown id {rid!r}")
            query_id = record.get("query_id")
            if query_id is not None and not isinstance(query_id, str):
                raise ParseError(f"{path}: line {lineno}: 'query_id' must be a string")
            pairs.append((winner_id, loser_id))
            query_ids.append(query_id)
    return PreferenceDataset(
        pairs=pairs, table=table, query_ids=query_ids, ties_dropped=ties
    )


def split(
    dataset: PreferenceDataset, n_train: int, seed: int
) -> tuple[PreferenceDataset, PreferenceDataset]:
    """Seeded uniform split into (train of size ``n_train``, the rest).

    Same seed, same split; train and eval partition the dataset exactly.
    """
    if not 0 <= n_train <= len(dataset):
        raise DomainError(
            f"n_train must be in [0, {len(dataset)}], got {n_train}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    return dataset.subset(order[:n_train]), dataset.subset(order[n_train:])


def pairs_from_scores(
    table: EmbeddingTable,
    high_quantile: float,
    low_quantile: float,
    n_pairs: int,
    seed: int,
) -> PreferenceDataset:
    """Build pairs by sampling winners from the top score band and losers
    from the bottom one.

    Bands are the strict top ``high_quantile`` and bottom ``low_quantile``
    fractions by score; rows exactly on a quantile cut belong to neither
    band, which keeps every winner's score strictly above every loser's.
    Sampling is uniform with replacement, seeded.
    """
    if not (0 < high_quantile < 1 and 0 < low_quantile < 1):
        raise DomainError("quantiles must lie strictly inside (0, 1)")
    if high_quantile + low_quantile > 1:
        raise DomainError("quantile bands must not overlap (sum must be <= 1)")
    if n_pairs < 0:
        raise DomainError(f"n_pairs must be >= 0, got {n_pairs}")
    missing = [rid for rid, s in zip(table.ids, table.scores) if s is None]
    if missing:
        raise ValidationError(
            f"missing scores for {len(missing)} rows (first: {missing[0]!r})"
        )
    scores = np.array([float(s) for s in table.scores])
    high_cut = float(np.quantile(scores, 1.0 - high_quantile))
    low_cut = float(np.quantile(scores, low_quantile))
    high_rows = np.flatnonzero(scores > high_cut)
    low_rows = np.flatnonzero(scores < low_cut)
    if high_rows.size == 0:
        raise ValidationError("empty high band after quantile cut")
    if low_rows.size == 0:
        raise ValidationError("empty low band after quantile cut")
    rng = np.random.default_rng(seed)
    winners = rng.choice(high_rows, size=n_pairs, replace=True)
    losers = rng.choice(low_rows, size=n_pairs, replace=True)
    pairs = [
        (table.ids[int(w)], table.ids[int(l)]) for w, l in zip(winners, losers)
    ]
    return PreferenceDataset(pairs=pairs, table=table)
