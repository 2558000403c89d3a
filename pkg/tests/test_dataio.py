"""File format, ingestion, splitting, and score-band pair construction."""

import json
import struct

import numpy as np
import pytest

from prefadapt import (
    CorruptionError,
    DomainError,
    EmbeddingTable,
    FormatError,
    ParseError,
    PreferenceDataset,
    ValidationError,
    load_embeddings,
    load_pairs,
    pairs_from_scores,
    save_embeddings,
    save_pairs,
    split,
)
from prefadapt.dataio import PEMB_MAGIC, PEMB_VERSION


def small_table(scores=None):
    return EmbeddingTable(
        ids=["a", "b", "c"],
        vectors=np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]),
        uris=["http://x/a.png", None, None],
        scores=scores,
    )


def random_table(rng, n, d, with_scores=False):
    return EmbeddingTable(
        ids=[f"row-{i:04d}" for i in range(n)],
        vectors=rng.standard_normal((n, d)),
        scores=list(rng.uniform(0, 1, size=n)) if with_scores else None,
    )


def write_files(table, tmp_path, stem="emb"):
    matrix = tmp_path / f"{stem}.pemb"
    meta = tmp_path / f"{stem}.meta.jsonl"
    save_embeddings(table, matrix, meta)
    return matrix, meta


class TestEmbeddingTable:
    def test_lookup(self):
        table = small_table()
        assert len(table) == 3
        assert table.dim == 2
        assert table.row_index("b") == 1
        np.testing.assert_array_equal(table.vector("c"), [0.6, 0.8])

    def test_unknown_id(self):
        with pytest.raises(ValidationError, match="'zz'"):
            small_table().row_index("zz")

    def test_duplicate_id_named(self):
        with pytest.raises(ValidationError, match="'a'"):
            EmbeddingTable(ids=["a", "a"], vectors=np.zeros((2, 2)))

    def test_non_finite_named_with_index(self):
        with pytest.raises(ValidationError, match=r"'b'.*index 1"):
            EmbeddingTable(
                ids=["a", "b"], vectors=np.array([[0.0, 1.0], [1.0, np.nan]])
            )


class TestPembFormat:
    def test_header_layout(self, tmp_path):
        table = EmbeddingTable(ids=["a"], vectors=np.array([[1.0, 0.0]]))
        matrix, _ = write_files(table, tmp_path)
        raw = matrix.read_bytes()
        assert raw[0:4] == PEMB_MAGIC == b"PEMB"
        assert raw[4] == PEMB_VERSION == 1
        assert raw[5:8] == b"\x00\x00\x00"
        assert struct.unpack("<I", raw[8:12])[0] == 2  # dimension
        assert struct.unpack("<Q", raw[12:20])[0] == 1  # rows
        assert len(raw) == 20 + 2 * 4

    def test_minimal_roundtrip(self, tmp_path):
        table = EmbeddingTable(ids=["a"], vectors=np.array([[1.0, 0.0]]))
        loaded = load_embeddings(*write_files(table, tmp_path))
        assert loaded.ids == ["a"]
        np.testing.assert_array_equal(loaded.vectors, [[1.0, 0.0]])

    def test_payload_bytes_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        table = random_table(rng, n=3, d=4)
        matrix1, meta1 = write_files(table, tmp_path, "one")
        loaded = load_embeddings(matrix1, meta1)
        matrix2, meta2 = write_files(loaded, tmp_path, "two")
        assert matrix1.read_bytes() == matrix2.read_bytes()
        assert meta1.read_text() == meta2.read_text()
        # values agree at 32-bit precision
        np.testing.assert_array_equal(
            loaded.vectors, table.vectors.astype(np.float32).astype(np.float64)
        )

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(8)
        table = random_table(rng, n=5, d=3, with_scores=True)
        m1, _ = write_files(table, tmp_path, "first")
        m2, _ = write_files(table, tmp_path, "second")
        assert m1.read_bytes() == m2.read_bytes()

    def test_empty_table(self, tmp_path):
        table = EmbeddingTable(ids=[], vectors=np.zeros((0, 4)))
        loaded = load_embeddings(*write_files(table, tmp_path))
        assert len(loaded) == 0
        assert loaded.dim == 4

    def test_meta_preserved(self, tmp_path):
        table = small_table(scores=[0.5, None, 1.5])
        loaded = load_embeddings(*write_files(table, tmp_path))
        assert loaded.uris == ["http://x/a.png", None, None]
        assert loaded.scores == [0.5, None, 1.5]

    def test_truncated_payload_rejected(self, tmp_path):
        matrix, meta = write_files(small_table(), tmp_path)
        raw = matrix.read_bytes()
        matrix.write_bytes(raw[:-4])
        with pytest.raises(CorruptionError, match="payload"):
            load_embeddings(matrix, meta)

    def test_short_header_rejected(self, tmp_path):
        matrix, meta = write_files(small_table(), tmp_path)
        matrix.write_bytes(b"PEMB")
        with pytest.raises(CorruptionError, match="too short"):
            load_embeddings(matrix, meta)

    def test_bad_magic_rejected(self, tmp_path):
        matrix, meta = write_files(small_table(), tmp_path)
        raw = bytearray(matrix.read_bytes())
        raw[0:4] = b"NOPE"
        matrix.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            load_embeddings(matrix, meta)

    def test_bad_version_rejected(self, tmp_path):
        matrix, meta = write_files(small_table(), tmp_path)
        raw = bytearray(matrix.read_bytes())
        raw[4] = 2
        matrix.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            load_embeddings(matrix, meta)

    def test_nan_component_rejected_on_load(self, tmp_path):
        matrix, meta = write_files(small_table(), tmp_path)
        raw = bytearray(matrix.read_bytes())
        raw[20:24] = struct.pack("<f", float("nan"))
        matrix.write_bytes(bytes(raw))
        with pytest.raises(ValidationError, match=r"'a'.*index 0"):
            load_embeddings(matrix, meta)

    def test_duplicate_meta_id_rejected(self, tmp_path):
        matrix, meta = write_files(small_table(), tmp_path)
        lines = meta.read_text().splitlines()
        record = json.loads(lines[1])
        record["id"] = "a"
        lines[1] = json.dumps(record)
        meta.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValidationError, match="'a'"):
            load_embeddings(matrix, meta)

    def test_missing_meta_row_rejected(self, tmp_path):
        matrix, meta = write_files(small_table(), tmp_path)
        lines = meta.read_text().splitlines()
        meta.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ValidationError, match="missing metadata"):
            load_embeddings(matrix, meta)

    def test_malformed_meta_line_rejected(self, tmp_path):
        matrix, meta = write_files(small_table(), tmp_path)
        meta.write_text(meta.read_text() + "{not json\n")
        with pytest.raises(ParseError, match="line 4"):
            load_embeddings(matrix, meta)

    def test_many_random_tables_roundtrip(self, tmp_path):
        rng = np.random.default_rng(99)
        for case in range(25):
            n = int(rng.integers(0, 12))
            d = int(rng.integers(1, 9))
            table = EmbeddingTable(
                ids=[f"t{case}-{i}" for i in range(n)],
                vectors=rng.standard_normal((n, d)),
            )
            m1, meta1 = write_files(table, tmp_path, f"case{case}a")
            loaded = load_embeddings(m1, meta1)
            m2, meta2 = write_files(loaded, tmp_path, f"case{case}b")
            assert m1.read_bytes() == m2.read_bytes()
            assert meta1.read_text() == meta2.read_text()


class TestPairsIO:
    def test_basic_load(self, tmp_path):
        table = small_table()
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"winner":"a","loser":"b"}\n')
        ds = load_pairs(path, table)
        assert ds.pairs == [("a", "b")]
        assert ds.ties_dropped == 0

    def test_tie_dropped_and_counted(self, tmp_path):
        table = small_table()
        path = tmp_path / "pairs.jsonl"
        path.write_text(
            '{"winner":"a","loser":"b"}\n'
            '{"winner":"a","loser":"c","tie":true}\n'
            '{"winner":"c","loser":"b","tie":false}\n'
        )
        ds = load_pairs(path, table)
        assert ds.pairs == [("a", "b"), ("c", "b")]
        assert ds.ties_dropped == 1

    def test_unknown_id_with_line_number(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"winner":"a","loser":"b"}\n{"winner":"a","loser":"zz"}\n')
        with pytest.raises(ValidationError, match=r"line 2.*'zz'"):
            load_pairs(path, small_table())

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"winner":"a","loser":"b"}\nnot json at all\n')
        with pytest.raises(ParseError, match="line 2"):
            load_pairs(path, small_table())

    def test_self_pair_rejected(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text('{"winner":"a","loser":"a"}\n')
        with pytest.raises(ValidationError, match="self-pair"):
            load_pairs(path, small_table())

    def test_query_id_roundtrip(self, tmp_path):
        table = small_table()
        ds = PreferenceDataset(
            pairs=[("a", "b"), ("b", "c")],
            table=table,
            query_ids=["q1", None],
        )
        path = tmp_path / "pairs.jsonl"
        save_pairs(ds, path)
        loaded = load_pairs(path, table)
        assert loaded.pairs == ds.pairs
        assert loaded.query_ids == ["q1", None]

    def test_loaded_pairs_never_tie_or_self_pair(self, tmp_path):
        rng = np.random.default_rng(3)
        table = random_table(rng, 10, 3)
        path = tmp_path / "pairs.jsonl"
        with open(path, "w") as fh:
            for _ in range(100):
                a, b = rng.choice(10, size=2, replace=False)
                record = {"winner": table.ids[a], "loser": table.ids[b]}
                if rng.random() < 0.2:
                    record["tie"] = True
                fh.write(json.dumps(record) + "\n")
        ds = load_pairs(path, table)
        for winner_id, loser_id in ds.pairs:
            assert winner_id != loser_id
        assert len(ds) + ds.ties_dropped == 100


class TestSplit:
    def pool(self, n=10):
        rng = np.random.default_rng(123)
        table = random_table(rng, 20, 3)
        pairs = []
        while len(pairs) < n:
            a, b = rng.choice(20, size=2, replace=False)
            pairs.append((table.ids[a], table.ids[b]))
        return PreferenceDataset(pairs=pairs, table=table)

    def test_empty_train(self):
        ds = self.pool()
        train, evalset = split(ds, 0, seed=1)
        assert len(train) == 0
        assert len(evalset) == len(ds)

    def test_full_train(self):
        ds = self.pool()
        train, evalset = split(ds, len(ds), seed=1)
        assert len(train) == len(ds)
        assert len(evalset) == 0

    def test_same_seed_same_split(self):
        ds = self.pool()
        first = split(ds, 4, seed=42)
        second = split(ds, 4, seed=42)
        assert first[0].pairs == second[0].pairs
        assert first[1].pairs == second[1].pairs

    def test_partition_exhaustive(self):
        # every n_train, several seeds: train and eval partition the pool
        ds = self.pool(10)
        universe = sorted(ds.pairs)
        for n_train in range(len(ds) + 1):
            for seed in range(5):
                train, evalset = split(ds, n_train, seed)
                assert len(train) == n_train
                assert len(evalset) == len(ds) - n_train
                assert sorted(train.pairs + evalset.pairs) == universe

    def test_out_of_range(self):
        ds = self.pool()
        with pytest.raises(DomainError):
            split(ds, -1, seed=0)
        with pytest.raises(DomainError):
            split(ds, len(ds) + 1, seed=0)


class TestPairsFromScores:
    def test_two_rows_only_possibility(self):
        table = EmbeddingTable(
            ids=["a", "b"],
            vectors=np.array([[1.0, 0.0], [0.0, 1.0]]),
            scores=[1.0, 0.0],
        )
        ds = pairs_from_scores(table, 0.5, 0.5, n_pairs=1, seed=0)
        assert ds.pairs == [("a", "b")]

    def test_equal_scores_is_empty_band(self):
        table = EmbeddingTable(
            ids=["a", "b", "c"],
            vectors=np.eye(3),
            scores=[0.7, 0.7, 0.7],
        )
        with pytest.raises(ValidationError, match="empty.*band"):
            pairs_from_scores(table, 0.3, 0.3, n_pairs=5, seed=0)

    def test_missing_scores(self):
        with pytest.raises(ValidationError, match="missing scores"):
            pairs_from_scores(small_table(), 0.3, 0.3, n_pairs=1, seed=0)

    def test_band_membership_against_independent_cut(self):
        rng = np.random.default_rng(11)
        scores = list(rng.permutation(100).astype(float))
        table = EmbeddingTable(
            ids=[f"s{i:03d}" for i in range(100)],
            vectors=rng.standard_normal((100, 4)),
            scores=scores,
        )
        ds = pairs_from_scores(table, 0.2, 0.2, n_pairs=50, seed=5)
        assert len(ds) == 50
        # independent oracle: sort ids by score, take top/bottom 20
        by_score = sorted(range(100), key=lambda i: scores[i])
        bottom = {table.ids[i] for i in by_score[:20]}
        top = {table.ids[i] for i in by_score[-20:]}
        for winner_id, loser_id in ds.pairs:
            assert winner_id in top
            assert loser_id in bottom

    def test_winner_score_always_above_loser(self):
        rng = np.random.default_rng(12)
        # duplicated score values exercise the boundary rule
        scores = list(rng.integers(0, 10, size=60).astype(float))
        table = EmbeddingTable(
            ids=[f"r{i:03d}" for i in range(60)],
            vectors=rng.standard_normal((60, 3)),
            scores=scores,
        )
        ds = pairs_from_scores(table, 0.25, 0.25, n_pairs=200, seed=6)
        for winner_id, loser_id in ds.pairs:
            w = table.scores[table.row_index(winner_id)]
            l = table.scores[table.row_index(loser_id)]
            assert w > l

    def test_quantile_validation(self):
        table = EmbeddingTable(
            ids=["a", "b"], vectors=np.eye(2), scores=[1.0, 0.0]
        )
        with pytest.raises(DomainError):
            pairs_from_scores(table, 0.0, 0.5, 1, 0)
        with pytest.raises(DomainError):
            pairs_from_scores(table, 0.6, 0.6, 1, 0)
