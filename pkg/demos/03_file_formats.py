"""Tour the on-disk formats: the PEMB binary container and JSONL pairs.

Shows the exact header bytes, proves the save/load round-trip is
bit-identical, and demonstrates how tie records are dropped (and counted)
at ingestion.
"""

import tempfile
from pathlib import Path

import numpy as np

from prefadapt import EmbeddingTable, load_embeddings, load_pairs, save_embeddings

work = Path(tempfile.mkdtemp(prefix="prefadapt-demo-"))
table = EmbeddingTable(
    ids=["sunset", "harbor", "forest"],
    vectors=np.array([[0.6, 0.8], [1.0, 0.0], [0.0, 1.0]]),
    uris=["https://img.example/sunset.jpg", None, None],
    scores=[4.5, 2.0, 3.25],
)

matrix = work / "demo.pemb"
meta = work / "demo.meta.jsonl"
save_embeddings(table, matrix, meta)

raw = matrix.read_bytes()
print(f"wrote {matrix} ({len(raw)} bytes)")
print("header:", raw[:20].hex(" "))
print('  magic="PEMB" version=1 reserved=000000 d=2 (u32 LE) n=3 (u64 LE)')
print("payload: 3 rows x 2 float32, row-major\n")

print("metadata sidecar:")
print(meta.read_text())

loaded = load_embeddings(matrix, meta)
matrix2 = work / "again.pemb"
meta2 = work / "again.meta.jsonl"
save_embeddings(loaded, matrix2, meta2)
print("save -> load -> save is bit-identical:",
      matrix.read_bytes() == matrix2.read_bytes())

pairs_path = work / "votes.jsonl"
pairs_path.write_text(
    '{"winner":"sunset","loser":"harbor"}\n'
    '{"winner":"forest","loser":"harbor","query_id":"landscape"}\n'
    '{"winner":"sunset","loser":"forest","tie":true}\n'
)
dataset = load_pairs(pairs_path, loaded)
print(f"\nloaded {len(dataset)} pairs, {dataset.ties_dropped} tie dropped:")
for (winner, loser), query in zip(dataset.pairs, dataset.query_ids):
    print(f"  {winner} beat {loser}" + (f"  (query {query})" if query else ""))
