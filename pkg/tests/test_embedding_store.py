import json
import math
import os
import struct

import numpy as np
import pytest

from disagree_kit.embedding_store import create_store, open_store, store_dir_name, write_store
from disagree_kit.errors import CorruptStore, DimensionMismatch, DuplicateKey, MissingVector


def test_put_get_roundtrip(tmp_path):
    store = create_store(str(tmp_path / "s"), "model", 3, dim=2)
    store.put_vector(("p1", 1), [0.5, -1.25])
    assert store.get_vector(("p1", 1)).tolist() == [0.5, -1.25]
    assert store.get_vector(("p1", 1)).dtype == np.float64


def test_missing_key(tmp_path):
    store = create_store(str(tmp_path / "s"), "model", 0, dim=2)
    with pytest.raises(MissingVector):
        store.get_vector(("nope", 1))


def test_bit_exact_special_floats(tmp_path):
    specials = [0.0, -0.0, 1.5, -1.5, 1e-45, -1e-45, 3.4e38, 1.1754942e-38, math.pi]
    as_f32 = np.array(specials, dtype="<f4")
    store = create_store(str(tmp_path / "s"), "model", 0, dim=len(specials))
    store.put_vector(("p", 1), as_f32)
    back = store.get_vector(("p", 1)).astype("<f4")
    assert back.tobytes() == as_f32.tobytes()  # includes -0.0 and subnormals

    reopened = open_store(str(tmp_path / "s"))
    assert reopened.get_vector(("p", 1)).astype("<f4").tobytes() == as_f32.tobytes()


def test_vectors_file_is_plain_little_endian(tmp_path):
    store = create_store(str(tmp_path / "s"), "model", 0, dim=2)
    store.put_vector(("a", 1), [1.0, 2.0])
    store.put_vector(("a", 2), [3.0, 4.0])
    raw = (tmp_path / "s" / "vectors.bin").read_bytes()
    assert raw == struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)
    index = (tmp_path / "s" / "index.tsv").read_text()
    assert index == "0\ta\t1\n1\ta\t2\n"


def test_get_matrix_matches_get_vector(tmp_path):
    rng = np.random.default_rng(0)
    store = create_store(str(tmp_path / "s"), "m", 1, dim=4)
    keys = [(f"p{i}", side) for i in range(5) for side in (1, 2)]
    for key in keys:
        store.put_vector(key, rng.normal(size=4))
    matrix = store.get_matrix(keys)
    for r, key in enumerate(keys):
        assert (matrix[r] == store.get_vector(key)).all()


def test_duplicate_and_dimension_errors(tmp_path):
    store = create_store(str(tmp_path / "s"), "m", 0, dim=2)
    store.put_vector(("p", 1), [1.0, 2.0])
    with pytest.raises(DuplicateKey):
        store.put_vector(("p", 1), [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        store.put_vector(("p", 2), [1.0, 2.0, 3.0])


def test_open_store_detects_size_mismatch(tmp_path):
    store = create_store(str(tmp_path / "s"), "m", 0, dim=3)
    store.put_vector(("p", 1), [1.0, 2.0, 3.0])
    manifest_path = tmp_path / "s" / "manifest.json"
    doc = json.loads(manifest_path.read_text())
    doc["dim"] = 2  # 8 bytes per row claimed, 12 on disk
    manifest_path.write_text(json.dumps(doc))
    with pytest.raises(CorruptStore):
        open_store(str(tmp_path / "s"))


def test_open_store_detects_count_mismatch(tmp_path):
    store = create_store(str(tmp_path / "s"), "m", 0, dim=2)
    store.put_vector(("p", 1), [1.0, 2.0])
    with open(tmp_path / "s" / "index.tsv", "a", encoding="utf-8") as fh:
        fh.write("1\tq\t1\n")
    with pytest.raises(CorruptStore):
        open_store(str(tmp_path / "s"))


def test_open_store_missing_manifest(tmp_path):
    os.makedirs(tmp_path / "empty")
    with pytest.raises(CorruptStore):
        open_store(str(tmp_path / "empty"))


def test_write_store_bulk_equals_incremental(tmp_path):
    rng = np.random.default_rng(5)
    entries = [((f"p{i}", side), rng.normal(size=3).astype("<f4")) for i in range(4) for side in (1, 2)]
    write_store(str(tmp_path / "bulk"), "m", 2, 3, entries)
    inc = create_store(str(tmp_path / "inc"), "m", 2, dim=3)
    for key, vec in entries:
        inc.put_vector(key, vec)
    assert (tmp_path / "bulk" / "vectors.bin").read_bytes() == (tmp_path / "inc" / "vectors.bin").read_bytes()
    assert (tmp_path / "bulk" / "index.tsv").read_text() == (tmp_path / "inc" / "index.tsv").read_text()
    assert (tmp_path / "bulk" / "manifest.json").read_text() == (tmp_path / "inc" / "manifest.json").read_text()


def test_store_dir_name():
    assert store_dir_name("XLM-RoBERTa-base", 10) == "XLM-RoBERTa-base_L10"
