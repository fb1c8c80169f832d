"""Bit-exact on-disk store of target-word vectors.

Layout, one directory per (model, layer):

    manifest.json   {"model_id", "layer", "dim", "count", "dtype": "f32le", "created_by"}
    vectors.bin     row-major float32 little-endian, count x dim
    index.tsv       row<TAB>instance_id<TAB>side

float32 is a storage format only; vectors are promoted to float64 on load.
Concurrent readers are fine; writing assumes exclusive access to the
directory.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import CorruptStore, DimensionMismatch, DuplicateKey, MissingVector

MANIFEST_FILE = "manifest.json"
VECTORS_FILE = "vectors.bin"
INDEX_FILE = "index.tsv"

_MANIFEST_KEYS = ("model_id", "layer", "dim", "count", "dtype", "created_by")

VectorKey = tuple[str, int]  # (instance_id, side), side in {1, 2}


@dataclass(frozen=True)
class StoreManifest:
    model_id: str
    layer: int
    dim: int
    count: int
    dtype: str = "f32le"
    created_by: str = ""

    def __post_init__(self):
        if self.layer < 0 or self.dim <= 0 or self.count < 0:
            raise ValueError("layer/dim/count out of range")
        if self.dtype != "f32le":
            raise ValueError(f"unsupported dtype {self.dtype!r}")


class Store:
    """Handle over one store directory; the key index is kept in memory."""

    def __init__(self, directory: str, manifest: StoreManifest, index: dict[VectorKey, int]):
        self.directory = directory
        self.manifest = manifest
        self._index = index
        self._rows: np.ndarray | None = None  # lazy float32 image of vectors.bin

    def __contains__(self, key: VectorKey) -> bool:
        return key in self._index

    def keys(self) -> list[VectorKey]:
        return sorted(self._index, key=self._index.get)

    def _vectors(self) -> np.ndarray:
        if self._rows is None or self._rows.shape[0] != self.manifest.count:
            path = os.path.join(self.directory, VECTORS_FILE)
            raw = np.fromfile(path, dtype="<f4")
            self._rows = raw.reshape(self.manifest.count, self.manifest.dim)
        return self._rows

    def get_vector(self, key: VectorKey) -> np.ndarray:
        """Stored float32 bits of one vector, promoted to float64."""
        row = self._index.get(key)
        if row is None:
            raise MissingVector(f"no vector for {key} in {self.directory}", key=key)
        return self._vectors()[row].astype(np.float64)

    def get_matrix(self, keys: Sequence[VectorKey]) -> np.ndarray:
        """Vectors stacked in key order as an n x dim float64 matrix."""
        rows = self._vectors()
        out = np.empty((len(keys), self.manifest.dim), dtype=np.float64)
        for i, key in enumerate(keys):
            row = self._index.get(key)
            if row is None:
                raise MissingVector(f"no vector for {key} in {self.directory}", key=key)
            out[i] = rows[row]
        return out

    def put_vector(self, key: VectorKey, vector: Sequence[float]) -> None:
        """Append one vector; the write is flushed before returning."""
        if key in self._index:
            raise DuplicateKey(f"key {key} already stored")
        data = np.asarray(vector, dtype="<f4")
        if data.ndim != 1 or data.shape[0] != self.manifest.dim:
            raise DimensionMismatch(f"vector shape {data.shape}, store dim {self.manifest.dim}")
        row = self.manifest.count
        with open(os.path.join(self.directory, VECTORS_FILE), "ab") as fh:
            fh.write(data.tobytes())
        with open(os.path.join(self.directory, INDEX_FILE), "a", encoding="utf-8") as fh:
            fh.write(f"{row}\t{key[0]}\t{key[1]}\n")
        self.manifest = replace(self.manifest, count=row + 1)
        _write_manifest(self.directory, self.manifest)
        self._index[key] = row
        self._rows = None


def store_dir_name(model_id: str, layer: int) -> str:
    return f"{model_id}_L{layer}"


def _write_manifest(directory: str, manifest: StoreManifest) -> None:
    doc = {k: getattr(manifest, k) for k in _MANIFEST_KEYS}
    with open(os.path.join(directory, MANIFEST_FILE), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def create_store(directory: str, model_id: str, layer: int, dim: int, created_by: str = "") -> Store:
    """Create an empty store directory; fails if one already exists there."""
    os.makedirs(directory, exist_ok=False)
    manifest = StoreManifest(model_id=model_id, layer=layer, dim=dim, count=0, created_by=created_by)
    _write_manifest(directory, manifest)
    open(os.path.join(directory, VECTORS_FILE), "wb").close()
    open(os.path.join(directory, INDEX_FILE), "w", encoding="utf-8").close()
    return Store(directory, manifest, {})


def write_store(
    directory: str,
    model_id: str,
    layer: int,
    dim: int,
    entries,
    created_by: str = "",
) -> Store:
    """Create a store and write (key, vector) entries in one pass."""
    store = create_store(directory, model_id=model_id, layer=layer, dim=dim, created_by=created_by)
    index: dict[VectorKey, int] = {}
    with open(os.path.join(directory, VECTORS_FILE), "wb") as vec_fh, open(
        os.path.join(directory, INDEX_FILE), "w", encoding="utf-8"
    ) as idx_fh:
        row = 0
        for key, vector in entries:
            if key in index:
                raise DuplicateKey(f"key {key} already stored")
            data = np.asarray(vector, dtype="<f4")
            if data.ndim != 1 or data.shape[0] != dim:
                raise DimensionMismatch(f"vector shape {data.shape}, store dim {dim}")
            vec_fh.write(data.tobytes())
            idx_fh.write(f"{row}\t{key[0]}\t{key[1]}\n")
            index[key] = row
            row += 1
    store.manifest = replace(store.manifest, count=len(index))
    _write_manifest(directory, store.manifest)
    store._index = index
    store._rows = None
    return store


def open_store(directory: str) -> Store:
    """Open an existing store, verifying manifest/index/file-size consistency."""
    manifest_path = os.path.join(directory, MANIFEST_FILE)
    if not os.path.isfile(manifest_path):
        raise CorruptStore(f"no manifest at {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    missing = [k for k in _MANIFEST_KEYS if k not in doc]
    if missing:
        raise CorruptStore(f"manifest missing keys {missing}")
    try:
        manifest = StoreManifest(**{k: doc[k] for k in _MANIFEST_KEYS})
    except (TypeError, ValueError) as err:
        raise CorruptStore(f"bad manifest: {err}") from err

    index: dict[VectorKey, int] = {}
    with open(os.path.join(directory, INDEX_FILE), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise CorruptStore(f"index line {lineno}: expected 3 fields, got {len(parts)}")
            row, instance_id, side = int(parts[0]), parts[1], int(parts[2])
            if row != lineno:
                raise CorruptStore(f"index line {lineno}: row numbers must be contiguous, got {row}")
            if side not in (1, 2):
                raise CorruptStore(f"index line {lineno}: side must be 1 or 2, got {side}")
            key = (instance_id, side)
            if key in index:
                raise CorruptStore(f"index line {lineno}: duplicate key {key}")
            index[key] = row
    if len(index) != manifest.count:
        raise CorruptStore(f"manifest count {manifest.count} != {len(index)} index rows")

    expected = manifest.count * manifest.dim * 4
    actual = os.path.getsize(os.path.join(directory, VECTORS_FILE))
    if actual != expected:
        raise CorruptStore(f"vectors.bin is {actual} bytes, expected {expected}")
    return Store(directory, manifest, index)


def get_vector(store: Store, key: VectorKey) -> np.ndarray:
    return store.get_vector(key)


def get_matrix(store: Store, keys: Sequence[VectorKey]) -> np.ndarray:
    return store.get_matrix(keys)


def put_vector(store: Store, key: VectorKey, vector: Sequence[float]) -> None:
    store.put_vector(key, vector)
