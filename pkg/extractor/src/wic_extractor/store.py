"""Writer for the embedding-store directory layout.

Per (model, layer) directory: manifest.json, vectors.bin (row-major
float32 little-endian), index.tsv (row<TAB>instance_id<TAB>side). The
layout is the interchange contract with the downstream pipeline; nothing
here depends on that package.
"""
from __future__ import annotations

import json
import os

import numpy as np


class StoreWriter:
    def __init__(self, directory: str, model_id: str, layer: int, dim: int, created_by: str):
        os.makedirs(directory, exist_ok=False)
        self.directory = directory
        self.model_id = model_id
        self.layer = layer
        self.dim = dim
        self.created_by = created_by
        self._count = 0
        self._seen: set[tuple[str, int]] = set()
        self._vectors = open(os.path.join(directory, "vectors.bin"), "wb")
        self._index = open(os.path.join(directory, "index.tsv"), "w", encoding="utf-8")

    def put(self, instance_id: str, side: int, vector: np.ndarray) -> None:
        key = (instance_id, side)
        if key in self._seen:
            raise ValueError(f"duplicate key {key}")
        data = np.ascontiguousarray(vector, dtype="<f4")
        if data.ndim != 1 or data.shape[0] != self.dim:
            raise ValueError(f"vector shape {data.shape}, expected ({self.dim},)")
        self._vectors.write(data.tobytes())
        self._index.write(f"{self._count}\t{instance_id}\t{side}\n")
        self._seen.add(key)
        self._count += 1

    def close(self) -> None:
        self._vectors.close()
        self._index.close()
        manifest = {
            "model_id": self.model_id,
            "layer": self.layer,
            "dim": self.dim,
            "count": self._count,
            "dtype": "f32le",
            "created_by": self.created_by,
        }
        with open(os.path.join(self.directory, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")


def store_dir_name(model_id: str, layer: int) -> str:
    return f"{model_id}_L{layer}"
