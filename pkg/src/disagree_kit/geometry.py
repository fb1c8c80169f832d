"""Anisotropy-removal transforms and cosine relatedness scoring.

Contextual embeddings cluster in a narrow cone, which inflates pairwise
cosine similarity; centering, standardization, and top-component removal
counteract that. Statistics are fitted once (normally on the training
split's pooled vectors) and then applied frozen.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core_model import UsagePair
from .errors import DegenerateSpectrum, DimensionMismatch, MissingVector, ZeroVector

TRANSFORM_KINDS = ("none", "center", "standardize", "abtt")

# Column std below this counts as constant; cosine norms below it as zero.
_DEGENERATE_STD = 1e-12
_ZERO_NORM = 1e-12

_POWER_TOL = 1e-10
_POWER_MAX_ITER = 1000


@dataclass(frozen=True)
class TransformStats:
    """Frozen anisotropy-removal statistics for one embedding population."""

    kind: str
    mean: np.ndarray
    scale: Optional[np.ndarray] = None
    principal: Optional[np.ndarray] = None
    fitted_on: int = 0

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.principal is not None:
            norm = float(np.linalg.norm(self.principal))
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"principal direction not unit length: {norm}")

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "mean": self.mean.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
            "principal": None if self.principal is None else self.principal.tolist(),
            "fitted_on": self.fitted_on,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TransformStats":
        doc = json.loads(text)
        return cls(
            kind=doc["kind"],
            mean=np.asarray(doc["mean"], dtype=float),
            scale=None if doc["scale"] is None else np.asarray(doc["scale"], dtype=float),
            principal=None if doc["principal"] is None else np.asarray(doc["principal"], dtype=float),
            fitted_on=int(doc["fitted_on"]),
        )


def _dominant_direction(centered: np.ndarray) -> np.ndarray:
    """Power iteration for the top eigenvector of centered^T centered.

    Deterministic start (normalized all-ones); if that start is orthogonal
    to the row space the iteration restarts once from the axis of largest
    variance. The sign is fixed so the first non-negligible coordinate is
    positive.
    """
    dim = centered.shape[1]
    s = centered.T @ centered
    v = np.ones(dim) / np.sqrt(dim)
    restarted = False
    for _ in range(_POWER_MAX_ITER):
        w = s @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            if restarted:
                raise DegenerateSpectrum("power iteration collapsed twice")
            v = np.zeros(dim)
            v[int(np.argmax(np.diag(s)))] = 1.0
            restarted = True
            continue
        w /= norm
        if float(np.linalg.norm(w - v)) < _POWER_TOL:
            v = w
            break
        v = w
    nonzero = np.nonzero(np.abs(v) > _DEGENERATE_STD)[0]
    if len(nonzero) and v[nonzero[0]] < 0:
        v = -v
    return v


def fit_transform(kind: str, matrix: np.ndarray) -> TransformStats:
    """Fit transform statistics on an n x dim matrix of vectors."""
    if kind not in TRANSFORM_KINDS:
        raise ValueError(f"unknown transform kind {kind!r}")
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise DimensionMismatch(f"expected 2-d matrix, got shape {matrix.shape}")
    n = matrix.shape[0]
    minimum = 2 if kind in ("standardize", "abtt") else 1
    if n < minimum:
        raise ValueError(f"{kind} needs at least {minimum} rows, got {n}")

    mean = matrix.mean(axis=0)
    scale = None
    principal = None
    if kind == "standardize":
        scale = matrix.std(axis=0)  # population (1/n) std
        scale = np.where(scale < _DEGENERATE_STD, 1.0, scale)
    elif kind == "abtt":
        centered = matrix - mean
        if not np.any(centered):
            raise DegenerateSpectrum("all rows identical; no principal direction")
        principal = _dominant_direction(centered)
    return TransformStats(kind=kind, mean=mean, scale=scale, principal=principal, fitted_on=n)


def apply_transform(stats: TransformStats, matrix: np.ndarray) -> np.ndarray:
    """Apply fitted statistics to a vector or a row matrix."""
    arr = np.asarray(matrix, dtype=float)
    single = arr.ndim == 1
    rows = np.atleast_2d(arr)
    if rows.shape[1] != stats.dim:
        raise DimensionMismatch(f"vectors have dim {rows.shape[1]}, stats expect {stats.dim}")
    if stats.kind == "none":
        out = rows.copy()
    elif stats.kind == "center":
        out = rows - stats.mean
    elif stats.kind == "standardize":
        out = (rows - stats.mean) / stats.scale
    else:  # abtt
        centered = rows - stats.mean
        coeff = centered @ stats.principal
        out = centered - np.outer(coeff, stats.principal)
    return out[0] if single else out


def cosine_score(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between u and v, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"shape mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < _ZERO_NORM or nv < _ZERO_NORM:
        raise ZeroVector(f"cosine of (near-)zero vector: norms {nu:.3e}, {nv:.3e}")
    return min(1.0, max(-1.0, float(u @ v) / (nu * nv)))


def score_pair(store, stats: TransformStats, pair: UsagePair) -> float:
    """Transform both side vectors of one pair and return their cosine."""
    try:
        v1 = apply_transform(stats, store.get_vector((pair.instance_id, 1)))
        v2 = apply_transform(stats, store.get_vector((pair.instance_id, 2)))
        return cosine_score(v1, v2)
    except MissingVector as err:
        raise MissingVector(f"{pair.instance_id}: {err}", key=err.key, instance_id=pair.instance_id) from err
    except ZeroVector as err:
        raise ZeroVector(f"{pair.instance_id}: {err}", instance_id=pair.instance_id) from err


def score_pairs(store, stats: TransformStats, usage_pairs: Iterable[UsagePair]) -> dict[str, float]:
    """Relatedness score per instance id; fails on the first bad pair."""
    return {pair.instance_id: score_pair(store, stats, pair) for pair in usage_pairs}


def pooled_vectors(store, usage_pairs: Iterable[UsagePair]) -> np.ndarray:
    """Stack both side vectors of the given pairs, in pair order."""
    keys = []
    for pair in usage_pairs:
        keys.append((pair.instance_id, 1))
        keys.append((pair.instance_id, 2))
    return store.get_matrix(keys)
