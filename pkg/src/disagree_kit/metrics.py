"""Agreement and correlation metrics.

Krippendorff's alpha is the threshold-fitting objective and the Subtask 1
score; Spearman's rho scores Subtask 2. Both are pure functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UndefinedAlpha, UndefinedCorrelation

LEVELS = ("nominal", "ordinal", "interval")


@dataclass(frozen=True)
class AlphaSpec:
    level: str = "ordinal"
    num_categories: int = 4

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown difference level {self.level!r}")
        if self.num_categories < 2:
            raise ValueError("need at least 2 categories")


def _missing(v) -> bool:
    return v is None or (isinstance(v, (float, np.floating)) and math.isnan(v))


def _pairable_units(ratings) -> list[list[float]]:
    """Non-missing values per item, keeping only items with >= 2 ratings."""
    units = []
    for row in ratings:
        vals = [float(v) for v in row if not _missing(v)]
        if len(vals) >= 2:
            units.append(vals)
    return units


def _delta_sq(values: np.ndarray, marginals: np.ndarray, level: str) -> np.ndarray:
    """Pairwise squared difference matrix over the observed categories."""
    k = len(values)
    if level == "nominal":
        return 1.0 - np.eye(k)
    if level == "interval":
        d = values[:, None] - values[None, :]
        return d * d
    # ordinal: cumulative marginal mass between the two categories,
    # minus half of each endpoint's own mass
    cum = np.concatenate([[0.0], np.cumsum(marginals)])
    out = np.zeros((k, k))
    for c in range(k):
        for kk in range(c, k):
            span = cum[kk + 1] - cum[c]
            d = span - (marginals[c] + marginals[kk]) / 2.0
            out[c, kk] = out[kk, c] = d * d
    return out


def krippendorff_alpha(ratings, spec: AlphaSpec = AlphaSpec()) -> float:
    """Chance-corrected agreement over an items x raters matrix.

    `ratings` is a sequence of per-item rating sequences; missing cells are
    None or NaN. Items with fewer than two ratings are excluded. Returns
    exactly 1.0 under perfect agreement.
    """
    units = _pairable_units(ratings)
    if len(units) < 2:
        raise UndefinedAlpha(f"need >= 2 items with >= 2 ratings, got {len(units)}")

    values = np.array(sorted({v for unit in units for v in unit}))
    if len(values) < 2:
        raise UndefinedAlpha("all pairable ratings identical; expected disagreement is zero")
    index = {v: i for i, v in enumerate(values)}
    k = len(values)

    # Coincidence matrix: each ordered within-unit pair contributes 1/(m-1).
    # Marginals are taken as exact category counts (the row sums equal them
    # mathematically but accumulate float noise for unit sizes > 2).
    coincidence = np.zeros((k, k))
    marginals = np.zeros(k)
    for unit in units:
        m = len(unit)
        w = 1.0 / (m - 1)
        for a in range(m):
            marginals[index[unit[a]]] += 1.0
            for b in range(m):
                if a != b:
                    coincidence[index[unit[a]], index[unit[b]]] += w
    n = marginals.sum()

    dsq = _delta_sq(values, marginals, spec.level)
    d_obs = float((coincidence * dsq).sum()) / n
    d_exp = float((np.outer(marginals, marginals) * dsq).sum()) / (n * (n - 1.0))
    if d_exp == 0.0:
        raise UndefinedAlpha("expected disagreement is zero")
    if d_obs == 0.0:
        return 1.0
    return 1.0 - d_obs / d_exp


def fractional_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties assigned the average rank of their run."""
    v = np.asarray(x, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    sorted_v = v[order]
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of fractional ranks, in [-1, 1]."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise UndefinedCorrelation(f"need >= 2 points, got {len(x)}")
    rx = fractional_ranks(x)
    ry = fractional_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx2 = float((dx * dx).sum())
    sy2 = float((dy * dy).sum())
    if sx2 == 0.0 or sy2 == 0.0:
        raise UndefinedCorrelation("constant input has no rank correlation")
    # single sqrt of the product keeps rho(x, x) at exactly 1.0
    rho = float((dx * dy).sum()) / math.sqrt(sx2 * sy2)
    return min(1.0, max(-1.0, rho))
