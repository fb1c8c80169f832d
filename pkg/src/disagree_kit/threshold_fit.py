"""Threshold selection: Nelder-Mead search over bin edges maximizing
Krippendorff's alpha, plus score-to-label mapping.

The objective is piecewise constant in the edges, so the simplex search
runs from several deterministically perturbed starts and the best vertex
ever evaluated wins.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .core_model import ThresholdSet
from .errors import InvalidStart, UndefinedAlpha
from .metrics import AlphaSpec, krippendorff_alpha


@dataclass(frozen=True)
class SimplexConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    max_iter: int = 500
    f_tol: float = 1e-6
    x_tol: float = 1e-8
    restarts: int = 3

    def __post_init__(self):
        if min(self.reflection, self.expansion, self.contraction, self.shrink) <= 0:
            raise ValueError("simplex coefficients must be positive")
        if not (self.expansion > 1 > self.contraction):
            raise ValueError("need expansion > 1 > contraction")


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    start,
    config: SimplexConfig = SimplexConfig(),
) -> tuple[np.ndarray, float, int]:
    """Minimize `objective` from `start`; returns (argmin, value, iterations).

    Initial simplex: start plus a per-coordinate step of
    max(0.05, 0.05*|start_i|). Terminates once both the objective spread
    and the vertex spread across the simplex fall under the configured
    tolerances, or at max_iter.
    """
    start = np.asarray(start, dtype=float)
    n = len(start)
    simplex = [start.copy()]
    for i in range(n):
        vertex = start.copy()
        vertex[i] += max(0.05, 0.05 * abs(start[i]))
        simplex.append(vertex)
    values = []
    for vertex in simplex:
        f = float(objective(vertex))
        if not math.isfinite(f):
            raise InvalidStart(f"objective not finite at initial vertex {vertex}")
        values.append(f)

    iterations = 0
    while iterations < config.max_iter:
        order = sorted(range(n + 1), key=lambda i: values[i])  # stable on ties
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        # Both spreads must collapse: objective spread alone stalls when the
        # simplex straddles a minimum symmetrically (equal f, wide x).
        f_spread = values[-1] - values[0]
        x_spread = max(float(np.max(np.abs(v - simplex[0]))) for v in simplex[1:])
        if f_spread < config.f_tol and x_spread < config.x_tol:
            break
        iterations += 1

        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        reflected = centroid + config.reflection * (centroid - worst)
        f_reflected = float(objective(reflected))

        if f_reflected < values[0]:
            expanded = centroid + config.expansion * (reflected - centroid)
            f_expanded = float(objective(expanded))
            if f_expanded < f_reflected:
                simplex[-1], values[-1] = expanded, f_expanded
            else:
                simplex[-1], values[-1] = reflected, f_reflected
        elif f_reflected < values[-2]:
            simplex[-1], values[-1] = reflected, f_reflected
        else:
            if f_reflected < values[-1]:  # outside contraction
                contracted = centroid + config.contraction * (reflected - centroid)
                f_contracted = float(objective(contracted))
                accept = f_contracted <= f_reflected
            else:  # inside contraction
                contracted = centroid - config.contraction * (centroid - worst)
                f_contracted = float(objective(contracted))
                accept = f_contracted < values[-1]
            if accept:
                simplex[-1], values[-1] = contracted, f_contracted
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + config.shrink * (simplex[i] - simplex[0])
                    values[i] = float(objective(simplex[i]))

    order = sorted(range(n + 1), key=lambda i: values[i])
    return simplex[order[0]].copy(), values[order[0]], iterations


def map_score_to_label(score: float, thresholds: ThresholdSet) -> int:
    """1 + number of edges strictly below the score; boundary falls low."""
    return 1 + sum(1 for t in thresholds.edges if t < score)


def _canonical_edges(raw: np.ndarray) -> tuple[float, float, float]:
    """Sort, clamp into [-1, 1], and nudge ties apart by one ulp."""
    e = np.clip(np.sort(np.asarray(raw, dtype=float)), -1.0, 1.0)
    for i in (1, 2):
        if e[i] <= e[i - 1]:
            e[i] = np.nextafter(e[i - 1], np.inf)
    for i in (1, 0):  # nudging may have pushed past the top of the range
        if e[i + 1] > 1.0:
            e[i + 1] = 1.0
        if e[i] >= e[i + 1]:
            e[i] = np.nextafter(e[i + 1], -np.inf)
    return (float(e[0]), float(e[1]), float(e[2]))


def _labels_for_edges(scores: np.ndarray, edges: tuple[float, float, float]) -> np.ndarray:
    out = np.ones(len(scores), dtype=int)
    for t in edges:
        out += scores > t
    return out


def fit_thresholds(
    scores: Mapping[str, float],
    gold: Mapping[str, int],
    spec: AlphaSpec = AlphaSpec(),
    config: SimplexConfig = SimplexConfig(),
) -> tuple[ThresholdSet, float]:
    """Fit a ThresholdSet maximizing alpha between gold and mapped labels.

    Starts from edges evenly spaced over the observed score range; each
    restart r shifts the start by 0.02*r with alternating per-coordinate
    sign. The best canonicalized edge triple seen across all objective
    evaluations is returned together with its training alpha.
    """
    ids = sorted(gold)
    if not ids:
        raise UndefinedAlpha("no gold labels")
    missing = [i for i in ids if i not in scores]
    if missing:
        raise KeyError(f"no scores for gold ids {missing[:5]}")
    if len(set(gold[i] for i in ids)) < 2:
        raise UndefinedAlpha("gold labels are constant")
    score_vec = np.array([float(scores[i]) for i in ids])
    gold_vec = np.array([int(gold[i]) for i in ids])

    best: dict = {"alpha": -np.inf, "edges": None}

    def objective(raw: np.ndarray) -> float:
        edges = _canonical_edges(raw)
        labels = _labels_for_edges(score_vec, edges)
        try:
            alpha = krippendorff_alpha(np.stack([gold_vec, labels], axis=1), spec)
        except UndefinedAlpha:
            # gold varies, so this needs pooled values to collapse; penalize
            return 2.0
        if alpha > best["alpha"]:
            best["alpha"] = alpha
            best["edges"] = edges
        return -alpha

    lo = float(score_vec.min())
    hi = float(score_vec.max())
    base = lo + (hi - lo) * np.array([0.25, 0.5, 0.75])
    signs = np.array([1.0, -1.0, 1.0])
    for r in range(config.restarts):
        nelder_mead(objective, base + 0.02 * r * signs, config)

    if best["edges"] is None:
        raise UndefinedAlpha("alpha undefined at every evaluated edge placement")
    return ThresholdSet(edges=best["edges"]), float(best["alpha"])


def thresholds_to_json(thresholds: ThresholdSet, alpha_train: float, spec: AlphaSpec) -> str:
    doc = {
        "edges": list(thresholds.edges),
        "alpha_train": alpha_train,
        "spec": {"level": spec.level, "num_categories": spec.num_categories},
    }
    return json.dumps(doc, sort_keys=True)


def thresholds_from_json(text: str) -> tuple[ThresholdSet, float, AlphaSpec]:
    doc = json.loads(text)
    spec = AlphaSpec(level=doc["spec"]["level"], num_categories=int(doc["spec"]["num_categories"]))
    return ThresholdSet(edges=tuple(doc["edges"])), float(doc["alpha_train"]), spec
