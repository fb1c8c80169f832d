"""Virtual-annotator ensembling for disagreement prediction.

Each (model, layer, transform) configuration acts as one annotator; a
subset of them produces per-pair scores and labels, and a dispersion
measure over those readings estimates human disagreement. Subset k is a
pure function of (seed, k), so sampling parallelizes deterministically.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from .core_model import (
    TRANSFORM_BY_LETTER,
    AnnotatorConfig,
    UsagePair,
    format_annotator_code,
    mean_pairwise_difference,
)
from .errors import (
    InfeasibleStrategy,
    InsufficientAnnotators,
    InsufficientJudgments,
    MissingStore,
    MissingVector,
    UndefinedCorrelation,
    ZeroVector,
)
from .geometry import score_pair
from .metrics import spearman_rho
from .threshold_fit import map_score_to_label

STRATEGIES = ("homo", "hetero", "mixed")
MEASURES = ("std", "mpd", "vr")


@dataclass(frozen=True)
class EnsembleSpec:
    strategy: str
    pool: tuple
    seed: int
    subset_size: int = 4
    n_samples: int = 500

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.subset_size > len(self.pool):
            raise ValueError(f"subset size {self.subset_size} exceeds pool of {len(self.pool)}")
        if self.subset_size < 1 or self.n_samples < 1:
            raise ValueError("subset_size and n_samples must be positive")


@dataclass(frozen=True)
class Annotation:
    config: Hashable
    score: Optional[float]
    label: Optional[int]


AnnotationMatrix = dict[str, tuple[Annotation, ...]]


def full_grid() -> tuple[AnnotatorConfig, ...]:
    """All 64 annotator configurations in canonical code order."""
    grid = []
    for model in "ABCD":
        for layer_code in "hijk":
            for letter in "XYZW":
                grid.append(AnnotatorConfig(model=model, layer_code=layer_code, transform=TRANSFORM_BY_LETTER[letter]))
    return tuple(grid)


def subset_code(subset: Sequence[Hashable]) -> str:
    """Dashed code string, e.g. "AjY-AjZ-AiX-AiW"."""
    parts = []
    for cfg in subset:
        parts.append(format_annotator_code(cfg) if isinstance(cfg, AnnotatorConfig) else str(cfg))
    return "-".join(parts)


def _subset_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(k,))))


def _letters(pool: Sequence[Hashable]) -> dict[str, list]:
    by_letter: dict[str, list] = {}
    for cfg in pool:
        if not isinstance(cfg, AnnotatorConfig):
            raise InfeasibleStrategy(f"pool member {cfg!r} has no model letter")
        by_letter.setdefault(cfg.model, []).append(cfg)
    return by_letter


def sample_subset(spec: EnsembleSpec, k: int) -> tuple:
    """Sample subset number k; depends only on (spec, k)."""
    rng = _subset_rng(spec.seed, k)
    pool = list(spec.pool)
    if spec.strategy == "mixed":
        idx = rng.choice(len(pool), size=spec.subset_size, replace=False)
        return tuple(pool[i] for i in idx)
    by_letter = _letters(pool)
    if spec.strategy == "homo":
        feasible = sorted(l for l, cfgs in by_letter.items() if len(cfgs) >= spec.subset_size)
        if not feasible:
            raise InfeasibleStrategy(f"no model letter has {spec.subset_size} configs in the pool")
        letter = feasible[int(rng.integers(len(feasible)))]
        cfgs = by_letter[letter]
        idx = rng.choice(len(cfgs), size=spec.subset_size, replace=False)
        return tuple(cfgs[i] for i in idx)
    # hetero: pairwise distinct model letters
    letters = sorted(by_letter)
    if len(letters) < spec.subset_size:
        raise InfeasibleStrategy(f"{len(letters)} distinct models < subset size {spec.subset_size}")
    chosen = rng.choice(len(letters), size=spec.subset_size, replace=False)
    subset = []
    for i in chosen:
        cfgs = by_letter[letters[i]]
        subset.append(cfgs[int(rng.integers(len(cfgs)))])
    return tuple(subset)


def sample_subsets(spec: EnsembleSpec) -> list[tuple]:
    """n_samples subsets; duplicates across samples are allowed."""
    return [sample_subset(spec, k) for k in range(spec.n_samples)]


def build_annotation_matrix(
    subset: Sequence[Hashable],
    stores: Mapping,
    transforms: Mapping,
    thresholds_per_config: Mapping,
    usage_pairs: Sequence[UsagePair],
) -> AnnotationMatrix:
    """Score and label every pair under every config; failures stay missing."""
    resolved = []
    for cfg in subset:
        try:
            resolved.append((cfg, stores[cfg], transforms[cfg], thresholds_per_config[cfg]))
        except KeyError as err:
            raise MissingStore(f"config {cfg!r} not resolvable: missing {err}") from err
    matrix: AnnotationMatrix = {}
    for pair in usage_pairs:
        entries = []
        for cfg, store, stats, thresholds in resolved:
            try:
                score = score_pair(store, stats, pair)
                entries.append(Annotation(config=cfg, score=score, label=map_score_to_label(score, thresholds)))
            except (MissingVector, ZeroVector):
                entries.append(Annotation(config=cfg, score=None, label=None))
        matrix[pair.instance_id] = tuple(entries)
    return matrix


def measure_std(scores: Sequence[float]) -> float:
    """Population standard deviation of the continuous scores."""
    if len(scores) < 2:
        raise InsufficientAnnotators(f"STD needs >= 2 scores, got {len(scores)}")
    return float(np.std(np.asarray(scores, dtype=float)))


def measure_mpd(labels: Sequence[int]) -> float:
    """Mean pairwise absolute difference of the discrete labels."""
    try:
        return mean_pairwise_difference(labels)
    except InsufficientJudgments as err:
        raise InsufficientAnnotators(str(err)) from err


def measure_vr(labels: Sequence[int]) -> float:
    """Variation ratio: share of labels not equal to the mode."""
    if not labels:
        raise InsufficientAnnotators("VR of empty label sequence")
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    return 1.0 - int(counts.max()) / len(labels)


def predict_disagreement(matrix: AnnotationMatrix, measure: str) -> tuple[dict[str, float], int]:
    """Aggregate each instance's annotations; returns (predictions, skipped)."""
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    out: dict[str, float] = {}
    skipped = 0
    for instance_id, entries in matrix.items():
        scores = [e.score for e in entries if e.score is not None]
        labels = [e.label for e in entries if e.label is not None]
        try:
            if measure == "std":
                out[instance_id] = measure_std(scores)
            elif measure == "mpd":
                out[instance_id] = measure_mpd(labels)
            else:
                out[instance_id] = measure_vr(labels)
        except InsufficientAnnotators:
            skipped += 1
    return out, skipped


def compute_annotation_columns(store, stats, thresholds, usage_pairs: Sequence[UsagePair]) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair (scores, labels) for one config, NaN where scoring failed."""
    scores = np.full(len(usage_pairs), np.nan)
    labels = np.full(len(usage_pairs), np.nan)
    for i, pair in enumerate(usage_pairs):
        try:
            s = score_pair(store, stats, pair)
        except (MissingVector, ZeroVector):
            continue
        scores[i] = s
        labels[i] = map_score_to_label(s, thresholds)
    return scores, labels


def _column_predictions(score_cols: np.ndarray, label_cols: np.ndarray, measure: str) -> np.ndarray:
    """Vectorized per-item measure over a (n_items x subset) column block."""
    if measure == "std":
        mask = ~np.isnan(score_cols)
        m = mask.sum(axis=1)
        ok = m >= 2
        out = np.full(score_cols.shape[0], np.nan)
        if ok.any():
            filled = np.where(mask, score_cols, 0.0)
            mean = filled.sum(axis=1)[ok] / m[ok]
            centered = np.where(mask[ok], score_cols[ok] - mean[:, None], 0.0)
            out[ok] = np.sqrt((centered * centered).sum(axis=1) / m[ok])
        return out
    mask = ~np.isnan(label_cols)
    m = mask.sum(axis=1)
    out = np.full(label_cols.shape[0], np.nan)
    if measure == "mpd":
        k = label_cols.shape[1]
        total = np.zeros(label_cols.shape[0])
        npairs = np.zeros(label_cols.shape[0])
        for a in range(k):
            for b in range(a + 1, k):
                both = mask[:, a] & mask[:, b]
                diff = np.abs(np.where(both, label_cols[:, a] - label_cols[:, b], 0.0))
                total += diff
                npairs += both
        ok = m >= 2
        out[ok] = total[ok] / npairs[ok]
        return out
    # vr; NaN compares false, so missing labels never count toward a mode
    modal = np.zeros(label_cols.shape[0])
    for v in (1, 2, 3, 4):
        modal = np.maximum(modal, (label_cols == v).sum(axis=1))
    ok = m >= 1
    out[ok] = 1.0 - modal[ok] / m[ok]
    return out


@dataclass(frozen=True)
class SweepRow:
    rank: int
    sample_index: int
    subset_code: str
    measure: str
    spearman: Optional[float]  # None when the correlation was undefined


def run_strategy_sweep(
    spec: EnsembleSpec,
    columns_by_config: Mapping,
    item_ids: Sequence[str],
    gold_disagreement: Mapping[str, float],
    measure: str,
    jobs: int = 1,
) -> list[SweepRow]:
    """Spearman of predicted vs gold disagreement for each sampled subset.

    Rows are ranked by descending correlation; undefined-correlation
    subsets are kept as failed rows at the bottom.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    gold_mask = np.array([i in gold_disagreement for i in item_ids])
    gold_vec = np.array([gold_disagreement.get(i, np.nan) for i in item_ids])

    def one(k: int) -> tuple[int, str, Optional[float]]:
        subset = sample_subset(spec, k)
        score_cols = np.stack([columns_by_config[cfg][0] for cfg in subset], axis=1)
        label_cols = np.stack([columns_by_config[cfg][1] for cfg in subset], axis=1)
        preds = _column_predictions(score_cols, label_cols, measure)
        valid = gold_mask & ~np.isnan(preds)
        if valid.sum() < 2:
            return k, subset_code(subset), None
        try:
            rho = spearman_rho(preds[valid], gold_vec[valid])
        except UndefinedCorrelation:
            return k, subset_code(subset), None
        return k, subset_code(subset), rho

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(spec.n_samples)))
    else:
        results = [one(k) for k in range(spec.n_samples)]

    scored = [r for r in results if r[2] is not None]
    failed = [r for r in results if r[2] is None]
    scored.sort(key=lambda r: (-r[2], r[0]))
    rows = []
    for rank, (k, code, rho) in enumerate(scored + failed, start=1):
        rows.append(SweepRow(rank=rank, sample_index=k, subset_code=code, measure=measure, spearman=rho))
    return rows
