"""Synthetic ground truth: Gaussian judgment populations with known
(mu, sigma), discretized judgments, and planted embedding stores whose
pair cosines encode noisy readings of the true score.

All randomness comes from a counter-based 64-bit stream (SplitMix64 as a
mixing function, Box-Muller for normals), so output is identical across
platforms and items can be generated in parallel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core_model import GaussianPopulation, GoldLabels, UsagePair
from .corpus_io import CorpusRow
from .embedding_store import Store, write_store

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Stream domains, mixed into the key so draws never collide across uses.
_D_JUDGE = 1
_D_MU = 2
_D_SIGMA = 3
_D_NOISE = 4
_D_BASIS = 5

# Affine link between judgment scores [1, 4] and cosines [-1, 1].
SCORE_MID = 2.5
SCORE_HALF_RANGE = 1.5


def _mix(z: int) -> int:
    z = (z + _GOLDEN) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _derive(seed: int, *path: int) -> int:
    key = seed & _M64
    for part in path:
        key = _mix(key ^ _mix(part & _M64))
    return key


class CounterStream:
    """Deterministic value stream: draw k is a pure function of (key, k)."""

    def __init__(self, key: int):
        self._key = key & _M64
        self._counter = 0

    def next_u64(self) -> int:
        value = _mix(self._key ^ _mix(self._counter))
        self._counter += 1
        return value

    def uniform(self) -> float:
        # 53 mantissa bits, strictly inside (0, 1)
        return ((self.next_u64() >> 11) + 1) / 9007199254740993.0

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def normal(self) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> list[float]:
        return [self.normal() for _ in range(n)]

    def unit_vector(self, dim: int) -> np.ndarray:
        v = np.array(self.normals(dim))
        norm = float(np.linalg.norm(v))
        while norm < 1e-12:  # astronomically unlikely; redraw keeps determinism
            v = np.array(self.normals(dim))
            norm = float(np.linalg.norm(v))
        return v / norm


@dataclass(frozen=True)
class SimItem:
    population: GaussianPopulation
    true_score: float
    raw_scores: tuple[float, ...]
    judgments: tuple[int, ...]
    gold: GoldLabels


@dataclass(frozen=True)
class TruthRow:
    instance_id: str
    mu: float
    sigma: float


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def discretize(score: float) -> int:
    """Round half away from zero, clamp into the label range 1..4."""
    return min(4, max(1, _round_half_away(score)))


def simulate_item(population: GaussianPopulation, seed: int) -> SimItem:
    """Draw one item's judgments from N(mu, sigma^2) and discretize."""
    stream = CounterStream(_derive(seed, _D_JUDGE))
    raw = tuple(population.mu + population.sigma * stream.normal() for _ in range(population.n_annotators))
    judgments = tuple(discretize(x) for x in raw)
    return SimItem(
        population=population,
        true_score=population.mu,
        raw_scores=raw,
        judgments=judgments,
        gold=GoldLabels.from_judgments(judgments),
    )


def score_to_cosine(score: float) -> float:
    """Clamp a judgment-scale score into [1, 4] and map it to [-1, 1]."""
    clamped = min(4.0, max(1.0, score))
    return (clamped - SCORE_MID) / SCORE_HALF_RANGE


def planted_pair(target_cosine: float, dim: int, stream: CounterStream) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors whose cosine equals target_cosine (within rounding)."""
    if not -1.0 <= target_cosine <= 1.0:
        raise ValueError(f"target cosine {target_cosine} outside [-1, 1]")
    v1 = stream.unit_vector(dim)
    aux = stream.unit_vector(dim)
    perp = aux - float(aux @ v1) * v1
    norm = float(np.linalg.norm(perp))
    while norm < 1e-9:  # aux collinear with v1; redraw
        aux = stream.unit_vector(dim)
        perp = aux - float(aux @ v1) * v1
        norm = float(np.linalg.norm(perp))
    perp /= norm
    v2 = target_cosine * v1 + math.sqrt(max(0.0, 1.0 - target_cosine * target_cosine)) * perp
    return v1, v2


def simulate_corpus(
    n_items: int,
    mu_range: tuple[float, float],
    sigma_range: tuple[float, float],
    n_annotators: int,
    seed: int,
) -> tuple[list[CorpusRow], list[TruthRow], list[SimItem]]:
    """Generate items with mu ~ U(mu_range), sigma ~ U(sigma_range)."""
    if not (1.0 <= mu_range[0] <= mu_range[1] <= 4.0):
        raise ValueError(f"mu range {mu_range} outside [1, 4]")
    if not (0.0 <= sigma_range[0] <= sigma_range[1]):
        raise ValueError(f"bad sigma range {sigma_range}")
    rows: list[CorpusRow] = []
    truth: list[TruthRow] = []
    items: list[SimItem] = []
    for i in range(n_items):
        mu = CounterStream(_derive(seed, _D_MU, i)).uniform_in(*mu_range)
        sigma = CounterStream(_derive(seed, _D_SIGMA, i)).uniform_in(*sigma_range)
        population = GaussianPopulation(mu=mu, sigma=sigma, n_annotators=n_annotators)
        item = simulate_item(population, _derive(seed, i))
        instance_id = f"sim{i:05d}"
        lemma = f"word{i:05d}"
        context = f"synthetic usage of {lemma} number {i}"
        start = context.index(lemma)
        pair = UsagePair(
            instance_id=instance_id,
            lemma=lemma,
            language="synthetic",
            context_1=context,
            span_1=(start, start + len(lemma)),
            context_2=context,
            span_2=(start, start + len(lemma)),
            judgments=item.judgments,
        )
        rows.append(CorpusRow(pair=pair, gold=item.gold))
        truth.append(TruthRow(instance_id=instance_id, mu=mu, sigma=sigma))
        items.append(item)
    return rows, truth, items


def plant_store(
    directory: str,
    model_id: str,
    layer: int,
    truth: Sequence[TruthRow],
    annotator_index: int,
    dim: int,
    seed: int,
    created_by: str = "simulator",
) -> Store:
    """One virtual annotator's store: per item it observes mu + noise
    (noise std = the item's sigma) and the planted pair cosine encodes
    that observation."""

    def entries():
        for i, row in enumerate(truth):
            noise = CounterStream(_derive(seed, _D_NOISE, annotator_index, i)).normal()
            observed = row.mu + row.sigma * noise
            basis = CounterStream(_derive(seed, _D_BASIS, annotator_index, i))
            v1, v2 = planted_pair(score_to_cosine(observed), dim, basis)
            yield (row.instance_id, 1), v1
            yield (row.instance_id, 2), v2

    return write_store(directory, model_id=model_id, layer=layer, dim=dim, entries=entries(), created_by=created_by)


def write_truth(truth: Sequence[TruthRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("instance_id\tmu\tsigma\n")
        for row in truth:
            fh.write(f"{row.instance_id}\t{row.mu!r}\t{row.sigma!r}\n")


def read_truth(path: str) -> list[TruthRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != "instance_id\tmu\tsigma":
            raise ValueError(f"bad truth header: {header!r}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            instance_id, mu, sigma = line.split("\t")
            rows.append(TruthRow(instance_id=instance_id, mu=float(mu), sigma=float(sigma)))
    return rows
