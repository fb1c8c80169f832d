"""Domain types and label arithmetic shared by the rest of the toolkit.

Everything here is immutable after construction and free of I/O, so
instances can be shared between threads without locking.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import CodeParseError, EmptyJudgments, InsufficientJudgments

LABELS = (1, 2, 3, 4)

LANGUAGES = ("zh", "en", "de", "no", "ru", "es", "sv", "synthetic")

# Annotator-code alphabets.  A code is one letter from each table, e.g. "AjY".
MODEL_NAMES = {
    "A": "Llama-7B",
    "B": "XLM-RoBERTa-base",
    "C": "BERT-multi-base",
    "D": "XLM-RoBERTa-large",
}
ENCODER_LAYERS = {"h": 1, "i": 4, "j": 7, "k": 10}
DECODER_LAYERS = {"h": 8, "i": 16, "j": 24, "k": 32}
TRANSFORM_BY_LETTER = {"X": "none", "Y": "standardize", "Z": "center", "W": "abtt"}
LETTER_BY_TRANSFORM = {v: k for k, v in TRANSFORM_BY_LETTER.items()}


@dataclass(frozen=True)
class UsagePair:
    """A target lemma observed in two contexts, with raw human judgments."""

    instance_id: str
    lemma: str
    language: str
    context_1: str
    span_1: tuple[int, int]
    context_2: str
    span_2: tuple[int, int]
    judgments: tuple[int, ...] = ()

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language tag {self.language!r}")
        for ctx, (start, end), name in (
            (self.context_1, self.span_1, "span_1"),
            (self.context_2, self.span_2, "span_2"),
        ):
            if not (0 <= start < end <= len(ctx)):
                raise ValueError(f"{name} [{start},{end}) outside context of length {len(ctx)}")
        if any(j not in (1, 2, 3, 4) for j in self.judgments):
            raise ValueError(f"judgments outside 1..4: {self.judgments}")


@dataclass(frozen=True)
class GoldLabels:
    """Derived gold targets: median and majority labels, MPD disagreement."""

    median_label: Optional[int] = None
    majority_label: Optional[int] = None
    disagreement: Optional[float] = None

    def __post_init__(self):
        for lab in (self.median_label, self.majority_label):
            if lab is not None and lab not in (1, 2, 3, 4):
                raise ValueError(f"gold label outside 1..4: {lab}")
        if self.disagreement is not None and not (0.0 <= self.disagreement <= 3.0):
            raise ValueError(f"disagreement outside [0,3]: {self.disagreement}")

    @classmethod
    def from_judgments(cls, judgments: Sequence[int]) -> "GoldLabels":
        if not judgments:
            return cls()
        # A singleton has no pairs; its observable disagreement is zero.
        mpd = mean_pairwise_difference(judgments) if len(judgments) >= 2 else 0.0
        return cls(
            median_label=median_label(judgments),
            majority_label=majority_label(judgments),
            disagreement=mpd,
        )


@dataclass(frozen=True, order=True)
class AnnotatorConfig:
    """One virtual annotator: a (model, layer, transform) triple.

    `model` and `layer_code` are the single-letter grid coordinates;
    `transform` is the canonical kind name used by the geometry module.
    """

    model: str
    layer_code: str
    transform: str

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model letter {self.model!r}")
        if self.layer_code not in ENCODER_LAYERS:
            raise ValueError(f"unknown layer code {self.layer_code!r}")
        if self.transform not in LETTER_BY_TRANSFORM:
            raise ValueError(f"unknown transform kind {self.transform!r}")

    @property
    def model_name(self) -> str:
        return MODEL_NAMES[self.model]

    @property
    def layer(self) -> int:
        table = DECODER_LAYERS if self.model == "A" else ENCODER_LAYERS
        return table[self.layer_code]


@dataclass(frozen=True)
class ThresholdSet:
    """Three strictly increasing interior bin edges over the score range."""

    edges: tuple[float, float, float]

    def __post_init__(self):
        if len(self.edges) != 3:
            raise ValueError(f"expected exactly 3 edges, got {len(self.edges)}")
        t1, t2, t3 = self.edges
        if not (t1 < t2 < t3):
            raise ValueError(f"edges not strictly increasing: {self.edges}")
        if not (-1.0 <= t1 and t3 <= 1.0):
            raise ValueError(f"edges outside score range [-1,1]: {self.edges}")


@dataclass(frozen=True)
class GaussianPopulation:
    """Latent judgment distribution of one usage pair: N(mu, sigma^2)."""

    mu: float
    sigma: float
    n_annotators: int

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.n_annotators < 1:
            raise ValueError("need at least one annotator")


def majority_label(judgments: Sequence[int]) -> int:
    """Mode of the judgments; ties break to the smallest tied label."""
    if not judgments:
        raise EmptyJudgments("majority of empty judgment sequence")
    counts = Counter(judgments)
    top = max(counts.values())
    return min(lab for lab, c in counts.items() if c == top)


def median_label(judgments: Sequence[int]) -> int:
    """Median judgment; even counts take the lower middle element."""
    if not judgments:
        raise EmptyJudgments("median of empty judgment sequence")
    ordered = sorted(judgments)
    n = len(ordered)
    return ordered[n // 2] if n % 2 == 1 else ordered[n // 2 - 1]


def mean_pairwise_difference(judgments: Sequence[int]) -> float:
    """Mean |a - b| over all unordered judgment pairs."""
    n = len(judgments)
    if n < 2:
        raise InsufficientJudgments(f"need >= 2 judgments for MPD, got {n}")
    total = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += abs(judgments[i] - judgments[j])
    return total / (n * (n - 1) / 2)


def parse_annotator_code(code: str) -> AnnotatorConfig:
    """Parse a 3-letter code like "AjY" into an AnnotatorConfig."""
    if len(code) != 3:
        raise CodeParseError(f"code {code!r} must be exactly 3 characters", position=min(len(code), 3))
    if code[0] not in MODEL_NAMES:
        raise CodeParseError(f"bad model letter {code[0]!r} at position 0 in {code!r}", position=0)
    if code[1] not in ENCODER_LAYERS:
        raise CodeParseError(f"bad layer letter {code[1]!r} at position 1 in {code!r}", position=1)
    if code[2] not in TRANSFORM_BY_LETTER:
        raise CodeParseError(f"bad transform letter {code[2]!r} at position 2 in {code!r}", position=2)
    return AnnotatorConfig(model=code[0], layer_code=code[1], transform=TRANSFORM_BY_LETTER[code[2]])


def format_annotator_code(cfg: AnnotatorConfig) -> str:
    return cfg.model + cfg.layer_code + LETTER_BY_TRANSFORM[cfg.transform]
