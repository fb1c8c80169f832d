"""Read usage-pair corpora and read/write prediction files.

Corpus format: UTF-8 TSV with header, columns

    instance_id lemma language context_1 start_1 end_1
    context_2 start_2 end_2 judgments median_label disagreement

Offsets count Unicode scalar values, not bytes. The judgments cell is a
comma-separated list; tokens outside 1..4 (e.g. a "cannot decide" 0) are
dropped per row. Empty gold cells mean "derive from the surviving
judgments". Newlines are \\n and all numbers use C-locale decimals.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .core_model import GoldLabels, UsagePair
from .errors import CorpusFormatError, DuplicateId, MissingColumns

CORPUS_COLUMNS = (
    "instance_id",
    "lemma",
    "language",
    "context_1",
    "start_1",
    "end_1",
    "context_2",
    "start_2",
    "end_2",
    "judgments",
    "median_label",
    "disagreement",
)

PREDICTION_COLUMNS = ("instance_id", "prediction")

_INT_TOKEN = re.compile(r"^-?\d+$")


@dataclass(frozen=True)
class CorpusRow:
    pair: UsagePair
    gold: GoldLabels


@dataclass(frozen=True)
class CorpusFile:
    path: str
    rows: tuple[CorpusRow, ...]
    skipped: int = 0

    def pairs(self) -> list[UsagePair]:
        return [row.pair for row in self.rows]

    def gold_by_id(self) -> dict[str, GoldLabels]:
        return {row.pair.instance_id: row.gold for row in self.rows}


@dataclass(frozen=True)
class PredictionRow:
    instance_id: str
    value: Union[int, float]


def _parse_judgments(cell: str) -> tuple[int, ...]:
    if not cell:
        return ()
    tokens = cell.split(",")
    values = []
    for tok in tokens:
        tok = tok.strip()
        if not _INT_TOKEN.match(tok):
            raise ValueError(f"bad judgment token {tok!r}")
        v = int(tok)
        if 1 <= v <= 4:  # out-of-range codes are dropped, not errors
            values.append(v)
    return tuple(values)


def _parse_row(fields: Sequence[str]) -> CorpusRow:
    if len(fields) != len(CORPUS_COLUMNS):
        raise ValueError(f"expected {len(CORPUS_COLUMNS)} fields, got {len(fields)}")
    judgments = _parse_judgments(fields[9])
    pair = UsagePair(
        instance_id=fields[0],
        lemma=fields[1],
        language=fields[2],
        context_1=fields[3],
        span_1=(int(fields[4]), int(fields[5])),
        context_2=fields[6],
        span_2=(int(fields[7]), int(fields[8])),
        judgments=judgments,
    )
    derived = GoldLabels.from_judgments(judgments)
    median = int(fields[10]) if fields[10] else derived.median_label
    disagreement = float(fields[11]) if fields[11] else derived.disagreement
    gold = GoldLabels(
        median_label=median,
        majority_label=derived.majority_label,
        disagreement=disagreement,
    )
    return CorpusRow(pair=pair, gold=gold)


def read_corpus(path: str, strict: bool = True) -> CorpusFile:
    """Parse a corpus TSV.

    In strict mode any malformed row aborts with its 1-based line number;
    in lenient mode malformed rows (including repeated ids) are skipped
    and counted in CorpusFile.skipped.
    """
    if not os.path.isfile(path):
        raise CorpusFormatError(f"no such corpus file: {path}")
    rows: list[CorpusRow] = []
    seen: set[str] = set()
    skipped = 0
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if tuple(header.split("\t")) != CORPUS_COLUMNS:
            raise MissingColumns(f"bad header in {path}: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                row = _parse_row(line.split("\t"))
                if row.pair.instance_id in seen:
                    raise DuplicateId(f"duplicate instance_id {row.pair.instance_id!r}", row=lineno)
            except DuplicateId:
                if strict:
                    raise
                skipped += 1
                continue
            except (ValueError, CorpusFormatError) as err:
                if strict:
                    raise CorpusFormatError(f"{path}:{lineno}: {err}", row=lineno) from err
                skipped += 1
                continue
            seen.add(row.pair.instance_id)
            rows.append(row)
    return CorpusFile(path=path, rows=tuple(rows), skipped=skipped)


def _format_float(x: float) -> str:
    return repr(float(x))


def write_corpus(rows: Iterable[CorpusRow], path: str) -> None:
    """Write rows in the corpus TSV format (gold floats keep full precision)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(CORPUS_COLUMNS) + "\n")
        for row in rows:
            p, g = row.pair, row.gold
            for text in (p.lemma, p.context_1, p.context_2, p.instance_id, p.language):
                if "\t" in text or "\n" in text:
                    raise CorpusFormatError(f"field contains tab/newline: {text!r}")
            fields = (
                p.instance_id,
                p.lemma,
                p.language,
                p.context_1,
                str(p.span_1[0]),
                str(p.span_1[1]),
                p.context_2,
                str(p.span_2[0]),
                str(p.span_2[1]),
                ",".join(str(j) for j in p.judgments),
                "" if g.median_label is None else str(g.median_label),
                "" if g.disagreement is None else _format_float(g.disagreement),
            )
            fh.write("\t".join(fields) + "\n")


def write_predictions(rows: Sequence[PredictionRow], path: str) -> None:
    """TSV with header; labels as integers, scores with 6 decimal places."""
    if not rows:
        raise CorpusFormatError("refusing to write an empty prediction file")
    seen = set()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(PREDICTION_COLUMNS) + "\n")
        for row in rows:
            if row.instance_id in seen:
                raise DuplicateId(f"duplicate prediction for {row.instance_id!r}")
            seen.add(row.instance_id)
            if isinstance(row.value, (int, np.integer)) and not isinstance(row.value, bool):
                value = str(int(row.value))
            else:
                value = f"{float(row.value):.6f}"
            fh.write(f"{row.instance_id}\t{value}\n")


def read_predictions(path: str) -> list[PredictionRow]:
    """Read a prediction TSV; integer-looking values come back as labels."""
    if not os.path.isfile(path):
        raise CorpusFormatError(f"no such prediction file: {path}")
    rows: list[PredictionRow] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if tuple(header.split("\t")) != PREDICTION_COLUMNS:
            raise MissingColumns(f"bad header in {path}: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusFormatError(f"{path}:{lineno}: expected 2 fields", row=lineno)
            instance_id, token = parts
            if instance_id in seen:
                raise DuplicateId(f"duplicate prediction for {instance_id!r}", row=lineno)
            seen.add(instance_id)
            value: Union[int, float] = int(token) if _INT_TOKEN.match(token) else float(token)
            rows.append(PredictionRow(instance_id=instance_id, value=value))
    return rows
