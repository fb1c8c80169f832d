"""Minimal reader for the usage-pair TSV interchange format.

Only the columns the extractor needs are materialized; offsets count
Unicode scalar values.
"""
from __future__ import annotations

from dataclasses import dataclass

COLUMNS = (
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


@dataclass(frozen=True)
class UsageRow:
    instance_id: str
    lemma: str
    context_1: str
    span_1: tuple[int, int]
    context_2: str
    span_2: tuple[int, int]

    def side(self, which: int) -> tuple[str, tuple[int, int]]:
        return (self.context_1, self.span_1) if which == 1 else (self.context_2, self.span_2)


def read_usage_rows(path: str) -> list[UsageRow]:
    rows: list[UsageRow] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if tuple(header.split("\t")) != COLUMNS:
            raise ValueError(f"unexpected corpus header in {path}: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != len(COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(fields)}")
            instance_id = fields[0]
            if instance_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate instance_id {instance_id!r}")
            seen.add(instance_id)
            row = UsageRow(
                instance_id=instance_id,
                lemma=fields[1],
                context_1=fields[3],
                span_1=(int(fields[4]), int(fields[5])),
                context_2=fields[6],
                span_2=(int(fields[7]), int(fields[8])),
            )
            for ctx, (start, end) in (row.side(1), row.side(2)):
                if not (0 <= start < end <= len(ctx)):
                    raise ValueError(f"{path}:{lineno}: span [{start},{end}) outside context")
            rows.append(row)
    return rows
