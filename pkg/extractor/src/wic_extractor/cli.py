"""Command line: extract --model <id> --layers 1,4,7,10 --corpus <tsv> --store <root>."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .extract import DEFAULT_PROMPT, ExtractionJob, extract


def _layers(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extract", description=__doc__)
    parser.add_argument("--model", required=True, help="model path or hub id")
    parser.add_argument("--layers", type=_layers, required=True, help="comma-separated layer indices (0 = embeddings)")
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--store", required=True, help="store root directory")
    parser.add_argument("--model-id", default=None, help="store naming override")
    parser.add_argument("--arch", choices=("auto", "encoder", "decoder"), default="auto")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--max-length", type=int, default=None)
    parser.add_argument("--prompt-template", default=DEFAULT_PROMPT)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    job = ExtractionJob(
        model_path=args.model,
        layers=args.layers,
        corpus=args.corpus,
        store_root=args.store,
        model_id=args.model_id,
        arch=args.arch,
        device=args.device,
        batch_size=args.batch_size,
        max_length=args.max_length,
        prompt_template=args.prompt_template,
    )
    try:
        report = extract(job)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {len(report.store_dirs)} stores ({report.n_rows - len(report.skipped)} rows kept, {len(report.skipped)} skipped)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
