"""Run a frozen pretrained model over usage contexts and dump target-word
vectors, one store per requested layer.

Encoder models mean-pool the hidden states of the tokens overlapping the
target character span. Decoder-only models render a prompt and take the
hidden state at the final colon position. Everything runs in inference
mode; repeated extraction of the same corpus is bit-identical.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .corpus import UsageRow, read_usage_rows
from .store import StoreWriter, store_dir_name

logger = logging.getLogger("wic_extractor")

DECODER_MODEL_TYPES = {
    "llama", "gpt2", "gpt_neox", "gptj", "opt", "mistral", "mixtral",
    "falcon", "gemma", "gemma2", "phi", "phi3", "qwen2", "stablelm",
}

DEFAULT_PROMPT = 'In the sentence "{context}", the word "{target}" means:'


@dataclass(frozen=True)
class ExtractionJob:
    model_path: str
    layers: tuple[int, ...]
    corpus: str
    store_root: str
    model_id: Optional[str] = None  # store naming; defaults to the path basename
    arch: str = "auto"  # auto | encoder | decoder
    device: str = "cpu"
    batch_size: int = 8
    max_length: Optional[int] = None
    prompt_template: str = DEFAULT_PROMPT

    def resolved_model_id(self) -> str:
        return self.model_id or os.path.basename(os.path.normpath(self.model_path))


@dataclass
class ExtractionReport:
    store_dirs: list[str] = field(default_factory=list)
    n_rows: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)


def _resolve_arch(job: ExtractionJob, config) -> str:
    if job.arch != "auto":
        return job.arch
    return "decoder" if config.model_type in DECODER_MODEL_TYPES else "encoder"


def _span_token_positions(encoding, seq_index: int, span: tuple[int, int]) -> list[int]:
    """Indices of non-special tokens whose offsets overlap [start, end)."""
    start, end = span
    offsets = encoding["offset_mapping"][seq_index]
    special = encoding["special_tokens_mask"][seq_index]
    positions = []
    for pos, ((tok_start, tok_end), is_special) in enumerate(zip(offsets.tolist(), special.tolist())):
        if is_special or tok_start == tok_end:
            continue
        if tok_start < end and tok_end > start:
            positions.append(pos)
    return positions


def _last_content_position(encoding, seq_index: int) -> Optional[int]:
    special = encoding["special_tokens_mask"][seq_index]
    attention = encoding["attention_mask"][seq_index]
    for pos in range(len(special) - 1, -1, -1):
        if attention[pos] and not special[pos]:
            return pos
    return None


def _prepare_side(job: ExtractionJob, arch: str, row: UsageRow, side: int) -> tuple[str, tuple[int, int]]:
    """Text to encode and the character span whose tokens carry the target."""
    context, span = row.side(side)
    if arch == "encoder":
        return context, span
    target = context[span[0] : span[1]]
    prompt = job.prompt_template.format(context=context, target=target)
    colon = prompt.rfind(":")
    if colon < 0:
        # no colon in the template; the last content token stands in
        return prompt, (len(prompt) - 1, len(prompt))
    return prompt, (colon, colon + 1)


def extract(job: ExtractionJob) -> ExtractionReport:
    tokenizer = AutoTokenizer.from_pretrained(job.model_path)
    if tokenizer.pad_token is None:
        tokenizer.pad_token = tokenizer.eos_token or tokenizer.unk_token
    # token positions must not depend on how a batch pads; pads after the
    # content are inert for encoders and causally masked for decoders
    tokenizer.padding_side = "right"
    model = AutoModel.from_pretrained(job.model_path)
    model.eval()
    model.to(job.device)

    arch = _resolve_arch(job, model.config)
    n_layers = int(model.config.num_hidden_layers)
    for layer in job.layers:
        if not 0 <= layer <= n_layers:
            raise ValueError(f"layer {layer} out of range for a {n_layers}-layer model")
    dim = int(model.config.hidden_size)

    rows = read_usage_rows(job.corpus)
    report = ExtractionReport(n_rows=len(rows))

    # Tokenize both sides up front; a row is kept only if both sides align.
    texts: list[str] = []
    spans: list[tuple[int, int]] = []
    for row in rows:
        for side in (1, 2):
            text, span = _prepare_side(job, arch, row, side)
            texts.append(text)
            spans.append(span)

    kept_rows: list[UsageRow] = []
    kept_positions: list[tuple[list[int], list[int]]] = []
    position_cache: list[Optional[list[int]]] = []
    for chunk_start in range(0, len(texts), job.batch_size):
        chunk = texts[chunk_start : chunk_start + job.batch_size]
        enc = tokenizer(
            chunk,
            return_offsets_mapping=True,
            return_special_tokens_mask=True,
            padding=True,
            truncation=job.max_length is not None,
            max_length=job.max_length,
            return_tensors="pt",
        )
        for i in range(len(chunk)):
            span = spans[chunk_start + i]
            positions = _span_token_positions(enc, i, span)
            if not positions and arch == "decoder":
                fallback = _last_content_position(enc, i)
                positions = [fallback] if fallback is not None else []
            position_cache.append(positions or None)
    for r, row in enumerate(rows):
        pos1, pos2 = position_cache[2 * r], position_cache[2 * r + 1]
        if pos1 is None or pos2 is None:
            which = "1" if pos1 is None else "2"
            logger.warning("skipping %s: span of side %s aligns to no tokens", row.instance_id, which)
            report.skipped.append((row.instance_id, f"side {which} alignment failed"))
            continue
        kept_rows.append(row)
        kept_positions.append((pos1, pos2))

    model_id = job.resolved_model_id()
    writers = {}
    for layer in sorted(job.layers):
        directory = os.path.join(job.store_root, store_dir_name(model_id, layer))
        writers[layer] = StoreWriter(directory, model_id, layer, dim, created_by=f"wic-extractor {arch}")
        report.store_dirs.append(directory)

    flat: list[tuple[str, int, list[int]]] = []
    for row, (pos1, pos2) in zip(kept_rows, kept_positions):
        flat.append((row.instance_id, 1, pos1))
        flat.append((row.instance_id, 2, pos2))
    flat_texts = []
    for row in kept_rows:
        for side in (1, 2):
            text, _ = _prepare_side(job, arch, row, side)
            flat_texts.append(text)

    with torch.inference_mode():
        for chunk_start in range(0, len(flat), job.batch_size):
            chunk_meta = flat[chunk_start : chunk_start + job.batch_size]
            chunk_text = flat_texts[chunk_start : chunk_start + job.batch_size]
            enc = tokenizer(
                chunk_text,
                padding=True,
                truncation=job.max_length is not None,
                max_length=job.max_length,
                return_tensors="pt",
            )
            enc = {k: v.to(job.device) for k, v in enc.items()}
            outputs = model(**enc, output_hidden_states=True)
            hidden = outputs.hidden_states  # tuple, index 0 = input embeddings
            for layer, writer in writers.items():
                states = hidden[layer].cpu()
                for i, (instance_id, side, positions) in enumerate(chunk_meta):
                    vector = states[i, positions].mean(dim=0).numpy().astype("<f4")
                    writer.put(instance_id, side, vector)

    for writer in writers.values():
        writer.close()
    logger.info(
        "extracted %d rows x 2 sides into %d stores (%d rows skipped)",
        len(kept_rows), len(writers), len(report.skipped),
    )
    return report
