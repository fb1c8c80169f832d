"""Command-line orchestration of the pipeline stages.

Every run writes a run_manifest.json (command, resolved options, seed,
input and output digests) into the --out directory; identical manifests
imply byte-identical result files. Exit codes: 0 success, 1 usage error,
2 data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core_model import (
    MODEL_NAMES,
    AnnotatorConfig,
    parse_annotator_code,
)
from .corpus_io import CorpusFile, PredictionRow, read_corpus, read_predictions, write_corpus, write_predictions
from .embedding_store import Store, open_store, store_dir_name
from .ensemble import (
    MEASURES,
    STRATEGIES,
    EnsembleSpec,
    build_annotation_matrix,
    compute_annotation_columns,
    full_grid,
    predict_disagreement,
    run_strategy_sweep,
    subset_code,
)
from .errors import DisagreeKitError, UndefinedAlpha
from .geometry import TransformStats, fit_transform, pooled_vectors, score_pair
from .metrics import LEVELS, AlphaSpec, krippendorff_alpha, spearman_rho
from .mlp import (
    PRESETS as MLP_PRESETS,
    MlpConfig,
    build_feature_matrix,
    load_model,
    predict as mlp_predict_fn,
    save_model,
    train as mlp_train_fn,
)
from .simulator import plant_store, read_truth, simulate_corpus, write_truth
from .threshold_fit import (
    SimplexConfig,
    fit_thresholds,
    map_score_to_label,
    thresholds_from_json,
    thresholds_to_json,
)

STORE_ROOT_ENV = "DISAGREE_KIT_STORE_ROOT"

# Named option bundles replaying the reported evaluation / post-evaluation
# configurations on any compatible store root.
PIPELINE_PRESETS = {
    "eval-phase-task1": {
        "method": "threshold",
        "model": "XLM-RoBERTa-base",
        "layer": 10,
        "transform": "standardize",
        "note": "per-language exceptions in the original run: zh/ru BERT-multi-base final layer, no LERT-base-chinese",
    },
    "eval-phase-task2": {"method": "mlp", "mlp_preset": "task2-mlp1", "task": "regress"},
    "post-eval-task1-threshold": {"method": "threshold", "model": "Llama-7B", "layer": 25, "transform": "standardize"},
    "post-eval-task1-mlp": {
        "method": "mlp",
        "mlp_preset": "task1-mlp",
        "task": "classify",
        "model": "XLM-RoBERTa-base",
        "layer": 11,
        "transform": "standardize",
    },
    "post-eval-task2": {"method": "ensemble", "configs": "AjY-AiX-AjZ-AiW", "measure": "std"},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- helpers


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_paths(paths: Sequence[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for path in paths:
        if path is None:
            continue
        if os.path.isdir(path):
            for root, _, files in os.walk(path):
                for name in sorted(files):
                    full = os.path.join(root, name)
                    out[full] = _sha256(full)
        elif os.path.isfile(path):
            out[path] = _sha256(path)
    return dict(sorted(out.items()))


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


def _write_manifest(args, seed: Optional[int], inputs: Sequence[str], outputs: Sequence[str]) -> None:
    options = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    doc = {
        "command": args.command,
        "version": __version__,
        "seed": seed,
        "options": options,
        "inputs": _digest_paths(inputs),
        "outputs": _digest_paths(outputs),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = os.path.join(args.out, "run_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _ensure_out(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    seed = int.from_bytes(os.urandom(8), "little") & ((1 << 63) - 1)
    args.seed = seed
    return seed


def _store_root(args) -> Optional[str]:
    root = getattr(args, "store_root", None) or os.environ.get(STORE_ROOT_ENV)
    return root


def _resolve_store_dir(name: str, root: Optional[str]) -> str:
    if os.path.isdir(name):
        return name
    if root:
        candidate = os.path.join(root, name)
        if os.path.isdir(candidate):
            return candidate
    raise DisagreeKitError(f"store directory not found: {name!r} (root={root!r})")


def _int_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"expected two comma-separated integers, got {text!r}")
    return int(parts[0]), int(parts[1])


def _float_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"expected two comma-separated numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def _gold_map(corpus: CorpusFile, field: str) -> dict[str, float]:
    out = {}
    for row in corpus.rows:
        value = getattr(row.gold, field)
        if value is not None:
            out[row.pair.instance_id] = value
    return out


def _load_transform(path_or_none: str, store: Store) -> TransformStats:
    if path_or_none == "none":
        return TransformStats(kind="none", mean=np.zeros(store.manifest.dim), fitted_on=0)
    with open(path_or_none, encoding="utf-8") as fh:
        return TransformStats.from_json(fh.read())


def _fit_stats(store: Store, kind: str, corpus: Optional[CorpusFile], fit_on: str) -> TransformStats:
    """Fit on the corpus' pooled vectors (both sides) or on the whole store."""
    if fit_on == "all" or corpus is None:
        matrix = store.get_matrix(store.keys())
    else:
        matrix = pooled_vectors(store, corpus.pairs())
    return fit_transform(kind, matrix)


def _scores_with_isolation(store: Store, stats: TransformStats, pairs) -> dict[str, float]:
    out = {}
    for pair in pairs:
        try:
            out[pair.instance_id] = score_pair(store, stats, pair)
        except DisagreeKitError:
            continue
    return out


def _simplex_config(args) -> SimplexConfig:
    cfg = SimplexConfig()
    if getattr(args, "restarts", None) is not None:
        cfg = SimplexConfig(restarts=args.restarts, max_iter=cfg.max_iter)
    if getattr(args, "max_iter", None) is not None:
        cfg = SimplexConfig(restarts=cfg.restarts, max_iter=args.max_iter)
    return cfg


def _parse_config_list(text: str) -> list[AnnotatorConfig]:
    return [parse_annotator_code(tok) for tok in text.replace(",", "-").split("-") if tok]


class AnnotatorResolver:
    """Resolve annotator configs (codes or store names) to fitted pipelines."""

    def __init__(self, store_root, train_corpus, level, gold_field, fit_on, simplex, default_kind="none"):
        self.store_root = store_root
        self.train_corpus = train_corpus
        self.level = level
        self.gold_field = gold_field
        self.fit_on = fit_on
        self.simplex = simplex
        self.default_kind = default_kind
        self.stores: dict = {}
        self.transforms: dict = {}
        self.thresholds: dict = {}

    def resolve(self, cfg) -> None:
        if cfg in self.stores:
            return
        if isinstance(cfg, AnnotatorConfig):
            directory = _resolve_store_dir(store_dir_name(cfg.model_name, cfg.layer), self.store_root)
            kind = cfg.transform
        else:
            directory = _resolve_store_dir(str(cfg), self.store_root)
            kind = self.default_kind
        store = open_store(directory)
        stats = _fit_stats(store, kind, self.train_corpus, self.fit_on)
        scores = _scores_with_isolation(store, stats, self.train_corpus.pairs())
        gold = {k: int(v) for k, v in _gold_map(self.train_corpus, self.gold_field).items() if k in scores}
        thresholds, _ = fit_thresholds(scores, gold, AlphaSpec(level=self.level), self.simplex)
        self.stores[cfg] = store
        self.transforms[cfg] = stats
        self.thresholds[cfg] = thresholds

    def resolve_all(self, configs) -> None:
        for cfg in configs:
            self.resolve(cfg)

    def columns(self, configs, pairs) -> dict:
        out = {}
        for cfg in configs:
            self.resolve(cfg)
            out[cfg] = compute_annotation_columns(self.stores[cfg], self.transforms[cfg], self.thresholds[cfg], pairs)
        return out


def _auto_annotators(root: str) -> list[str]:
    names = []
    for name in sorted(os.listdir(root)):
        if os.path.isfile(os.path.join(root, name, "manifest.json")):
            names.append(name)
    if not names:
        raise DisagreeKitError(f"no store directories under {root!r}")
    return names


def _alpha_two_raters(gold: dict[str, int], pred: dict[str, int], level: str) -> tuple[float, int]:
    ids = sorted(set(gold) & set(pred))
    if len(ids) < 2:
        raise UndefinedAlpha(f"only {len(ids)} items have both gold and prediction")
    matrix = [[gold[i], pred[i]] for i in ids]
    return krippendorff_alpha(matrix, AlphaSpec(level=level)), len(ids)


# ---------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    out = _ensure_out(args)
    seed = _resolve_seed(args)
    rows, truth, _ = simulate_corpus(args.n_items, args.mu_range, args.sigma_range, args.n_annotators, seed)
    corpus_path = os.path.join(out, "corpus.tsv")
    truth_path = os.path.join(out, "truth.tsv")
    write_corpus(rows, corpus_path)
    write_truth(truth, truth_path)
    outputs = [corpus_path, truth_path]

    if args.split is not None:
        n_train, n_eval = args.split
        if n_train + n_eval > len(rows):
            raise DisagreeKitError(f"split {args.split} exceeds {len(rows)} items")
        train_path = os.path.join(out, "train.tsv")
        eval_path = os.path.join(out, "eval.tsv")
        write_corpus(rows[:n_train], train_path)
        write_corpus(rows[n_train : n_train + n_eval], eval_path)
        outputs += [train_path, eval_path]

    if args.stores != "none":
        store_root = os.path.join(out, "stores")
        os.makedirs(store_root, exist_ok=True)
        if args.stores == "plain":
            specs = [(f"sim{k:02d}", 0) for k in range(args.n_stores)]
        else:  # grid: the 4 models x 4 layer codes of the annotator grid
            specs = []
            for letter in "ABCD":
                for layer_code in "hijk":
                    cfg = AnnotatorConfig(model=letter, layer_code=layer_code, transform="none")
                    specs.append((cfg.model_name, cfg.layer))
        for k, (model_id, layer) in enumerate(specs):
            directory = os.path.join(store_root, store_dir_name(model_id, layer))
            plant_store(directory, model_id, layer, truth, annotator_index=k, dim=args.dim, seed=seed)
        outputs.append(store_root)
        print(f"simulated {len(rows)} items, {len(specs)} stores under {store_root}")
    else:
        print(f"simulated {len(rows)} items")
    _write_manifest(args, seed, [], outputs)
    return 0


def cmd_fit_transform(args) -> int:
    out = _ensure_out(args)
    store = open_store(_resolve_store_dir(args.store, _store_root(args)))
    corpus = read_corpus(args.corpus) if args.corpus else None
    if args.fit_on == "train" and corpus is None:
        raise DisagreeKitError("--fit-on train requires --corpus")
    stats = _fit_stats(store, args.kind, corpus, args.fit_on)
    path = os.path.join(out, "transform.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(stats.to_json() + "\n")
    print(f"fitted {args.kind} on {stats.fitted_on} vectors -> {path}")
    _write_manifest(args, None, [args.corpus, store.directory], [path])
    return 0


def cmd_score(args) -> int:
    out = _ensure_out(args)
    store = open_store(_resolve_store_dir(args.store, _store_root(args)))
    corpus = read_corpus(args.corpus)
    stats = _load_transform(args.transform, store)
    rows = []
    skipped = 0
    for pair in corpus.pairs():
        try:
            rows.append(PredictionRow(pair.instance_id, score_pair(store, stats, pair)))
        except DisagreeKitError:
            if not args.skip_failures:
                raise
            skipped += 1
    path = os.path.join(out, "scores.tsv")
    write_predictions(rows, path)
    if skipped:
        print(f"scored {len(rows)} pairs ({skipped} skipped) -> {path}")
    else:
        print(f"scored {len(rows)} pairs -> {path}")
    inputs = [args.corpus, store.directory] + ([] if args.transform == "none" else [args.transform])
    _write_manifest(args, None, inputs, [path])
    return 0


def cmd_fit_thresholds(args) -> int:
    out = _ensure_out(args)
    corpus = read_corpus(args.corpus)
    scores = {r.instance_id: float(r.value) for r in read_predictions(args.scores)}
    gold_all = {k: int(v) for k, v in _gold_map(corpus, args.gold + "_label").items()}
    spec = AlphaSpec(level=args.level)
    simplex = _simplex_config(args)
    path = os.path.join(out, "thresholds.json")

    if args.per_language:
        langs = sorted({row.pair.language for row in corpus.rows})
        per_language = {}
        for lang in langs:
            ids = {row.pair.instance_id for row in corpus.rows if row.pair.language == lang}
            gold = {k: v for k, v in gold_all.items() if k in ids and k in scores}
            thresholds, alpha = fit_thresholds({k: scores[k] for k in gold}, gold, spec, simplex)
            per_language[lang] = json.loads(thresholds_to_json(thresholds, alpha, spec))
            print(f"{lang}: alpha_train={alpha:.6f} edges={list(thresholds.edges)}")
        doc = {"per_language": per_language}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    else:
        gold = {k: v for k, v in gold_all.items() if k in scores}
        thresholds, alpha = fit_thresholds({k: scores[k] for k in gold}, gold, spec, simplex)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(thresholds_to_json(thresholds, alpha, spec) + "\n")
        print(f"alpha_train={alpha:.6f} edges={list(thresholds.edges)}")
    _write_manifest(args, None, [args.scores, args.corpus], [path])
    return 0


def _load_thresholds_doc(path: str):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "per_language" in doc:
        return {lang: thresholds_from_json(json.dumps(sub))[0] for lang, sub in doc["per_language"].items()}
    return thresholds_from_json(json.dumps(doc))[0]


def cmd_predict_labels(args) -> int:
    out = _ensure_out(args)
    scores = read_predictions(args.scores)
    loaded = _load_thresholds_doc(args.thresholds)
    rows = []
    if isinstance(loaded, dict):
        if not args.corpus:
            raise DisagreeKitError("per-language thresholds need --corpus for the language column")
        corpus = read_corpus(args.corpus)
        lang_by_id = {row.pair.instance_id: row.pair.language for row in corpus.rows}
        for record in scores:
            lang = lang_by_id.get(record.instance_id)
            if lang is None or lang not in loaded:
                raise DisagreeKitError(f"no thresholds for instance {record.instance_id!r} (language {lang!r})")
            rows.append(PredictionRow(record.instance_id, map_score_to_label(float(record.value), loaded[lang])))
    else:
        for record in scores:
            rows.append(PredictionRow(record.instance_id, map_score_to_label(float(record.value), loaded)))
    path = os.path.join(out, "predictions.tsv")
    write_predictions(rows, path)
    print(f"labeled {len(rows)} instances -> {path}")
    _write_manifest(args, None, [args.scores, args.thresholds, args.corpus], [path])
    return 0


def _mlp_stores(args) -> list[Store]:
    root = _store_root(args)
    return [open_store(_resolve_store_dir(name, root)) for name in args.store.split(",")]


def cmd_mlp_train(args) -> int:
    out = _ensure_out(args)
    seed = _resolve_seed(args)
    corpus = read_corpus(args.corpus)
    stores = _mlp_stores(args)
    layer_pool = "last4_mean" if len(stores) == 4 else "single"
    transform = None if args.transform == "none" else _load_transform(args.transform, stores[0])

    config = MLP_PRESETS[args.preset] if args.preset else MlpConfig()
    overrides = {}
    for field in ("depth", "hidden_dim", "epochs", "batch_size", "learning_rate", "dropout", "features"):
        value = getattr(args, field, None)
        if value is not None:
            overrides["input_features" if field == "features" else field] = value
    if args.weighted_loss:
        overrides["weighted_loss"] = True
    config = MlpConfig(**{**config.__dict__, **overrides, "seed": seed})

    task = "classify4" if args.task == "classify" else "regress"
    gold_field = (args.gold + "_label") if task == "classify4" else "disagreement"
    gold = _gold_map(corpus, gold_field)
    pairs = [p for p in corpus.pairs() if p.instance_id in gold]
    if not pairs:
        raise DisagreeKitError(f"no rows with gold {gold_field}")
    ids, features = build_feature_matrix(stores, transform, pairs, config.input_features, layer_pool)
    targets = np.array([gold[i] for i in ids])
    model = mlp_train_fn(features, targets, config, task)
    model_dir = os.path.join(out, "model")
    save_model(model, model_dir)
    trace_path = os.path.join(out, "loss.tsv")
    with open(trace_path, "w", encoding="utf-8") as fh:
        fh.write("epoch\tmean_loss\n")
        for epoch, loss in enumerate(model.loss_trace):
            fh.write(f"{epoch}\t{loss:.6f}\n")
    print(f"trained {config.depth} {task} on {len(ids)} rows; final loss {model.loss_trace[-1]:.6f}")
    inputs = [args.corpus] + [s.directory for s in stores]
    _write_manifest(args, seed, inputs, [model_dir, trace_path])
    return 0


def cmd_mlp_predict(args) -> int:
    out = _ensure_out(args)
    model = load_model(args.model_dir)
    corpus = read_corpus(args.corpus)
    stores = _mlp_stores(args)
    layer_pool = "last4_mean" if len(stores) == 4 else "single"
    transform = None if args.transform == "none" else _load_transform(args.transform, stores[0])
    ids, features = build_feature_matrix(stores, transform, corpus.pairs(), model.config.input_features, layer_pool)
    values = mlp_predict_fn(model, features)
    rows = [
        PredictionRow(i, int(v) if model.task == "classify4" else float(v))
        for i, v in zip(ids, values)
    ]
    path = os.path.join(out, "predictions.tsv")
    write_predictions(rows, path)
    print(f"predicted {len(rows)} instances -> {path}")
    _write_manifest(args, None, [args.corpus, args.model_dir] + [s.directory for s in stores], [path])
    return 0


def _resolver_for(args, train_corpus) -> AnnotatorResolver:
    return AnnotatorResolver(
        store_root=_store_root(args),
        train_corpus=train_corpus,
        level=args.level,
        gold_field=args.gold + "_label",
        fit_on=args.fit_on,
        simplex=_simplex_config(args),
        default_kind=args.transform_kind,
    )


def _annotator_pool(args, resolver) -> list:
    if getattr(args, "configs", None):
        return list(_parse_config_list(args.configs))
    if getattr(args, "pool", None) == "grid":
        return list(full_grid())
    # auto: every store directory under the root is one annotator
    root = _store_root(args)
    if root is None:
        raise DisagreeKitError(f"need --store-root or ${STORE_ROOT_ENV} for annotator discovery")
    return _auto_annotators(root)


def cmd_ensemble_predict(args) -> int:
    if args.preset:
        preset = PIPELINE_PRESETS[args.preset]
        args.configs = args.configs or preset.get("configs")
        args.measure = args.measure or preset.get("measure")
    args.measure = args.measure or "std"
    out = _ensure_out(args)
    train_corpus = read_corpus(args.train_corpus)
    eval_corpus = read_corpus(args.eval_corpus) if args.eval_corpus else train_corpus
    resolver = _resolver_for(args, train_corpus)
    subset = _annotator_pool(args, resolver)
    resolver.resolve_all(subset)
    matrix = build_annotation_matrix(subset, resolver.stores, resolver.transforms, resolver.thresholds, eval_corpus.pairs())
    predictions, skipped = predict_disagreement(matrix, args.measure)
    if not predictions:
        raise DisagreeKitError("every instance lacked enough virtual annotations")
    rows = [PredictionRow(i, v) for i, v in predictions.items()]
    path = os.path.join(out, "predictions.tsv")
    write_predictions(rows, path)
    summary = {
        "annotators": subset_code(subset),
        "measure": args.measure,
        "n_predicted": len(rows),
        "n_skipped": skipped,
    }
    summary_path = os.path.join(out, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"ensemble {summary['annotators']} measure={args.measure}: {len(rows)} predictions ({skipped} skipped)")
    _write_manifest(args, None, [args.train_corpus, args.eval_corpus], [path, summary_path])
    return 0


def _threshold_eval_cell(resolver: AnnotatorResolver, cfg, eval_corpus, level: str):
    """Fit on train via the resolver, then alpha of predicted vs gold median."""
    resolver.resolve(cfg)
    store, stats, thresholds = resolver.stores[cfg], resolver.transforms[cfg], resolver.thresholds[cfg]
    scores = _scores_with_isolation(store, stats, eval_corpus.pairs())
    gold = {k: int(v) for k, v in _gold_map(eval_corpus, "median_label").items() if k in scores}
    pred = {k: map_score_to_label(scores[k], thresholds) for k in gold}
    alpha, n = _alpha_two_raters(gold, pred, level)
    return alpha, n


def _run_threshold_sweep(args, cells) -> int:
    out = _ensure_out(args)
    train_corpus = read_corpus(args.train_corpus)
    eval_corpus = read_corpus(args.eval_corpus)
    args.gold = "median"
    resolver = _resolver_for(args, train_corpus)
    path = os.path.join(out, "sweep.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("model\tlayer\ttransform\talpha_eval\tn_items\tstatus\n")
        for cfg in cells:
            try:
                alpha, n = _threshold_eval_cell(resolver, cfg, eval_corpus, args.level)
                fh.write(f"{cfg.model_name}\t{cfg.layer}\t{cfg.transform}\t{alpha:.6f}\t{n}\tok\n")
            except DisagreeKitError as err:
                fh.write(f"{cfg.model_name}\t{cfg.layer}\t{cfg.transform}\t\t0\tfailed: {err}\n")
    print(f"wrote {path}")
    _write_manifest(args, None, [args.train_corpus, args.eval_corpus], [path])
    return 0


def cmd_sweep_transforms(args) -> int:
    letter = args.model if args.model in MODEL_NAMES else None
    if letter is None:
        raise DisagreeKitError(f"--model expects a letter in A..D, got {args.model!r}")
    cells = [
        AnnotatorConfig(model=letter, layer_code=code, transform=kind)
        for code in "hijk"
        for kind in ("none", "center", "standardize", "abtt")
    ]
    return _run_threshold_sweep(args, cells)


def cmd_sweep_layers(args) -> int:
    letters = [tok.strip() for tok in args.models.split(",") if tok.strip()]
    for letter in letters:
        if letter not in MODEL_NAMES:
            raise DisagreeKitError(f"unknown model letter {letter!r}")
    cells = [
        AnnotatorConfig(model=letter, layer_code=code, transform=args.transform_kind)
        for letter in letters
        for code in "hijk"
    ]
    return _run_threshold_sweep(args, cells)


def _sweep_gold(args, eval_corpus) -> dict[str, float]:
    if args.truth:
        return {row.instance_id: row.sigma for row in read_truth(args.truth)}
    return {k: float(v) for k, v in _gold_map(eval_corpus, "disagreement").items()}


def _write_sweep_rows(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rank\tsubset_code\tmeasure\tspearman\n")
        for row in rows:
            value = "" if row.spearman is None else f"{row.spearman:.6f}"
            fh.write(f"{row.rank}\t{row.subset_code}\t{row.measure}\t{value}\n")


def cmd_sweep_measures(args) -> int:
    out = _ensure_out(args)
    seed = _resolve_seed(args)
    train_corpus = read_corpus(args.train_corpus)
    eval_corpus = read_corpus(args.eval_corpus) if args.eval_corpus else train_corpus
    resolver = _resolver_for(args, train_corpus)
    pool = _annotator_pool(args, resolver)
    columns = resolver.columns(pool, eval_corpus.pairs())
    gold = _sweep_gold(args, eval_corpus)
    item_ids = [p.instance_id for p in eval_corpus.pairs()]
    spec = EnsembleSpec(
        strategy=args.strategy, pool=tuple(pool), seed=seed, subset_size=args.subset_size, n_samples=args.n_samples
    )
    all_rows = []
    summary = {}
    for measure in MEASURES:
        rows = run_strategy_sweep(spec, columns, item_ids, gold, measure, jobs=args.jobs)
        all_rows.extend(rows)
        valid = [r.spearman for r in rows if r.spearman is not None]
        summary[measure] = {
            "mean_spearman": float(np.mean(valid)) if valid else None,
            "n_valid": len(valid),
            "n_failed": len(rows) - len(valid),
        }
    path = os.path.join(out, "sweep_measures.tsv")
    _write_sweep_rows(path, all_rows)
    summary_path = os.path.join(out, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    for measure in MEASURES:
        mean = summary[measure]["mean_spearman"]
        print(f"{measure}: mean spearman {mean if mean is None else format(mean, '.6f')}")
    _write_manifest(args, seed, [args.train_corpus, args.eval_corpus, args.truth], [path, summary_path])
    return 0


def cmd_sweep_strategies(args) -> int:
    out = _ensure_out(args)
    seed = _resolve_seed(args)
    train_corpus = read_corpus(args.train_corpus)
    eval_corpus = read_corpus(args.eval_corpus) if args.eval_corpus else train_corpus
    resolver = _resolver_for(args, train_corpus)
    pool = _annotator_pool(args, resolver)
    columns = resolver.columns(pool, eval_corpus.pairs())
    gold = _sweep_gold(args, eval_corpus)
    item_ids = [p.instance_id for p in eval_corpus.pairs()]
    strategies = [tok.strip() for tok in args.strategies.split(",") if tok.strip()]
    outputs = []
    summary = {}
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise DisagreeKitError(f"unknown strategy {strategy!r}")
        spec = EnsembleSpec(
            strategy=strategy, pool=tuple(pool), seed=seed, subset_size=args.subset_size, n_samples=args.n_samples
        )
        rows = run_strategy_sweep(spec, columns, item_ids, gold, args.measure, jobs=args.jobs)
        path = os.path.join(out, f"sweep_{strategy}.tsv")
        _write_sweep_rows(path, rows)
        outputs.append(path)
        summary[strategy] = [
            {"rank": r.rank, "subset_code": r.subset_code, "spearman": r.spearman}
            for r in rows[:5]
        ]
    summary_path = os.path.join(out, "top5.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    outputs.append(summary_path)
    for strategy in strategies:
        best = summary[strategy][0] if summary[strategy] else None
        print(f"{strategy}: best {best}")
    _write_manifest(args, seed, [args.train_corpus, args.eval_corpus, args.truth], outputs)
    return 0


def cmd_evaluate(args) -> int:
    out = _ensure_out(args)
    predictions = read_predictions(args.predictions)
    doc = {"task": args.task, "n_items": 0}
    if args.task == 1:
        if not args.gold_corpus:
            raise DisagreeKitError("task 1 evaluation needs --gold-corpus")
        corpus = read_corpus(args.gold_corpus)
        gold = {k: int(v) for k, v in _gold_map(corpus, args.gold + "_label").items()}
        pred = {r.instance_id: int(r.value) for r in predictions}
        alpha, n = _alpha_two_raters(gold, pred, args.level)
        doc.update(metric="krippendorff_alpha", level=args.level, value=alpha, n_items=n)
    else:
        if args.truth:
            gold = {row.instance_id: row.sigma for row in read_truth(args.truth)}
            gold_name = "true_sigma"
        else:
            if not args.gold_corpus:
                raise DisagreeKitError("task 2 evaluation needs --gold-corpus or --truth")
            corpus = read_corpus(args.gold_corpus)
            gold = {k: float(v) for k, v in _gold_map(corpus, "disagreement").items()}
            gold_name = "gold_disagreement"
        pred = {r.instance_id: float(r.value) for r in predictions}
        ids = sorted(set(gold) & set(pred))
        rho = spearman_rho([pred[i] for i in ids], [gold[i] for i in ids])
        doc.update(metric="spearman_rho", against=gold_name, value=rho, n_items=len(ids))
    json_path = os.path.join(out, "evaluation.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    tsv_path = os.path.join(out, "evaluation.tsv")
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\tn_items\n")
        fh.write(f"{doc['metric']}\t{doc['value']:.6f}\t{doc['n_items']}\n")
    print(f"{doc['metric']}={doc['value']:.6f} over {doc['n_items']} items")
    _write_manifest(args, None, [args.predictions, args.gold_corpus, args.truth], [json_path, tsv_path])
    return 0


def cmd_presets(args) -> int:
    doc = {
        "pipeline": PIPELINE_PRESETS,
        "mlp": {name: cfg.__dict__ for name, cfg in MLP_PRESETS.items()},
    }
    print(json.dumps(doc, sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------- parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="disagree-kit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, help="generate a synthetic corpus, truth table, and embedding stores")
    p.add_argument("--n-items", type=int, required=True)
    p.add_argument("--mu-range", type=_float_pair, default=(1.0, 4.0))
    p.add_argument("--sigma-range", type=_float_pair, default=(0.0, 0.8))
    p.add_argument("--n-annotators", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--stores", choices=("none", "plain", "grid"), default="none")
    p.add_argument("--n-stores", type=int, default=4, help="store count for --stores plain")
    p.add_argument("--split", type=_int_pair, default=None, help="train,eval item counts")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("fit-transform", cmd_fit_transform, help="fit anisotropy-removal statistics for one store")
    p.add_argument("--store", required=True)
    p.add_argument("--store-root", default=None)
    p.add_argument("--kind", choices=("none", "center", "standardize", "abtt"), required=True)
    p.add_argument("--corpus", default=None, help="training corpus whose pooled vectors are fitted on")
    p.add_argument("--fit-on", choices=("train", "all"), default="train")
    p.add_argument("--out", required=True)

    p = add("score", cmd_score, help="cosine relatedness scores for a corpus")
    p.add_argument("--store", required=True)
    p.add_argument("--store-root", default=None)
    p.add_argument("--transform", required=True, help="transform.json path, or 'none'")
    p.add_argument("--corpus", required=True)
    p.add_argument("--skip-failures", action="store_true")
    p.add_argument("--out", required=True)

    p = add("fit-thresholds", cmd_fit_thresholds, help="fit bin edges maximizing Krippendorff's alpha")
    p.add_argument("--scores", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--gold", choices=("median", "majority"), default="median")
    p.add_argument("--level", choices=LEVELS, default="ordinal")
    p.add_argument("--per-language", action="store_true")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("predict-labels", cmd_predict_labels, help="map scores to labels with fitted thresholds")
    p.add_argument("--scores", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--out", required=True)

    p = add("mlp-train", cmd_mlp_train, help="train an MLP classifier or regressor on store features")
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True, help="store dir, or 4 comma-separated dirs for last-4 pooling")
    p.add_argument("--store-root", default=None)
    p.add_argument("--transform", default="none")
    p.add_argument("--task", choices=("classify", "regress"), required=True)
    p.add_argument("--gold", choices=("median", "majority"), default="median")
    p.add_argument("--preset", choices=sorted(MLP_PRESETS), default=None)
    p.add_argument("--depth", choices=("mlp1", "mlp2"), default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--features", choices=("concat", "concat_abs_diff"), default=None)
    p.add_argument("--weighted-loss", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("mlp-predict", cmd_mlp_predict, help="predict with a saved MLP model")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--store-root", default=None)
    p.add_argument("--transform", default="none")
    p.add_argument("--out", required=True)

    def ensemble_common(p, needs_measure=True):
        p.add_argument("--train-corpus", required=True)
        p.add_argument("--eval-corpus", default=None)
        p.add_argument("--store-root", default=None)
        p.add_argument("--gold", choices=("median", "majority"), default="majority")
        p.add_argument("--level", choices=LEVELS, default="ordinal")
        p.add_argument("--fit-on", choices=("train", "all"), default="train")
        p.add_argument("--transform-kind", choices=("none", "center", "standardize", "abtt"), default="none",
                       help="transform for name-addressed annotators (codes carry their own)")
        p.add_argument("--restarts", type=int, default=None)
        p.add_argument("--max-iter", type=int, default=None)

    p = add("ensemble-predict", cmd_ensemble_predict, help="virtual-annotator disagreement prediction")
    p.add_argument("--configs", default=None, help="dashed code list, e.g. AjY-AiX-AjZ-AiW")
    p.add_argument("--annotators", choices=("auto",), default=None, help="use every store under the root")
    p.add_argument("--measure", choices=MEASURES, default=None)
    p.add_argument("--preset", choices=sorted(PIPELINE_PRESETS), default=None)
    ensemble_common(p)
    p.add_argument("--out", required=True)

    p = add("sweep-transforms", cmd_sweep_transforms, help="alpha per (layer, transform) for one model")
    p.add_argument("--model", required=True, help="model letter A..D")
    p.add_argument("--train-corpus", required=True)
    p.add_argument("--eval-corpus", required=True)
    p.add_argument("--store-root", default=None)
    p.add_argument("--level", choices=LEVELS, default="ordinal")
    p.add_argument("--fit-on", choices=("train", "all"), default="train")
    p.add_argument("--transform-kind", default="none", help=argparse.SUPPRESS)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("sweep-layers", cmd_sweep_layers, help="alpha per (model, layer) for one transform")
    p.add_argument("--models", default="A,B,C,D")
    p.add_argument("--transform-kind", choices=("none", "center", "standardize", "abtt"), required=True)
    p.add_argument("--train-corpus", required=True)
    p.add_argument("--eval-corpus", required=True)
    p.add_argument("--store-root", default=None)
    p.add_argument("--level", choices=LEVELS, default="ordinal")
    p.add_argument("--fit-on", choices=("train", "all"), default="train")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("sweep-measures", cmd_sweep_measures, help="STD/MPD/VR comparison over sampled subsets")
    p.add_argument("--pool", choices=("grid", "auto"), default="auto")
    p.add_argument("--configs", default=None, help="explicit pool as dashed/comma code list")
    p.add_argument("--strategy", choices=STRATEGIES, default="mixed")
    p.add_argument("--subset-size", type=int, default=4)
    p.add_argument("--n-samples", type=int, default=500)
    p.add_argument("--truth", default=None, help="truth.tsv; correlate against true sigma instead of gold MPD")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    ensemble_common(p)
    p.add_argument("--out", required=True)

    p = add("sweep-strategies", cmd_sweep_strategies, help="homo/hetero/mixed subset sweeps")
    p.add_argument("--pool", choices=("grid", "auto"), default="grid")
    p.add_argument("--configs", default=None, help="explicit pool as dashed/comma code list")
    p.add_argument("--strategies", default="homo,hetero,mixed")
    p.add_argument("--measure", choices=MEASURES, default="std")
    p.add_argument("--subset-size", type=int, default=4)
    p.add_argument("--n-samples", type=int, default=500)
    p.add_argument("--truth", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    ensemble_common(p)
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, help="alpha for label predictions, spearman for score predictions")
    p.add_argument("--task", type=int, choices=(1, 2), required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold-corpus", default=None)
    p.add_argument("--gold", choices=("median", "majority"), default="median")
    p.add_argument("--truth", default=None)
    p.add_argument("--level", choices=LEVELS, default="ordinal")
    p.add_argument("--out", required=True)

    add("presets", cmd_presets, help="print the named option bundles")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except SystemExit as err:  # --help / --version
        return int(err.code or 0)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except (DisagreeKitError, OSError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
