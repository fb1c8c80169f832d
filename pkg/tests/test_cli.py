import json
import os

import numpy as np
import pytest

from disagree_kit.cli import main
from disagree_kit.corpus_io import read_corpus, read_predictions
from disagree_kit.embedding_store import open_store


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def simdir(tmp_path_factory):
    """Shared synthetic world: 80 items, one plain store, train/eval split."""
    out = tmp_path_factory.mktemp("sim")
    rc = run(
        "simulate", "--n-items", 80, "--mu-range", "1.5,3.5", "--sigma-range", "0.2,0.2",
        "--n-annotators", 7, "--dim", 12, "--stores", "plain", "--n-stores", 1,
        "--split", "60,20", "--seed", 420, "--out", out,
    )
    assert rc == 0
    return out


def test_simulate_outputs(simdir):
    corpus = read_corpus(str(simdir / "corpus.tsv"))
    assert len(corpus.rows) == 80
    assert len(read_corpus(str(simdir / "train.tsv")).rows) == 60
    assert len(read_corpus(str(simdir / "eval.tsv")).rows) == 20
    store = open_store(str(simdir / "stores" / "sim00_L0"))
    assert store.manifest.count == 160
    assert store.manifest.dim == 12
    manifest = json.loads((simdir / "run_manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 420
    assert manifest["outputs"]


def test_threshold_pipeline_end_to_end(simdir, tmp_path):
    store = simdir / "stores" / "sim00_L0"
    rc = run("fit-transform", "--store", store, "--kind", "standardize",
             "--corpus", simdir / "train.tsv", "--out", tmp_path / "t")
    assert rc == 0
    transform = tmp_path / "t" / "transform.json"

    rc = run("score", "--store", store, "--transform", transform,
             "--corpus", simdir / "train.tsv", "--out", tmp_path / "strain")
    assert rc == 0
    rc = run("fit-thresholds", "--scores", tmp_path / "strain" / "scores.tsv",
             "--corpus", simdir / "train.tsv", "--out", tmp_path / "th")
    assert rc == 0
    doc = json.loads((tmp_path / "th" / "thresholds.json").read_text())
    assert len(doc["edges"]) == 3 and doc["alpha_train"] > 0.5

    rc = run("score", "--store", store, "--transform", transform,
             "--corpus", simdir / "eval.tsv", "--out", tmp_path / "seval")
    assert rc == 0
    rc = run("predict-labels", "--scores", tmp_path / "seval" / "scores.tsv",
             "--thresholds", tmp_path / "th" / "thresholds.json", "--out", tmp_path / "p")
    assert rc == 0
    preds = read_predictions(str(tmp_path / "p" / "predictions.tsv"))
    assert all(isinstance(r.value, int) and 1 <= r.value <= 4 for r in preds)

    rc = run("evaluate", "--task", 1, "--predictions", tmp_path / "p" / "predictions.tsv",
             "--gold-corpus", simdir / "eval.tsv", "--out", tmp_path / "e")
    assert rc == 0
    result = json.loads((tmp_path / "e" / "evaluation.json").read_text())
    assert result["metric"] == "krippendorff_alpha"
    assert result["value"] > 0.5


def test_evaluate_perfect_predictions_alpha_one(simdir, tmp_path):
    corpus = read_corpus(str(simdir / "eval.tsv"))
    lines = ["instance_id\tprediction"]
    for row in corpus.rows:
        lines.append(f"{row.pair.instance_id}\t{row.gold.median_label}")
    path = tmp_path / "gold_as_pred.tsv"
    path.write_text("\n".join(lines) + "\n")
    rc = run("evaluate", "--task", 1, "--predictions", path,
             "--gold-corpus", simdir / "eval.tsv", "--out", tmp_path / "e")
    assert rc == 0
    result = json.loads((tmp_path / "e" / "evaluation.json").read_text())
    assert result["value"] == 1.0


def test_mlp_pipeline(simdir, tmp_path):
    store = simdir / "stores" / "sim00_L0"
    rc = run("mlp-train", "--task", "classify", "--corpus", simdir / "train.tsv",
             "--store", store, "--epochs", 30, "--batch-size", 16, "--hidden-dim", 32,
             "--seed", 7, "--out", tmp_path / "m")
    assert rc == 0
    assert (tmp_path / "m" / "model" / "weights.bin").exists()
    rc = run("mlp-predict", "--model-dir", tmp_path / "m" / "model", "--corpus", simdir / "eval.tsv",
             "--store", store, "--out", tmp_path / "mp")
    assert rc == 0
    rc = run("evaluate", "--task", 1, "--predictions", tmp_path / "mp" / "predictions.tsv",
             "--gold-corpus", simdir / "eval.tsv", "--out", tmp_path / "me")
    assert rc == 0
    result = json.loads((tmp_path / "me" / "evaluation.json").read_text())
    assert result["n_items"] == 20


def test_mlp_regress_preset(simdir, tmp_path):
    store = simdir / "stores" / "sim00_L0"
    rc = run("mlp-train", "--task", "regress", "--corpus", simdir / "train.tsv",
             "--store", store, "--preset", "task2-mlp2", "--epochs", 10,
             "--seed", 3, "--out", tmp_path / "m")
    assert rc == 0
    model_doc = json.loads((tmp_path / "m" / "model" / "model.json").read_text())
    assert model_doc["task"] == "regress"
    assert model_doc["config"]["batch_size"] == 32  # preset survives the epoch override
    rc = run("mlp-predict", "--model-dir", tmp_path / "m" / "model", "--corpus", simdir / "eval.tsv",
             "--store", store, "--out", tmp_path / "mp")
    assert rc == 0
    preds = read_predictions(str(tmp_path / "mp" / "predictions.tsv"))
    assert all(isinstance(r.value, float) for r in preds)


@pytest.fixture(scope="module")
def ensdir(tmp_path_factory):
    """Synthetic world with 8 annotator stores for ensemble commands."""
    out = tmp_path_factory.mktemp("ens")
    rc = run(
        "simulate", "--n-items", 60, "--mu-range", "2,3", "--sigma-range", "0,0.8",
        "--n-annotators", 8, "--dim", 10, "--stores", "plain", "--n-stores", 8,
        "--seed", 28, "--out", out,
    )
    assert rc == 0
    return out


def test_ensemble_predict_auto(ensdir, tmp_path):
    rc = run("ensemble-predict", "--annotators", "auto", "--store-root", ensdir / "stores",
             "--train-corpus", ensdir / "corpus.tsv", "--measure", "std", "--out", tmp_path / "e")
    assert rc == 0
    preds = read_predictions(str(tmp_path / "e" / "predictions.tsv"))
    assert len(preds) == 60
    summary = json.loads((tmp_path / "e" / "summary.json").read_text())
    assert summary["n_skipped"] == 0
    assert len(summary["annotators"].split("-")) == 8


def test_ensemble_predict_codes_need_grid_stores(ensdir, tmp_path):
    rc = run("ensemble-predict", "--configs", "AjY-AiX-AjZ-AiW", "--store-root", ensdir / "stores",
             "--train-corpus", ensdir / "corpus.tsv", "--out", tmp_path / "e")
    assert rc == 2  # plain sim stores do not carry the grid model names


def test_ensemble_preset_post_eval_task2(tmp_path):
    out = tmp_path / "sim"
    rc = run("simulate", "--n-items", 30, "--mu-range", "2,3", "--sigma-range", "0.1,0.7",
             "--n-annotators", 6, "--dim", 8, "--stores", "grid", "--seed", 5, "--out", out)
    assert rc == 0
    rc = run("ensemble-predict", "--preset", "post-eval-task2", "--store-root", out / "stores",
             "--train-corpus", out / "corpus.tsv", "--out", tmp_path / "e")
    assert rc == 0
    summary = json.loads((tmp_path / "e" / "summary.json").read_text())
    assert summary["annotators"] == "AjY-AiX-AjZ-AiW"
    assert summary["measure"] == "std"


def test_sweep_measures_and_strategies(tmp_path):
    out = tmp_path / "sim"
    rc = run("simulate", "--n-items", 40, "--mu-range", "2,3", "--sigma-range", "0,0.8",
             "--n-annotators", 6, "--dim", 8, "--stores", "grid", "--seed", 11, "--out", out)
    assert rc == 0
    rc = run("sweep-measures", "--pool", "grid", "--strategy", "mixed", "--n-samples", 12,
             "--store-root", out / "stores", "--train-corpus", out / "corpus.tsv",
             "--truth", out / "truth.tsv", "--seed", 2, "--jobs", 2, "--out", tmp_path / "sm")
    assert rc == 0
    lines = (tmp_path / "sm" / "sweep_measures.tsv").read_text().splitlines()
    assert lines[0] == "rank\tsubset_code\tmeasure\tspearman"
    assert len(lines) == 1 + 12 * 3
    summary = json.loads((tmp_path / "sm" / "summary.json").read_text())
    assert set(summary) == {"std", "mpd", "vr"}

    rc = run("sweep-strategies", "--pool", "grid", "--strategies", "homo,hetero,mixed",
             "--measure", "std", "--n-samples", 10, "--store-root", out / "stores",
             "--train-corpus", out / "corpus.tsv", "--truth", out / "truth.tsv",
             "--seed", 3, "--out", tmp_path / "ss")
    assert rc == 0
    top5 = json.loads((tmp_path / "ss" / "top5.json").read_text())
    assert set(top5) == {"homo", "hetero", "mixed"}
    for strategy in ("homo", "hetero", "mixed"):
        lines = (tmp_path / "ss" / f"sweep_{strategy}.tsv").read_text().splitlines()
        assert len(lines) == 11
    # every homo subset shares its model letter in the code column
    for line in (tmp_path / "ss" / "sweep_homo.tsv").read_text().splitlines()[1:]:
        code = line.split("\t")[1]
        assert len({tok[0] for tok in code.split("-")}) == 1


def test_mlp_last4_layer_pooling(tmp_path):
    out = tmp_path / "sim"
    rc = run("simulate", "--n-items", 40, "--mu-range", "1.5,3.5", "--sigma-range", "0.2,0.2",
             "--n-annotators", 5, "--dim", 6, "--stores", "grid", "--seed", 9,
             "--split", "30,10", "--out", out)
    assert rc == 0
    layers = ",".join(f"Llama-7B_L{l}" for l in (8, 16, 24, 32))
    rc = run("mlp-train", "--task", "classify", "--corpus", out / "train.tsv",
             "--store", layers, "--store-root", out / "stores", "--epochs", 5,
             "--hidden-dim", 16, "--seed", 1, "--out", tmp_path / "m")
    assert rc == 0
    rc = run("mlp-predict", "--model-dir", tmp_path / "m" / "model", "--corpus", out / "eval.tsv",
             "--store", layers, "--store-root", out / "stores", "--out", tmp_path / "mp")
    assert rc == 0
    assert len(read_predictions(str(tmp_path / "mp" / "predictions.tsv"))) == 10


def test_sweep_transforms_smoke(tmp_path):
    out = tmp_path / "sim"
    rc = run("simulate", "--n-items", 50, "--mu-range", "1.5,3.5", "--sigma-range", "0.2,0.2",
             "--n-annotators", 7, "--dim", 8, "--stores", "grid", "--seed", 13,
             "--split", "35,15", "--out", out)
    assert rc == 0
    rc = run("sweep-transforms", "--model", "B", "--store-root", out / "stores",
             "--train-corpus", out / "train.tsv", "--eval-corpus", out / "eval.tsv",
             "--out", tmp_path / "st")
    assert rc == 0
    lines = (tmp_path / "st" / "sweep.tsv").read_text().splitlines()
    assert len(lines) == 17  # header + 4 layers x 4 transforms
    rc = run("sweep-layers", "--models", "A,B", "--transform-kind", "standardize",
             "--store-root", out / "stores", "--train-corpus", out / "train.tsv",
             "--eval-corpus", out / "eval.tsv", "--out", tmp_path / "sl")
    assert rc == 0
    lines = (tmp_path / "sl" / "sweep.tsv").read_text().splitlines()
    assert len(lines) == 9


def test_per_language_thresholds(tmp_path):
    # two synthetic languages via two corpora merged by hand
    header = None
    rows = []
    for seed, lang in ((1, "en"), (2, "de")):
        out = tmp_path / f"sim{lang}"
        assert run("simulate", "--n-items", 30, "--sigma-range", "0.2,0.2", "--n-annotators", 5,
                   "--stores", "plain", "--n-stores", 1, "--seed", seed, "--out", out) == 0
        lines = (out / "corpus.tsv").read_text().splitlines()
        header = lines[0]
        for i, line in enumerate(lines[1:]):
            fields = line.split("\t")
            fields[0] = f"{lang}{i:03d}"
            fields[2] = lang
            rows.append("\t".join(fields))
    merged = tmp_path / "merged.tsv"
    merged.write_text(header + "\n" + "\n".join(rows) + "\n")

    # scores: noisy mapped gold so thresholds are recoverable
    rng = np.random.default_rng(0)
    corpus = read_corpus(str(merged))
    score_lines = ["instance_id\tprediction"]
    for row in corpus.rows:
        s = (row.gold.median_label - 2.5) / 1.5 + rng.normal(0, 0.05)
        score_lines.append(f"{row.pair.instance_id}\t{max(-1, min(1, s)):.6f}")
    scores = tmp_path / "scores.tsv"
    scores.write_text("\n".join(score_lines) + "\n")

    rc = run("fit-thresholds", "--scores", scores, "--corpus", merged, "--per-language",
             "--out", tmp_path / "th")
    assert rc == 0
    doc = json.loads((tmp_path / "th" / "thresholds.json").read_text())
    assert set(doc["per_language"]) == {"de", "en"}
    rc = run("predict-labels", "--scores", scores, "--thresholds", tmp_path / "th" / "thresholds.json",
             "--corpus", merged, "--out", tmp_path / "p")
    assert rc == 0
    assert len(read_predictions(str(tmp_path / "p" / "predictions.tsv"))) == 60


def test_exit_codes(tmp_path):
    assert run("unknown-command") == 1
    assert run("evaluate", "--task", 1, "--predictions", "/nonexistent.tsv",
               "--gold-corpus", "/nonexistent.tsv", "--out", tmp_path / "x") == 2
    assert run("score", "--store", "/nonexistent", "--transform", "none",
               "--corpus", "/nonexistent.tsv", "--out", tmp_path / "y") == 2


def test_presets_command(capsys):
    assert run("presets") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["pipeline"]["post-eval-task2"]["configs"] == "AjY-AiX-AjZ-AiW"
    assert doc["mlp"]["task2-mlp1"]["epochs"] == 200


def test_store_root_env_fallback(simdir, tmp_path, monkeypatch):
    monkeypatch.setenv("DISAGREE_KIT_STORE_ROOT", str(simdir / "stores"))
    rc = run("score", "--store", "sim00_L0", "--transform", "none",
             "--corpus", simdir / "eval.tsv", "--out", tmp_path / "s")
    assert rc == 0
    assert (tmp_path / "s" / "scores.tsv").exists()
