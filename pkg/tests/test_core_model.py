import itertools

import pytest

from disagree_kit.core_model import (
    AnnotatorConfig,
    GoldLabels,
    UsagePair,
    format_annotator_code,
    majority_label,
    mean_pairwise_difference,
    median_label,
    parse_annotator_code,
)
from disagree_kit.errors import CodeParseError, EmptyJudgments, InsufficientJudgments


def test_majority_label_examples():
    assert majority_label([2, 2, 3]) == 2
    assert majority_label([1, 1, 4, 4]) == 1  # ties break to the smallest
    assert majority_label([3]) == 3


def test_majority_label_empty():
    with pytest.raises(EmptyJudgments):
        majority_label([])


def test_median_label_examples():
    assert median_label([1, 2, 4]) == 2
    assert median_label([1, 2, 3, 4]) == 2  # lower of the two middles
    assert median_label([4, 4]) == 4
    with pytest.raises(EmptyJudgments):
        median_label([])


def test_mean_pairwise_difference_examples():
    assert mean_pairwise_difference([1, 1, 1]) == 0.0
    assert mean_pairwise_difference([1, 4]) == 3.0
    assert mean_pairwise_difference([1, 2, 4]) == pytest.approx(2.0)
    with pytest.raises(InsufficientJudgments):
        mean_pairwise_difference([2])


def test_label_ops_permutation_invariant():
    for js in ([1, 2, 2, 4], [3, 1, 4, 1, 2], [4, 4, 1]):
        base = (majority_label(js), median_label(js), mean_pairwise_difference(js))
        for perm in itertools.permutations(js):
            assert (majority_label(perm), median_label(perm), mean_pairwise_difference(perm)) == base


def test_constant_judgments_collapse():
    for v in (1, 2, 3, 4):
        js = [v] * 5
        assert majority_label(js) == v
        assert median_label(js) == v
        assert mean_pairwise_difference(js) == 0.0


def test_mpd_bounds():
    for js in itertools.product((1, 2, 3, 4), repeat=4):
        assert 0.0 <= mean_pairwise_difference(js) <= 3.0


def test_parse_annotator_code_examples():
    cfg = parse_annotator_code("AjY")
    assert cfg.model_name == "Llama-7B"
    assert cfg.layer == 24
    assert cfg.transform == "standardize"

    cfg = parse_annotator_code("BkW")
    assert cfg.model_name == "XLM-RoBERTa-base"
    assert cfg.layer == 10
    assert cfg.transform == "abtt"


@pytest.mark.parametrize("bad,position", [("Qx9", 0), ("AzY", 1), ("Aj9", 2), ("Aj", 2), ("AjYY", 3)])
def test_parse_annotator_code_errors(bad, position):
    with pytest.raises(CodeParseError) as exc:
        parse_annotator_code(bad)
    assert exc.value.position == position


def test_code_roundtrip_all_64():
    codes = ["".join(c) for c in itertools.product("ABCD", "hijk", "XYZW")]
    assert len(codes) == 64
    for code in codes:
        cfg = parse_annotator_code(code)
        assert format_annotator_code(cfg) == code
        assert parse_annotator_code(format_annotator_code(cfg)) == cfg


def test_layer_resolution_per_model():
    assert parse_annotator_code("AhX").layer == 8
    assert parse_annotator_code("AkX").layer == 32
    assert parse_annotator_code("ChX").layer == 1
    assert parse_annotator_code("DkX").layer == 10


def test_usage_pair_validation():
    with pytest.raises(ValueError):
        UsagePair("p", "w", "en", "abc", (2, 2), "abc", (0, 1))
    with pytest.raises(ValueError):
        UsagePair("p", "w", "en", "abc", (0, 5), "abc", (0, 1))
    with pytest.raises(ValueError):
        UsagePair("p", "w", "en", "abc", (0, 1), "abc", (0, 1), judgments=(0, 2))
    with pytest.raises(ValueError):
        UsagePair("p", "w", "klingon", "abc", (0, 1), "abc", (0, 1))


def test_gold_labels_derivation():
    g = GoldLabels.from_judgments((1, 1, 2))
    assert g.majority_label == 1
    assert g.median_label == 1
    assert g.disagreement == pytest.approx(2 / 3)
    assert GoldLabels.from_judgments(()) == GoldLabels()
    single = GoldLabels.from_judgments((3,))
    assert (single.median_label, single.majority_label, single.disagreement) == (3, 3, 0.0)


def test_annotator_config_validation():
    with pytest.raises(ValueError):
        AnnotatorConfig(model="E", layer_code="h", transform="none")
    with pytest.raises(ValueError):
        AnnotatorConfig(model="A", layer_code="z", transform="none")
    with pytest.raises(ValueError):
        AnnotatorConfig(model="A", layer_code="h", transform="whiten")
