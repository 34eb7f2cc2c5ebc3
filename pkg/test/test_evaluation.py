import json
import math

from intactre.config import ModelConfig, TrainConfig
from intactre.evaluation import (CURVE_NAME, METRICS_NAME, PredictionRecord, PrecisionRecallCurve, auc, evaluate,
                                 evaluate_predictions, max_f1, mean_stderr, pr_curve, prediction_records, rank,
                                 read_curve, read_gold, read_predictions, summarize_runs, write_predictions, write_results,
                                 write_summary)
from intactre.synth import SynthConfig, synth_generate
from intactre.train import train

import numpy as np
import pytest

GOLD = frozenset({(("a", "b"), 1), (("c", "d"), 2), (("e", "f"), 1)})


def _records(*rows):
    return [PredictionRecord((head, tail), relation, score) for head, tail, relation, score in rows]


def test_perfect_ranking():
    predictions = _records(("a", "b", 1, 0.9), ("c", "d", 2, 0.8), ("e", "f", 1, 0.7),
                           ("a", "b", 2, 0.2), ("c", "d", 1, 0.1))
    curve = pr_curve(predictions, GOLD)
    assert auc(curve) == 1.0
    assert max_f1(curve) == pytest.approx(1.0)
    assert curve[-1] == (1.0, 0.6)


def test_all_wrong_ranking():
    curve = pr_curve(_records(("a", "b", 2, 0.9), ("x", "y", 1, 0.8)), GOLD)
    assert auc(curve) == 0.0
    assert max_f1(curve) == 0.0


def test_auc_of_interleaved_ranking():
    predictions = _records(("a", "b", 1, 0.9), ("x", "y", 1, 0.8), ("c", "d", 2, 0.7))
    curve = pr_curve(predictions, GOLD)
    assert [tuple(p) for p in curve] == [(1 / 3, 1.0), (1 / 3, 0.5), (2 / 3, 2 / 3)]
    # (0, 1) -> (1/3, 1) -> (1/3, 1/2) -> (2/3, 2/3)
    assert auc(curve) == pytest.approx(1 / 3 + (1 / 3) * (0.5 + 2 / 3) / 2)
    assert auc([tuple(p) for p in curve]) == pytest.approx(auc(curve))


def test_ranking_ignores_input_order():
    predictions = _records(("a", "b", 1, 0.9), ("x", "y", 1, 0.8), ("c", "d", 2, 0.7), ("e", "f", 1, 0.6))
    shuffled = [predictions[i] for i in (2, 0, 3, 1)]
    assert auc(pr_curve(shuffled, GOLD)) == auc(pr_curve(predictions, GOLD))


def test_ties_are_broken_deterministically():
    predictions = _records(("c", "d", 2, 0.5), ("a", "b", 2, 0.5), ("a", "b", 1, 0.5))
    assert [(p.pair, p.relation) for p in rank(predictions)] == [(("a", "b"), 1), (("a", "b"), 2), (("c", "d"), 2)]


def test_top_k_truncates_the_curve():
    predictions = _records(("a", "b", 1, 0.9), ("x", "y", 1, 0.8), ("c", "d", 2, 0.7))
    curve = pr_curve(predictions, GOLD, top_k=2)
    assert len(curve) == 2
    assert curve.hits == [1, 1]


def test_curve_needs_gold_and_predictions():
    with pytest.raises(ValueError):
        pr_curve(_records(("a", "b", 1, 0.9)), frozenset())
    with pytest.raises(ValueError):
        pr_curve([], GOLD)
    with pytest.raises(ValueError):
        auc([])


def test_prediction_records_skip_na_and_merge_pairs():
    scores = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6], [0.2, 0.5, 0.3]])
    pairs = [("a", "b"), ("c", "d"), ("a", "b")]
    records = prediction_records(pairs, scores, ["NA", "r1", "r2"])
    assert len(records) == 4
    best = {(r.pair, r.relation): r.score for r in records}
    assert best[(("a", "b"), 1)] == 0.5
    assert best[(("a", "b"), 2)] == 0.3
    assert all(r.relation != 0 for r in records)


def test_max_f1():
    assert max_f1([(0.5, 1.0), (1.0, 0.5)]) == pytest.approx(2 / 3)
    assert max_f1([(0.0, 0.0)]) == 0.0


def test_evaluation_result_metrics():
    predictions = _records(("a", "b", 1, 0.9), ("x", "y", 1, 0.8))
    result = evaluate_predictions(predictions, GOLD, accuracy=0.5)
    assert result.metrics()["gold"] == 3
    assert result.metrics()["predictions"] == 2
    assert isinstance(result.curve, PrecisionRecallCurve)


def test_prediction_files(tmp_path):
    names = ["NA", "r1", "r2"]
    predictions = _records(("a", "b", 1, 0.9), ("c", "d", 2, 0.25))
    write_predictions(tmp_path / "predictions.jsonl", predictions, names)
    assert read_predictions(tmp_path / "predictions.jsonl", names) == predictions
    (tmp_path / "bad.jsonl").write_text('{"head": "a", "tail": "b", "relation": "r9", "score": 1}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        read_predictions(tmp_path / "bad.jsonl", names)


def test_gold_file_drops_na(tmp_path):
    lines = [{"head": "a", "tail": "b", "relation": "r1"}, {"head": "a", "tail": "c", "relation": "NA"}]
    (tmp_path / "gold.jsonl").write_text("\n".join(json.dumps(x) for x in lines) + "\n", encoding="utf-8")
    assert read_gold(tmp_path / "gold.jsonl", ["NA", "r1"]) == frozenset({(("a", "b"), 1)})


def test_result_files(tmp_path):
    predictions = _records(("a", "b", 1, 0.9), ("x", "y", 1, 0.8), ("c", "d", 2, 0.7))
    result = evaluate_predictions(predictions, GOLD)
    write_results(tmp_path / "eval", result)
    metrics = json.loads((tmp_path / "eval" / METRICS_NAME).read_text(encoding="utf-8"))
    assert metrics["auc"] == pytest.approx(result.auc)
    assert math.isnan(metrics["accuracy"])
    curve = read_curve(tmp_path / "eval" / CURVE_NAME)
    assert [x for p in curve for x in p] == pytest.approx([x for p in result.curve for x in p])


def test_mean_stderr():
    assert mean_stderr([2.0]) == (2.0, 0.0)
    mean, stderr = mean_stderr([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert stderr == pytest.approx(1 / math.sqrt(3))
    with pytest.raises(ValueError):
        mean_stderr([])


def test_summarize_runs(tmp_path):
    perfect = _records(("a", "b", 1, 0.9), ("c", "d", 2, 0.8), ("e", "f", 1, 0.7))
    half = _records(("a", "b", 1, 0.9), ("x", "y", 1, 0.8))
    results = {3: evaluate_predictions(half, GOLD, accuracy=0.5), 1: evaluate_predictions(perfect, GOLD, accuracy=0.9)}
    summary = summarize_runs(results)
    assert summary["runs"] == 2
    assert [entry["seed"] for entry in summary["per_seed"]] == [1, 3]
    assert summary["per_seed"][0]["auc"] == 1.0
    for name in ("auc", "max_f1", "accuracy"):
        mean, stderr = mean_stderr([getattr(results[1], name), getattr(results[3], name)])
        assert summary[name] == mean
        assert summary[f"{name}_stderr"] == stderr
    assert summary["accuracy"] == pytest.approx(0.7)

    write_summary(tmp_path, summary)
    assert json.loads((tmp_path / METRICS_NAME).read_text(encoding="utf-8")) == summary

    with pytest.raises(ValueError):
        summarize_runs({})


def test_evaluate_trained_model():
    data = synth_generate(SynthConfig(n_samples=200, n_test=50, d_latent=6, d_view=8, n_relations=3))
    train_set, test_set = data.split(50)
    model = train(train_set, ModelConfig(d_model=8, d_intact=12, heads=2),
                  TrainConfig(learning_rate=0.1, batch_size=20, epochs=10, precision="float64")).model
    result = evaluate(model, test_set, batch_size=16)
    assert 0.0 <= result.auc <= 1.0
    assert result.curve.n_gold == len(test_set.facts())
    assert len(result.predictions) == 2 * len(test_set)
    assert result.accuracy > 1 / 3


def _random_predictions(seed):
    rng = np.random.default_rng(seed)
    n_pairs, n_relations = int(rng.integers(1, 8)), int(rng.integers(2, 5))
    pairs = [(f"h{i}", f"t{i}") for i in range(n_pairs)]
    candidates = [(pair, relation) for pair in pairs for relation in range(1, n_relations + 1)]
    scores = rng.permutation(len(candidates)) / len(candidates) + rng.uniform(0, 1e-3, len(candidates))
    predictions = [PredictionRecord(pair, relation, float(s)) for (pair, relation), s in zip(candidates, scores)]
    n_gold = int(rng.integers(1, len(candidates) + 1))
    gold = frozenset(candidates[i] for i in rng.choice(len(candidates), n_gold, replace=False))
    return predictions, gold


def _prefix_points(predictions, gold):
    ranked = sorted(predictions, key=lambda p: -p.score)
    points = []
    for k in range(1, len(ranked) + 1):
        hits = sum((p.pair, p.relation) in gold for p in ranked[:k])
        points.append((hits / len(gold), hits / k))
    return points


@pytest.mark.parametrize("seed", range(100))
def test_auc_and_max_f1_match_brute_force(seed):
    predictions, gold = _random_predictions(seed)
    points = _prefix_points(predictions, gold)
    area, previous = 0.0, (0.0, points[0][1])
    for recall, precision in points:
        area += (recall - previous[0]) * (precision + previous[1]) / 2
        previous = (recall, precision)
    best = max((2 * p * r / (p + r) for r, p in points if p + r > 0), default=0.0)

    curve = pr_curve(predictions, gold)
    assert [v for point in curve for v in point] == pytest.approx([v for point in points for v in point], abs=1e-15)
    assert auc(curve) == pytest.approx(area, abs=1e-12)
    assert max_f1(curve) == pytest.approx(best, abs=1e-12)
