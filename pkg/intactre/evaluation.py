"""
Held-out evaluation: ranked predictions, precision/recall curve, area under it
and the best F1 along it.
"""

from dataclasses import dataclass
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union, overload

import numpy as np
import pandas as pd
from sklearn import metrics
import torch

from .data import NA_RELATION, FactSet, Pair
from .model import Dataset, IntactModel
from .utils import PathLike

logger = logging.getLogger(__name__)

METRICS_NAME = "metrics.json"
CURVE_NAME = "pr_curve.csv"
PREDICTIONS_NAME = "predictions.jsonl"


@dataclass(frozen=True)
class PredictionRecord:
    pair: Pair
    relation: int
    score: float


class PRPoint(NamedTuple):
    recall: float
    precision: float


class PrecisionRecallCurve(Sequence[PRPoint]):
    """
    One point per prefix of the ranked predictions.

    Also keeps the running hit counts, from which the area under the curve is
    computed without the rounding of the recall values.
    """

    def __init__(self, hits: Sequence[int], n_gold: int):
        self.hits = [int(h) for h in hits]
        self.n_gold = n_gold
        self._points = [PRPoint(h / n_gold, h / (i + 1)) for i, h in enumerate(self.hits)]

    @overload
    def __getitem__(self, idx: int) -> PRPoint: ...

    @overload
    def __getitem__(self, idx: slice) -> Sequence[PRPoint]: ...

    def __getitem__(self, idx: Union[int, slice]) -> Union[PRPoint, Sequence[PRPoint]]:
        return self._points[idx]

    def __len__(self) -> int:
        return len(self._points)

    def __iter__(self) -> Iterator[PRPoint]:
        return iter(self._points)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self._points, columns=["recall", "precision"])


def rank(predictions: Iterable[PredictionRecord]) -> List[PredictionRecord]:
    """Descending score; ties broken by pair, then relation id."""
    return sorted(predictions, key=lambda p: (-p.score, p.pair, p.relation))


def pr_curve(predictions: Iterable[PredictionRecord], gold: FactSet,
             top_k: Optional[int] = None) -> PrecisionRecallCurve:
    """
    Precision and recall of every prefix of the ranked ``predictions`` against
    the non-NA facts ``gold``, optionally truncated to the first ``top_k``.
    """
    if not gold:
        raise ValueError("no gold facts to measure recall against")
    ranked = rank(predictions)
    if not ranked:
        raise ValueError("no predictions to rank")
    if top_k is not None:
        ranked = ranked[:top_k]
    hits = np.cumsum([(p.pair, p.relation) in gold for p in ranked])
    return PrecisionRecallCurve(hits.tolist(), len(gold))


def auc(curve: Sequence[Tuple[float, float]]) -> float:
    """
    Trapezoidal area under precision as a function of recall, starting from the
    point ``(0, p_1)``.
    """
    if len(curve) == 0:
        raise ValueError("empty precision/recall curve")
    precision = [curve[0][1]] + [p for _, p in curve]
    if isinstance(curve, PrecisionRecallCurve):
        return float(metrics.auc([0] + curve.hits, precision)) / curve.n_gold
    return float(metrics.auc([0.0] + [r for r, _ in curve], precision))


def max_f1(curve: Iterable[Tuple[float, float]]) -> float:
    best = 0.0
    for recall, precision in curve:
        if recall + precision > 0:
            best = max(best, 2 * precision * recall / (precision + recall))
    return best


@torch.no_grad()
def score(model: IntactModel, dataset: Dataset, batch_size: int = 200) -> np.ndarray:
    """Relation probabilities ``(n_samples, n_relations)``."""
    model.eval()
    scores = [model.score_all_relations(dataset.collate(list(range(start, min(start + batch_size, len(dataset))))))
              for start in range(0, len(dataset), batch_size)]
    return torch.cat(scores).cpu().numpy().astype(np.float64)


def prediction_records(pairs: Sequence[Pair], scores: np.ndarray, relation_names: Sequence[str]) -> List[PredictionRecord]:
    """
    One record per (pair, non-NA relation); a pair listed several times keeps
    its highest score for each relation.
    """
    na = list(relation_names).index(NA_RELATION)
    best: Dict[Tuple[Pair, int], float] = {}
    for pair, row in zip(pairs, scores):
        for k, value in enumerate(row):
            if k != na:
                key = (tuple(pair), k)  # type: ignore [misc]
                best[key] = max(best.get(key, -math.inf), float(value))
    return [PredictionRecord(pair, k, value) for (pair, k), value in best.items()]


@dataclass
class EvaluationResult:
    auc: float
    max_f1: float
    accuracy: float
    curve: PrecisionRecallCurve
    predictions: List[PredictionRecord]

    def metrics(self) -> Dict[str, float]:
        return {"auc": self.auc, "max_f1": self.max_f1, "accuracy": self.accuracy,
                "predictions": len(self.predictions), "gold": self.curve.n_gold}


def evaluate_predictions(predictions: Sequence[PredictionRecord], gold: FactSet, accuracy: float = math.nan,
                         top_k: Optional[int] = None) -> EvaluationResult:
    curve = pr_curve(predictions, gold, top_k)
    return EvaluationResult(auc(curve), max_f1(curve), accuracy, curve, rank(predictions))


def evaluate(model: IntactModel, dataset: Dataset, batch_size: int = 200, top_k: Optional[int] = None) -> EvaluationResult:
    scores = score(model, dataset, batch_size)
    labels = np.array([int(r) for r in dataset.labels], dtype=np.int64)
    accuracy = float((scores.argmax(axis=1) == labels).mean())
    records = prediction_records(dataset.pairs(), scores, dataset.relation_names)
    result = evaluate_predictions(records, dataset.facts(), accuracy, top_k)
    logger.info("AUC %.4f, max F1 %.4f, accuracy %.4f over %d predictions", result.auc, result.max_f1,
                result.accuracy, len(records))
    return result


# -- files -----------------------------------------------------------------------

def write_predictions(path: PathLike, predictions: Iterable[PredictionRecord], relation_names: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        for p in predictions:
            record = {"head": p.pair[0], "tail": p.pair[1], "relation": relation_names[p.relation], "score": p.score}
            stream.write(json.dumps(record, sort_keys=True) + "\n")


def read_predictions(path: PathLike, relation_names: Sequence[str]) -> List[PredictionRecord]:
    ids = {name: k for k, name in enumerate(relation_names)}
    predictions = []
    with open(path, "r", encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                predictions.append(PredictionRecord((record["head"], record["tail"]), ids[record["relation"]],
                                                    float(record["score"])))
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: malformed prediction record ({e})") from e
    return predictions


def read_gold(path: PathLike, relation_names: Sequence[str]) -> FactSet:
    """Gold facts from a JSONL file of ``{"head", "tail", "relation"}`` records; NA facts are dropped."""
    facts = set()
    with open(path, "r", encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                relation = relation_names.index(record["relation"])
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: malformed gold record ({e})") from e
            if record["relation"] != NA_RELATION:
                facts.add(((record["head"], record["tail"]), relation))
    return frozenset(facts)


def write_results(out_dir: PathLike, result: EvaluationResult) -> None:
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    (target / METRICS_NAME).write_text(json.dumps(result.metrics(), indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    result.curve.to_frame().to_csv(target / CURVE_NAME, index=False)


def read_curve(path: PathLike) -> List[PRPoint]:
    frame = pd.read_csv(path)
    return [PRPoint(float(r), float(p)) for r, p in zip(frame["recall"], frame["precision"])]


def mean_stderr(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and standard error of the mean (zero for a single value)."""
    array = np.asarray(values, dtype=np.float64)
    if array.size == 0:
        raise ValueError("no values to summarise")
    if array.size == 1:
        return float(array[0]), 0.0
    return float(array.mean()), float(array.std(ddof=1) / np.sqrt(array.size))


SUMMARY_METRICS = ("auc", "max_f1", "accuracy")


def summarize_runs(results: Mapping[int, EvaluationResult]) -> Dict[str, Any]:
    """
    Mean and standard error of every headline metric over the runs keyed by
    seed, together with the per-seed metrics in ascending seed order.
    """
    if not results:
        raise ValueError("no runs to summarise")
    seeds = sorted(results)
    summary: Dict[str, Any] = {"runs": len(seeds)}
    for name in SUMMARY_METRICS:
        summary[name], summary[f"{name}_stderr"] = mean_stderr([getattr(results[s], name) for s in seeds])
    summary["per_seed"] = [{"seed": s, **results[s].metrics()} for s in seeds]
    return summary


def write_summary(out_dir: PathLike, summary: Mapping[str, Any]) -> None:
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    (target / METRICS_NAME).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
