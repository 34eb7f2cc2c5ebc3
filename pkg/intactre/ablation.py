"""
Ablation suites: the same training and evaluation protocol repeated over model
variants and seeds, summarised as mean ± standard error per variant.

Every (variant, seed) cell is an independent ``dask.delayed`` task, so the
suite runs on whichever dask scheduler the configuration names: one cell at a
time in this process, or one cell per worker process.
"""

import dataclasses
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import dask
import pandas as pd

from .config import ModelConfig, RunConfig
from .evaluation import evaluate, mean_stderr
from .model import Dataset
from .numerics import ConfigurationError
from .train import train

logger = logging.getLogger(__name__)

Variant = Tuple[str, ModelConfig]
METRICS = ("auc", "max_f1", "accuracy")


def view_variants(base: ModelConfig) -> List[Variant]:
    masks = [
        ("w/ v1", (True, False, False)),
        ("w/ v2", (False, True, False)),
        ("w/ v3", (False, False, True)),
        ("w/o v1", (False, True, True)),
        ("w/o v2", (True, False, True)),
        ("w/o v3", (True, True, False)),
        ("all views", (True, True, True)),
    ]
    return [(name, dataclasses.replace(base, views=mask)) for name, mask in masks]


def fusion_variants(base: ModelConfig) -> List[Variant]:
    return [
        ("MV-AVG", dataclasses.replace(base, fusion="mv-avg")),
        ("MV-ATT", dataclasses.replace(base, fusion="mv-att")),
        ("InSRL (w/o RAT)", dataclasses.replace(base, fusion="insrl", pooling="mean")),
        ("InSRL-AVG", dataclasses.replace(base, fusion="insrl-avg")),
        ("InSRL", dataclasses.replace(base, fusion="insrl")),
    ]


def intact_dim_variants(base: ModelConfig, dims: Tuple[int, ...]) -> List[Variant]:
    usable = [d for d in dims if d > base.d_model]
    if not usable:
        raise ConfigurationError(f"no intact dimension in {dims} exceeds d_model ({base.d_model})")
    return [(f"d_intact={d}", dataclasses.replace(base, d_intact=d)) for d in usable]


def suite_variants(suite: str, config: RunConfig) -> List[Variant]:
    if suite == "views":
        return view_variants(config.model)
    if suite == "fusion":
        return fusion_variants(config.model)
    if suite == "dx":
        return intact_dim_variants(config.model, config.ablation.intact_dims)
    raise ConfigurationError(f"unknown ablation suite '{suite}'")


def run_cell(name: str, model_config: ModelConfig, seed: int, train_set: Dataset, test_set: Dataset,
             config: RunConfig) -> Dict[str, object]:
    result = train(train_set, model_config, config.train, seed=seed)
    evaluation = evaluate(result.model, test_set, config.eval.batch_size, config.eval.top_k)
    logger.info("%s, seed %d: AUC %.4f, accuracy %.4f", name, seed, evaluation.auc, evaluation.accuracy)
    return {"variant": name, "seed": seed, **{m: getattr(evaluation, m) for m in METRICS}}


def summarize(cells: pd.DataFrame, order: List[str]) -> pd.DataFrame:
    rows = []
    for name in order:
        group = cells[cells["variant"] == name]
        row: Dict[str, object] = {"variant": name, "seeds": len(group)}
        for metric in METRICS:
            row[f"{metric}_mean"], row[f"{metric}_stderr"] = mean_stderr(group[metric].tolist())
        row["accuracy_median"] = float(group["accuracy"].median())
        rows.append(row)
    return pd.DataFrame(rows)


def run_ablation(suite: str, train_set: Dataset, test_set: Dataset, config: RunConfig,
                 out_dir: Optional[Path] = None) -> pd.DataFrame:
    """
    Train and evaluate every variant of ``suite`` once per seed.

    Returns one row per variant; with ``out_dir`` the summary and the per-seed
    cells are also written as CSV.
    """
    variants = suite_variants(suite, config)
    seeds = config.seeds()
    tasks = [dask.delayed(run_cell)(name, model_config, seed, train_set, test_set, config)
             for name, model_config in variants for seed in seeds]
    logger.info("ablation '%s': %d variants × %d seeds", suite, len(variants), len(seeds))
    cells = pd.DataFrame(list(dask.compute(*tasks, scheduler=config.ablation.scheduler)))
    table = summarize(cells, [name for name, _ in variants])
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_dir / f"ablation-{suite}.csv", index=False, float_format="%.6f")
        cells.to_csv(out_dir / f"ablation-{suite}-cells.csv", index=False, float_format="%.6f")
    return table
