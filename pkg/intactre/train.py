"""
Mini-batch SGD training with per-epoch checkpoints and a run manifest.
"""

from dataclasses import asdict, dataclass, field
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import torch

from .config import ModelConfig, RunConfig, TrainConfig
from .model import Dataset, IntactModel, build_model, save_checkpoint
from .numerics import NonFiniteError
from .utils import PathLike, seed_everything

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MODEL_NAME = "model.car"


class NonFiniteLossError(NonFiniteError):
    def __init__(self, message: str, dump: Optional[Path] = None):
        super().__init__(message if dump is None else f"{message} (batch written to {dump})")
        self.dump = dump


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    gamma: List[float]
    grad_norm: float


@dataclass
class TrainResult:
    model: IntactModel
    seed: int
    log: List[EpochRecord] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)


def _batches(n: int, batch_size: int, generator: Optional[torch.Generator]) -> List[List[int]]:
    order = torch.randperm(n, generator=generator).tolist() if generator is not None else list(range(n))
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _dump_batch(out_dir: Optional[Path], epoch: int, step: int, indices: Sequence[int], dataset: Dataset,
                loss: float) -> Optional[Path]:
    if out_dir is None:
        return None
    path = out_dir / f"nonfinite-epoch{epoch}-step{step}.json"
    pairs = dataset.pairs()
    record = {"epoch": epoch, "step": step, "loss": repr(loss), "indices": list(indices),
              "pairs": [list(pairs[i]) for i in indices]}
    path.write_text(json.dumps(record, indent=2), encoding="utf-8")
    return path


def train(dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig, seed: Optional[int] = None,
          out_dir: Optional[PathLike] = None, word_vectors: Optional[np.ndarray] = None) -> TrainResult:
    """
    Train a fresh model on ``dataset``.

    Each epoch visits every sample once in mini-batches of ``batch_size``
    (shuffled with the run seed). The loss is the mean cross-entropy over the
    batch, plus the weighted reconstruction loss when
    ``reconstruction_weight`` is set. With ``out_dir`` a checkpoint is written
    every ``checkpoint_every`` epochs and the final model to ``model.car``.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    seed = train_config.seed if seed is None else seed
    seed_everything(seed)
    model = build_model(dataset, model_config, word_vectors).to(train_config.dtype)
    optimizer = torch.optim.SGD(model.parameters(), lr=train_config.learning_rate)
    generator = torch.Generator().manual_seed(seed) if train_config.shuffle else None
    target = Path(out_dir) if out_dir is not None else None
    if target is not None:
        target.mkdir(parents=True, exist_ok=True)
    result = TrainResult(model, seed)
    relation_names = list(dataset.relation_names)

    for epoch in range(1, train_config.epochs + 1):
        model.train()
        losses, norms = [], []
        correct = 0
        gamma_sum = torch.zeros(3, dtype=torch.float64)
        for step, indices in enumerate(_batches(len(dataset), train_config.batch_size, generator)):
            batch = dataset.collate(indices)
            optimizer.zero_grad()
            loss, output = model.loss(batch, train_config.reconstruction_weight)
            value = float(loss.detach())
            if not math.isfinite(value):
                dump = _dump_batch(target, epoch, step, indices, dataset, value)
                raise NonFiniteLossError(f"non-finite loss {value} at epoch {epoch}, step {step}", dump)
            loss.backward()
            max_norm = train_config.clip_norm if train_config.clip_norm is not None else float("inf")
            norms.append(float(torch.nn.utils.clip_grad_norm_(model.parameters(), max_norm)))
            optimizer.step()
            losses.append(value * len(indices))
            correct += int((output.logits.argmax(dim=-1) == batch.relations).sum())
            gamma_sum += output.fused.gamma.detach().sum(dim=0).to(torch.float64)
        record = EpochRecord(epoch, sum(losses) / len(dataset), correct / len(dataset),
                             (gamma_sum / len(dataset)).tolist(), float(np.mean(norms)))
        result.log.append(record)
        logger.info("epoch %d/%d: loss %.4f, accuracy %.3f, view weights %s, gradient norm %.3f",
                    epoch, train_config.epochs, record.loss, record.accuracy,
                    " ".join(f"{g:.3f}" for g in record.gamma), record.grad_norm)
        every = train_config.checkpoint_every
        if target is not None and every > 0 and epoch % every == 0:
            cid = save_checkpoint(target / "checkpoints" / f"epoch-{epoch:03d}.car", model, relation_names,
                                  {"epoch": epoch, "seed": seed})
            result.checkpoints.append(cid)

    if target is not None:
        save_checkpoint(target / MODEL_NAME, model, relation_names, {"epoch": train_config.epochs, "seed": seed})
    return result


def run_manifest(config: RunConfig, result: TrainResult, inputs: Mapping[str, str]) -> Dict[str, Any]:
    """
    Everything needed to reproduce a run: configuration, seed, content ids of
    the inputs and the per-epoch metrics. Contains no timestamps, so equal runs
    produce equal manifests.
    """
    return {
        "config": config.to_dict(),
        "seed": result.seed,
        "inputs": dict(sorted(inputs.items())),
        "epochs": [asdict(record) for record in result.log],
        "checkpoints": list(result.checkpoints),
    }


def write_manifest(path: PathLike, manifest: Mapping[str, Any]) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_dir(out_dir: PathLike, seed: int) -> Path:
    return Path(out_dir) / f"seed-{seed}"


def train_runs(dataset: Dataset, config: RunConfig, out_dir: PathLike, inputs: Mapping[str, str],
               word_vectors: Optional[np.ndarray] = None) -> List[TrainResult]:
    """
    One training run per seed of ``config.train.seeds()``.

    A single run writes its model, checkpoints and manifest straight into
    ``out_dir``. Several runs each get a ``seed-<n>`` subdirectory with the
    same layout, and ``out_dir/manifest.json`` lists them by seed.
    """
    seeds = config.train.seeds()
    target = Path(out_dir)
    results = []
    for seed in seeds:
        run_out = target if len(seeds) == 1 else run_dir(target, seed)
        logger.info("training run with seed %d into %s", seed, run_out)
        result = train(dataset, config.model, config.train, seed=seed, out_dir=run_out, word_vectors=word_vectors)
        write_manifest(run_out / MANIFEST_NAME, run_manifest(config, result, inputs))
        results.append(result)
    if len(seeds) > 1:
        write_manifest(target / MANIFEST_NAME, {
            "config": config.to_dict(),
            "inputs": dict(sorted(inputs.items())),
            "runs": {str(seed): run_dir(target, seed).name for seed in seeds},
        })
    return results
