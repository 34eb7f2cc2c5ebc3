"""
Synthetic multi-view data drawn from an explicit intact-space generative model.

Every sample has a latent vector ``x`` from a relation-conditioned Gaussian
mixture; view ``j`` is a fixed random linear image ``A_j x`` plus Gaussian noise
of standard deviation ``noise[j]``. A view may observe only part of the latent
coordinates (its informativeness), and a fraction of samples gets one view's
noise inflated, which plays the role of a noisy bag.
"""

from dataclasses import dataclass, field
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from . import archive
from .data import NA_RELATION, FactSet, Pair
from .utils import PathLike

logger = logging.getLogger(__name__)

N_VIEWS = 3


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 2500
    n_test: int = 500
    n_relations: int = 5
    d_latent: int = 16
    d_view: int = 16
    noise: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    informativeness: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    inflate_fraction: float = 0.0
    inflate_factor: float = 10.0
    inflate_view: Optional[int] = None
    class_separation: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_relations < 2:
            raise ValueError(f"need at least 2 relations, got {self.n_relations}")
        if self.n_samples < 1 or not 0 <= self.n_test < self.n_samples:
            raise ValueError(f"invalid sample counts n_samples={self.n_samples}, n_test={self.n_test}")
        if self.d_latent < 1 or self.d_view < 1:
            raise ValueError("dimensions must be positive")
        if len(self.noise) != N_VIEWS or any(s < 0 for s in self.noise):
            raise ValueError(f"need {N_VIEWS} non-negative noise levels, got {self.noise}")
        if len(self.informativeness) != N_VIEWS or any(not 0 < f <= 1 for f in self.informativeness):
            raise ValueError(f"view informativeness must lie in (0, 1], got {self.informativeness}")
        if not 0 <= self.inflate_fraction <= 1 or self.inflate_factor < 0:
            raise ValueError("invalid noise inflation settings")
        if self.inflate_view is not None and not 0 <= self.inflate_view < N_VIEWS:
            raise ValueError(f"inflate_view must be one of 0..{N_VIEWS - 1}")


@dataclass
class ViewBatch:
    """A batch whose three view vectors are given directly."""

    views: torch.Tensor
    relations: torch.Tensor

    def __len__(self) -> int:
        return int(self.relations.shape[0])


@dataclass
class SyntheticDataset:
    views: np.ndarray
    labels: np.ndarray
    latent: np.ndarray
    maps: np.ndarray
    noise_scale: np.ndarray
    relation_names: List[str] = field(default_factory=list)
    offset: int = 0

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def pairs(self) -> List[Pair]:
        return [(f"e{self.offset + i}.head", f"e{self.offset + i}.tail") for i in range(len(self))]

    def facts(self) -> FactSet:
        na = self.relation_names.index(NA_RELATION)
        return frozenset((pair, int(r)) for pair, r in zip(self.pairs(), self.labels) if r != na)

    def collate(self, indices: Sequence[int]) -> ViewBatch:
        idx = np.asarray(indices, dtype=np.int64)
        return ViewBatch(torch.from_numpy(self.views[idx]), torch.from_numpy(self.labels[idx]))

    def subset(self, start: int, stop: int) -> "SyntheticDataset":
        return SyntheticDataset(self.views[start:stop], self.labels[start:stop], self.latent[start:stop], self.maps,
                                self.noise_scale[start:stop], self.relation_names, self.offset + start)

    def split(self, n_test: int) -> Tuple["SyntheticDataset", "SyntheticDataset"]:
        cut = len(self) - n_test
        return self.subset(0, cut), self.subset(cut, len(self))


def relation_names(n_relations: int) -> List[str]:
    return [NA_RELATION] + [f"relation_{k}" for k in range(1, n_relations)]


def synth_generate(config: SynthConfig) -> SyntheticDataset:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, d_x, d_v = config.n_samples, config.d_latent, config.d_view

    means = rng.normal(0.0, config.class_separation, size=(config.n_relations, d_x))
    labels = rng.permutation(np.arange(n) % config.n_relations).astype(np.int64)
    latent = means[labels] + rng.normal(0.0, 1.0, size=(n, d_x))

    maps = rng.normal(0.0, 1.0 / np.sqrt(d_x), size=(N_VIEWS, d_v, d_x))
    for j, fraction in enumerate(config.informativeness):
        observed = rng.permutation(d_x)[: max(1, int(round(fraction * d_x)))]
        hidden = np.setdiff1d(np.arange(d_x), observed)
        maps[j][:, hidden] = 0.0

    noise_scale = np.tile(np.asarray(config.noise, dtype=np.float64), (n, 1))
    inflated = rng.random(n) < config.inflate_fraction
    if config.inflate_view is None:
        which = rng.integers(0, N_VIEWS, size=n)
    else:
        which = np.full(n, config.inflate_view)
    noise_scale[inflated, which[inflated]] *= config.inflate_factor

    clean = np.einsum("jvd,nd->njv", maps, latent)
    views = clean + noise_scale[:, :, None] * rng.normal(0.0, 1.0, size=(n, N_VIEWS, d_v))
    logger.info("generated %d synthetic samples over %d relations (%d with an inflated view)",
                n, config.n_relations, int(inflated.sum()))
    return SyntheticDataset(views, labels, latent, maps, noise_scale, relation_names(config.n_relations))


def save_synthetic(path: PathLike, splits: Mapping[str, SyntheticDataset]) -> str:
    groups = {
        name: ({"views": ds.views, "labels": ds.labels, "latent": ds.latent, "noise_scale": ds.noise_scale},
               {"offset": ds.offset})
        for name, ds in splits.items()
    }
    first = next(iter(splits.values()))
    groups[""] = ({"maps": first.maps}, {})
    return archive.write_groups(path, groups, {"kind": "synthetic", "relations": first.relation_names})


def load_synthetic(path: PathLike) -> Dict[str, SyntheticDataset]:
    groups, attrs = archive.read_groups(path)
    if attrs.get("kind") != "synthetic":
        raise ValueError(f"{path} does not hold a synthetic dataset")
    maps = groups[""][0]["maps"]
    return {
        name: SyntheticDataset(arrays["views"], arrays["labels"], arrays["latent"], maps, arrays["noise_scale"],
                               list(attrs["relations"]), int(group_attrs["offset"]))
        for name, (arrays, group_attrs) in groups.items() if name
    }
