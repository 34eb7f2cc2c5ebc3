"""
Finite-difference check of the end-to-end training loss at toy dimensions.
"""

from dataclasses import dataclass, field
import logging
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import torch

from .config import ModelConfig
from .data import EncodedBatch
from .model import IntactModel, VocabSizes
from .numerics import ParameterStore, grad_check
from .utils import seed_everything

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class ToyDims:
    d_word: int = 4
    d_position: int = 4
    d_type: int = 3
    d_model: int = 8
    d_intact: int = 12
    heads: int = 2
    conv_width: int = 3
    conv_layers: int = 2
    sequence_length: int = 6
    typeset_size: int = 4
    max_relative_position: int = 3
    n_words: int = 10
    n_types: int = 6
    n_relations: int = 4
    bag_sizes: Tuple[int, ...] = (1, 2, 3)

    def model_config(self, **overrides: object) -> ModelConfig:
        return ModelConfig(d_word=self.d_word, d_position=self.d_position, d_type=self.d_type,
                           d_model=self.d_model, d_intact=self.d_intact, heads=self.heads,
                           conv_width=self.conv_width, conv_layers=self.conv_layers,
                           **overrides)  # type: ignore [arg-type]

    def vocab(self) -> VocabSizes:
        return VocabSizes(self.n_words, 2 * self.max_relative_position + 2, self.n_types)


def _padded(rng: np.random.Generator, lengths: np.ndarray, width: int, low: int, high: int, pad: int) -> torch.Tensor:
    ids = rng.integers(low, high, size=(*lengths.shape, width))
    ids[np.arange(width) >= lengths[..., None]] = pad
    return torch.from_numpy(ids).long()


def toy_batch(dims: ToyDims, rng: np.random.Generator) -> EncodedBatch:
    """A random batch with ragged bags and ragged sequence lengths; word and type id 0 is padding."""
    n_sentences = sum(dims.bag_sizes)
    B, l, l0 = len(dims.bag_sizes), dims.sequence_length, dims.typeset_size
    pad_position = 2 * dims.max_relative_position + 1
    sentence_lengths = rng.integers(1, l + 1, size=n_sentences)
    description_lengths = rng.integers(1, l + 1, size=(B, 2))
    type_lengths = rng.integers(1, l0 + 1, size=(B, 2))
    return EncodedBatch(
        sentence_tokens=_padded(rng, sentence_lengths, l, 1, dims.n_words, 0),
        sentence_head_positions=_padded(rng, sentence_lengths, l, 0, pad_position, pad_position),
        sentence_tail_positions=_padded(rng, sentence_lengths, l, 0, pad_position, pad_position),
        sentence_lengths=torch.from_numpy(sentence_lengths).long(),
        bag_sizes=list(dims.bag_sizes),
        description_tokens=_padded(rng, description_lengths, l, 1, dims.n_words, 0),
        description_positions=_padded(rng, description_lengths, l, 0, pad_position, pad_position),
        description_lengths=torch.from_numpy(description_lengths).long(),
        type_ids=_padded(rng, type_lengths, l0, 1, dims.n_types, 0),
        type_lengths=torch.from_numpy(type_lengths).long(),
        relations=torch.from_numpy(rng.integers(0, dims.n_relations, size=B)).long(),
    )


def toy_model(dims: ToyDims, seed: int, **overrides: object) -> Tuple[IntactModel, EncodedBatch]:
    rng = seed_everything(seed)
    model = IntactModel(dims.model_config(**overrides), dims.n_relations, dims.vocab()).to(torch.float64)
    return model, toy_batch(dims, rng)


@dataclass
class GradientReport:
    errors: Dict[int, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def gradient_suite(seeds: Iterable[int] = range(20), dims: ToyDims = ToyDims(), eps: float = 1e-5,
                   max_coords: Optional[int] = 32, reconstruction_weight: float = 0.1,
                   **overrides: object) -> GradientReport:
    """
    For every seed: a fresh toy model and batch, then :func:`grad_check` of the
    training loss (cross-entropy plus weighted reconstruction) over every
    parameter, checking up to ``max_coords`` coordinates of each (``None``
    checks all of them). ``overrides`` are passed on to :class:`ModelConfig`.
    """
    report = GradientReport()
    for seed in seeds:
        model, batch = toy_model(dims, seed, **overrides)
        params = ParameterStore.from_module(model)
        report.errors[seed] = grad_check(lambda: model.loss(batch, reconstruction_weight)[0], params, eps=eps,
                                         max_coords=max_coords, seed=seed)
        logger.info("seed %d: max relative gradient error %.3e", seed, report.errors[seed])
    return report
