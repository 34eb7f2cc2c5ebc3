"""
The relation extractor: encoders, view layers, fusion and classifier around
one shared relation embedding matrix ``R`` (``d_model × n_relations``).
"""

import dataclasses
from dataclasses import dataclass
import logging
import math
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import archive
from .config import ModelConfig, section_from_dict
from .data import EncodedBatch, EncodedDataset
from .encoders import EmbeddingTables, SequenceEncoder, length_mask
from .fusion import FusionForm, FusionOutput, FusionStrategy, IntactFusion
from .numerics import ConfigurationError, ShapeError, matmul, softmax
from .synth import SyntheticDataset, ViewBatch
from .utils import PathLike
from .views import BagAttention, PairView, ViewTriple

logger = logging.getLogger(__name__)

Batch = Union[EncodedBatch, ViewBatch]
Dataset = Union[EncodedDataset, SyntheticDataset]


def relation_logits(x: torch.Tensor, M2: torch.Tensor, R: torch.Tensor) -> torch.Tensor:
    """Scores ``r_kᵀ M2 x`` for every relation ``k``; ``x`` is ``(..., d_intact)``."""
    return matmul(x @ M2.T, R)


def classify(x: torch.Tensor, M2: torch.Tensor, R: torch.Tensor) -> torch.Tensor:
    return softmax(relation_logits(x, M2, R))


def ce_loss(x: torch.Tensor, gold: torch.Tensor, M2: torch.Tensor, R: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood of the gold relations."""
    return F.cross_entropy(relation_logits(x, M2, R), gold)


@dataclass(frozen=True)
class VocabSizes:
    words: int
    positions: int
    types: int


@dataclass
class ModelOutput:
    logits: torch.Tensor
    fused: FusionOutput
    views: torch.Tensor


class IntactModel(nn.Module):
    """
    Without ``vocab`` the model has no encoders and only accepts batches whose
    views are given directly (:class:`ViewBatch`).
    """

    def __init__(self, config: ModelConfig, n_relations: int, vocab: Optional[VocabSizes] = None,
                 word_vectors: Optional[np.ndarray] = None):
        super().__init__()
        if n_relations < 2:
            raise ConfigurationError(f"need at least 2 relations, got {n_relations}")
        self.config, self.vocab = config, vocab
        d = config.d_model
        self.relations = nn.Parameter(torch.randn(d, n_relations) * 0.1)
        self.register_buffer("present", torch.tensor(config.views, dtype=torch.bool), persistent=False)
        if vocab is not None:
            self.tables = EmbeddingTables(config, vocab.words, vocab.positions, vocab.types, word_vectors)
            self.sentence_encoder = SequenceEncoder(config)
            self.description_encoder = (self.sentence_encoder if config.share_description_encoder
                                        else SequenceEncoder(config))
            self.head_type_encoder = SequenceEncoder(config, convolution=False)
            self.tail_type_encoder = (self.head_type_encoder if config.share_type_encoder
                                      else SequenceEncoder(config, convolution=False))
            self.bag_attention = BagAttention(d)
            self.description_view = PairView(d)
            self.type_view = PairView(d)
        self.fusion = IntactFusion(d, config.d_intact, FusionStrategy(config.fusion), FusionForm(config.fusion_form),
                                   config.ridge)
        self.classifier = nn.Parameter(torch.randn(d, config.d_intact) / math.sqrt(config.d_intact))

    @property
    def n_relations(self) -> int:
        return int(self.relations.shape[1])

    def relation_query(self) -> torch.Tensor:
        return self.relations.mean(dim=1)

    # -- views -----------------------------------------------------------------

    def sentence_vectors(self, batch: EncodedBatch) -> List[torch.Tensor]:
        """Sentence representations, one ``(m_i, d_model)`` tensor per bag."""
        E = self.tables.sequence(batch.sentence_tokens, batch.sentence_head_positions, batch.sentence_tail_positions)
        S = self.sentence_encoder(E, length_mask(batch.sentence_lengths, E.shape[-1]), self.relations)
        return list(S.split(batch.bag_sizes))

    def description_vectors(self, batch: EncodedBatch) -> torch.Tensor:
        E = self.tables.sequence(batch.description_tokens, batch.description_positions)
        D = self.description_encoder(E, length_mask(batch.description_lengths, E.shape[-1]), self.relations)
        return self.description_view(D[:, 0], D[:, 1])

    def type_vectors(self, batch: EncodedBatch) -> torch.Tensor:
        C = self.tables.typeset(batch.type_ids)
        mask = length_mask(batch.type_lengths, C.shape[-1])
        c1 = self.head_type_encoder(C[:, 0], mask[:, 0], self.relations)
        c2 = self.tail_type_encoder(C[:, 1], mask[:, 1], self.relations)
        return self.type_view(c1, c2)

    def views(self, batch: Batch, queries: torch.Tensor) -> torch.Tensor:
        """
        The stacked views ``(B, 3, d_model)`` for one bag query per sample
        (``queries`` ``(B, d_model)``), or ``(B, k, 3, d_model)`` for ``k``
        queries per sample. Absent views are zero.
        """
        present = self.present.to(self.relations.dtype)
        if isinstance(batch, ViewBatch):
            views = batch.views.to(self.relations.dtype)
            if views.shape[1:] != (3, self.config.d_model):
                raise ShapeError(f"expected views (B, 3, {self.config.d_model}), got {tuple(views.shape)}")
            views = views * present.unsqueeze(-1)
            if queries.dim() == 3:
                views = views.unsqueeze(1).expand(-1, queries.shape[1], -1, -1)
            return views
        if self.vocab is None:
            raise ConfigurationError("this model has no encoders; it only accepts precomputed views")
        B, d = len(batch), self.config.d_model
        zeros = self.relations.new_zeros(B, d)
        v1 = self.bag_attention(self.sentence_vectors(batch), queries) if self.config.views[0] \
            else self.relations.new_zeros(queries.shape)
        v2 = self.description_vectors(batch) if self.config.views[1] else zeros
        v3 = self.type_vectors(batch) if self.config.views[2] else zeros
        if queries.dim() == 3:
            v2 = v2.unsqueeze(1).expand(-1, queries.shape[1], -1)
            v3 = v3.unsqueeze(1).expand(-1, queries.shape[1], -1)
        return ViewTriple(v1, v2, v3).stacked()

    # -- scoring ---------------------------------------------------------------

    def forward(self, batch: Batch, queries: Optional[torch.Tensor] = None) -> ModelOutput:
        """Logits with the bag queried by ``queries`` (default: the gold relation of each sample)."""
        if queries is None:
            queries = self.relations.T[batch.relations]
        views = self.views(batch, queries)
        fused = self.fusion(views, self.relation_query(), self.present)
        return ModelOutput(relation_logits(fused.x, self.classifier, self.relations), fused, views)

    def loss(self, batch: Batch, reconstruction_weight: float = 0.0) -> Tuple[torch.Tensor, ModelOutput]:
        output = self(batch)
        loss = F.cross_entropy(output.logits, batch.relations)
        intact = self.fusion.strategy in (FusionStrategy.INSRL, FusionStrategy.INSRL_AVG)
        if reconstruction_weight > 0 and intact:
            loss = loss + reconstruction_weight * self.fusion.reconstruction(output.views, output.fused)
        return loss, output

    def score_all_relations(self, batch: Batch) -> torch.Tensor:
        """
        Probabilities ``(B, n_relations)`` of every relation for every sample.

        Under the ``per-relation`` query policy the bag is re-queried with each
        relation ``k`` and the probability of ``k`` under that query is kept;
        under ``global`` the bag is queried once with the mean relation vector.
        """
        B = len(batch)
        if self.config.query == "global" or isinstance(batch, ViewBatch) or not self.config.views[0]:
            output = self(batch, self.relation_query().expand(B, -1))
            return softmax(output.logits)
        queries = self.relations.T.unsqueeze(0).expand(B, -1, -1)
        views = self.views(batch, queries)
        r_hat = self.relation_query()
        if self.fusion.form is FusionForm.CLOSED:
            # one (n, d_intact, d_intact) solve per sample keeps memory bounded
            x = torch.stack([self.fusion(v, r_hat, self.present).x for v in views])
        else:
            x = self.fusion(views, r_hat, self.present).x
        probs = softmax(relation_logits(x, self.classifier, self.relations))
        return probs.diagonal(dim1=-2, dim2=-1)


def build_model(dataset: Dataset, config: ModelConfig, word_vectors: Optional[np.ndarray] = None) -> IntactModel:
    if isinstance(dataset, SyntheticDataset):
        if dataset.views.shape[-1] != config.d_model:
            raise ConfigurationError(f"synthetic views have dimension {dataset.views.shape[-1]}, "
                                     f"but d_model is {config.d_model}")
        return IntactModel(config, len(dataset.relation_names))
    sizes = VocabSizes(len(dataset.vocab.words), dataset.settings.position_vocab_size, len(dataset.vocab.types))
    return IntactModel(config, len(dataset.relation_names), sizes, word_vectors)


# -- checkpoints --------------------------------------------------------------

@dataclass
class Checkpoint:
    model: IntactModel
    relation_names: List[str]
    attrs: Dict[str, Any]


def save_checkpoint(path: PathLike, model: IntactModel, relation_names: List[str],
                    attrs: Optional[Mapping[str, Any]] = None) -> str:
    """
    Write every parameter of ``model`` together with what is needed to rebuild it.

    Returns the root CID of the archive.
    """
    arrays = {name: p.detach().cpu().numpy() for name, p in model.named_parameters()}
    root_attrs = {
        "kind": "checkpoint",
        "model": dataclasses.asdict(model.config),
        "vocab": dataclasses.asdict(model.vocab) if model.vocab is not None else None,
        "relations": list(relation_names),
        **dict(attrs or {}),
    }
    return archive.write_groups(path, {"parameters": (arrays, {})}, root_attrs)


def load_checkpoint(path: PathLike) -> Checkpoint:
    groups, attrs = archive.read_groups(path)
    if attrs.get("kind") != "checkpoint":
        raise ValueError(f"{path} does not hold a model checkpoint")
    config = section_from_dict(ModelConfig, "model", attrs["model"])
    vocab = VocabSizes(**attrs["vocab"]) if attrs["vocab"] is not None else None
    relation_names = list(attrs["relations"])
    model = IntactModel(config, len(relation_names), vocab)
    arrays = groups["parameters"][0]
    params = dict(model.named_parameters())
    if set(arrays) != set(params):
        raise ValueError(f"{path}: checkpoint parameters do not match the model configuration")
    dtype = next(iter(arrays.values())).dtype
    model.to(torch.from_numpy(np.zeros(0, dtype=dtype)).dtype)
    with torch.no_grad():
        for name, p in params.items():
            if arrays[name].shape != tuple(p.shape):
                raise ShapeError(f"{path}: parameter '{name}' has shape {arrays[name].shape}, expected {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arrays[name]))
    return Checkpoint(model, relation_names, attrs)
