"""
The three views of an entity pair: the sentence bag (``v1``), the two entity
descriptions (``v2``) and the two entity type sets (``v3``).
"""

from dataclasses import dataclass
from typing import List

import torch
from torch import nn

from .numerics import ShapeError, matmul, softmax, tanh_affine


@dataclass
class ViewTriple:
    v1: torch.Tensor
    v2: torch.Tensor
    v3: torch.Tensor

    def stacked(self) -> torch.Tensor:
        """Views as ``(..., 3, d_model)``."""
        return torch.stack([self.v1, self.v2, self.v3], dim=-2)


def bag_attention(sentences: torch.Tensor, query: torch.Tensor, diagonal: torch.Tensor) -> torch.Tensor:
    """
    Selective attention over a bag ``(m, d)`` of sentence vectors.

    Sentence ``i`` is scored ``s_iᵀ diag(diagonal) r`` against the relation
    query ``r``; the bag vector is the softmax-weighted sum of the sentences.
    ``query`` may also be a stack ``(k, d)`` of queries, giving ``(k, d)``.
    """
    if sentences.dim() != 2 or sentences.shape[0] == 0:
        raise ShapeError(f"bag attention needs a non-empty (m, d) bag, got {tuple(sentences.shape)}")
    if diagonal.shape != sentences.shape[1:] or query.shape[-1] != sentences.shape[1]:
        raise ShapeError(f"bag {tuple(sentences.shape)}, query {tuple(query.shape)}, "
                         f"diagonal {tuple(diagonal.shape)} do not agree")
    scores = matmul(sentences * diagonal, query.T if query.dim() == 2 else query)
    beta = softmax(scores, dim=0)
    return beta.T @ sentences if query.dim() == 2 else beta @ sentences


class BagAttention(nn.Module):
    def __init__(self, d_model: int):
        super().__init__()
        self.diagonal = nn.Parameter(torch.ones(d_model))

    def forward(self, bags: List[torch.Tensor], queries: torch.Tensor) -> torch.Tensor:
        """
        One bag vector per bag; ``queries`` is ``(B, d)`` (one query per bag)
        or ``(B, k, d)`` (``k`` queries per bag, giving ``(B, k, d)``).
        """
        if len(bags) != queries.shape[0]:
            raise ShapeError(f"{len(bags)} bags but {queries.shape[0]} queries")
        return torch.stack([bag_attention(bag, query, self.diagonal) for bag, query in zip(bags, queries)])


class PairView(nn.Module):
    """``tanh(W [a; b] + c)``: fuses the head and tail representations of one view."""

    def __init__(self, d_model: int):
        super().__init__()
        self.linear = nn.Linear(2 * d_model, d_model)

    def forward(self, head: torch.Tensor, tail: torch.Tensor) -> torch.Tensor:
        return tanh_affine(self.linear.weight, torch.cat([head, tail], dim=-1), self.linear.bias)


def description_view(d1: torch.Tensor, d2: torch.Tensor, layer: PairView) -> torch.Tensor:
    return layer(d1, d2)


def type_view(c1: torch.Tensor, c2: torch.Tensor, layer: PairView) -> torch.Tensor:
    return layer(c1, c2)
