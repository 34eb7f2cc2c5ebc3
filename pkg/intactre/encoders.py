"""
Sequence encoders: embedding lookup, convolution block, self-attention block and
relation-aware attention pooling.

Sequences are laid out column-wise, ``(..., d_model, l)``, with a boolean mask
``(..., l)`` marking the real (non-padding) columns. Padding never influences
the output: masked columns are zeroed before every convolution and excluded
as attention keys.
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from .config import ModelConfig
from .data import EncodedDescription, EncodedSentence, EncodedTypeSet
from .numerics import ConfigurationError, ShapeError, conv1d, layer_norm, matmul, softmax

logger = logging.getLogger(__name__)


def length_mask(lengths: torch.Tensor, size: int) -> torch.Tensor:
    """Boolean mask ``(..., size)`` that is ``True`` on the first ``lengths`` positions."""
    if bool((lengths < 1).any()) or bool((lengths > size).any()):
        raise ShapeError(f"sequence lengths must lie in [1, {size}]")
    return torch.arange(size, device=lengths.device) < lengths.unsqueeze(-1)


def _lookup(table: torch.Tensor, ids: torch.Tensor, what: str) -> torch.Tensor:
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
        raise IndexError(f"{what} id out of range [0, {table.shape[0]})")
    return table[ids]


def _normal(*shape: int, std: float) -> nn.Parameter:
    return nn.Parameter(torch.randn(*shape) * std)


class EmbeddingTables(nn.Module):
    """
    Lookup tables shared by every encoder: words, relative positions, types,
    and the projections ``M`` (words + positions) and ``M1`` (types) to ``d_model``.
    """

    def __init__(self, config: ModelConfig, n_words: int, n_positions: int, n_types: int,
                 word_vectors: Optional[np.ndarray] = None):
        super().__init__()
        half = config.d_position // 2
        if word_vectors is not None:
            if word_vectors.shape != (n_words, config.d_word):
                raise ShapeError(f"word vectors {word_vectors.shape} do not match ({n_words}, {config.d_word})")
            self.words = nn.Parameter(torch.as_tensor(word_vectors, dtype=torch.get_default_dtype()).clone())
        else:
            self.words = nn.Parameter(torch.empty(n_words, config.d_word).uniform_(-0.1, 0.1))
        self.head_positions = _normal(n_positions, half, std=0.1)
        self.tail_positions = _normal(n_positions, half, std=0.1)
        self.description_positions = _normal(n_positions, config.d_position, std=0.1)
        self.types = _normal(n_types, config.d_type, std=0.1)
        d_in = config.d_word + config.d_position
        self.M = _normal(config.d_model, d_in, std=1 / math.sqrt(d_in))
        self.M1 = _normal(config.d_model, config.d_type, std=1 / math.sqrt(config.d_type))

    def sequence(self, tokens: torch.Tensor, positions: torch.Tensor,
                 tail_positions: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Embed a token sequence ``(..., l)`` into ``(..., d_model, l)``.

        With ``tail_positions`` the two position tables of a sentence are used
        (one half each); without, the single description position table.
        """
        if tokens.shape != positions.shape or (tail_positions is not None and tail_positions.shape != tokens.shape):
            raise ShapeError(f"token and position ids disagree in shape: {tuple(tokens.shape)}, {tuple(positions.shape)}")
        words = _lookup(self.words, tokens, "word")
        if tail_positions is None:
            pos = _lookup(self.description_positions, positions, "position")
        else:
            pos = torch.cat([_lookup(self.head_positions, positions, "position"),
                             _lookup(self.tail_positions, tail_positions, "position")], dim=-1)
        features = torch.cat([words, pos], dim=-1)
        return matmul(self.M, features.transpose(-1, -2))

    def typeset(self, type_ids: torch.Tensor) -> torch.Tensor:
        """Embed type ids ``(..., l0)`` into ``(..., d_model, l0)``."""
        return matmul(self.M1, _lookup(self.types, type_ids, "type").transpose(-1, -2))


class ConvBlock(nn.Module):
    """
    Residual stack of ``layers`` × (layer norm, same-length convolution, ReLU).
    """

    def __init__(self, d_model: int, width: int, layers: int):
        super().__init__()
        if width % 2 == 0:
            raise ConfigurationError(f"convolution width must be odd, got {width}")
        self.width = width
        self.kernels = nn.ParameterList(
            [_normal(d_model, d_model, width, std=math.sqrt(2 / (d_model * width))) for _ in range(layers)])
        self.biases = nn.ParameterList([nn.Parameter(torch.zeros(d_model)) for _ in range(layers)])
        self.gains = nn.ParameterList([nn.Parameter(torch.ones(d_model)) for _ in range(layers)])
        self.shifts = nn.ParameterList([nn.Parameter(torch.zeros(d_model)) for _ in range(layers)])

    def forward(self, E: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        keep = mask.unsqueeze(-2).to(E.dtype)
        for kernel, bias, gain, shift in zip(self.kernels, self.biases, self.gains, self.shifts):
            normed = layer_norm(E, gain, shift, dim=-2) * keep
            E = E + torch.relu(conv1d(normed, kernel, self.width, bias))
        return E


class SelfAttentionBlock(nn.Module):
    """
    Residual multi-head scaled dot-product self-attention over the columns.
    """

    def __init__(self, d_model: int, heads: int):
        super().__init__()
        if d_model % heads:
            raise ConfigurationError(f"d_model ({d_model}) must be divisible by the number of heads ({heads})")
        self.heads = heads
        self.gain = nn.Parameter(torch.ones(d_model))
        self.shift = nn.Parameter(torch.zeros(d_model))
        std = 1 / math.sqrt(d_model)
        self.W_q = _normal(d_model, d_model, std=std)
        self.W_k = _normal(d_model, d_model, std=std)
        self.W_v = _normal(d_model, d_model, std=std)
        self.W_o = _normal(d_model, d_model, std=std)

    def _split(self, t: torch.Tensor) -> torch.Tensor:
        # (..., l, d) -> (..., heads, l, d / heads)
        return t.reshape(*t.shape[:-1], self.heads, t.shape[-1] // self.heads).transpose(-2, -3)

    def forward(self, E: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        X = layer_norm(E, self.gain, self.shift, dim=-2).transpose(-1, -2)
        q, k, v = (self._split(X @ W.T) for W in (self.W_q, self.W_k, self.W_v))
        scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
        keys = mask.unsqueeze(-2).unsqueeze(-2).expand_as(scores)
        attended = softmax(scores, keys) @ v
        merged = attended.transpose(-2, -3).reshape(X.shape)
        return E + (merged @ self.W_o.T).transpose(-1, -2)


class RelationAwareAttention(nn.Module):
    """
    Pools a sequence ``(..., d_model, l)`` into one vector per sequence.

    With ``pooling="attention"`` every column gets the score
    ``wᵀ tanh(W h_i + r̂) + b``, ``r̂`` being the mean relation embedding;
    ``pooling="mean"`` averages the real columns instead.
    """

    def __init__(self, d_model: int, pooling: str = "attention"):
        super().__init__()
        if pooling not in ("attention", "mean"):
            raise ConfigurationError(f"unknown pooling '{pooling}'")
        self.pooling = pooling
        self.gain = nn.Parameter(torch.ones(d_model))
        self.shift = nn.Parameter(torch.zeros(d_model))
        if pooling == "attention":
            std = 1 / math.sqrt(d_model)
            self.w = _normal(d_model, std=std)
            self.W = _normal(d_model, d_model, std=std)
            self.b = nn.Parameter(torch.zeros(1))

    def attend(self, H_in: torch.Tensor, mask: torch.Tensor, R: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Pooled vectors ``(..., d_model)`` and their column weights ``(..., l)``."""
        H = layer_norm(H_in, self.gain, self.shift, dim=-2)
        if self.pooling == "mean":
            keep = mask.to(H.dtype)
            alpha = keep / keep.sum(dim=-1, keepdim=True)
        else:
            if R.dim() != 2 or R.shape[0] != H.shape[-2]:
                raise ShapeError(f"relation matrix {tuple(R.shape)} does not match d_model {H.shape[-2]}")
            r_hat = R.mean(dim=1)
            scores = torch.tanh(H.transpose(-1, -2) @ self.W.T + r_hat) @ self.w + self.b
            alpha = softmax(scores, mask)
        return (H @ alpha.unsqueeze(-1)).squeeze(-1), alpha

    def forward(self, H_in: torch.Tensor, mask: torch.Tensor, R: torch.Tensor) -> torch.Tensor:
        return self.attend(H_in, mask, R)[0]


class SequenceEncoder(nn.Module):
    """
    Optional convolution block, then self-attention, then relation-aware pooling.

    With the convolution block this is the sentence/description representation
    learner; without it, the type-set representation learner.
    """

    def __init__(self, config: ModelConfig, convolution: bool = True):
        super().__init__()
        self.conv: Optional[ConvBlock] = (ConvBlock(config.d_model, config.conv_width, config.conv_layers)
                                          if convolution else None)
        self.sat = SelfAttentionBlock(config.d_model, config.heads)
        self.rat = RelationAwareAttention(config.d_model, config.pooling)

    def forward(self, E: torch.Tensor, mask: torch.Tensor, R: torch.Tensor) -> torch.Tensor:
        if mask.shape != E.shape[:-2] + E.shape[-1:]:
            raise ShapeError(f"mask {tuple(mask.shape)} does not match sequence {tuple(E.shape)}")
        if self.conv is not None:
            E = self.conv(E, mask)
        return self.rat(self.sat(E, mask), mask, R)


def _full_mask(E: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    return torch.ones(E.shape[:-2] + E.shape[-1:], dtype=torch.bool) if mask is None else mask


def embed_sequence(encoded: Union[EncodedSentence, EncodedDescription], tables: EmbeddingTables) -> torch.Tensor:
    """Embedding ``(d_model, l)`` of one encoded sentence or description, padding included."""
    tokens = torch.as_tensor(encoded.tokens, dtype=torch.long)
    if isinstance(encoded, EncodedSentence):
        return tables.sequence(tokens, torch.as_tensor(encoded.head_positions, dtype=torch.long),
                               torch.as_tensor(encoded.tail_positions, dtype=torch.long))
    return tables.sequence(tokens, torch.as_tensor(encoded.positions, dtype=torch.long))


def embed_typeset(encoded: EncodedTypeSet, tables: EmbeddingTables) -> torch.Tensor:
    return tables.typeset(torch.as_tensor(encoded.types, dtype=torch.long))


def conv_block(E: torch.Tensor, block: ConvBlock, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    return block(E, _full_mask(E, mask))


def sat_block(E: torch.Tensor, block: SelfAttentionBlock, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    return block(E, _full_mask(E, mask))


def rat_block(H_in: torch.Tensor, block: RelationAwareAttention, R: torch.Tensor,
              mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    return block(H_in, _full_mask(H_in, mask), R)


def srl_forward(encoded: Union[EncodedSentence, EncodedDescription], tables: EmbeddingTables,
                encoder: SequenceEncoder, R: torch.Tensor) -> torch.Tensor:
    """Representation ``(d_model,)`` of one sentence or description."""
    E = embed_sequence(encoded, tables)
    return encoder(E, length_mask(torch.tensor(encoded.length), E.shape[-1]), R)


def trl_forward(encoded: EncodedTypeSet, tables: EmbeddingTables, encoder: SequenceEncoder,
                R: torch.Tensor) -> torch.Tensor:
    """Representation ``(d_model,)`` of one entity type set."""
    C = embed_typeset(encoded, tables)
    return encoder(C, length_mask(torch.tensor(encoded.length), C.shape[-1]), R)
