"""
Multi-view fusion into the intact space.

Every view ``v_j`` (``d_model``) is modelled as the image ``G_j x`` of a shared
intact vector ``x`` (``d_intact``) under a view generator ``G_j``. Cross-view
attention weights ``γ`` decide how much each view's reconstruction error
counts; ``x`` is either computed by a learnable linear map of the weighted
back-projections or solved for exactly (weighted ridge least squares).

The multi-view baselines (average and attention-weighted average followed by a
tanh layer) share the same module so that they can be swapped by configuration.
"""

from dataclasses import dataclass
from enum import Enum
import logging
import math
from typing import Optional

import torch
from torch import nn

from .numerics import ConfigurationError, NonFiniteError, ShapeError, check_finite, softmax, tanh_affine

logger = logging.getLogger(__name__)

N_VIEWS = 3


class FusionStrategy(str, Enum):
    INSRL = "insrl"
    INSRL_AVG = "insrl-avg"
    MV_AVG = "mv-avg"
    MV_ATT = "mv-att"


class FusionForm(str, Enum):
    LEARNABLE = "learnable"
    CLOSED = "closed"


def _check_views(views: torch.Tensor, d_model: int) -> None:
    if views.dim() < 2 or views.shape[-2:] != (N_VIEWS, d_model):
        raise ShapeError(f"expected views (..., {N_VIEWS}, {d_model}), got {tuple(views.shape)}")


def _present_mask(views: torch.Tensor, present: Optional[torch.Tensor]) -> torch.Tensor:
    if present is None:
        return torch.ones(views.shape[:-1], dtype=torch.bool, device=views.device)
    if present.shape != (N_VIEWS,) or not bool(present.any()):
        raise ConfigurationError("need at least one present view")
    return present.expand(views.shape[:-1])


def view_attention(views: torch.Tensor, w4: torch.Tensor, W4: torch.Tensor, b4: torch.Tensor,
                   r_hat: torch.Tensor, present: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Cross-view weights ``γ`` (``(..., 3)``): softmax over the present views of
    ``w4ᵀ tanh(W4 v_j + r̂) + b4``.
    """
    scores = torch.tanh(views @ W4.T + r_hat) @ w4 + b4
    return softmax(scores, _present_mask(views, present))


def uniform_weights(views: torch.Tensor, present: Optional[torch.Tensor] = None) -> torch.Tensor:
    mask = _present_mask(views, present).to(views.dtype)
    return mask / mask.sum(dim=-1, keepdim=True)


def _back_projection(views: torch.Tensor, gamma: torch.Tensor, generators: torch.Tensor) -> torch.Tensor:
    # Σ_j γ_j G_jᵀ v_j
    return torch.einsum("...j,jvd,...jv->...d", gamma, generators, views)


def intact_learnable(views: torch.Tensor, gamma: torch.Tensor, generators: torch.Tensor,
                     combiner: torch.Tensor) -> torch.Tensor:
    """``x = W Σ_j γ_j G_jᵀ v_j`` with the learnable ``W`` (``d_intact × d_intact``)."""
    return _back_projection(views, gamma, generators) @ combiner.T


def intact_closed_form(views: torch.Tensor, gamma: torch.Tensor, generators: torch.Tensor,
                       ridge: float = 1e-3) -> torch.Tensor:
    """
    The minimiser of ``Σ_j γ_j ‖v_j − G_j x‖² + ridge ‖x‖²``.

    The normal matrix is symmetric positive definite for ``ridge > 0`` and is
    factorised with Cholesky; gradients flow through the solve.
    """
    if ridge <= 0:
        raise ConfigurationError(f"ridge must be positive, got {ridge}")
    d_intact = generators.shape[-1]
    eye = torch.eye(d_intact, dtype=views.dtype, device=views.device)
    gram = torch.einsum("...j,jvd,jve->...de", gamma, generators, generators) + ridge * eye
    factor, info = torch.linalg.cholesky_ex(gram)
    if bool((info != 0).any()):
        raise NonFiniteError("intact-space normal matrix is not positive definite")
    rhs = _back_projection(views, gamma, generators).unsqueeze(-1)
    return check_finite(torch.cholesky_solve(rhs, factor).squeeze(-1), "closed-form intact solve")


def reconstruction_loss(views: torch.Tensor, x: torch.Tensor, gamma: torch.Tensor,
                        generators: torch.Tensor) -> torch.Tensor:
    """
    ``Σ_j γ_j ‖v_j − G_j x‖²``, averaged over any leading batch dimensions.
    """
    reconstructed = torch.einsum("jvd,...d->...jv", generators, x)
    errors = (views - reconstructed).pow(2).sum(dim=-1)
    return (gamma * errors).sum(dim=-1).mean()


@dataclass
class FusionOutput:
    x: torch.Tensor
    gamma: torch.Tensor


class IntactFusion(nn.Module):
    """
    Holds the view generators, the cross-view attention, the learnable combiner
    and the baseline layer; ``strategy`` and ``form`` select which are used.
    """

    def __init__(self, d_model: int, d_intact: int, strategy: FusionStrategy = FusionStrategy.INSRL,
                 form: FusionForm = FusionForm.LEARNABLE, ridge: float = 1e-3):
        super().__init__()
        if d_intact <= d_model:
            raise ConfigurationError(f"d_intact ({d_intact}) must exceed d_model ({d_model})")
        self.d_model, self.d_intact = d_model, d_intact
        self.strategy, self.form, self.ridge = FusionStrategy(strategy), FusionForm(form), ridge
        std = 1 / math.sqrt(d_model)
        self.generators = nn.Parameter(torch.randn(N_VIEWS, d_model, d_intact) * std)
        self.w4 = nn.Parameter(torch.randn(d_model) * std)
        self.W4 = nn.Parameter(torch.randn(d_model, d_model) * std)
        self.b4 = nn.Parameter(torch.zeros(1))
        self.combiner = nn.Parameter(torch.eye(d_intact) + 0.01 * torch.randn(d_intact, d_intact))
        self.baseline = nn.Linear(d_model, d_intact)

    def forward(self, views: torch.Tensor, r_hat: torch.Tensor, present: Optional[torch.Tensor] = None) -> FusionOutput:
        _check_views(views, self.d_model)
        if self.strategy in (FusionStrategy.MV_AVG, FusionStrategy.MV_ATT):
            return fuse_baseline(self.strategy, views, self, r_hat, present)
        if self.strategy is FusionStrategy.INSRL_AVG:
            gamma = uniform_weights(views, present)
        else:
            gamma = view_attention(views, self.w4, self.W4, self.b4, r_hat, present)
        if self.form is FusionForm.CLOSED:
            x = intact_closed_form(views, gamma, self.generators, self.ridge)
        else:
            x = intact_learnable(views, gamma, self.generators, self.combiner)
        return FusionOutput(x, gamma)

    def reconstruction(self, views: torch.Tensor, output: FusionOutput) -> torch.Tensor:
        return reconstruction_loss(views, output.x, output.gamma, self.generators)


def fuse_baseline(strategy: FusionStrategy, views: torch.Tensor, fusion: IntactFusion, r_hat: torch.Tensor,
                  present: Optional[torch.Tensor] = None) -> FusionOutput:
    """
    ``x = tanh(W6 v̄ + b6)`` where ``v̄`` is the plain (MV-AVG) or the
    attention-weighted (MV-ATT) mean of the present views.
    """
    strategy = FusionStrategy(strategy)
    if strategy is FusionStrategy.MV_AVG:
        gamma = uniform_weights(views, present)
    elif strategy is FusionStrategy.MV_ATT:
        gamma = view_attention(views, fusion.w4, fusion.W4, fusion.b4, r_hat, present)
    else:
        raise ConfigurationError(f"'{strategy.value}' is not a baseline fusion strategy")
    pooled = (gamma.unsqueeze(-1) * views).sum(dim=-2)
    return FusionOutput(tanh_affine(fusion.baseline.weight, pooled, fusion.baseline.bias), gamma)
