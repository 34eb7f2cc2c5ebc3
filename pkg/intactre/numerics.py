"""
The differentiable operations the model is assembled from.

Everything here is a thin, shape-checked layer over torch: torch records the
computation graph of every forward pass and replays it backwards, so a forward
pass *is* the computation record. The extra contract added on top is the one
the rest of the package relies on: explicit shape errors, masked softmax,
finiteness checks and a central-difference gradient oracle.
"""

import logging
from typing import Callable, Dict, Iterator, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

logger = logging.getLogger(__name__)

LAYER_NORM_EPS = 1e-5


class ShapeError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class EmptySupportError(ValueError):
    """Attention over a support that contains nothing but padding."""


def _shape(t: torch.Tensor) -> Tuple[int, ...]:
    return tuple(t.shape)


def check_finite(t: torch.Tensor, what: str) -> torch.Tensor:
    if not bool(torch.isfinite(t).all()):
        raise NonFiniteError(f"{what} produced non-finite values")
    return t


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    Matrix product ``a @ b`` of a ``m×k`` matrix with a ``k×n`` matrix or a ``k`` vector.

    Leading batch dimensions are passed through.
    """
    if a.dim() < 2 or b.dim() < 1 or a.shape[-1] != b.shape[-2 if b.dim() >= 2 else 0]:
        raise ShapeError(f"cannot multiply {_shape(a)} by {_shape(b)}")
    return a @ b


def softmax(z: torch.Tensor, mask: Optional[torch.Tensor] = None, dim: int = -1) -> torch.Tensor:
    """
    Numerically stable softmax along ``dim``.

    ``mask`` marks the admissible entries (``True``); the others get exactly zero
    weight. Every slice needs at least one admissible entry.
    """
    if z.dim() == 0 or z.shape[dim] == 0:
        raise ValueError("softmax of an empty vector")
    if mask is not None:
        if not bool(mask.any(dim=dim).all()):
            raise EmptySupportError("softmax support is empty (every position is masked)")
        z = z.masked_fill(~mask, float("-inf"))
    # torch subtracts the running maximum before exponentiating
    return torch.softmax(z, dim=dim)


def tanh_affine(W: torch.Tensor, x: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    ``tanh(W x + b)`` for a vector ``x`` or a batch of row vectors ``x`` (``B×k``).
    """
    if W.dim() != 2 or x.shape[-1] != W.shape[1] or b.shape != W.shape[:1]:
        raise ShapeError(f"cannot form tanh(W x + b) from W{_shape(W)}, x{_shape(x)}, b{_shape(b)}")
    return torch.tanh(x @ W.T + b)


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """
    Normalise every vector along ``dim`` to zero mean and unit (biased) variance,
    then scale by ``gain`` and shift by ``bias``.
    """
    d = x.shape[dim]
    if d < 2:
        raise ShapeError(f"layer norm needs at least 2 features, got {d}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer norm over {d} features with gain{_shape(gain)} and bias{_shape(bias)}")
    moved = x.movedim(dim, -1)
    return F.layer_norm(moved, (d,), gain, bias, LAYER_NORM_EPS).movedim(-1, dim)


def conv1d(seq: torch.Tensor, kernels: torch.Tensor, width: int, bias: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Same-length 1-D convolution (cross-correlation) with zero padding.

    ``seq`` is ``(..., d_in, l)``, ``kernels`` is ``(d_out, d_in, width)``;
    the result is ``(..., d_out, l)``.
    """
    if width % 2 == 0 or width < 1:
        raise ConfigurationError(f"convolution width must be odd and positive, got {width}")
    if kernels.dim() != 3 or kernels.shape[2] != width or seq.dim() < 2 or kernels.shape[1] != seq.shape[-2]:
        raise ShapeError(f"cannot convolve {_shape(seq)} with kernels {_shape(kernels)} of width {width}")
    batch = seq.shape[:-2]
    flat = seq.reshape(-1, seq.shape[-2], seq.shape[-1])
    out = F.conv1d(flat, kernels, bias, padding=width // 2)
    return out.reshape(*batch, kernels.shape[0], seq.shape[-1])


class ParameterStore(Mapping[str, nn.Parameter]):
    """
    All learnable tensors of a model, keyed by their dotted module path.

    A parameter that several modules use is listed once, so its gradient is the
    sum over every path it takes through the graph.
    """

    def __init__(self, params: Mapping[str, nn.Parameter]):
        self._params: Dict[str, nn.Parameter] = dict(params)

    @classmethod
    def from_module(cls, module: nn.Module) -> "ParameterStore":
        return cls(dict(module.named_parameters()))

    def __getitem__(self, name: str) -> nn.Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: _shape(p) for name, p in self._params.items()}

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grads(self) -> Dict[str, torch.Tensor]:
        return {name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
                for name, p in self._params.items()}

    def grad_norm(self) -> float:
        total = sum(float(p.grad.detach().pow(2).sum()) for p in self._params.values() if p.grad is not None)
        return total ** 0.5


def _checked_indices(numel: int, max_coords: Optional[int], generator: torch.Generator) -> Sequence[int]:
    if max_coords is None or numel <= max_coords:
        return range(numel)
    return sorted(torch.randperm(numel, generator=generator)[:max_coords].tolist())


def grad_check(f: Callable[[], torch.Tensor], params: ParameterStore, eps: float = 1e-6,
               max_coords: Optional[int] = None, atol: float = 1e-7, seed: int = 0) -> float:
    """
    Compare the analytic gradient of the scalar ``f()`` against central differences.

    Every checked coordinate gets the relative error
    ``|a − n| / (|a| + |n| + 1e-12)``; the maximum over all coordinates of all
    parameters is returned. A coordinate whose analytic and numeric values
    agree to within ``atol`` counts as exact, which covers gradients that
    vanish (e.g. a bias the loss is invariant to) and finite-difference
    round-off on tiny entries. ``max_coords`` bounds the number of checked
    coordinates per parameter, drawn uniformly with ``seed``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"finite-difference step must lie in [1e-7, 1e-3], got {eps}")
    for name, p in params.items():
        if p.dtype != torch.float64:
            raise ValueError(f"gradient checks need double precision, '{name}' is {p.dtype}")

    params.zero_grad()
    loss = f()
    if loss.numel() != 1:
        raise ShapeError(f"gradient check needs a scalar function, got shape {_shape(loss)}")
    check_finite(loss, "gradient-check objective")
    loss.backward()
    analytic = params.grads()

    generator = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            indices = list(_checked_indices(flat.numel(), max_coords, generator))
            a = analytic[name].reshape(-1)[indices]
            n = torch.empty_like(a)
            for k, i in enumerate(indices):
                original = float(flat[i])
                flat[i] = original + eps
                upper = float(check_finite(f(), "gradient-check objective"))
                flat[i] = original - eps
                lower = float(check_finite(f(), "gradient-check objective"))
                flat[i] = original
                n[k] = (upper - lower) / (2 * eps)
            difference = (a - n).abs()
            errors = torch.where(difference < atol, torch.zeros_like(a), difference / (a.abs() + n.abs() + 1e-12))
            if errors.numel() == 0:
                continue
            error = float(errors.max())
            logger.debug("grad check %s: max relative error %.3e over %d coordinates", name, error, len(indices))
            worst = max(worst, error)
    return worst
