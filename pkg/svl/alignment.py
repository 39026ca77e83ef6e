# svl/alignment.py
"""
Multi-scale triple alignment losses.

    total = λ₁ · InfoNCE(spike, text) + λ₂ · InfoNCE(spike, image) + λ₃ · MSE(spike, image)

Text and image embeddings are frozen: they enter as constants and never
receive a gradient. The only learnable scalar is the log-temperature ρ;
similarities are scaled by e^ρ in both InfoNCE terms.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from . import autodiff as ad
from .constants import DEFAULT_LOG_TEMP, LOG_TEMP_MAX, LOG_TEMP_MIN
from .exceptions import ConfigError, DimensionMismatch

logger = logging.getLogger(__name__)

Scale = Union[float, ad.Tensor]

COMPONENT_NAMES = ("spike_text", "spike_image", "mse")


def _frozen(values) -> ad.Tensor:
    if isinstance(values, ad.Tensor):
        return ad.detach(values)
    return ad.tensor(values)


@dataclass(frozen=True)
class AlignmentBatch:
    """Time-mean spike features with their frozen text and image embeddings, all B×C."""

    spike_features: ad.Tensor
    text_embeddings: ad.Tensor
    image_embeddings: ad.Tensor

    def __post_init__(self):
        object.__setattr__(self, "text_embeddings", _frozen(self.text_embeddings))
        object.__setattr__(self, "image_embeddings", _frozen(self.image_embeddings))
        shape = self.spike_features.shape
        if len(shape) != 2:
            raise DimensionMismatch(f"spike features must be B×C, got {list(shape)}")
        for name in ("text_embeddings", "image_embeddings"):
            other = getattr(self, name).shape
            if other != shape:
                raise DimensionMismatch(f"{name} {list(other)} do not match spike features {list(shape)}")

    @property
    def size(self) -> int:
        return self.spike_features.shape[0]


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    initial_log_temp: float = DEFAULT_LOG_TEMP
    log_temp_min: float = LOG_TEMP_MIN
    log_temp_max: float = LOG_TEMP_MAX

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss.{name} must be >= 0, got {getattr(self, name)}")
        if self.log_temp_min >= self.log_temp_max:
            raise ConfigError("loss.log_temp_min must be below loss.log_temp_max")
        if not self.log_temp_min <= self.initial_log_temp <= self.log_temp_max:
            raise ConfigError(
                f"loss.initial_log_temp {self.initial_log_temp:g} lies outside "
                f"[{self.log_temp_min:g}, {self.log_temp_max:g}]"
            )

    @property
    def lambdas(self) -> Tuple[float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3)

    def clamp_log_temp(self, rho: float) -> float:
        """Project ρ back so e^ρ stays within [e^min, e^max]."""
        return float(min(self.log_temp_max, max(self.log_temp_min, rho)))

    def scale(self, rho: Optional[float] = None) -> float:
        return math.exp(self.initial_log_temp if rho is None else rho)


def _scaled(similarity: ad.Tensor, scale: Scale) -> ad.Tensor:
    if isinstance(scale, ad.Tensor):
        if scale.size != 1:
            raise DimensionMismatch("similarity scale must be a scalar")
        return ad.mul(similarity, ad.reshape(scale, ()))
    return ad.scale(similarity, float(scale))


def infonce(x: ad.Tensor, y: ad.Tensor, scale: Scale) -> ad.Tensor:
    """
    Symmetric InfoNCE between matched rows of x and y.

    S = scale · x̂ · ŷᵀ; the loss averages −log softmax over rows and over
    columns at the diagonal: −(1/2B) Σ_i [log p_row(i, i) + log p_col(i, i)].
    ``scale`` is a float or a scalar tensor (e^ρ) that receives a gradient.
    """
    if x.ndim != 2 or x.shape != y.shape:
        raise DimensionMismatch(f"infonce operands differ: {list(x.shape)} vs {list(y.shape)}")
    batch = x.shape[0]
    similarity = ad.matmul(ad.normalize_l2(x, 1), ad.swap_last(ad.normalize_l2(y, 1)))
    similarity = _scaled(similarity, scale)

    log_rows = ad.log_softmax(similarity, 1)
    log_cols = ad.log_softmax(similarity, 0)
    diagonal = ad.mul(ad.add(log_rows, log_cols), ad.tensor(np.eye(batch)))
    return ad.scale(ad.sum_all(diagonal), -1.0 / (2.0 * batch))


def mse_align(fs: ad.Tensor, fi: ad.Tensor) -> ad.Tensor:
    """Σ_i ||f̂s_i − f̂i_i||² over L2-normalized rows."""
    if fs.ndim != 2 or fs.shape != fi.shape:
        raise DimensionMismatch(f"mse_align operands differ: {list(fs.shape)} vs {list(fi.shape)}")
    diff = ad.sub(ad.normalize_l2(fs, 1), ad.normalize_l2(fi, 1))
    return ad.sum_all(ad.square(diff))


def mta_total(
    batch: AlignmentBatch, cfg: LossConfig, log_temp: Optional[ad.Tensor] = None
) -> Tuple[ad.Tensor, Dict[str, ad.Tensor]]:
    """
    Weighted total of the three alignment terms.

    Args:
        batch: Spike features and frozen embeddings
        cfg: Loss weights and temperature bounds
        log_temp: Learnable ρ as a scalar tensor; cfg.initial_log_temp when omitted

    Returns:
        (total, components) with components keyed spike_text, spike_image, mse
    """
    scale: Scale = cfg.scale() if log_temp is None else ad.exp(log_temp)
    components = {
        "spike_text": infonce(batch.spike_features, batch.text_embeddings, scale),
        "spike_image": infonce(batch.spike_features, batch.image_embeddings, scale),
        "mse": mse_align(batch.spike_features, batch.image_embeddings),
    }
    total = None
    for weight, name in zip(cfg.lambdas, COMPONENT_NAMES):
        term = ad.scale(components[name], weight)
        total = term if total is None else ad.add(total, term)
    return total, components
