# svl/repvli.py
"""
Re-parameterized zero-shot head.

Frozen class prompt embeddings are folded once into a K×C linear layer,
W_i = scale · ê_i, so inference needs no text encoder:

    p = softmax(W · normalize(F^S / T))

which equals softmax(scale · cos(F^S/T, e_i)) over the classes.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .constants import HEAD_LABELS_FILE, HEAD_TENSOR_FILE, NORM_EPS
from .data import load_tensor, save_tensor
from .exceptions import (
    ConfigError,
    DegenerateInputError,
    DimensionMismatch,
    FormatError,
    NotFoundError,
    ShapeError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ZeroShotHead:
    """Folded prompt weights, one row per label, scale already applied."""

    weights: ad.Tensor
    scale: float
    labels: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(label) for label in self.labels))
        if self.weights.ndim != 2:
            raise ShapeError(f"head weights must be K×C, got {list(self.weights.shape)}")
        if self.weights.shape[0] != len(self.labels):
            raise ShapeError(
                f"head has {self.weights.shape[0]} rows but {len(self.labels)} labels"
            )
        if len(self.labels) < 2:
            raise DegenerateInputError("a zero-shot head needs at least two classes")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]


def build_head(
    text_embeddings: Union[ad.Tensor, np.ndarray],
    scale: float,
    labels: Optional[Sequence[str]] = None,
) -> ZeroShotHead:
    """
    Fold K prompt embeddings into a head: each row normalized, then scaled.

    Raises:
        DegenerateInputError: A zero-norm embedding row, or K < 2
    """
    values = text_embeddings.data if isinstance(text_embeddings, ad.Tensor) else text_embeddings
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"prompt embeddings must be K×C, got {list(values.shape)}")
    if scale <= 0:
        raise ConfigError(f"head scale must be > 0, got {scale}")

    norms = np.linalg.norm(values, axis=1, keepdims=True)
    if np.any(norms <= NORM_EPS):
        bad = int(np.flatnonzero(norms.reshape(-1) <= NORM_EPS)[0])
        raise DegenerateInputError(f"prompt embedding row {bad} has zero norm")
    if labels is None:
        labels = [str(i) for i in range(values.shape[0])]

    head = ZeroShotHead(ad.tensor(scale * values / norms), float(scale), labels)
    logger.debug("built zero-shot head %d×%d at scale %g", head.n_classes, head.width, scale)
    return head


def _feature(f) -> ad.Tensor:
    """Time-mean feature of a SpikeFeature/EncoderOutput, or a feature given directly."""
    if hasattr(f, "time_mean"):
        return f.time_mean()
    return ad.as_tensor(f)


def _check_width(feature: ad.Tensor, head: ZeroShotHead):
    if feature.shape[-1] != head.width:
        raise DimensionMismatch(
            f"feature width {feature.shape[-1]} does not match head width {head.width}"
        )


def zeroshot_logits(f, head: ZeroShotHead) -> ad.Tensor:
    """
    Class probabilities softmax(W · normalize(F^S/T)).

    ``f`` is a SpikeFeature or EncoderOutput of width C; a batched output
    gives B×K probabilities.
    """
    feature = _feature(f)
    _check_width(feature, head)
    logits = ad.matmul(ad.normalize_l2(feature, -1), ad.swap_last(head.weights))
    return ad.softmax(logits, -1)


def zeroshot_predict(features, head: ZeroShotHead) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched inference over B×C time-mean features.

    A quiescent sample (all-zero feature) scores every class equally and
    resolves to the first class instead of failing the batch.

    Returns:
        (predicted class indices, B×K probabilities)
    """
    values = _feature(features).data
    values = values.reshape(1, -1) if values.ndim == 1 else values
    if values.shape[-1] != head.width:
        raise DimensionMismatch(
            f"feature width {values.shape[-1]} does not match head width {head.width}"
        )
    norms = np.linalg.norm(values, axis=1, keepdims=True)
    unit = values / np.maximum(norms, NORM_EPS)
    logits = unit @ head.weights.data.T
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    probabilities = shifted / shifted.sum(axis=1, keepdims=True)
    return np.argmax(probabilities, axis=1), probabilities


@dataclass(frozen=True)
class EquivalenceReport:
    max_abs_diff: float
    argmax_full: List[int]
    argmax_folded: List[int]

    @property
    def argmax_agrees(self) -> bool:
        return self.argmax_full == self.argmax_folded

    def passed(self, tolerance: float = 1e-9) -> bool:
        return self.max_abs_diff < tolerance and self.argmax_agrees


def verify_equivalence(f, embeddings, scale: float) -> EquivalenceReport:
    """
    Compare the text-encoder path (scaled cosine similarity, softmax) with
    the folded-head path on the same feature and prompts.
    """
    with ad.no_grad():
        feature = _feature(f)
        prompts = ad.as_tensor(embeddings)
        cosine = ad.matmul(ad.normalize_l2(feature, -1), ad.swap_last(ad.normalize_l2(prompts, 1)))
        full = ad.softmax(ad.scale(cosine, scale), -1).data
        folded = zeroshot_logits(feature, build_head(prompts, scale)).data

    return EquivalenceReport(
        max_abs_diff=float(np.max(np.abs(full - folded))),
        argmax_full=np.atleast_1d(np.argmax(full, axis=-1)).tolist(),
        argmax_folded=np.atleast_1d(np.argmax(folded, axis=-1)).tolist(),
    )


# ============================================================================
# Head artifacts
# ============================================================================


def save_head(head: ZeroShotHead, directory: Union[str, Path]) -> Path:
    """Write ``head.svlt`` and ``head.labels.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_tensor(directory / HEAD_TENSOR_FILE, head.weights)
    (directory / HEAD_LABELS_FILE).write_text(
        json.dumps(list(head.labels), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    logger.info("exported %d-class head to %s", head.n_classes, directory)
    return directory


def load_head(directory: Union[str, Path]) -> ZeroShotHead:
    """Read a saved head; the scale is recovered as the mean row norm."""
    directory = Path(directory)
    labels_file = directory / HEAD_LABELS_FILE
    if not labels_file.exists():
        raise NotFoundError(f"head labels not found: {labels_file}")
    weights = load_tensor(directory / HEAD_TENSOR_FILE)
    try:
        labels = json.loads(labels_file.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"{labels_file}: invalid JSON ({exc})") from exc
    if not isinstance(labels, list):
        raise FormatError(f"{labels_file}: expected a JSON array of labels")
    if weights.ndim != 2 or weights.shape[0] != len(labels):
        raise FormatError(
            f"{directory}: head tensor {list(weights.shape)} does not match {len(labels)} labels"
        )
    scale = float(np.mean(np.linalg.norm(weights.data, axis=1)))
    return ZeroShotHead(weights, scale, labels)
