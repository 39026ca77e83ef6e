# svl/trainer.py
"""
Optimization loops.

Pretraining aligns spike features with frozen text/image embeddings through
the triple alignment loss and updates only the encoder parameters and the
log-temperature ρ. Fine-tuning trains a classification head with
cross-entropy, optionally starting from a zero-shot head and optionally
keeping the encoder frozen (linear probe).

Both loops use AdamW with decoupled weight decay, linear warmup followed by
cosine decay, global-norm gradient clipping, and per-epoch shuffling seeded
by (seed, epoch) so a resumed run sees the same batches.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings

from . import autodiff as ad
from .alignment import COMPONENT_NAMES, AlignmentBatch, LossConfig, mta_total
from .constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    DEFAULT_BASE_LR,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_WARMUP_EPOCHS,
    DEFAULT_WEIGHT_DECAY,
    GRAD_CLIP_NORM,
    SCHEDULE_CHOICES,
    SCHEDULE_COSINE,
    TRAIN_STATE_FILE,
)
from .data import TripletDataset, load_tensor, save_tensor
from .encoder import (
    EncoderConfig,
    SpikeEncoder,
    classify_head,
    load_params,
    save_params,
)
from .exceptions import (
    ConfigError,
    DataError,
    DimensionMismatch,
    FormatError,
    NotFoundError,
    TrainingError,
)
from .geometry import PointCloud
from .performance import profile_step
from .repvli import ZeroShotHead, zeroshot_predict
from .utils import chunked

logger = logging.getLogger(__name__)

SCHEDULES = tuple(schedule for schedule, _ in SCHEDULE_CHOICES)

LOG_TEMP_PARAM = "log_temp"
HEAD_PARAM = "head.w"

# Samples per worker task when encoding for evaluation
EVAL_CHUNK = 16


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    base_lr: float = DEFAULT_BASE_LR
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    warmup_epochs: int = DEFAULT_WARMUP_EPOCHS
    schedule: str = SCHEDULE_COSINE
    seed: int = 0
    T: int = 1
    d_max: int = 4
    grad_clip: float = GRAD_CLIP_NORM

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError(
                f"train.warmup_epochs must lie in [0, epochs), got {self.warmup_epochs}"
            )
        if self.base_lr <= 0:
            raise ConfigError(f"train.base_lr must be > 0, got {self.base_lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"train.weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"train.schedule must be one of {SCHEDULES}, got '{self.schedule}'")
        if self.T < 1 or self.d_max < 1:
            raise ConfigError("train.T and train.d_max must be >= 1")
        if self.grad_clip <= 0:
            raise ConfigError(f"train.grad_clip must be > 0, got {self.grad_clip}")


# ============================================================================
# Optimizer
# ============================================================================


@dataclass
class AdamWState:
    """First and second moments per parameter name, plus the step count."""

    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, shapes: Dict[str, Tuple[int, ...]]) -> "AdamWState":
        return cls(
            0,
            {name: np.zeros(shape) for name, shape in shapes.items()},
            {name: np.zeros(shape) for name, shape in shapes.items()},
        )


def adamw_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    weight_decay: float,
    no_decay: Sequence[str] = (),
) -> Tuple[Dict[str, np.ndarray], AdamWState]:
    """
    One AdamW update with bias-corrected moments.

    p ← p − lr · (m̂ / (sqrt(v̂) + ε) + wd · p); parameters named in
    ``no_decay`` skip the decay term.

    Raises:
        TrainingError: A gradient holds NaN or Inf
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for '{name}' at step {state.step + 1}")

    step = state.step + 1
    correction1 = 1.0 - ADAM_BETA1**step
    correction2 = 1.0 - ADAM_BETA2**step
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = np.asarray(grads.get(name, np.zeros_like(p)), dtype=np.float64).reshape(p.shape)
        m = ADAM_BETA1 * state.m.get(name, np.zeros_like(p)) + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v.get(name, np.zeros_like(p)) + (1.0 - ADAM_BETA2) * g * g
        update = (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)
        decay = 0.0 if name in no_decay else weight_decay
        new_params[name] = p - lr * (update + decay * p)
        new_m[name], new_v[name] = m, v
    return new_params, AdamWState(step, new_m, new_v)


def clip_grad_norm(
    grads: Dict[str, np.ndarray], max_norm: float = GRAD_CLIP_NORM
) -> Tuple[Dict[str, np.ndarray], float]:
    """Rescale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}, norm


def lr_at(epoch: float, cfg: TrainConfig) -> float:
    """
    Learning rate at a (possibly fractional) epoch.

    Linear warmup from 0 to base_lr over warmup_epochs, then cosine decay to
    0 at ``epochs``. The "onecycle" schedule runs the same shape.
    """
    if not 0.0 <= epoch <= cfg.epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {cfg.epochs}]")
    if epoch < cfg.warmup_epochs:
        return cfg.base_lr * epoch / cfg.warmup_epochs
    progress = (epoch - cfg.warmup_epochs) / (cfg.epochs - cfg.warmup_epochs)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def _collect_grads(tensors: Dict[str, ad.Tensor]) -> Dict[str, np.ndarray]:
    return {
        name: (np.array(t.grad) if t.grad is not None else np.zeros(t.shape))
        for name, t in tensors.items()
    }


# ============================================================================
# Shared forward helpers
# ============================================================================


def batch_features(encoder: SpikeEncoder, clouds: Sequence[PointCloud]) -> ad.Tensor:
    """B×C time-mean features; equal-size clouds share one batched pass."""
    if len({len(cloud) for cloud in clouds}) == 1:
        return encoder.forward_batch(list(clouds)).time_mean()
    return ad.stack([encoder.forward(cloud).time_mean() for cloud in clouds], 0)


def encode_dataset(
    dataset: TripletDataset, encoder: SpikeEncoder, workers: Optional[int] = None
) -> np.ndarray:
    """
    M×C inference features, sharded across a thread pool.

    Tapes and the no-grad flag are per thread, so each task enters
    inference mode itself.
    """
    workers = max(1, workers or getattr(settings, "SVL_THREADS", 1))

    def encode(chunk: List[int]) -> np.ndarray:
        with ad.no_grad():
            return batch_features(encoder, dataset.clouds_at(chunk)).data

    chunks = list(chunked(list(range(len(dataset))), EVAL_CHUNK))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(encode, chunks))
    return np.concatenate(parts, axis=0)


# ============================================================================
# Pretraining
# ============================================================================


@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    lr: float
    total: float
    spike_text: float
    spike_image: float
    mse: float
    log_temp: float

    def as_row(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class TrainingRun:
    """Encoder, temperature and optimizer state as of the end of ``epoch``."""

    encoder: SpikeEncoder
    log_temp: float
    state: AdamWState
    epoch: int
    history: List[EpochLoss] = field(default_factory=list)


def _check_alignment_inputs(dataset: TripletDataset, encoder: SpikeEncoder):
    if dataset.dim != encoder.cfg.embed_dim:
        raise DimensionMismatch(
            f"dataset embeddings have width {dataset.dim}, encoder projects to "
            f"{encoder.cfg.embed_dim}"
        )


@profile_step("pretrain_epoch")
def _pretrain_epoch(
    run: TrainingRun,
    dataset: TripletDataset,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
) -> EpochLoss:
    epoch = run.epoch
    rng = np.random.default_rng([train_cfg.seed, epoch])
    batches = list(dataset.batches(train_cfg.batch_size, rng))
    sums = dict.fromkeys(("total",) + COMPONENT_NAMES, 0.0)
    lr = lr_at(epoch, train_cfg)
    # an all-zero objective leaves every parameter where it is
    decay = train_cfg.weight_decay if any(loss_cfg.lambdas) else 0.0

    for b, index in enumerate(batches):
        ad.fresh_tape()
        lr = lr_at(epoch + b / len(batches), train_cfg)
        params = run.encoder.params.trainable()
        rho = ad.tensor(run.log_temp, requires_grad=True)
        encoder = SpikeEncoder(run.encoder.cfg, params)

        batch = AlignmentBatch(
            batch_features(encoder, dataset.clouds_at(index)),
            dataset.text[index],
            dataset.image[index],
        )
        total, components = mta_total(batch, loss_cfg, rho)
        if not math.isfinite(total.item()):
            raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
        ad.backward(total)

        tensors = dict(params.items())
        tensors[LOG_TEMP_PARAM] = rho
        grads, _ = clip_grad_norm(_collect_grads(tensors), train_cfg.grad_clip)
        values = {name: t.data for name, t in tensors.items()}
        updated, run.state = adamw_step(
            values, grads, run.state, lr, decay, no_decay=(LOG_TEMP_PARAM,)
        )

        run.log_temp = loss_cfg.clamp_log_temp(float(updated.pop(LOG_TEMP_PARAM)))
        run.encoder = SpikeEncoder(run.encoder.cfg, params.replace(updated))

        weight = len(index) / len(dataset)
        sums["total"] += weight * total.item()
        for name in COMPONENT_NAMES:
            sums[name] += weight * components[name].item()

    return EpochLoss(epoch, lr, log_temp=run.log_temp, **sums)


def pretrain_loop(
    dataset: TripletDataset,
    encoder: SpikeEncoder,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    resume: Optional[TrainingRun] = None,
    on_epoch: Optional[Callable[[TrainingRun], None]] = None,
) -> TrainingRun:
    """
    Align spike features with frozen embeddings for ``train_cfg.epochs`` epochs.

    The encoder runs at the train config's T×D. ``resume`` continues a
    checkpointed run from its next epoch; ``on_epoch`` is called after every
    epoch (checkpointing hooks in here). With every loss weight at 0 weight
    decay is skipped too, so parameters stay put.

    Returns:
        The final TrainingRun with the per-epoch loss history
    """
    if resume is not None:
        run = resume
    else:
        encoder = encoder.with_run(train_cfg.T, train_cfg.d_max)
        params = encoder.params.trainable()
        state = AdamWState.zeros({**params.shapes(), LOG_TEMP_PARAM: ()})
        run = TrainingRun(SpikeEncoder(encoder.cfg, params), loss_cfg.initial_log_temp, state, 0)
    _check_alignment_inputs(dataset, run.encoder)

    logger.info(
        "pretraining %s encoder on %d triplets: epochs %d-%d, T=%d, D=%d",
        run.encoder.cfg.variant,
        len(dataset),
        run.epoch,
        train_cfg.epochs - 1,
        run.encoder.cfg.T,
        run.encoder.cfg.neuron.d_max,
    )
    while run.epoch < train_cfg.epochs:
        record = _pretrain_epoch(run, dataset, loss_cfg, train_cfg)
        run.history.append(record)
        logger.info(
            "epoch %d lr %.3g loss %.6f (text %.6f, image %.6f, mse %.6f) log_temp %.4f",
            record.epoch,
            record.lr,
            record.total,
            record.spike_text,
            record.spike_image,
            record.mse,
            record.log_temp,
        )
        run.epoch += 1
        if on_epoch is not None:
            on_epoch(run)
    return run


# ============================================================================
# Checkpoints
# ============================================================================


def _slot_name(name: str) -> str:
    return f"{name}.svlt"


def save_checkpoint(
    directory: Union[str, Path],
    run: TrainingRun,
    train_cfg: Optional[TrainConfig] = None,
    loss_cfg: Optional[LossConfig] = None,
) -> Path:
    """
    Write parameters, ``train_state.json`` and the AdamW moments.

    Layout: ``<name>.svlt`` + ``manifest.json`` for parameters,
    ``optimizer/m.<name>.svlt`` and ``optimizer/v.<name>.svlt`` for moments.
    """
    directory = Path(directory)
    save_params(run.encoder.params, directory)
    optimizer = directory / "optimizer"
    for name in run.state.m:
        save_tensor(optimizer / f"m.{_slot_name(name)}", run.state.m[name])
        save_tensor(optimizer / f"v.{_slot_name(name)}", run.state.v[name])

    state = {
        "epoch": run.epoch,
        "log_temp": run.log_temp,
        "step": run.state.step,
        "optimizer_slots": list(run.state.m),
        "encoder": run.encoder.cfg.as_dict(),
    }
    if train_cfg is not None:
        state["train"] = asdict(train_cfg)
    if loss_cfg is not None:
        state["loss"] = asdict(loss_cfg)
    (directory / TRAIN_STATE_FILE).write_text(
        json.dumps(state, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("checkpoint at epoch %d written to %s", run.epoch, directory)
    return directory


def read_train_state(directory: Union[str, Path]) -> Dict[str, object]:
    path = Path(directory) / TRAIN_STATE_FILE
    if not path.exists():
        raise NotFoundError(f"not a checkpoint directory (no {TRAIN_STATE_FILE}): {directory}")
    try:
        state = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(state, dict) or "encoder" not in state:
        raise FormatError(f"{path}: missing encoder configuration")
    return state


def load_checkpoint(directory: Union[str, Path]) -> TrainingRun:
    """Restore a TrainingRun saved by ``save_checkpoint``, bit-exact."""
    directory = Path(directory)
    state = read_train_state(directory)
    cfg = EncoderConfig.from_dict(state["encoder"], "checkpoint encoder")
    params = load_params(directory, cfg)

    optimizer = directory / "optimizer"
    m, v = {}, {}
    for name in state.get("optimizer_slots", []):
        m[name] = np.array(load_tensor(optimizer / f"m.{_slot_name(name)}").data)
        v[name] = np.array(load_tensor(optimizer / f"v.{_slot_name(name)}").data)

    return TrainingRun(
        encoder=SpikeEncoder(cfg, params),
        log_temp=float(state.get("log_temp", 0.0)),
        state=AdamWState(int(state.get("step", 0)), m, v),
        epoch=int(state.get("epoch", 0)),
    )


# ============================================================================
# Evaluation
# ============================================================================


@dataclass(frozen=True)
class ClassAccuracy:
    label: str
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


@dataclass(frozen=True)
class ZeroShotReport:
    top1: float
    classes: List[ClassAccuracy]
    n_samples: int

    def rows(self) -> List[Dict[str, object]]:
        return [
            {
                "label": c.label,
                "correct": c.correct,
                "total": c.total,
                "accuracy": round(c.accuracy, 6),
            }
            for c in self.classes
        ]

    def as_dict(self) -> Dict[str, object]:
        return {
            "top1": self.top1,
            "n_samples": self.n_samples,
            "per_class": {c.label: c.accuracy for c in self.classes},
            "classes": self.rows(),
        }


def accuracy_report(
    predictions: np.ndarray, targets: np.ndarray, labels: Sequence[str]
) -> ZeroShotReport:
    classes = []
    for k, label in enumerate(labels):
        members = targets == k
        total = int(members.sum())
        if total:
            classes.append(ClassAccuracy(label, int((predictions[members] == k).sum()), total))
    top1 = float(np.mean(predictions == targets)) if len(targets) else 0.0
    return ZeroShotReport(top1, classes, len(targets))


def evaluate_zeroshot(
    dataset: TripletDataset,
    encoder: SpikeEncoder,
    head: ZeroShotHead,
    workers: Optional[int] = None,
) -> ZeroShotReport:
    """
    Top-1 and per-class accuracy of the folded head over a labeled dataset.

    Raises:
        DimensionMismatch: Head width differs from the encoder's embedding width
        DataError: A record has no label, or one the head does not know
    """
    if head.width != encoder.cfg.embed_dim:
        raise DimensionMismatch(
            f"head width {head.width} does not match encoder embedding width "
            f"{encoder.cfg.embed_dim}"
        )
    targets = dataset.label_indices(head.labels)
    features = encode_dataset(dataset, encoder, workers)
    predictions, _ = zeroshot_predict(features, head)
    report = accuracy_report(predictions, targets, head.labels)
    logger.info("zero-shot top-1 %.4f over %d samples", report.top1, report.n_samples)
    return report


# ============================================================================
# Fine-tuning
# ============================================================================


def cross_entropy(logits: ad.Tensor, targets: Sequence[int]) -> ad.Tensor:
    """Mean −log softmax(logits)[i, y_i] over a B×K batch."""
    batch, classes = logits.shape
    onehot = np.zeros((batch, classes))
    onehot[np.arange(batch), np.asarray(targets, dtype=np.int64)] = 1.0
    picked = ad.mul(ad.log_softmax(logits, 1), ad.tensor(onehot))
    return ad.scale(ad.sum_all(picked), -1.0 / batch)


@dataclass(frozen=True)
class FinetuneEpoch:
    epoch: int
    lr: float
    loss: float
    train_accuracy: float
    test_accuracy: Optional[float] = None

    def as_row(self) -> Dict[str, object]:
        row = asdict(self)
        row["test_accuracy"] = "" if self.test_accuracy is None else self.test_accuracy
        return row


@dataclass
class FinetuneRun:
    encoder: SpikeEncoder
    head: np.ndarray
    labels: List[str]
    history: List[FinetuneEpoch] = field(default_factory=list)

    def predict(self, dataset: TripletDataset, workers: Optional[int] = None) -> np.ndarray:
        features = encode_dataset(dataset, self.encoder, workers)
        return np.argmax(features @ self.head.T, axis=1)


def _initial_head(
    labels: Sequence[str], width: int, seed: int, head_init: Optional[ZeroShotHead]
) -> np.ndarray:
    if head_init is None:
        rng = np.random.default_rng([seed, 2])
        return rng.normal(0.0, 0.01, size=(len(labels), width))
    if list(head_init.labels) != list(labels):
        raise DataError("initial head labels differ from the fine-tune class set")
    if head_init.width != width:
        raise DimensionMismatch(
            f"initial head width {head_init.width} does not match encoder width {width}"
        )
    # The folded head expects unit features; rescale for raw time-mean features.
    return np.array(head_init.weights.data) / head_init.scale


def finetune_loop(
    dataset: TripletDataset,
    encoder: SpikeEncoder,
    labels: Sequence[str],
    train_cfg: TrainConfig,
    head_init: Optional[ZeroShotHead] = None,
    freeze_encoder: bool = False,
    eval_dataset: Optional[TripletDataset] = None,
) -> FinetuneRun:
    """
    Train a K×C classification head with cross-entropy.

    The encoder is re-timed to the train config's T×D, so a model pretrained
    at 1×4 fine-tunes at 6×4 with the same weights. A frozen encoder is run
    once under no_grad and only the head learns.

    Raises:
        DataError: A training label outside ``labels``
    """
    labels = list(labels)
    targets = dataset.label_indices(labels)
    encoder = encoder.with_run(train_cfg.T, train_cfg.d_max)
    head = _initial_head(labels, encoder.cfg.embed_dim, train_cfg.seed, head_init)
    frozen = encode_dataset(dataset, encoder) if freeze_encoder else None
    eval_targets = eval_dataset.label_indices(labels) if eval_dataset is not None else None

    names = [HEAD_PARAM] + ([] if freeze_encoder else list(encoder.params))
    shapes = {HEAD_PARAM: head.shape}
    if not freeze_encoder:
        shapes.update(encoder.params.shapes())
    state = AdamWState.zeros(shapes)
    run = FinetuneRun(encoder, head, labels)

    logger.info(
        "fine-tuning %d-class head on %d samples (T=%d, D=%d, encoder %s)",
        len(labels),
        len(dataset),
        encoder.cfg.T,
        encoder.cfg.neuron.d_max,
        "frozen" if freeze_encoder else "trainable",
    )
    for epoch in range(train_cfg.epochs):
        rng = np.random.default_rng([train_cfg.seed, epoch])
        batches = list(dataset.batches(train_cfg.batch_size, rng))
        loss_sum, correct = 0.0, 0
        lr = lr_at(epoch, train_cfg)
        for b, index in enumerate(batches):
            ad.fresh_tape()
            lr = lr_at(epoch + b / len(batches), train_cfg)
            head_t = ad.tensor(run.head, requires_grad=True)
            tensors = {HEAD_PARAM: head_t}
            if freeze_encoder:
                features = ad.tensor(frozen[index])
            else:
                params = run.encoder.params.trainable()
                tensors.update(params.items())
                features = batch_features(
                    SpikeEncoder(run.encoder.cfg, params), dataset.clouds_at(index)
                )

            logits = classify_head(features, head_t)
            loss = cross_entropy(logits, targets[index])
            ad.backward(loss)
            grads, _ = clip_grad_norm(_collect_grads(tensors), train_cfg.grad_clip)
            values = {name: tensors[name].data for name in names}
            updated, state = adamw_step(
                values, grads, state, lr, train_cfg.weight_decay, no_decay=(HEAD_PARAM,)
            )

            run.head = updated.pop(HEAD_PARAM)
            if not freeze_encoder:
                run.encoder = SpikeEncoder(run.encoder.cfg, params.replace(updated))
            loss_sum += loss.item() * len(index)
            correct += int(np.sum(np.argmax(logits.data, axis=1) == targets[index]))

        test_accuracy = None
        if eval_dataset is not None:
            predictions = run.predict(eval_dataset)
            test_accuracy = float(np.mean(predictions == eval_targets))
        record = FinetuneEpoch(
            epoch, lr, loss_sum / len(dataset), correct / len(dataset), test_accuracy
        )
        run.history.append(record)
        logger.info(
            "fine-tune epoch %d lr %.3g loss %.6f train acc %.4f test acc %s",
            epoch,
            lr,
            record.loss,
            record.train_accuracy,
            "-" if test_accuracy is None else f"{test_accuracy:.4f}",
        )
    return run

