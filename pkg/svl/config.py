# svl/config.py
"""
Strict JSON run configuration.

    {
      "seed": 7,
      "encoder":  {"variant": "pointnet", "dims": [64, 128], "embed_dim": 512,
                   "neuron": {"beta": 0.5}},
      "loss":     {"lambda1": 1.0, "lambda2": 1.0, "lambda3": 1.0},
      "train":    {"epochs": 200, "batch_size": 64, "T": 1, "d_max": 4},
      "finetune": {"epochs": 30, "T": 6, "d_max": 4, "freeze_encoder": false},
      "data":     {"train_manifest": "synth/train.jsonl", "test_manifest": "synth/test.jsonl",
                   "prompts": "synth/prompts.svlt", "labels": "synth/labels.json"},
      "output_dir": "runs/pointnet"
    }

Unknown keys anywhere are rejected. Run granularity (T and D) is set per
phase in ``train`` and ``finetune``; the encoder and neuron sections must not
carry it. Relative paths resolve against the config file's directory.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .alignment import LossConfig
from .encoder import EncoderConfig
from .exceptions import ConfigError
from .trainer import TrainConfig
from .utils import dataclass_from_dict, resolve_path

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = ("seed", "encoder", "neuron", "loss", "train", "finetune", "data", "output_dir")


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 30
    batch_size: int = 32
    base_lr: float = 1e-3
    weight_decay: float = 1e-4
    warmup_epochs: int = 2
    T: int = 6
    d_max: int = 4
    freeze_encoder: bool = False
    init_from_prompts: bool = True

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.base_lr,
            weight_decay=self.weight_decay,
            warmup_epochs=self.warmup_epochs,
            seed=seed,
            T=self.T,
            d_max=self.d_max,
        )


@dataclass(frozen=True)
class DataConfig:
    train_manifest: str = ""
    test_manifest: str = ""
    prompts: str = ""
    labels: str = ""
    workers: int = 0

    def __post_init__(self):
        if self.workers < 0:
            raise ConfigError(f"data.workers must be >= 0, got {self.workers}")


@dataclass(frozen=True)
class RunConfig:
    """Every section of a run, validated; ``base_dir`` anchors relative paths."""

    seed: int
    encoder: EncoderConfig
    loss: LossConfig
    train: TrainConfig
    finetune: FinetuneConfig
    data: DataConfig
    output_dir: str = "runs/default"
    base_dir: Path = field(default_factory=Path.cwd)

    def path(self, value: Union[str, Path]) -> Path:
        return resolve_path(value, self.base_dir)

    def data_path(self, name: str) -> Path:
        value = getattr(self.data, name)
        if not value:
            raise ConfigError(f"data.{name} is required for this command")
        return self.path(value)

    @property
    def output_path(self) -> Path:
        return self.path(self.output_dir)

    @property
    def workers(self) -> Optional[int]:
        return self.data.workers or None


def _reject_run_keys(section: Dict[str, Any]):
    if "T" in section:
        raise ConfigError("encoder.T is set per phase: use train.T and finetune.T")
    neuron = section.get("neuron")
    if isinstance(neuron, dict) and "d_max" in neuron:
        raise ConfigError("encoder.neuron.d_max is set per phase: use train.d_max and finetune.d_max")


def parse_run_config(data: Any, base_dir: Optional[Path] = None) -> RunConfig:
    """Validate a parsed JSON document into a RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = sorted(set(data) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigError(f"run config: unknown keys {', '.join(unknown)}")

    seed = data.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed is mandatory and must be an integer")

    encoder_section = dict(data.get("encoder", {}) or {})
    if "neuron" in data:
        if "neuron" in encoder_section:
            raise ConfigError("give the neuron section once, top-level or under encoder")
        encoder_section["neuron"] = data["neuron"]
    _reject_run_keys(encoder_section)

    for name in ("train", "finetune"):
        if isinstance(data.get(name), dict) and "seed" in data[name]:
            raise ConfigError(f"{name}.seed is not allowed; the seed is top-level")

    train = dataclass_from_dict(TrainConfig, data.get("train", {}), "train")
    encoder = EncoderConfig.from_dict(encoder_section, "encoder").with_run(train.T, train.d_max)

    output_dir = data.get("output_dir", "runs/default")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a non-empty string")

    return RunConfig(
        seed=seed,
        encoder=encoder,
        loss=dataclass_from_dict(LossConfig, data.get("loss", {}), "loss"),
        train=replace(train, seed=seed),
        finetune=dataclass_from_dict(FinetuneConfig, data.get("finetune", {}), "finetune"),
        data=dataclass_from_dict(DataConfig, data.get("data", {}), "data"),
        output_dir=output_dir,
        base_dir=base_dir or Path.cwd(),
    )


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Read and validate a run config file.

    Raises:
        ConfigError: Missing file, invalid JSON, or any validation failure
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = parse_run_config(data, path.resolve().parent)
    logger.debug("loaded run config %s (seed %d)", path, cfg.seed)
    return cfg
