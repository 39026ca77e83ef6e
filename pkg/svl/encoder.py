# svl/encoder.py
"""
Spike-based 3D encoders.

Spike PointNet: shared per-point MLP with I-LIF activations, global max pool,
projection to the shared embedding width C.

Spike PointFormer: FPS + KNN grouping, a spiking MLP with elementwise max
pooling over each group (f_0), L residual spike-driven transformer layers

    f_l = f_{l-1} + SN(SN(α · SDA(f_{l-1})) · W_o)
    SDA = SN(SN(Q) · SN(K)ᵀ) · SN(V)

then a token pool and projection to C. No softmax, no normalization layers.

Only the first layer multiplies analog values; every later linear layer
consumes integer spikes in [0, D] (the residual stream is a sum of such
tensors and is never re-clipped). The same static input drives all T
timesteps and membranes persist across them.
"""

import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .constants import (
    DEFAULT_CENTERS,
    DEFAULT_EMBED_DIM,
    DEFAULT_NEIGHBORS,
    PARAMS_MANIFEST_FILE,
    VARIANT_CHOICES,
    VARIANT_POINTFORMER,
    VARIANT_POINTNET,
)
from .data import load_tensor, save_tensor
from .energy import TraceRecorder
from .exceptions import (
    ConfigError,
    DegenerateInputError,
    DimensionMismatch,
    FormatError,
    NotFoundError,
    ShapeError,
)
from .geometry import PointCloud, fps, knn_group, knn_indices
from .neuron import NeuronConfig, SpikeFeature, SpikingNeurons
from .utils import dataclass_from_dict

logger = logging.getLogger(__name__)

VARIANTS = tuple(variant for variant, _ in VARIANT_CHOICES)

DEFAULT_ATTN_SCALE = 0.125


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of one encoder; ``T`` and ``neuron.d_max`` set the run granularity."""

    variant: str = VARIANT_POINTNET
    dims: Tuple[int, ...] = (64, 128)
    embed_dim: int = DEFAULT_EMBED_DIM
    T: int = 1
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    n_centers: int = DEFAULT_CENTERS
    k: int = DEFAULT_NEIGHBORS
    depth: int = 1
    heads: int = 1
    in_features: int = 0
    attn_scale: float = DEFAULT_ATTN_SCALE

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.variant not in VARIANTS:
            raise ConfigError(f"encoder.variant must be one of {VARIANTS}, got '{self.variant}'")
        if not self.dims or any(d < 1 for d in self.dims):
            raise ConfigError(f"encoder.dims must be positive widths, got {list(self.dims)}")
        for name in ("embed_dim", "T", "n_centers", "k", "heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"encoder.{name} must be >= 1, got {getattr(self, name)}")
        if self.depth < 0 or self.in_features < 0:
            raise ConfigError("encoder.depth and encoder.in_features must be >= 0")
        if self.dims[-1] % self.heads:
            raise ConfigError(
                f"encoder.heads ({self.heads}) must divide the token width {self.dims[-1]}"
            )
        if self.attn_scale <= 0:
            raise ConfigError(f"encoder.attn_scale must be > 0, got {self.attn_scale}")

    @property
    def in_channels(self) -> int:
        """Width of the analog input rows seen by the first layer."""
        base = 3 if self.variant == VARIANT_POINTNET else 6
        return base + self.in_features

    @property
    def spike_bound(self) -> int:
        """Upper bound of the integer pre-projection feature."""
        if self.variant == VARIANT_POINTNET:
            return self.neuron.d_max
        return self.n_centers * (self.depth + 1) * self.neuron.d_max

    def with_run(self, T: int, d_max: int) -> "EncoderConfig":
        """Same architecture at another T×D granularity."""
        return replace(self, T=T, neuron=replace(self.neuron, d_max=d_max))

    def as_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data["dims"] = list(self.dims)
        return data

    @classmethod
    def from_dict(cls, data, section: str = "encoder") -> "EncoderConfig":
        """Strict inverse of ``as_dict``; unknown keys raise ConfigError."""
        if not isinstance(data, dict):
            raise ConfigError(f"{section} must be a JSON object")
        data = dict(data)
        neuron = dataclass_from_dict(NeuronConfig, data.pop("neuron", {}), f"{section}.neuron")
        if "dims" in data and isinstance(data["dims"], list):
            data["dims"] = tuple(data["dims"])
        cfg = dataclass_from_dict(cls, data, section)
        return replace(cfg, neuron=neuron)


def layer_shapes(cfg: EncoderConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Parameter names and shapes in creation order."""
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()
    width = cfg.in_channels
    for i, d in enumerate(cfg.dims):
        shapes[f"mlp.{i}.w"] = (width, d)
        shapes[f"mlp.{i}.b"] = (d,)
        width = d
    if cfg.variant == VARIANT_POINTFORMER:
        for layer in range(cfg.depth):
            for part in ("q", "k", "v", "o"):
                shapes[f"sdt.{layer}.{part}.w"] = (width, width)
    shapes["proj.w"] = (width, cfg.embed_dim)
    return shapes


class EncoderParams:
    """Named parameter tensors of one encoder, in a fixed order."""

    def __init__(self, tensors: Dict[str, ad.Tensor]):
        self.tensors: "OrderedDict[str, ad.Tensor]" = OrderedDict(tensors)

    @classmethod
    def init(cls, cfg: EncoderConfig, seed: int) -> "EncoderParams":
        """
        Gaussian init with σ = 1/sqrt(fan_in); the analog first layer uses
        σ = 1 so unit-scale coordinates drive it into the firing range.
        Biases start at 0.
        """
        rng = np.random.default_rng(seed)
        tensors = OrderedDict()
        for name, shape in layer_shapes(cfg).items():
            if len(shape) == 1:
                values = np.zeros(shape)
            else:
                sigma = 1.0 if name == "mlp.0.w" else 1.0 / math.sqrt(shape[0])
                values = rng.normal(0.0, sigma, size=shape)
            tensors[name] = ad.tensor(values, requires_grad=True)
        return cls(tensors)

    def __getitem__(self, name: str) -> ad.Tensor:
        try:
            return self.tensors[name]
        except KeyError:
            raise ShapeError(f"encoder has no parameter '{name}'") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self.tensors.items()}

    def check(self, cfg: EncoderConfig):
        """Raise ShapeError unless names and shapes match ``cfg``."""
        expected = layer_shapes(cfg)
        if list(expected) != list(self.tensors):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise ShapeError(f"parameter names differ: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ShapeError(
                    f"{name}: expected {list(shape)}, got {list(self.tensors[name].shape)}"
                )

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}

    def trainable(self, requires_grad: bool = True) -> "EncoderParams":
        """Fresh leaf tensors with the same values."""
        return EncoderParams(
            {
                name: ad.tensor(t.data, requires_grad=requires_grad)
                for name, t in self.tensors.items()
            }
        )

    def replace(self, arrays: Dict[str, np.ndarray]) -> "EncoderParams":
        """New params with some tensors swapped for new values."""
        tensors = OrderedDict(self.tensors)
        for name, values in arrays.items():
            old = self[name]
            tensors[name] = ad.tensor(np.asarray(values).reshape(old.shape), old.requires_grad)
        return EncoderParams(tensors)


@dataclass(frozen=True)
class EncoderOutput:
    """
    Result of one forward pass.

    ``spikes`` is the integer feature F^S before projection (T×width, or
    T×B×width for a batch); ``projected`` is its per-timestep image in the
    embedding space (T×C or T×B×C).
    """

    spikes: SpikeFeature
    projected: ad.Tensor

    @property
    def T(self) -> int:
        return self.projected.shape[0]

    @property
    def width(self) -> int:
        return self.projected.shape[-1]

    def time_mean(self) -> ad.Tensor:
        """F^S/T in embedding space."""
        return ad.mean(self.projected, 0)


@dataclass
class AttentionNeurons:
    """Spiking populations of one attention block, persisting across timesteps."""

    q: SpikingNeurons
    k: SpikingNeurons
    v: SpikingNeurons
    score: SpikingNeurons

    @classmethod
    def fresh(cls, neuron: NeuronConfig, name: str = "sda") -> "AttentionNeurons":
        return cls(
            *(SpikingNeurons(neuron, f"{name}.{part}") for part in ("q", "k", "v", "score"))
        )


def sda(
    q: ad.Tensor,
    k: ad.Tensor,
    v: ad.Tensor,
    neuron: NeuronConfig,
    neurons: Optional[AttentionNeurons] = None,
    recorder: Optional[TraceRecorder] = None,
    name: str = "sda",
) -> ad.Tensor:
    """
    Spike-driven attention SN(SN(Q)·SN(K)ᵀ)·SN(V), softmax-free.

    Q, K, V are N'×d (optionally with leading batch axes). Without
    ``neurons`` the call is a single timestep from rest.
    """
    if q.shape != k.shape or q.shape != v.shape or q.ndim < 2:
        raise DimensionMismatch(
            f"attention operands differ: Q {list(q.shape)}, K {list(k.shape)}, V {list(v.shape)}"
        )
    neurons = neurons or AttentionNeurons.fresh(neuron, name)

    sq, sk, sv = neurons.q(q), neurons.k(k), neurons.v(v)
    scores = ad.batch_matmul(sq, ad.swap_last(sk))
    attention = neurons.score(scores)
    if recorder is not None:
        tokens = q.shape[-2]
        recorder.record_spikes(f"{name}.score", sq.data, tokens)
        recorder.record_spikes(f"{name}.mix", attention.data, q.shape[-1])
    return ad.batch_matmul(attention, sv)


class _ForwardPass:
    """Neurons and trace hooks for one forward pass over T timesteps."""

    def __init__(
        self,
        params: EncoderParams,
        cfg: EncoderConfig,
        recorder: Optional[TraceRecorder] = None,
    ):
        params.check(cfg)
        self.params = params
        self.cfg = cfg
        self.recorder = recorder
        self._neurons: Dict[str, SpikingNeurons] = {}
        self._attention: Dict[str, AttentionNeurons] = {}

    def neurons(self, name: str) -> SpikingNeurons:
        if name not in self._neurons:
            self._neurons[name] = SpikingNeurons(self.cfg.neuron, name)
        return self._neurons[name]

    def attention(self, name: str) -> AttentionNeurons:
        if name not in self._attention:
            self._attention[name] = AttentionNeurons.fresh(self.cfg.neuron, name)
        return self._attention[name]

    def analog_linear(self, x: ad.Tensor, layer: str) -> ad.Tensor:
        w = self.params[f"{layer}.w"]
        if x.shape[-1] != w.shape[0]:
            raise DimensionMismatch(
                f"{layer}: input width {x.shape[-1]} does not match weight {list(w.shape)}"
            )
        if self.recorder is not None:
            self.recorder.record_mac(layer, (x.size // x.shape[-1]) * w.shape[0] * w.shape[1])
        return ad.add_bias(ad.matmul(x, w), self.params[f"{layer}.b"])

    def spike_linear(
        self, stream: Sequence[ad.Tensor], layer: str, bias: bool = True
    ) -> ad.Tensor:
        """Linear map of a spike tensor, or of a residual stream given as its parts."""
        w = self.params[f"{layer}.w"]
        x = stream[0]
        for part in stream[1:]:
            x = ad.add(x, part)
        if self.recorder is not None:
            self.recorder.record_spikes(layer, [part.data for part in stream], w.shape[1])
        out = ad.matmul(x, w)
        return ad.add_bias(out, self.params[f"{layer}.b"]) if bias else out

    def mlp(self, currents: ad.Tensor) -> ad.Tensor:
        """Spike the first-layer current, then run the remaining shared layers."""
        s = self.neurons("mlp.0")(currents)
        for i in range(1, len(self.cfg.dims)):
            s = self.neurons(f"mlp.{i}")(self.spike_linear([s], f"mlp.{i}"))
        return s


def _check_cloud(cloud: PointCloud, cfg: EncoderConfig):
    if len(cloud) < 1:
        raise DegenerateInputError("encoder input cloud is empty")
    if cfg.in_features and cloud.n_features != cfg.in_features:
        raise ShapeError(
            f"encoder expects {cfg.in_features} feature channels, cloud has {cloud.n_features}"
        )


def _point_rows(cloud: PointCloud, cfg: EncoderConfig) -> np.ndarray:
    if cfg.in_features:
        return np.concatenate([cloud.points, cloud.features], axis=1)
    return cloud.points


def group_inputs(cloud: PointCloud, cfg: EncoderConfig) -> np.ndarray:
    """
    N'×K×(6+F) rows for the first PointFormer layer: each neighbor's offset
    from its center, the center itself, then neighbor features.
    """
    centers = fps(cloud, cfg.n_centers, 0)
    offsets = knn_group(cloud, centers, cfg.k)
    anchors = np.broadcast_to(cloud.points[centers][:, None, :], offsets.shape)
    parts = [offsets, anchors]
    if cfg.in_features:
        parts.append(cloud.features[knn_indices(cloud, centers, cfg.k)])
    return np.concatenate(parts, axis=-1)


def _pointnet_pass(rows: np.ndarray, run: _ForwardPass) -> EncoderOutput:
    cfg = run.cfg
    currents = run.analog_linear(ad.tensor(rows), "mlp.0")
    pooled = []
    projected = []
    for _ in range(cfg.T):
        s = run.mlp(currents)
        feature = ad.reduce(s, -2, "max")
        pooled.append(feature)
        projected.append(run.spike_linear([feature], "proj", bias=False))
    return EncoderOutput(
        SpikeFeature(ad.stack(pooled, 0), cfg.spike_bound), ad.stack(projected, 0)
    )


def _transformer_layer(
    stream: List[ad.Tensor], layer: int, run: _ForwardPass
) -> ad.Tensor:
    cfg = run.cfg
    prefix = f"sdt.{layer}"
    q = run.spike_linear(stream, f"{prefix}.q", bias=False)
    k = run.spike_linear(stream, f"{prefix}.k", bias=False)
    v = run.spike_linear(stream, f"{prefix}.v", bias=False)

    width = q.shape[-1] // cfg.heads
    heads = []
    for h in range(cfg.heads):
        lo, hi = h * width, (h + 1) * width
        name = f"{prefix}.h{h}"
        heads.append(
            sda(
                ad.slice_axis(q, -1, lo, hi),
                ad.slice_axis(k, -1, lo, hi),
                ad.slice_axis(v, -1, lo, hi),
                cfg.neuron,
                run.attention(name),
                run.recorder,
                name,
            )
        )
    mixed = heads[0] if cfg.heads == 1 else ad.concat(heads, -1)
    mixed = run.neurons(f"{prefix}.mix")(ad.scale(mixed, cfg.attn_scale))
    return run.neurons(f"{prefix}.out")(run.spike_linear([mixed], f"{prefix}.o", bias=False))


def _pointformer_pass(groups: np.ndarray, run: _ForwardPass) -> EncoderOutput:
    cfg = run.cfg
    tokens = groups.shape[-3]
    currents = run.analog_linear(ad.tensor(groups), "mlp.0")
    pooled = []
    projected = []
    for _ in range(cfg.T):
        f0 = ad.reduce(run.mlp(currents), -2, "max")
        stream = [f0]
        for layer in range(cfg.depth):
            stream.append(_transformer_layer(stream, layer, run))
        f = stream[0]
        for part in stream[1:]:
            f = ad.add(f, part)
        feature = ad.reduce(f, -2, "sum")
        pooled.append(feature)
        if run.recorder is not None:
            run.recorder.record_spikes("proj", [part.data for part in stream], cfg.embed_dim)
        projected.append(ad.scale(ad.matmul(feature, run.params["proj.w"]), 1.0 / tokens))
    return EncoderOutput(
        SpikeFeature(ad.stack(pooled, 0), cfg.spike_bound), ad.stack(projected, 0)
    )


def spike_pointnet_forward(
    cloud: PointCloud,
    params: EncoderParams,
    cfg: EncoderConfig,
    recorder: Optional[TraceRecorder] = None,
) -> EncoderOutput:
    """Spike PointNet over one cloud: per-point spiking MLP, max pool, projection."""
    if cfg.variant != VARIANT_POINTNET:
        raise ConfigError(f"spike_pointnet_forward called with variant '{cfg.variant}'")
    _check_cloud(cloud, cfg)
    return _pointnet_pass(_point_rows(cloud, cfg), _ForwardPass(params, cfg, recorder))


def spike_pointformer_forward(
    cloud: PointCloud,
    params: EncoderParams,
    cfg: EncoderConfig,
    recorder: Optional[TraceRecorder] = None,
) -> EncoderOutput:
    """Spike PointFormer over one cloud: grouped MLP + EMP, L residual SDT layers, pool."""
    if cfg.variant != VARIANT_POINTFORMER:
        raise ConfigError(f"spike_pointformer_forward called with variant '{cfg.variant}'")
    _check_cloud(cloud, cfg)
    if cfg.n_centers > len(cloud):
        raise DegenerateInputError(
            f"cannot take {cfg.n_centers} centers from a cloud of {len(cloud)} points"
        )
    return _pointformer_pass(group_inputs(cloud, cfg), _ForwardPass(params, cfg, recorder))


def classify_head(
    f: Union[EncoderOutput, SpikeFeature, ad.Tensor], head_weights: ad.Tensor
) -> ad.Tensor:
    """
    Logits = head_weights · time-mean of the feature (K_cls × C head).

    A plain tensor is taken as an already time-averaged C or B×C feature.
    """
    feature = f if isinstance(f, ad.Tensor) else f.time_mean()
    if head_weights.ndim != 2 or head_weights.shape[1] != feature.shape[-1]:
        raise DimensionMismatch(
            f"head {list(head_weights.shape)} does not match feature width {feature.shape[-1]}"
        )
    return ad.matmul(feature, ad.swap_last(head_weights))


class SpikeEncoder:
    """An encoder configuration bound to its parameters."""

    def __init__(self, cfg: EncoderConfig, params: Optional[EncoderParams] = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else EncoderParams.init(cfg, seed)
        self.params.check(cfg)

    def forward(self, cloud: PointCloud, recorder: Optional[TraceRecorder] = None) -> EncoderOutput:
        if self.cfg.variant == VARIANT_POINTNET:
            return spike_pointnet_forward(cloud, self.params, self.cfg, recorder)
        return spike_pointformer_forward(cloud, self.params, self.cfg, recorder)

    def forward_batch(
        self,
        clouds: Union[np.ndarray, Sequence[PointCloud]],
        recorder: Optional[TraceRecorder] = None,
    ) -> EncoderOutput:
        """
        One pass over B clouds of equal size.

        Accepts a B×N×3 array or a list of PointClouds. Outputs carry the
        batch on axis 1: spikes T×B×width, projected T×B×C.
        """
        if isinstance(clouds, np.ndarray):
            if clouds.ndim != 3 or clouds.shape[-1] != 3:
                raise ShapeError(f"batch must be B×N×3, got {list(clouds.shape)}")
            clouds = [PointCloud(points) for points in clouds]
        if not clouds:
            raise DegenerateInputError("forward_batch needs at least one cloud")
        for cloud in clouds:
            _check_cloud(cloud, self.cfg)
        if len({len(cloud) for cloud in clouds}) != 1:
            raise ShapeError("forward_batch needs clouds with equal point counts")

        run = _ForwardPass(self.params, self.cfg, recorder)
        if self.cfg.variant == VARIANT_POINTNET:
            rows = np.stack([_point_rows(cloud, self.cfg) for cloud in clouds])
            return _pointnet_pass(rows, run)
        if self.cfg.n_centers > len(clouds[0]):
            raise DegenerateInputError(
                f"cannot take {self.cfg.n_centers} centers from clouds of {len(clouds[0])} points"
            )
        groups = np.stack([group_inputs(cloud, self.cfg) for cloud in clouds])
        return _pointformer_pass(groups, run)

    def with_run(self, T: int, d_max: int) -> "SpikeEncoder":
        """Same weights at another T×D granularity."""
        return SpikeEncoder(self.cfg.with_run(T, d_max), self.params)


# ============================================================================
# Checkpoint I/O
# ============================================================================


def save_params(params: EncoderParams, directory: Union[str, Path]) -> Path:
    """Write one SVLT file per tensor plus a manifest of names and shapes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    layers = []
    for name, t in params.items():
        filename = f"{name}.svlt"
        save_tensor(directory / filename, t)
        layers.append({"name": name, "shape": list(t.shape), "file": filename})
    manifest = directory / PARAMS_MANIFEST_FILE
    manifest.write_text(json.dumps({"layers": layers}, indent=2) + "\n", encoding="utf-8")
    logger.info("saved %d parameter tensors to %s", len(layers), directory)
    return manifest


def load_params(
    directory: Union[str, Path], cfg: Optional[EncoderConfig] = None
) -> EncoderParams:
    """
    Read tensors listed in ``manifest.json``; with ``cfg`` given, also check
    the layout against it.
    """
    directory = Path(directory)
    manifest = directory / PARAMS_MANIFEST_FILE
    if not manifest.exists():
        raise NotFoundError(f"parameter manifest not found: {manifest}")
    try:
        layers = json.loads(manifest.read_text(encoding="utf-8"))["layers"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{manifest}: not a parameter manifest ({exc})") from exc

    tensors = OrderedDict()
    for entry in layers:
        t = load_tensor(directory / entry["file"])
        if list(t.shape) != list(entry["shape"]):
            raise FormatError(
                f"{entry['name']}: file shape {list(t.shape)} differs from manifest {entry['shape']}"
            )
        tensors[entry["name"]] = ad.tensor(t.data, requires_grad=True)

    params = EncoderParams(tensors)
    if cfg is not None:
        params.check(cfg)
    return params
