# svl/neuron.py
"""
LIF and Integer-LIF neuron dynamics.

One timestep of a layer:

    u = h + current
    s = round(clip(u, 0, D))             integer mode
    s = Θ(u − ϑ)                          heaviside mode (D = 1)
    h' = β · u · (1 − [s > 0])

Integer firing backpropagates with a straight-through estimator on the clip
interval; heaviside firing uses the rectangle surrogate. Integer spikes are
converted to binary spikes for inference by ``expand_virtual``.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from . import autodiff as ad
from .constants import FIRING_CHOICES, FIRING_HEAVISIDE, FIRING_INTEGER
from .exceptions import ConfigError, DegenerateInputError, ShapeError, SpikeRangeError

logger = logging.getLogger(__name__)

FIRING_MODES = tuple(mode for mode, _ in FIRING_CHOICES)


@dataclass(frozen=True)
class NeuronConfig:
    """I-LIF parameters: decay β, threshold ϑ, max integer D, surrogate width a."""

    beta: float = 0.5
    theta: float = 1.0
    d_max: int = 4
    a: float = 1.0
    firing: str = FIRING_INTEGER

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"neuron.beta must lie in (0, 1], got {self.beta}")
        if self.theta <= 0:
            raise ConfigError(f"neuron.theta must be > 0, got {self.theta}")
        if int(self.d_max) != self.d_max or self.d_max < 1:
            raise ConfigError(f"neuron.d_max must be an integer >= 1, got {self.d_max}")
        if self.a <= 0:
            raise ConfigError(f"neuron.a must be > 0, got {self.a}")
        if self.firing not in FIRING_MODES:
            raise ConfigError(f"neuron.firing must be one of {FIRING_MODES}, got '{self.firing}'")
        if self.firing == FIRING_HEAVISIDE and self.d_max != 1:
            raise ConfigError("heaviside firing emits binary spikes; set neuron.d_max = 1")


@dataclass(frozen=True)
class NeuronState:
    """Post-spike membrane potential h and the timestep index."""

    h: ad.Tensor
    t: int = 0

    @classmethod
    def initial(cls, shape: Sequence[int]) -> "NeuronState":
        return cls(ad.zeros(shape), 0)


def check_spikes(values: np.ndarray, d_max: int, layer: str = "spikes"):
    """Raise SpikeRangeError unless every entry is an integer in [0, d_max]."""
    if not np.all(values == np.rint(values)):
        raise SpikeRangeError(f"{layer}: non-integer spike values")
    if values.size and (values.min() < 0 or values.max() > d_max):
        raise SpikeRangeError(
            f"{layer}: spike values outside [0, {d_max}] "
            f"(min {values.min():g}, max {values.max():g})"
        )


@dataclass(frozen=True)
class SpikeFeature:
    """
    Integer spike tensor of shape T×C (or T×…) with entries in [0, D].

    The firing-rate mean F^S/T is ``time_mean()``.
    """

    values: ad.Tensor
    d_max: int

    def __post_init__(self):
        if self.values.ndim < 1:
            raise ShapeError("spike feature needs a leading time axis")
        check_spikes(self.values.data, self.d_max, "spike feature")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[-1]

    def time_sum(self) -> ad.Tensor:
        return ad.reduce(self.values, 0, "sum")

    def time_mean(self) -> ad.Tensor:
        return ad.reduce(self.values, 0, "mean")


# ============================================================================
# Firing functions
# ============================================================================


def ilif_fire(u: ad.Tensor, d_max: int) -> ad.Tensor:
    """
    Integer firing s = round(clip(u, 0, D)), ties to even.

    Backward is the straight-through estimator: 1 where 0 < u < D, else 0.
    """
    values = np.rint(np.clip(u.data, 0.0, float(d_max)))
    window = ((u.data > 0.0) & (u.data < d_max)).astype(np.float64)
    return ad.apply_custom("ilif_fire", u, values, window)


def surrogate_rectangle(u: ad.Tensor, cfg: NeuronConfig) -> ad.Tensor:
    """Rectangle surrogate (1/a) · [|u − ϑ| < a/2] as a constant tensor."""
    inside = np.abs(u.data - cfg.theta) < cfg.a / 2.0
    return ad.tensor(inside.astype(np.float64) / cfg.a)


def heaviside_fire(u: ad.Tensor, cfg: NeuronConfig) -> ad.Tensor:
    values = (u.data >= cfg.theta).astype(np.float64)
    return ad.apply_custom("heaviside_fire", u, values, surrogate_rectangle(u, cfg).data)


def fire(u: ad.Tensor, cfg: NeuronConfig) -> ad.Tensor:
    if cfg.firing == FIRING_HEAVISIDE:
        return heaviside_fire(u, cfg)
    return ilif_fire(u, cfg.d_max)


# ============================================================================
# Dynamics
# ============================================================================


def lif_step(
    state: NeuronState, current: ad.Tensor, cfg: NeuronConfig
) -> Tuple[ad.Tensor, NeuronState]:
    """
    Advance one timestep: integrate, fire, hard reset.

    Any emission resets the membrane to exactly 0; otherwise the potential
    leaks by β. Heaviside mode gates with s itself so the reset path carries
    the surrogate gradient; integer mode gates with the detached [s > 0].
    """
    if current.shape != state.h.shape:
        raise ShapeError(
            f"input current {list(current.shape)} does not match membrane {list(state.h.shape)}"
        )

    u = ad.add(state.h, current)
    s = fire(u, cfg)
    if cfg.firing == FIRING_HEAVISIDE:
        gate = ad.add(ad.scale(s, -1.0), 1.0)
    else:
        gate = ad.tensor((s.data == 0.0).astype(np.float64))
    h = ad.scale(ad.mul(u, gate), cfg.beta)
    return s, NeuronState(h, state.t + 1)


def ilif_sequence(inputs: Sequence[ad.Tensor], cfg: NeuronConfig) -> SpikeFeature:
    """Roll ``lif_step`` over T input currents from h = 0 and stack the spikes."""
    if not inputs:
        raise DegenerateInputError("ilif_sequence needs at least one timestep")
    shape = inputs[0].shape
    if any(x.shape != shape for x in inputs):
        raise ShapeError("all timestep inputs must share one shape")

    state = NeuronState.initial(shape)
    spikes = []
    for current in inputs:
        s, state = lif_step(state, current, cfg)
        spikes.append(s)
    return SpikeFeature(ad.stack(spikes, axis=0), cfg.d_max)


class SpikingNeurons:
    """
    A population of I-LIF neurons for one forward pass.

    The membrane starts at 0 on the first call and persists across calls,
    one call per timestep.
    """

    def __init__(self, cfg: NeuronConfig, name: str = "neurons"):
        self.cfg = cfg
        self.name = name
        self.state: Optional[NeuronState] = None

    def __call__(self, current: ad.Tensor) -> ad.Tensor:
        if self.state is None:
            self.state = NeuronState.initial(current.shape)
        s, self.state = lif_step(self.state, current, self.cfg)
        if getattr(settings, "SVL_CHECK_SPIKES", True):
            check_spikes(s.data, self.cfg.d_max, f"{self.name}[t={self.state.t - 1}]")
        return s

    def reset(self):
        self.state = None


# ============================================================================
# Virtual timestep expansion
# ============================================================================


def expand_virtual(f: SpikeFeature) -> ad.Tensor:
    """
    Rewrite integer spikes as binary spikes over T·D virtual steps.

    An integer s at timestep t becomes D sub-steps whose first s are 1, so
    every D-row block sums back to s and any linear map of the time-sum is
    unchanged.
    """
    s = f.values.data
    if not np.all(s == np.rint(s)):
        raise SpikeRangeError("virtual expansion needs integer spike values")
    d = f.d_max
    steps = np.arange(d, dtype=np.float64).reshape((1, d) + (1,) * (s.ndim - 1))
    binary = (s[:, None, ...] > steps).astype(np.float64)
    return ad.tensor(binary.reshape((s.shape[0] * d,) + s.shape[1:]))
