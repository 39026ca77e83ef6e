# svl/energy.py
"""
Theoretical inference energy of a spike-driven encoder.

    E = E_MAC · Σ FLOPs(MAC layers) + E_AC · T · Σ FLOPs(spike layer) · fr(spike layer)

The first coding layer sees analog coordinates and the zero-shot head sees a
real-valued feature, so both are charged as multiply-accumulates. Every other
layer consumes spikes and only accumulates; its cost scales with the firing
rate of its input measured over T·D virtual binary timesteps.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .constants import (
    E_AC_PJ,
    E_MAC_PJ,
    MAC_TRACE_KINDS,
    PICOJOULE,
    TRACE_ENCODE_MAC,
    TRACE_KIND_CHOICES,
    TRACE_SPIKE_AC,
)
from .exceptions import ConfigError, DataError
from .neuron import SpikeFeature

logger = logging.getLogger(__name__)

TRACE_KINDS = tuple(kind for kind, _ in TRACE_KIND_CHOICES)


@dataclass(frozen=True)
class LayerTrace:
    """
    FLOPs and input firing rate of one layer.

    ``flops`` counts dense multiply-accumulates for one virtual timestep.
    ``dense_flops`` is what a non-spiking network would spend on the same
    layer; it differs from ``flops`` only for layers fed by a residual stream
    that carries several spike tensors at once.
    """

    name: str
    kind: str
    flops: int
    firing_rate: Optional[float] = None
    dense_flops: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TRACE_KINDS:
            raise ConfigError(f"unknown trace kind '{self.kind}' for layer {self.name}")
        if self.flops < 0:
            raise DataError(f"layer {self.name}: flops must be >= 0, got {self.flops}")
        if self.firing_rate is not None and not 0.0 <= self.firing_rate <= 1.0:
            raise DataError(
                f"layer {self.name}: firing rate must lie in [0, 1], got {self.firing_rate}"
            )

    @property
    def ann_flops(self) -> int:
        return self.flops if self.dense_flops is None else self.dense_flops


@dataclass(frozen=True)
class EnergyModel:
    """Per-operation energy in picojoules and the number of binary timesteps."""

    e_mac: float = E_MAC_PJ
    e_ac: float = E_AC_PJ
    T: int = 1

    def __post_init__(self):
        if self.e_mac <= 0 or self.e_ac <= 0:
            raise ConfigError("energy costs must be positive")
        if self.T < 1:
            raise ConfigError(f"energy model needs T >= 1, got {self.T}")

    @classmethod
    def for_run(cls, T: int, d_max: int) -> "EnergyModel":
        """Model for an I-LIF run: T timesteps of integers up to D are T·D binary steps."""
        return cls(T=T * d_max)


@dataclass(frozen=True)
class LayerEnergy:
    trace: LayerTrace
    energy_pj: float


@dataclass(frozen=True)
class EnergyReport:
    model: EnergyModel
    layers: List[LayerEnergy]
    total_pj: float
    ann_pj: Optional[float] = None

    @property
    def total_joules(self) -> float:
        return self.total_pj * PICOJOULE

    @property
    def saving(self) -> Optional[float]:
        """Fraction of the dense all-MAC energy the spike path avoids."""
        if not self.ann_pj:
            return None
        return 1.0 - self.total_pj / self.ann_pj

    def rows(self) -> List[Dict[str, object]]:
        rows = []
        for layer in self.layers:
            fr = layer.trace.firing_rate
            rows.append(
                {
                    "layer": layer.trace.name,
                    "kind": layer.trace.kind,
                    "flops": layer.trace.flops,
                    "fr": "" if fr is None else round(fr, 6),
                    "pJ": round(layer.energy_pj, 6),
                }
            )
        return rows

    def as_dict(self) -> Dict[str, object]:
        return {
            "e_mac_pj": self.model.e_mac,
            "e_ac_pj": self.model.e_ac,
            "T": self.model.T,
            "layers": [
                {
                    "name": layer.trace.name,
                    "kind": layer.trace.kind,
                    "flops": layer.trace.flops,
                    "firing_rate": layer.trace.firing_rate,
                    "energy_pj": layer.energy_pj,
                }
                for layer in self.layers
            ],
            "total_pj": self.total_pj,
            "total_joules": self.total_joules,
            "ann_pj": self.ann_pj,
            "saving": self.saving,
        }


# ============================================================================
# Firing rates and trace collection
# ============================================================================


def firing_rate(spikes: Union[SpikeFeature, ad.Tensor, np.ndarray], d_max: int = 1) -> float:
    """
    Fraction of active binary slots once integer spikes are expanded.

    Every entry s ≤ D occupies s of its D virtual slots, so the rate is
    sum(s) / (count · D). A SpikeFeature brings its own D.
    """
    if isinstance(spikes, SpikeFeature):
        d_max = spikes.d_max
        values = spikes.values.data
    elif isinstance(spikes, ad.Tensor):
        values = spikes.data
    else:
        values = np.asarray(spikes, dtype=np.float64)
    if values.size == 0:
        return 0.0
    return float(values.sum() / (values.size * d_max))


@dataclass
class _LayerTally:
    kind: str
    flops: int
    dense_flops: int
    spike_sum: float = 0.0
    slots: int = 0


@dataclass
class TraceRecorder:
    """
    Collects per-layer FLOPs and spike counts during one forward pass.

    MAC layers are recorded once; spike layers accumulate across timesteps so
    the reported rate is the average over the pass.
    """

    d_max: int
    _layers: Dict[str, _LayerTally] = field(default_factory=dict)

    def record_mac(self, name: str, flops: int, kind: str = TRACE_ENCODE_MAC):
        if kind not in MAC_TRACE_KINDS:
            raise ConfigError(f"'{kind}' is not a MAC trace kind")
        if name not in self._layers:
            self._layers[name] = _LayerTally(kind, int(flops), int(flops))

    def record_spikes(
        self, name: str, inputs: Union[np.ndarray, Sequence[np.ndarray]], fan_out: int
    ):
        """
        Record a layer whose input is one spike tensor, or a residual stream
        given as the list of spike tensors that sum to it.
        """
        parts = [inputs] if isinstance(inputs, np.ndarray) else list(inputs)
        size = sum(part.size for part in parts)
        tally = self._layers.get(name)
        if tally is None:
            tally = _LayerTally(TRACE_SPIKE_AC, size * fan_out, parts[0].size * fan_out)
            self._layers[name] = tally
        tally.spike_sum += float(sum(part.sum() for part in parts))
        tally.slots += size

    def traces(self) -> List[LayerTrace]:
        traces = []
        for name, tally in self._layers.items():
            rate = None
            if tally.kind == TRACE_SPIKE_AC:
                rate = tally.spike_sum / (tally.slots * self.d_max) if tally.slots else 0.0
                rate = min(1.0, max(0.0, rate))
            traces.append(LayerTrace(name, tally.kind, tally.flops, rate, tally.dense_flops))
        return traces


# ============================================================================
# Estimation
# ============================================================================


def _layer_energy(trace: LayerTrace, model: EnergyModel) -> float:
    if trace.kind in MAC_TRACE_KINDS:
        if trace.firing_rate is not None:
            raise DataError(f"MAC layer {trace.name} must not carry a firing rate")
        return model.e_mac * trace.flops
    if trace.firing_rate is None:
        raise DataError(f"spike layer {trace.name} has no firing rate")
    return model.e_ac * model.T * trace.flops * trace.firing_rate


def ann_energy(traces: Sequence[LayerTrace], model: EnergyModel) -> float:
    """Energy in pJ of the same layers run densely, every FLOP a MAC, once."""
    return float(sum(model.e_mac * trace.ann_flops for trace in traces))


def estimate(traces: Sequence[LayerTrace], model: EnergyModel) -> EnergyReport:
    """
    Apply the MAC/AC cost model to a list of layer traces.

    Returns:
        EnergyReport with per-layer picojoules, the total and the dense
        all-MAC baseline for comparison
    """
    layers = [LayerEnergy(trace, _layer_energy(trace, model)) for trace in traces]
    total = float(sum(layer.energy_pj for layer in layers))
    report = EnergyReport(model, layers, total, ann_energy(traces, model))
    logger.debug("energy estimate: %d layers, %.3f pJ", len(layers), total)
    return report
