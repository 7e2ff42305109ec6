"""Operation accounting and energy estimation.

Counting conventions (fixed, asserted by tests):

* a MAC is one fused multiply-accumulate op; gate bias adds ride along free
* spiking accumulates are strictly event-driven: one signed add per
  nonzero input spike per fan-out target
* membrane threshold compares cost units x steps per spiking gate, twice
  for ternary neurons; the three mask/sign selects of the cell datapath
  (f o c_in, i o g, o o s_c) are counted in the same comparison class
* the direct-encoding input projection is computed once per sequence
  element and reused across the T internal steps (it is constant), so its
  MAC count matches the non-spiking input projection
* leak scaling when leak != 1 costs one multiply per affected unit per
  step, bucketed separately from the datapath multiplier audit
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MultiplierAuditError, ValidationError


@dataclass
class LayerSpikeStats:
    """Raw spike tallies for one spiking layer over one evaluation."""

    units: int
    fan_in: int
    input_analog: bool
    input_nnz: int = 0          # nonzero spiking inputs consumed, all (n, tau)
    hidden_nnz_total: int = 0   # nonzero hidden spikes emitted, all elements
    hidden_nnz_last: int = 0    # emitted during the final element only
    gate_spikes: dict = field(default_factory=dict)     # gate -> nonzero count
    gate_possible: dict = field(default_factory=dict)   # gate -> units * N * T


@dataclass
class SpikeStats:
    """Per-layer spike statistics plus the run geometry they came from."""

    layers: list
    n_elements: int
    time_steps: int
    encoding: str

    def mean_hidden_rate(self) -> float:
        total = sum(s.hidden_nnz_total for s in self.layers)
        possible = sum(s.units * self.n_elements * self.time_steps for s in self.layers)
        return total / possible if possible else 0.0

    def gate_rates(self) -> list:
        """Per layer: gate -> fraction of steps with a nonzero spike."""
        out = []
        for s in self.layers:
            out.append({a: s.gate_spikes[a] / max(s.gate_possible[a], 1) for a in s.gate_spikes})
        return out


@dataclass
class LayerOps:
    """Op tallies for one layer (integers; totals are sums of parts)."""

    hidden: int
    fan_in: int
    macs: int = 0              # input-projection MACs (direct first layer / ANN gates)
    multiplies: int = 0        # datapath multiplies; must be 0 in spiking layers
    accumulates: int = 0
    recurrent_accumulates: int = 0  # subset of accumulates driven by hidden spikes
    comparisons: int = 0
    activations: int = 0
    leak_multiplies: int = 0


@dataclass
class OpCountReport:
    """Exact operation tallies for one evaluated sequence."""

    layers: list
    n_elements: int
    time_steps: int
    encoding: str
    head_macs: int = 0
    head_accumulates: int = 0

    @property
    def macs(self) -> int:
        return sum(l.macs for l in self.layers) + self.head_macs

    @property
    def multiplies(self) -> int:
        return sum(l.multiplies for l in self.layers)

    @property
    def accumulates(self) -> int:
        return sum(l.accumulates for l in self.layers) + self.head_accumulates

    @property
    def comparisons(self) -> int:
        return sum(l.comparisons for l in self.layers)

    @property
    def activations(self) -> int:
        return sum(l.activations for l in self.layers)

    @property
    def leak_multiplies(self) -> int:
        return sum(l.leak_multiplies for l in self.layers)

    @property
    def total_flops(self) -> int:
        return (self.macs + self.multiplies + self.accumulates + self.comparisons
                + self.activations + self.leak_multiplies)

    def as_dict(self) -> dict:
        return {
            "macs": self.macs,
            "multiplies": self.multiplies,
            "accumulates": self.accumulates,
            "comparisons": self.comparisons,
            "activations": self.activations,
            "leak_multiplies": self.leak_multiplies,
            "head_macs": self.head_macs,
            "head_accumulates": self.head_accumulates,
            "total_flops": self.total_flops,
            "layers": [vars(l).copy() for l in self.layers],
            "n_elements": self.n_elements,
            "time_steps": self.time_steps,
            "encoding": self.encoding,
        }


@dataclass
class EnergyModel:
    """Per-op energies (arbitrary units; defaults follow the usual 45 nm
    32-bit float accounting) and normalized neuromorphic (compute, static)
    pairs."""

    e_mac: float = 4.6
    e_ac: float = 0.9
    e_compare: float = 0.1
    e_act: float = 0.9
    neuromorphic: dict = field(
        default_factory=lambda: {"truenorth": (0.4, 0.6), "spinnaker": (0.64, 0.36)}
    )

    def __post_init__(self):
        for v in (self.e_mac, self.e_ac, self.e_compare, self.e_act):
            if v < 0:
                raise ValidationError("per-op energies must be nonnegative")


def count_ops_ann(model, n_elements: int) -> OpCountReport:
    """Dense op tallies of the hard-activation LSTM over N elements.

    Per element and layer: 4 gate matvecs as MACs, 3 elementwise multiplies
    (f o c, i o g, o o tanh_c), 1 accumulate per unit for the cell sum, and
    5 activation evaluations per unit.
    """
    layers = []
    for w in model.layers:
        h, f = w.hidden_dim, w.input_dim
        layers.append(LayerOps(
            hidden=h, fan_in=f,
            macs=4 * h * (f + h) * n_elements,
            multiplies=3 * h * n_elements,
            accumulates=h * n_elements,
            activations=5 * h * n_elements,
        ))
    head_macs = sum(W.size for W, _ in model.head.weights)
    return OpCountReport(layers=layers, n_elements=n_elements, time_steps=1,
                         encoding="analog", head_macs=head_macs)


def count_ops_snn(stats: SpikeStats, model, n_elements: int, time_steps: int,
                  encoding: str) -> OpCountReport:
    """Event-driven op tallies of a spiking run from its recorded stats."""
    if stats.n_elements != n_elements or stats.time_steps != time_steps:
        raise ValidationError(
            f"spike stats recorded for N={stats.n_elements}, T={stats.time_steps}; "
            f"asked to count N={n_elements}, T={time_steps}")
    if stats.encoding != encoding:
        raise ValidationError(f"spike stats recorded under {stats.encoding!r}, not {encoding!r}")
    if len(stats.layers) != len(model.cells):
        raise ValidationError("spike stats layer count != model layer count")

    layers = []
    steps = n_elements * time_steps
    for s, cell in zip(stats.layers, model.cells):
        if s.units != cell.weights.hidden_dim:
            raise ValidationError("spike stats unit count != model hidden dim")
        h = s.units
        fanout = 4 * h
        recurrent_nnz = s.hidden_nnz_total - s.hidden_nnz_last
        acc = fanout * (s.input_nnz + recurrent_nnz)
        compares = 0
        for gate, params in cell.gate_params.items():
            compares += (2 if params.is_ternary else 1) * h * steps
        compares += 3 * h * steps  # mask/sign selects of the cell datapath
        leak_units = 0
        for params in cell.gate_params.values():
            leak_units += int(np.count_nonzero(np.broadcast_to(
                np.asarray(params.leak, dtype=np.float64), (h,)) != 1.0))
        layers.append(LayerOps(
            hidden=h, fan_in=s.fan_in,
            macs=4 * h * s.fan_in * n_elements if s.input_analog else 0,
            multiplies=0,
            accumulates=acc,
            recurrent_accumulates=fanout * recurrent_nnz,
            comparisons=compares,
            activations=h * steps,  # the one analog gate's hard-activation evals
            leak_multiplies=leak_units * steps,
        ))
    head_macs = sum(W.size for W, _ in model.head.weights)
    head_acc = stats.layers[-1].hidden_nnz_last  # readout rate accumulation
    return OpCountReport(layers=layers, n_elements=n_elements, time_steps=time_steps,
                         encoding=encoding, head_macs=head_macs, head_accumulates=head_acc)


def audit_multiplier_free(report: OpCountReport) -> None:
    """Assert the spiking datapath needs no multiplies outside the allowed
    buckets (direct-encoding input projection, head, separately bucketed
    leak scaling). Raises MultiplierAuditError otherwise."""
    for idx, layer in enumerate(report.layers):
        if layer.multiplies != 0:
            raise MultiplierAuditError(
                f"layer {idx} reports {layer.multiplies} datapath multiplies")
        if idx > 0 and layer.macs != 0:
            raise MultiplierAuditError(
                f"layer {idx} reports {layer.macs} MACs but only the first layer may project analog input")
        if idx == 0 and report.encoding == "poisson" and layer.macs != 0:
            raise MultiplierAuditError(
                f"first layer reports {layer.macs} MACs under poisson encoding")


def estimate_energy(report: OpCountReport, em: EnergyModel | None = None) -> dict:
    """Digital per-op-weighted energy plus the neuromorphic
    FLOPs * E_compute + T * E_static estimate per platform."""
    em = em or EnergyModel()
    digital = {
        "mac": report.macs * em.e_mac,
        "multiply": report.multiplies * em.e_mac,
        "accumulate": report.accumulates * em.e_ac,
        "compare": report.comparisons * em.e_compare,
        "activation": report.activations * em.e_act,
        "leak_multiply": report.leak_multiplies * em.e_mac,
    }
    digital["total"] = sum(digital.values())
    neuromorphic = {
        name: report.total_flops * e_compute + report.time_steps * e_static
        for name, (e_compute, e_static) in em.neuromorphic.items()
    }
    return {"digital": digital, "neuromorphic": neuromorphic,
            "total_flops": report.total_flops, "time_steps": report.time_steps}
