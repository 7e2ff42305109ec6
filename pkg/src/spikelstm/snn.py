"""Streaming spiking LSTM with selective gate conversion.

Per internal step tau the cell consumes the encoded input x(n, tau), the
PREVIOUS element's hidden/cell values at the SAME internal step
(h(n-1, tau), c(n-1, tau)) and emits (h(n, tau), c(n, tau)); membranes
reset to mem_init at every element boundary. This per-step streaming is
what lets element n+1 start one tick after element n under the diagonal
pipeline schedule.

The hidden state is ternary (o AND the c-neuron's sign), the cell value
is multi-bit but only ever multiplied by spikes, and exactly one of the
i/g gates stays analog so the datapath needs no multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import HardActConfig, hard_sigmoid, hard_tanh
from .encoding import encode_sequence
from .energy import LayerSpikeStats, SpikeStats, count_ops_snn
from .errors import DimensionMismatch, MultiplierAuditError, ValidationError
from .lstm import GATES, ClassifierHead, LSTMWeights
from .neuron import LIFGateParams, NeuronState, step_sigmoid_neuron, step_tanh_neuron

SPIKE_ALPHABET = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class ConversionPlan:
    """Which of i/g keeps its analog hard activation. f, o and the cell
    tanh neuron always spike; the other one of i/g spikes."""

    analog_gate: str = "i"

    def __post_init__(self):
        if self.analog_gate not in ("i", "g"):
            raise ValidationError(f"analog_gate must be 'i' or 'g', got {self.analog_gate!r}")

    @property
    def spiking_gates(self) -> tuple:
        other = "g" if self.analog_gate == "i" else "i"
        return ("f", other, "o", "c")


@dataclass
class SpikingLSTMCell:
    """Gate weights + per-gate LIF parameters + conversion plan."""

    weights: LSTMWeights
    gate_params: dict  # gate name in plan.spiking_gates -> LIFGateParams
    plan: ConversionPlan
    act: HardActConfig = field(default_factory=HardActConfig)

    def __post_init__(self):
        expected = set(self.plan.spiking_gates)
        if set(self.gate_params) != expected:
            raise ValidationError(
                f"gate_params keys {sorted(self.gate_params)} != spiking gates {sorted(expected)}")
        for gate, params in self.gate_params.items():
            tanh_type = gate in ("g", "c")
            if tanh_type and not params.is_ternary:
                raise ValidationError(f"tanh-type gate {gate!r} needs threshold_neg")
            if not tanh_type and params.is_ternary:
                raise ValidationError(f"sigmoid-type gate {gate!r} must not carry threshold_neg")

    @property
    def hidden_dim(self) -> int:
        return self.weights.hidden_dim

    @property
    def input_dim(self) -> int:
        return self.weights.input_dim


@dataclass
class CellStepState:
    """Per-element mutable state: one membrane bank per spiking neuron."""

    membranes: dict  # gate -> NeuronState

    @classmethod
    def fresh(cls, cell: SpikingLSTMCell, batch: int | None = None) -> "CellStepState":
        shape = (cell.hidden_dim,) if batch is None else (batch, cell.hidden_dim)
        membranes = {}
        for gate, params in cell.gate_params.items():
            mem = np.broadcast_to(np.asarray(params.mem_init, dtype=np.float64), shape).copy()
            membranes[gate] = NeuronState(membrane=mem)
        return cls(membranes=membranes)


@dataclass
class SpikingLSTM:
    """Stacked spiking cells plus the (non-spiking) classifier head."""

    cells: list
    head: ClassifierHead
    plan: ConversionPlan
    time_steps: int
    encoding: str = "direct"
    act: HardActConfig = field(default_factory=HardActConfig)

    def __post_init__(self):
        if self.time_steps < 1:
            raise ValidationError("time_steps must be >= 1")
        if self.encoding not in ("direct", "poisson"):
            raise ValidationError(f"unknown encoding {self.encoding!r}")
        for lower, upper in zip(self.cells[:-1], self.cells[1:]):
            if lower.hidden_dim != upper.input_dim:
                raise DimensionMismatch("spiking layer stack dimension mismatch")
        if self.head.input_dim != self.cells[-1].hidden_dim:
            raise DimensionMismatch("head input dim != top layer hidden dim")

    @property
    def input_dim(self) -> int:
        return self.cells[0].input_dim

    @property
    def hidden_dims(self) -> list:
        return [c.hidden_dim for c in self.cells]


def _assert_spikes(name: str, values: np.ndarray, ternary: bool) -> None:
    ok = np.isin(values, SPIKE_ALPHABET if ternary else (0.0, 1.0))
    if not ok.all():
        raise MultiplierAuditError(
            f"{name} carries multi-bit values where a spike tensor is required "
            f"(e.g. {values[~ok].flat[0]!r}); the plan would need a real multiplier")


def snn_cell_step(cell: SpikingLSTMCell, state: CellStepState, x_in, h_in, c_in,
                  stats: LayerSpikeStats | None = None, x_is_spikes: bool = True,
                  last_element: bool = False, record: dict | None = None):
    """Advance one spiking cell by one internal step; returns (h_out, c_out).

    x_in is a spike vector except at the first layer under direct encoding.
    h_in is the previous element's ternary hidden spikes at this step, c_in
    its cell value. Membranes advance in place. When a dict is passed as
    `record`, the per-step gate values land in it under keys f/i/g/o/c.
    """
    x_in = np.asarray(x_in, dtype=np.float64)
    h_in = np.asarray(h_in, dtype=np.float64)
    c_in = np.asarray(c_in, dtype=np.float64)
    w = cell.weights
    if x_in.shape[-1] != w.input_dim or h_in.shape[-1] != w.hidden_dim:
        raise DimensionMismatch(
            f"snn cell step got x dim {x_in.shape[-1]} (want {w.input_dim}), "
            f"h dim {h_in.shape[-1]} (want {w.hidden_dim})")
    if x_is_spikes:
        _assert_spikes("x_in", x_in, ternary=True)
    _assert_spikes("h_in", h_in, ternary=True)

    p = {a: x_in @ w.w_x[a].T + h_in @ w.w_h[a].T + w.b[a] for a in GATES}

    f = step_sigmoid_neuron(state.membranes["f"], p["f"], cell.gate_params["f"])
    o = step_sigmoid_neuron(state.membranes["o"], p["o"], cell.gate_params["o"])
    if cell.plan.analog_gate == "g":
        i_val = step_sigmoid_neuron(state.membranes["i"], p["i"], cell.gate_params["i"])
        g_val = hard_tanh(p["g"], cell.act)
        spiking_ig, spiking_name = i_val, "i"
    else:
        i_val = hard_sigmoid(p["i"], cell.act)
        g_val = step_tanh_neuron(state.membranes["g"], p["g"], cell.gate_params["g"])
        spiking_ig, spiking_name = g_val, "g"

    c_out = f * c_in + i_val * g_val
    s_c = step_tanh_neuron(state.membranes["c"], c_out, cell.gate_params["c"])
    h_out = o * s_c

    if record is not None:
        record.update(f=f, i=i_val, g=g_val, o=o, c=s_c)
    if stats is not None:
        if x_is_spikes:
            stats.input_nnz += int(np.count_nonzero(x_in))
        nnz_h = int(np.count_nonzero(h_out))
        stats.hidden_nnz_total += nnz_h
        if last_element:
            stats.hidden_nnz_last += nnz_h
        for gate, spikes in (("f", f), (spiking_name, spiking_ig), ("o", o), ("c", s_c)):
            stats.gate_spikes[gate] = stats.gate_spikes.get(gate, 0) + int(np.count_nonzero(spikes))
            stats.gate_possible[gate] = stats.gate_possible.get(gate, 0) + spikes.size
    return h_out, c_out


def _new_stats(model: SpikingLSTM, n_elements: int, T: int, encoding: str) -> SpikeStats:
    layers = []
    for idx, cell in enumerate(model.cells):
        layers.append(LayerSpikeStats(
            units=cell.hidden_dim, fan_in=cell.input_dim,
            input_analog=(idx == 0 and encoding == "direct")))
    return SpikeStats(layers=layers, n_elements=n_elements, time_steps=T, encoding=encoding)


def snn_forward(model: SpikingLSTM, sequence, T: int | None = None,
                encoding: str | None = None, rng_seed: int = 0):
    """Streaming evaluation of an [N, F] sequence.

    Returns (logits, spike_stats, op_counts). The readout is the head
    applied to the time-averaged ternary hidden spikes of the final
    element.
    """
    T = model.time_steps if T is None else T
    encoding = model.encoding if encoding is None else encoding
    if T < 1:
        raise ValidationError("T must be >= 1")
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2 or sequence.shape[0] < 1:
        raise ValidationError(f"sequence must be non-empty [N, F], got shape {sequence.shape}")
    n_elements = sequence.shape[0]
    encoded = encode_sequence(sequence, T, encoding, rng_seed)  # [N, T, F]
    stats = _new_stats(model, n_elements, T, encoding)

    n_layers = len(model.cells)
    h_stream = [np.zeros((T, c.hidden_dim)) for c in model.cells]
    c_stream = [np.zeros((T, c.hidden_dim)) for c in model.cells]
    for n in range(n_elements):
        below = encoded[n]  # [T, F] analog (direct) or spikes (poisson)
        for li, cell in enumerate(model.cells):
            state = CellStepState.fresh(cell)
            new_h = np.empty_like(h_stream[li])
            new_c = np.empty_like(c_stream[li])
            x_is_spikes = not (li == 0 and encoding == "direct")
            for t in range(T):
                new_h[t], new_c[t] = snn_cell_step(
                    cell, state, below[t], h_stream[li][t], c_stream[li][t],
                    stats=stats.layers[li], x_is_spikes=x_is_spikes,
                    last_element=(n == n_elements - 1))
            h_stream[li] = new_h
            c_stream[li] = new_c
            below = new_h
    readout = h_stream[-1].sum(axis=0) / T
    logits = model.head.forward(readout)
    op_counts = count_ops_snn(stats, model, n_elements, T, encoding)
    return logits, stats, op_counts


def default_gate_params(plan: ConversionPlan, act: HardActConfig, hidden: int,
                        shift: bool = True, surrogate_gamma: float = 0.3) -> dict:
    """Converted-default LIF parameters for every spiking gate.

    Sigmoid gates carry the intrinsic half-offset as a per-step bias of
    v_sig/2 and (with shift on) a one-time membrane init of v_sig/2; tanh
    gates keep zero step bias and init at v_tanh_pos/2. All leaks start
    at 1 (IF) so fine-tuning, not conversion, discovers leak values.
    """
    ones = np.ones(hidden)
    params = {}
    for gate in plan.spiking_gates:
        if gate in ("g", "c"):
            params[gate] = LIFGateParams(
                leak=ones.copy(),
                threshold_pos=act.v_tanh_pos * ones,
                threshold_neg=act.v_tanh_neg * ones,
                step_bias=np.zeros(hidden),
                mem_init=(act.v_tanh_pos / 2.0) * ones if shift else np.zeros(hidden),
                surrogate_gamma=surrogate_gamma,
            )
        else:
            params[gate] = LIFGateParams(
                leak=ones.copy(),
                threshold_pos=act.v_sig * ones,
                step_bias=(act.v_sig / 2.0) * ones,
                mem_init=(act.v_sig / 2.0) * ones if shift else np.zeros(hidden),
                surrogate_gamma=surrogate_gamma,
            )
    return params


def random_spiking_lstm(input_dim, hidden_dims, head_dims, rng, plan=None, act=None,
                        time_steps=2, encoding="direct", shift=True, scale=0.1,
                        surrogate_gamma=0.3, forget_bias=0.0) -> SpikingLSTM:
    """Fresh spiking model with converted-default LIF parameters on random
    weights (the no-pretraining initialization)."""
    plan = plan or ConversionPlan()
    act = act or HardActConfig()
    cells = []
    d = input_dim
    for h in hidden_dims:
        weights = LSTMWeights.random(d, h, rng, scale, forget_bias)
        cells.append(SpikingLSTMCell(
            weights=weights,
            gate_params=default_gate_params(plan, act, h, shift, surrogate_gamma),
            plan=plan, act=act))
        d = h
    head = ClassifierHead.random([d] + list(head_dims), rng, scale)
    return SpikingLSTM(cells=cells, head=head, plan=plan, time_steps=time_steps,
                       encoding=encoding, act=act)
