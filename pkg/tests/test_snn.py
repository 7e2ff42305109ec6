import numpy as np
import pytest

from spikelstm.activations import HardActConfig
from spikelstm.convert import convert
from spikelstm.errors import MultiplierAuditError, ValidationError
from spikelstm.lstm import AnnLSTM
from spikelstm.snn import (CellStepState, ConversionPlan, SpikingLSTMCell,
                           default_gate_params, random_spiking_lstm, snn_cell_step,
                           snn_forward)

from conftest import one_unit_cell, zero_weights

CFG = HardActConfig()


def test_plan_validation():
    assert ConversionPlan("i").spiking_gates == ("f", "g", "o", "c")
    assert ConversionPlan("g").spiking_gates == ("f", "i", "o", "c")
    with pytest.raises(ValidationError):
        ConversionPlan("f")


def test_cell_rejects_mismatched_gate_params():
    plan = ConversionPlan("i")
    params = default_gate_params(ConversionPlan("g"), CFG, 1)
    with pytest.raises(ValidationError):
        SpikingLSTMCell(weights=zero_weights(1, 1), gate_params=params, plan=plan, act=CFG)


def test_zero_input_with_converted_defaults_spikes_on_second_step():
    # converted defaults carry mem_init = v_sig/2: the f/o pattern over T=2 is [0,1]
    cell = one_unit_cell(shift=True)
    state = CellStepState.fresh(cell)
    patterns = []
    for _ in range(2):
        rec = {}
        h, _ = snn_cell_step(cell, state, np.zeros(1), np.zeros(1), np.zeros(1), record=rec)
        patterns.append((rec["f"][0], rec["o"][0]))
        assert h[0] == 0.0  # zero cell drive keeps s_c at 0
    assert patterns == [(0.0, 0.0), (1.0, 1.0)]


def test_zero_input_without_shift_stays_silent_two_steps():
    cell = one_unit_cell(shift=False)
    state = CellStepState.fresh(cell)
    for _ in range(2):
        rec = {}
        snn_cell_step(cell, state, np.zeros(1), np.zeros(1), np.zeros(1), record=rec)
        assert rec["f"][0] == 0.0 and rec["o"][0] == 0.0


def test_forget_mask_semantics():
    """f spike 0 at a step means c_in contributes nothing at that step."""
    cell = one_unit_cell(shift=False)
    state = CellStepState.fresh(cell)
    rec = {}
    _, c_out = snn_cell_step(cell, state, np.zeros(1), np.zeros(1), np.array([5.0]), record=rec)
    assert rec["f"][0] == 0.0
    assert c_out[0] == 0.0


def test_forget_gate_hand_trace():
    cell = one_unit_cell(shift=False, w_fx=5.0)
    state = CellStepState.fresh(cell)
    rec = {}
    snn_cell_step(cell, state, np.array([1.0]), np.zeros(1), np.zeros(1), record=rec)
    assert rec["f"][0] == 1.0                      # U = 5 + 2 = 7 > 4
    assert state.membranes["f"].membrane[0] == 3.0  # soft reset 7 - 4


def test_multi_bit_input_rejected_when_spikes_required():
    cell = one_unit_cell(shift=False)
    state = CellStepState.fresh(cell)
    with pytest.raises(MultiplierAuditError):
        snn_cell_step(cell, state, np.array([0.7]), np.zeros(1), np.zeros(1), x_is_spikes=True)
    with pytest.raises(MultiplierAuditError):
        snn_cell_step(cell, state, np.array([1.0]), np.array([0.5]), np.zeros(1))


def test_forward_single_step_composes_cell():
    rng = np.random.default_rng(2)
    model = random_spiking_lstm(2, [3], [2], rng, time_steps=1, scale=1.0)
    seq = rng.random((1, 2))
    logits, stats, ops = snn_forward(model, seq)
    cell = model.cells[0]
    state = CellStepState.fresh(cell)
    h, _ = snn_cell_step(cell, state, seq[0], np.zeros(3), np.zeros(3), x_is_spikes=False)
    np.testing.assert_array_equal(logits, model.head.forward(h))


def test_forward_poisson_determinism():
    rng = np.random.default_rng(4)
    model = random_spiking_lstm(3, [4], [3], rng, time_steps=3, encoding="poisson", scale=2.0)
    seq = rng.random((5, 3))
    a = snn_forward(model, seq, rng_seed=42)
    b = snn_forward(model, seq, rng_seed=42)
    c = snn_forward(model, seq, rng_seed=43)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[2].accumulates == b[2].accumulates
    assert a[1].layers[0].input_nnz != c[1].layers[0].input_nnz  # different encodings


def test_hidden_alphabet_is_ternary():
    rng = np.random.default_rng(8)
    for plan in ("i", "g"):
        model = random_spiking_lstm(3, [4, 3], [2], rng, plan=ConversionPlan(plan),
                                    time_steps=4, scale=1.5)
        seq = rng.random((6, 3))
        # second layer consumes first-layer spikes: alphabet enforced in-step
        logits, stats, ops = snn_forward(model, seq)
        assert np.isfinite(logits).all()


def test_large_t_rates_converge_to_ann_gates():
    """1-unit converted cell at constant input: f/i/o rates within 2/T of the
    hard-sigmoid gate values at T=256."""
    rng = np.random.default_rng(0)
    ann = AnnLSTM.random(1, [1], [2], rng, scale=1.0)
    snn = convert(ann, T=256, plan=ConversionPlan("g"))
    x = np.array([[0.6]])
    from spikelstm.convert import _ann_gate_trace, _snn_gate_rate_trace

    ann_gates = _ann_gate_trace(ann, x)[0]
    snn_rates = _snn_gate_rate_trace(snn, x, 256)[0]
    for gate in ("f", "i", "o"):
        assert abs(ann_gates[gate][0, 0] - snn_rates[gate][0, 0]) <= 2.0 / 256.0


def test_forward_stats_geometry():
    rng = np.random.default_rng(9)
    model = random_spiking_lstm(2, [3], [2], rng, time_steps=2, scale=1.5)
    seq = rng.random((4, 2))
    _, stats, ops = snn_forward(model, seq)
    assert stats.n_elements == 4 and stats.time_steps == 2
    layer = stats.layers[0]
    assert layer.gate_possible["f"] == 3 * 4 * 2
    assert ops.layers[0].macs == 4 * 3 * 2 * 4  # direct input projection, once per element
