import numpy as np
import pytest

from spikelstm.activations import HardActConfig, hard_tanh
from spikelstm.errors import DimensionMismatch, ValidationError
from spikelstm.lstm import (AnnLSTM, ClassifierHead, ann_cell_step, ann_forward,
                            stack_layers)

from conftest import zero_weights

CFG = HardActConfig()


def test_cell_step_zero_weights():
    w = zero_weights(2, 3)
    c_prev = np.array([0.4, -0.2, 1.0])
    h, c = ann_cell_step(w, np.zeros(3), c_prev, np.ones(2), CFG)
    np.testing.assert_allclose(c, 0.5 * c_prev)
    np.testing.assert_allclose(h, 0.5 * hard_tanh(c, CFG))


def test_cell_step_origin_fixed_point():
    w = zero_weights(2, 3)
    h, c = ann_cell_step(w, np.zeros(3), np.zeros(3), np.zeros(2), CFG)
    np.testing.assert_array_equal(h, 0.0)
    np.testing.assert_array_equal(c, 0.0)


def test_cell_step_saturated_forget_gate():
    w = zero_weights(1, 1)
    w.w_x["f"][0, 0] = 8.0
    h, c = ann_cell_step(w, np.zeros(1), np.array([2.0]), np.array([1.0]), CFG)
    assert c[0] == 2.0  # f saturates at 1, i*g = 0.5*0 = 0


def test_cell_step_dimension_mismatch():
    w = zero_weights(2, 3)
    with pytest.raises(DimensionMismatch):
        ann_cell_step(w, np.zeros(3), np.zeros(3), np.zeros(5), CFG)


def test_forward_single_element_reduces_to_cell_plus_head():
    rng = np.random.default_rng(0)
    model = AnnLSTM.random(2, [3], [2], rng, scale=0.5)
    x = rng.normal(0, 1, (1, 2))
    h, _ = ann_cell_step(model.layers[0], np.zeros(3), np.zeros(3), x[0], model.act)
    np.testing.assert_allclose(ann_forward(model, x), model.head.forward(h))


def test_forward_zero_weight_model_returns_head_bias():
    w = zero_weights(2, 3)
    head = ClassifierHead([[np.zeros((2, 3)), np.array([0.3, -0.7])]])
    model = AnnLSTM(layers=[w], head=head)
    np.testing.assert_array_equal(ann_forward(model, np.ones((4, 2))), [0.3, -0.7])


def test_forward_matches_independent_reference():
    """Hand-rolled per-step evaluation, written independently of the library
    cell, agrees to 1e-12."""
    rng = np.random.default_rng(11)
    model = AnnLSTM.random(2, [2], [2], rng, scale=0.7)
    seq = rng.normal(0, 1, (2, 2))
    w = model.layers[0]
    h = np.zeros(2)
    c = np.zeros(2)
    for n in range(2):
        z = {}
        for a in "figo":
            z[a] = w.w_x[a] @ seq[n] + w.w_h[a] @ h + w.b[a]
        f = np.clip(z["f"] / 4.0 + 0.5, 0, 1)
        i = np.clip(z["i"] / 4.0 + 0.5, 0, 1)
        o = np.clip(z["o"] / 4.0 + 0.5, 0, 1)
        g = np.where(z["g"] >= 0, np.clip(z["g"] / 3.0, 0, 1), np.clip(z["g"] / 2.0, -1, 0))
        c = f * c + i * g
        tc = np.where(c >= 0, np.clip(c / 3.0, 0, 1), np.clip(c / 2.0, -1, 0))
        h = o * tc
    W, b = model.head.weights[0]
    np.testing.assert_allclose(ann_forward(model, seq), W @ h + b, atol=1e-12, rtol=0)


def test_forward_rejects_empty_sequence():
    model = AnnLSTM.random(2, [3], [2], np.random.default_rng(0))
    with pytest.raises(ValidationError):
        ann_forward(model, np.zeros((0, 2)))


def test_stacked_zero_weight_layers_emit_zero_hidden():
    head = ClassifierHead([[np.zeros((2, 3)), np.zeros(2)]])
    model = stack_layers(zero_weights(2, 3), zero_weights(3, 3), head)
    np.testing.assert_array_equal(ann_forward(model, np.ones((3, 2))), 0.0)


def test_stack_dimension_mismatch():
    head = ClassifierHead([[np.zeros((2, 4)), np.zeros(2)]])
    with pytest.raises(DimensionMismatch):
        stack_layers(zero_weights(2, 3), zero_weights(4, 4), head)


def test_two_layer_matches_manual_composition():
    rng = np.random.default_rng(5)
    model = AnnLSTM.random(2, [3, 2], [2], rng, scale=0.6)
    seq = rng.normal(0, 1, (3, 2))
    # layer 1 alone
    h1_seq = []
    h = np.zeros(3)
    c = np.zeros(3)
    for n in range(3):
        h, c = ann_cell_step(model.layers[0], h, c, seq[n], model.act)
        h1_seq.append(h)
    h = np.zeros(2)
    c = np.zeros(2)
    for n in range(3):
        h, c = ann_cell_step(model.layers[1], h, c, h1_seq[n], model.act)
    np.testing.assert_allclose(ann_forward(model, seq), model.head.forward(h), atol=1e-14)


def test_head_two_layer_relu():
    head = ClassifierHead([[np.array([[1.0, 0.0]]), np.array([-0.2])],
                           [np.array([[2.0]]), np.array([0.1])]])
    # relu(1*0.05 - 0.2) = 0 -> logits = 0.1
    np.testing.assert_allclose(head.forward(np.array([0.05, 3.0])), [0.1])
    np.testing.assert_allclose(head.forward(np.array([0.5, 0.0])), [2 * 0.3 + 0.1])
