import numpy as np
import pytest

from spikelstm.activations import HardActConfig
from spikelstm.data import synthetic_task, split_dataset
from spikelstm.lstm import AnnLSTM, LSTMWeights
from spikelstm.snn import ConversionPlan, SpikingLSTMCell, default_gate_params


def zero_weights(input_dim: int, hidden_dim: int) -> LSTMWeights:
    return LSTMWeights(
        w_x={a: np.zeros((hidden_dim, input_dim)) for a in "figo"},
        w_h={a: np.zeros((hidden_dim, hidden_dim)) for a in "figo"},
        b={a: np.zeros(hidden_dim) for a in "figo"},
    )


def one_unit_cell(plan="i", shift=False, act=None, w_fx=0.0):
    """1-unit spiking cell with converted-default LIF params."""
    act = act or HardActConfig()
    w = zero_weights(1, 1)
    w.w_x["f"][0, 0] = w_fx
    plan = ConversionPlan(plan)
    return SpikingLSTMCell(weights=w, gate_params=default_gate_params(plan, act, 1, shift=shift),
                           plan=plan, act=act)


@pytest.fixture(scope="session")
def planted_splits():
    ds = synthetic_task("planted-pattern", 600, seed=1, noise=0.5)
    return split_dataset(ds, 0.15, 0.15, seed=0)


@pytest.fixture()
def tiny_ann():
    rng = np.random.default_rng(3)
    return AnnLSTM.random(2, [3], [2], rng, scale=0.8)
