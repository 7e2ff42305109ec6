"""Hard-activation LSTM: weights, cell recurrence, stacked model, FC head.

Gate order everywhere (including checkpoints) is f, i, g, o. The cell
output nonlinearity shares the hard-tanh scales of the g gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import HardActConfig, hard_sigmoid, hard_tanh
from .errors import DimensionMismatch, ValidationError

GATES = ("f", "i", "g", "o")
SIGMOID_GATES = ("f", "i", "o")


@dataclass
class LSTMWeights:
    """Per-gate weights: w_x [hidden, input], w_h [hidden, hidden], b [hidden]."""

    w_x: dict
    w_h: dict
    b: dict

    def __post_init__(self):
        h = self.hidden_dim
        f = self.input_dim
        for a in GATES:
            if self.w_x[a].shape != (h, f) or self.w_h[a].shape != (h, h) or self.b[a].shape != (h,):
                raise DimensionMismatch(f"inconsistent gate weight shapes for gate {a!r}")
            for arr in (self.w_x[a], self.w_h[a], self.b[a]):
                if not np.all(np.isfinite(arr)):
                    raise ValidationError(f"non-finite weight in gate {a!r}")

    @property
    def hidden_dim(self) -> int:
        return self.w_x["f"].shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_x["f"].shape[1]

    def copy(self) -> "LSTMWeights":
        return LSTMWeights(
            w_x={a: self.w_x[a].copy() for a in GATES},
            w_h={a: self.w_h[a].copy() for a in GATES},
            b={a: self.b[a].copy() for a in GATES},
        )

    @classmethod
    def random(cls, input_dim: int, hidden_dim: int, rng, scale: float = 0.1,
               forget_bias: float = 0.0) -> "LSTMWeights":
        b = {a: np.zeros(hidden_dim) for a in GATES}
        b["f"] += forget_bias  # positive init eases long-range recall tasks
        return cls(
            w_x={a: rng.uniform(-scale, scale, (hidden_dim, input_dim)) for a in GATES},
            w_h={a: rng.uniform(-scale, scale, (hidden_dim, hidden_dim)) for a in GATES},
            b=b,
        )


@dataclass
class ClassifierHead:
    """One or two dense layers (ReLU between), non-spiking multi-bit weights."""

    weights: list  # [[W [out, in], b [out]], ...]

    def __post_init__(self):
        if not 1 <= len(self.weights) <= 2:
            raise ValidationError("head must have one or two dense layers")
        for W, b in self.weights:
            if W.shape[0] != b.shape[0]:
                raise DimensionMismatch("head weight/bias shapes disagree")

    @property
    def input_dim(self) -> int:
        return self.weights[0][0].shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights[-1][0].shape[0]

    def copy(self) -> "ClassifierHead":
        return ClassifierHead([[W.copy(), b.copy()] for W, b in self.weights])

    @classmethod
    def random(cls, dims: list, rng, scale: float = 0.1) -> "ClassifierHead":
        """dims = [in, out] or [in, hidden, out]."""
        pairs = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            pairs.append([rng.uniform(-scale, scale, (d_out, d_in)), np.zeros(d_out)])
        return cls(pairs)

    def forward(self, v: np.ndarray) -> np.ndarray:
        """v: [units] or [batch, units] -> logits."""
        out = np.asarray(v)
        for k, (W, b) in enumerate(self.weights):
            out = out @ W.T + b
            if k < len(self.weights) - 1:
                out = np.maximum(out, 0.0)
        return out


@dataclass
class AnnLSTM:
    """Stacked hard-activation LSTM plus classifier head."""

    layers: list  # [LSTMWeights]
    head: ClassifierHead
    act: HardActConfig = field(default_factory=HardActConfig)

    def __post_init__(self):
        for lower, upper in zip(self.layers[:-1], self.layers[1:]):
            if lower.hidden_dim != upper.input_dim:
                raise DimensionMismatch(
                    f"layer stack mismatch: hidden {lower.hidden_dim} feeds input {upper.input_dim}"
                )
        if self.head.input_dim != self.layers[-1].hidden_dim:
            raise DimensionMismatch("head input dim != top layer hidden dim")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def hidden_dims(self) -> list:
        return [w.hidden_dim for w in self.layers]

    @classmethod
    def random(cls, input_dim, hidden_dims, head_dims, rng, act=None, scale=0.1,
               forget_bias=0.0) -> "AnnLSTM":
        layers = []
        d = input_dim
        for h in hidden_dims:
            layers.append(LSTMWeights.random(d, h, rng, scale, forget_bias))
            d = h
        head = ClassifierHead.random([d] + list(head_dims), rng, scale)
        return cls(layers=layers, head=head, act=act or HardActConfig())


def ann_cell_step(weights: LSTMWeights, h_prev, c_prev, x, cfg: HardActConfig):
    """One hard-activation LSTM step; returns (h, c).

    f,i,o use the hard sigmoid; g and the cell output use the hard tanh.
    Accepts [units] vectors or [batch, units] arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if x.shape[-1] != weights.input_dim or h_prev.shape[-1] != weights.hidden_dim:
        raise DimensionMismatch(
            f"cell step got x dim {x.shape[-1]} (want {weights.input_dim}), "
            f"h dim {h_prev.shape[-1]} (want {weights.hidden_dim})"
        )
    z = {a: x @ weights.w_x[a].T + h_prev @ weights.w_h[a].T + weights.b[a] for a in GATES}
    f = hard_sigmoid(z["f"], cfg)
    i = hard_sigmoid(z["i"], cfg)
    o = hard_sigmoid(z["o"], cfg)
    g = hard_tanh(z["g"], cfg)
    c = f * c_prev + i * g
    h = o * hard_tanh(c, cfg)
    return h, c


def ann_forward(model: AnnLSTM, sequence) -> np.ndarray:
    """Run the stacked recurrence over an [N, F] sequence; returns logits.

    h and c start at zero; logits come from the head on the final hidden
    state of the top layer.
    """
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2 or sequence.shape[0] < 1:
        raise ValidationError(f"sequence must be non-empty [N, F], got shape {sequence.shape}")
    x_seq = sequence
    for weights in model.layers:
        h = np.zeros(weights.hidden_dim)
        c = np.zeros(weights.hidden_dim)
        outs = []
        for n in range(x_seq.shape[0]):
            h, c = ann_cell_step(weights, h, c, x_seq[n], model.act)
            outs.append(h)
        x_seq = np.stack(outs)
    return model.head.forward(x_seq[-1])


def stack_layers(layer1: LSTMWeights, layer2: LSTMWeights, head: ClassifierHead,
                 act: HardActConfig | None = None) -> AnnLSTM:
    """Compose two cells into a 2-layer model; layer 2 consumes layer 1's hidden stream."""
    return AnnLSTM(layers=[layer1, layer2], head=head, act=act or HardActConfig())
