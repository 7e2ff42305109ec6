"""Reverse-mode training engines.

ann_backward: exact BPTT through the hard-activation LSTM (subgradients
from the linear side at clip kinks).

snn_backward: surrogate-gradient BPTT unrolled over (element, step),
jointly over weights, thresholds, leaks, per-step biases and membrane
initializations. The spike Heaviside's derivative is replaced by the
triangular surrogate; ternary neurons use the sum of the two triangles
centred at the two thresholds. The soft-reset path carries gradient by
default.

Both engines share one backward implementation; `relaxed=True` switches
the forward to the triangle-ramp relaxation of every spike (whose exact
derivative IS the surrogate), which makes the engine the exact gradient
of a differentiable function and therefore checkable against central
finite differences. The hard mode runs the identical code on hard spike
values.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .activations import hard_sigmoid, hard_sigmoid_grad, hard_tanh, hard_tanh_grad
from .errors import NumericalFault, TrainingDiverged, ValidationError
from .lstm import GATES, AnnLSTM
from .snn import SpikingLSTM

# A GradientBundle is a dict param-name -> gradient array, shapes matching
# model_parameters(model).
GradientBundle = dict

LIF_FIELDS = ("leak", "threshold_pos", "threshold_neg", "step_bias", "mem_init")


@dataclass
class TrainMask:
    """Which parameter groups train. Head weights follow `weights`."""

    weights: bool = True
    threshold: bool = False
    leak: bool = False
    mem_init: bool = False
    step_bias: bool = False

    def allows(self, name: str) -> bool:
        if ".lif." in name:
            fieldname = name.rsplit(".", 1)[1]
            return {
                "leak": self.leak,
                "threshold_pos": self.threshold,
                "threshold_neg": self.threshold,
                "step_bias": self.step_bias,
                "mem_init": self.mem_init,
            }[fieldname]
        return self.weights


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    precision: str = "f64"
    mask: TrainMask = field(default_factory=TrainMask)
    lr_decay_epochs: tuple = ()
    lr_decay_factor: float = 0.1
    workers: int = 1
    micro_batch: int = 32

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.micro_batch < 1:
            raise ValidationError("epochs, batch_size, micro_batch must be >= 1")
        if self.lr <= 0:
            raise ValidationError("lr must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.precision not in ("f64", "f32"):
            raise ValidationError(f"precision must be f64 or f32, got {self.precision!r}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


# ---------------------------------------------------------------------------
# parameter access

def model_parameters(model) -> dict:
    """Ordered name -> array view of every trainable tensor."""
    params = {}
    if isinstance(model, AnnLSTM):
        prefix, layers = "layers", model.layers
        cells = None
    elif isinstance(model, SpikingLSTM):
        prefix, layers = "cells", [c.weights for c in model.cells]
        cells = model.cells
    else:
        raise ValidationError(f"unknown model type {type(model).__name__}")
    for li, w in enumerate(layers):
        for a in GATES:
            params[f"{prefix}.{li}.w_x.{a}"] = w.w_x[a]
            params[f"{prefix}.{li}.w_h.{a}"] = w.w_h[a]
            params[f"{prefix}.{li}.b.{a}"] = w.b[a]
    if cells is not None:
        for li, cell in enumerate(cells):
            for gate, lif in sorted(cell.gate_params.items()):
                for fieldname in LIF_FIELDS:
                    value = getattr(lif, fieldname)
                    if value is None:
                        continue
                    params[f"cells.{li}.lif.{gate}.{fieldname}"] = value
    for k, (W, b) in enumerate(model.head.weights):
        params[f"head.{k}.W"] = W
        params[f"head.{k}.b"] = b
    return params


def set_parameters(model, new_values: dict) -> None:
    """Rebind parameter arrays (used for dtype switches and snapshots)."""
    if isinstance(model, AnnLSTM):
        layers, cells, prefix = model.layers, None, "layers"
    else:
        layers, cells, prefix = [c.weights for c in model.cells], model.cells, "cells"
    for name, value in new_values.items():
        parts = name.split(".")
        if parts[0] in ("layers", "cells") and parts[2] != "lif":
            w = layers[int(parts[1])]
            getattr(w, parts[2])[parts[3]] = value
        elif parts[0] == "cells":
            lif = cells[int(parts[1])].gate_params[parts[3]]
            setattr(lif, parts[4], value)
        elif parts[0] == "head":
            model.head.weights[int(parts[1])][0 if parts[2] == "W" else 1] = value
        else:
            raise ValidationError(f"unknown parameter name {name!r}")


def snapshot_parameters(model) -> dict:
    return {k: v.copy() for k, v in model_parameters(model).items()}


def model_dtype(model):
    return model_parameters(model)[next(iter(model_parameters(model)))].dtype


def cast_parameters(model, dtype) -> None:
    set_parameters(model, {k: np.asarray(v, dtype=dtype)
                           for k, v in model_parameters(model).items()})


# ---------------------------------------------------------------------------
# loss

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and d loss / d logits; numerically stable."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    batch = logits.shape[0]
    loss = -logp[np.arange(batch), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(batch), labels] -= 1.0
    return loss, dlogits / batch


def _head_forward_cached(head, v):
    caches = [v]
    out = v
    for k, (W, b) in enumerate(head.weights):
        out = out @ W.T + b
        if k < len(head.weights) - 1:
            caches.append(out)       # pre-ReLU
            out = np.maximum(out, 0.0)
    return out, caches


def _head_backward(head, caches, dlogits, grads, prefix="head"):
    d = dlogits
    for k in range(len(head.weights) - 1, -1, -1):
        W, _ = head.weights[k]
        inp = caches[k]
        if k > 0:
            inp = np.maximum(inp, 0.0)
        grads[f"{prefix}.{k}.W"] += d.T @ inp
        grads[f"{prefix}.{k}.b"] += d.sum(axis=0)
        d = d @ W
        if k > 0:
            d = d * (caches[k] > 0.0)
    return d  # gradient wrt the head input


# ---------------------------------------------------------------------------
# ANN engine

def ann_batch_forward(model: AnnLSTM, X: np.ndarray, want_caches: bool = False):
    """Batched forward over [B, N, F]; returns logits (+caches)."""
    X = np.asarray(X)
    batch, n_elements, _ = X.shape
    x_seq = X
    layer_caches = []
    for w in model.layers:
        h = np.zeros((batch, w.hidden_dim), dtype=X.dtype)
        c = np.zeros_like(h)
        cache = {"z": [], "gates": [], "c": [c], "h": [h], "x": x_seq}
        outs = np.empty((batch, n_elements, w.hidden_dim), dtype=X.dtype)
        for n in range(n_elements):
            z = {a: x_seq[:, n] @ w.w_x[a].T + h @ w.w_h[a].T + w.b[a] for a in GATES}
            f = hard_sigmoid(z["f"], model.act)
            i = hard_sigmoid(z["i"], model.act)
            o = hard_sigmoid(z["o"], model.act)
            g = hard_tanh(z["g"], model.act)
            c = f * c + i * g
            tc = hard_tanh(c, model.act)
            h = o * tc
            outs[:, n] = h
            if want_caches:
                cache["z"].append(z)
                cache["gates"].append((f, i, g, o, tc))
                cache["c"].append(c)
                cache["h"].append(h)
        x_seq = outs
        layer_caches.append(cache)
    logits, head_cache = _head_forward_cached(model.head, x_seq[:, -1])
    if want_caches:
        return logits, {"layers": layer_caches, "head": head_cache}
    return logits


def ann_loss(model: AnnLSTM, batch) -> float:
    X, y = batch
    logits = ann_batch_forward(model, np.asarray(X, dtype=np.float64))
    loss, _ = softmax_cross_entropy(logits, np.asarray(y))
    return float(loss)


def ann_backward(model: AnnLSTM, batch):
    """Cross-entropy loss and exact BPTT gradients for a (X [B,N,F], y) batch."""
    X, y = batch
    X = np.asarray(X, dtype=model_dtype(model))
    y = np.asarray(y)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValidationError("batch must be non-empty [B, N, F]")
    logits, caches = ann_batch_forward(model, X, want_caches=True)
    loss, dlogits = softmax_cross_entropy(logits, y)
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(logits).all(axis=1))[0])
        raise NumericalFault(f"non-finite loss (first bad batch index {bad})")
    grads = {k: np.zeros_like(v) for k, v in model_parameters(model).items()}

    n_elements = X.shape[1]
    dh_seed_top = _head_backward(model.head, caches["head"], dlogits, grads)
    # process layers top-down; dX of a layer seeds dh of the one below
    dX_above = None
    for li in range(len(model.layers) - 1, -1, -1):
        w = model.layers[li]
        cache = caches["layers"][li]
        dh = np.zeros((X.shape[0], w.hidden_dim), dtype=X.dtype)
        dc = np.zeros_like(dh)
        dX_out = np.zeros_like(cache["x"]) if li > 0 else None
        for n in range(n_elements - 1, -1, -1):
            f, i, g, o, tc = cache["gates"][n]
            z = cache["z"][n]
            dh_n = dh.copy()
            if li == len(model.layers) - 1 and n == n_elements - 1:
                dh_n += dh_seed_top
            if dX_above is not None:
                dh_n += dX_above[:, n]
            do = dh_n * tc
            dc = dc + dh_n * o * hard_tanh_grad(cache["c"][n + 1], model.act)
            df = dc * cache["c"][n]
            di = dc * g
            dg = dc * i
            dc = dc * f
            dz = {
                "f": df * hard_sigmoid_grad(z["f"], model.act),
                "i": di * hard_sigmoid_grad(z["i"], model.act),
                "o": do * hard_sigmoid_grad(z["o"], model.act),
                "g": dg * hard_tanh_grad(z["g"], model.act),
            }
            dh = np.zeros_like(dh)
            for a in GATES:
                grads[f"layers.{li}.w_x.{a}"] += dz[a].T @ cache["x"][:, n]
                grads[f"layers.{li}.w_h.{a}"] += dz[a].T @ cache["h"][n]
                grads[f"layers.{li}.b.{a}"] += dz[a].sum(axis=0)
                dh += dz[a] @ w.w_h[a]
                if dX_out is not None:
                    dX_out[:, n] += dz[a] @ w.w_x[a]
        dX_above = dX_out
    return float(loss), grads


# ---------------------------------------------------------------------------
# SNN engine

def _encode_batch(X: np.ndarray, T: int, encoding: str, seed: int) -> np.ndarray:
    """[B, N, F] -> [B, N, T, F] step inputs (replication or Bernoulli)."""
    batch, n_elements, feats = X.shape
    if encoding == "direct":
        return np.broadcast_to(X[:, :, None, :], (batch, n_elements, T, feats)).copy()
    if encoding == "poisson":
        if np.any(X < 0.0) or np.any(X > 1.0):
            raise ValidationError("poisson encoding requires values in [0, 1]")
        rng = np.random.default_rng(seed)
        return (rng.random((batch, n_elements, T, feats)) < X[:, :, None, :]).astype(X.dtype)
    raise ValidationError(f"unknown encoding {encoding!r}")


def _tri(x):
    return np.maximum(0.0, 1.0 - np.abs(x - 1.0))


def _ramp(x):
    x = np.clip(x, 0.0, 2.0)
    return np.where(x <= 1.0, 0.5 * x * x, 1.0 - 0.5 * (2.0 - x) ** 2)


def _spike_component(V, theta, gamma, relaxed):
    """Monotone spike component sigma(V; theta) and its V/theta partials.

    Hard: indicator of V/theta > 1 (covers both threshold signs), with the
    triangular surrogate as dV-partial and the conventional -surrogate
    as theta-partial. Relaxed: gamma * ramp(V / theta), with its
    exact partials.
    """
    x = V / theta
    tri = _tri(x)
    if relaxed:
        s = gamma * _ramp(x)
        dsdth = -(gamma * V / (theta * theta)) * tri
    else:
        s = (x > 1.0).astype(V.dtype)
        dsdth = -(gamma / theta) * tri
    dsdv = (gamma / theta) * tri
    return s, dsdv, dsdth


class _SnnLayerTape:
    """Forward recordings of one spiking layer over the (n, t) lattice."""

    def __init__(self, cell, batch, n_elements, T, dtype):
        h = cell.hidden_dim
        self.cell = cell
        shape = (n_elements, T, batch, h)
        self.V = {g: np.zeros(shape, dtype=dtype) for g in cell.gate_params}
        # component spike values: sigmoid gates use only 'pos'
        self.S_pos = {g: np.zeros(shape, dtype=dtype) for g in cell.gate_params}
        self.S_neg = {g: np.zeros(shape, dtype=dtype)
                      for g in ("g", "c") if g in cell.gate_params}
        self.Upost = {g: np.zeros((n_elements, T + 1, batch, h), dtype=dtype)
                      for g in cell.gate_params}
        self.P_analog = np.zeros(shape, dtype=dtype)
        self.C = np.zeros(shape, dtype=dtype)
        self.H = np.zeros(shape, dtype=dtype)


def _lif_vec(cell, gate):
    p = cell.gate_params[gate]
    return p.leak, p.threshold_pos, p.threshold_neg, p.step_bias, p.surrogate_gamma


def snn_batch_forward(model: SpikingLSTM, X: np.ndarray, T: int, encoding: str,
                      seed: int, relaxed: bool = False, want_tapes: bool = False):
    """Batched spiking forward over [B, N, F]; optionally records tapes.

    relaxed=True replaces every hard spike by its triangle-ramp relaxation
    (same code path otherwise). Returns (logits, tapes_or_none, mean
    hidden spike magnitude).
    """
    X = np.asarray(X)
    batch, n_elements, _ = X.shape
    dtype = X.dtype
    encoded = _encode_batch(X, T, encoding, seed)
    tapes = []
    x_feed = encoded  # [B, N, T, F]
    hidden_mag = 0.0
    hidden_count = 0
    for li, cell in enumerate(model.cells):
        analog = cell.plan.analog_gate
        spiking_ig = "g" if analog == "i" else "i"
        w = cell.weights
        tape = _SnnLayerTape(cell, batch, n_elements, T, dtype)
        for g in cell.gate_params:
            tape.Upost[g][:, 0] = np.broadcast_to(
                np.asarray(cell.gate_params[g].mem_init, dtype=dtype),
                (batch, cell.hidden_dim))
        h_prev_elem = np.zeros((T, batch, cell.hidden_dim), dtype=dtype)
        c_prev_elem = np.zeros_like(h_prev_elem)
        for n in range(n_elements):
            for t in range(T):
                x_in = x_feed[:, n, t]
                h_in = h_prev_elem[t]
                p = {a: x_in @ w.w_x[a].T + h_in @ w.w_h[a].T + w.b[a] for a in GATES}
                vals = {}
                for gate in ("f", "o", spiking_ig):
                    leak, th_p, th_n, beta, gamma = _lif_vec(cell, gate)
                    V = leak * tape.Upost[gate][n, t] + p[gate] + beta
                    s_pos, _, _ = _spike_component(V, th_p, gamma, relaxed)
                    if gate == spiking_ig and gate == "g":
                        s_neg, _, _ = _spike_component(V, th_n, gamma, relaxed)
                        tape.S_neg[gate][n, t] = s_neg
                        tape.Upost[gate][n, t + 1] = V - th_p * s_pos - th_n * s_neg
                        vals[gate] = s_pos - s_neg
                    else:
                        tape.Upost[gate][n, t + 1] = V - th_p * s_pos
                        vals[gate] = s_pos
                    tape.V[gate][n, t] = V
                    tape.S_pos[gate][n, t] = s_pos
                tape.P_analog[n, t] = p[analog]
                if analog == "i":
                    vals["i"] = hard_sigmoid(p["i"], cell.act)
                else:
                    vals["g"] = hard_tanh(p["g"], cell.act)
                c_val = vals["f"] * c_prev_elem[t] + vals["i"] * vals["g"]
                tape.C[n, t] = c_val
                leak, th_p, th_n, beta, gamma = _lif_vec(cell, "c")
                V = leak * tape.Upost["c"][n, t] + c_val + beta
                s_pos, _, _ = _spike_component(V, th_p, gamma, relaxed)
                s_neg, _, _ = _spike_component(V, th_n, gamma, relaxed)
                tape.V["c"][n, t] = V
                tape.S_pos["c"][n, t] = s_pos
                tape.S_neg["c"][n, t] = s_neg
                tape.Upost["c"][n, t + 1] = V - th_p * s_pos - th_n * s_neg
                tape.H[n, t] = vals["o"] * (s_pos - s_neg)
            h_prev_elem = tape.H[n]
            c_prev_elem = tape.C[n]
        hidden_mag += float(np.abs(tape.H).sum())
        hidden_count += tape.H.size
        x_feed = np.moveaxis(tape.H, 2, 0)  # [B, N, T, H]
        tapes.append(tape)
    hbar = tapes[-1].H[n_elements - 1].mean(axis=0)  # [B, H]
    logits, head_cache = _head_forward_cached(model.head, hbar)
    aux = {"mean_hidden_rate": hidden_mag / hidden_count, "head_cache": head_cache,
           "encoded": encoded}
    return logits, (tapes if want_tapes else None), aux


def snn_relaxed_loss(model: SpikingLSTM, batch, T: int, encoding: str, seed: int) -> float:
    """Scalar loss of the relaxed forward; the FD oracle differentiates this."""
    X, y = batch
    logits, _, _ = snn_batch_forward(model, np.asarray(X, dtype=np.float64),
                                     T, encoding, seed, relaxed=True)
    loss, _ = softmax_cross_entropy(logits, np.asarray(y))
    return float(loss)


def snn_backward(model: SpikingLSTM, batch, T: int | None = None,
                 encoding: str | None = None, seed: int = 0, relaxed: bool = False):
    """Loss and surrogate-BPTT gradients over every trainable parameter.

    relaxed=True differentiates the triangle-ramp relaxed forward exactly
    (oracle mode); relaxed=False is the production SGL engine on hard
    spikes.
    """
    T = model.time_steps if T is None else T
    encoding = model.encoding if encoding is None else encoding
    X, y = batch
    X = np.asarray(X, dtype=model_dtype(model))
    y = np.asarray(y)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValidationError("batch must be non-empty [B, N, F]")
    batch_size, n_elements, _ = X.shape
    logits, tapes, aux = snn_batch_forward(model, X, T, encoding, seed,
                                           relaxed=relaxed, want_tapes=True)
    loss, dlogits = softmax_cross_entropy(logits, y)
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(logits).all(axis=1))[0])
        raise NumericalFault(f"non-finite loss (first bad batch index {bad})")
    grads = {k: np.zeros_like(v) for k, v in model_parameters(model).items()}

    dhbar = _head_backward(model.head, aux["head_cache"], dlogits, grads)
    # seeds: gradient into H[n, t] of the top layer
    top = len(model.cells) - 1
    dH_seed = np.zeros_like(tapes[top].H)
    dH_seed[n_elements - 1, :] = dhbar / T

    for li in range(top, -1, -1):
        cell = model.cells[li]
        tape = tapes[li]
        analog = cell.plan.analog_gate
        spiking_ig = "g" if analog == "i" else "i"
        w = cell.weights
        gp = f"cells.{li}"
        want_dx = li > 0
        dX_out = np.zeros_like(tapes[li - 1].H) if want_dx else None
        x_feed = aux["encoded"] if li == 0 else np.moveaxis(tapes[li - 1].H, 2, 0)

        dH_next = np.zeros((T, batch_size, cell.hidden_dim), dtype=X.dtype)
        dC_next = np.zeros_like(dH_next)
        for n in range(n_elements - 1, -1, -1):
            dH_prev = np.zeros_like(dH_next)
            dC_prev = np.zeros_like(dC_next)
            dUpost = {g: np.zeros((batch_size, cell.hidden_dim), dtype=X.dtype)
                      for g in cell.gate_params}
            for t in range(T - 1, -1, -1):
                dh = dH_seed[n, t] + dH_next[t]
                s_c = tape.S_pos["c"][n, t] - tape.S_neg["c"][n, t]
                ds = {}
                ds["o"] = dh * s_c
                dsc = dh * tape.S_pos["o"][n, t]
                # --- c neuron (ternary) ---
                leak, th_p, th_n, beta, gamma = _lif_vec(cell, "c")
                D = dUpost["c"]
                ds_pos = dsc - D * th_p
                ds_neg = -dsc - D * th_n
                _, dpv, dpt = _spike_component(tape.V["c"][n, t], th_p, gamma, relaxed)
                _, dnv, dnt = _spike_component(tape.V["c"][n, t], th_n, gamma, relaxed)
                dV_c = D + ds_pos * dpv + ds_neg * dnv
                grads[f"{gp}.lif.c.threshold_pos"] += (
                    ds_pos * dpt - D * tape.S_pos["c"][n, t]).sum(axis=0)
                grads[f"{gp}.lif.c.threshold_neg"] += (
                    ds_neg * dnt - D * tape.S_neg["c"][n, t]).sum(axis=0)
                grads[f"{gp}.lif.c.leak"] += (dV_c * tape.Upost["c"][n, t]).sum(axis=0)
                grads[f"{gp}.lif.c.step_bias"] += dV_c.sum(axis=0)
                dUpost["c"] = leak * dV_c
                if t == 0:
                    grads[f"{gp}.lif.c.mem_init"] += dUpost["c"].sum(axis=0)
                # --- cell combine ---
                dc_total = dC_next[t] + dV_c
                c_in = tapes[li].C[n - 1, t] if n > 0 else np.zeros_like(dc_total)
                ds["f"] = dc_total * c_in
                dC_prev[t] += dc_total * tape.S_pos["f"][n, t]
                if analog == "i":
                    a_val = hard_sigmoid(tape.P_analog[n, t], cell.act)
                    s_ig = tape.S_pos["g"][n, t] - tape.S_neg["g"][n, t]
                    ds["g"] = dc_total * a_val
                    dA = dc_total * s_ig
                else:
                    a_val = hard_tanh(tape.P_analog[n, t], cell.act)
                    s_ig = tape.S_pos["i"][n, t]
                    ds["i"] = dc_total * a_val
                    dA = dc_total * s_ig
                # --- spiking gates ---
                dP = {}
                for gate in ("f", "o", spiking_ig):
                    leak, th_p, th_n, beta, gamma = _lif_vec(cell, gate)
                    D = dUpost[gate]
                    _, dpv, dpt = _spike_component(tape.V[gate][n, t], th_p, gamma, relaxed)
                    if gate == "g":
                        ds_pos = ds[gate] - D * th_p
                        ds_neg = -ds[gate] - D * th_n
                        _, dnv, dnt = _spike_component(tape.V[gate][n, t], th_n, gamma, relaxed)
                        dV = D + ds_pos * dpv + ds_neg * dnv
                        grads[f"{gp}.lif.g.threshold_pos"] += (
                            ds_pos * dpt - D * tape.S_pos["g"][n, t]).sum(axis=0)
                        grads[f"{gp}.lif.g.threshold_neg"] += (
                            ds_neg * dnt - D * tape.S_neg["g"][n, t]).sum(axis=0)
                    else:
                        ds_eff = ds[gate] - D * th_p
                        dV = D + ds_eff * dpv
                        grads[f"{gp}.lif.{gate}.threshold_pos"] += (
                            ds_eff * dpt - D * tape.S_pos[gate][n, t]).sum(axis=0)
                    grads[f"{gp}.lif.{gate}.leak"] += (dV * tape.Upost[gate][n, t]).sum(axis=0)
                    grads[f"{gp}.lif.{gate}.step_bias"] += dV.sum(axis=0)
                    dP[gate] = dV
                    dUpost[gate] = leak * dV
                    if t == 0:
                        grads[f"{gp}.lif.{gate}.mem_init"] += dUpost[gate].sum(axis=0)
                # --- analog gate ---
                if analog == "i":
                    dP["i"] = dA * hard_sigmoid_grad(tape.P_analog[n, t], cell.act)
                else:
                    dP["g"] = dA * hard_tanh_grad(tape.P_analog[n, t], cell.act)
                # --- projections ---
                x_in = x_feed[:, n, t]
                h_in = tape.H[n - 1, t] if n > 0 else np.zeros_like(dh)
                for a in GATES:
                    grads[f"{gp}.w_x.{a}"] += dP[a].T @ x_in
                    grads[f"{gp}.w_h.{a}"] += dP[a].T @ h_in
                    grads[f"{gp}.b.{a}"] += dP[a].sum(axis=0)
                    if n > 0:
                        dH_prev[t] += dP[a] @ w.w_h[a]
                    if want_dx:
                        dX_out[n, t] += dP[a] @ w.w_x[a]
            dH_next = dH_prev
            dC_next = dC_prev
        if want_dx:
            dH_seed = dX_out
    return float(loss), grads


# ---------------------------------------------------------------------------
# optimization

def clip_global_norm(grads: GradientBundle, max_norm: float) -> float:
    """Scale grads in place so the global L2 norm is at most max_norm.

    Returns the pre-clip norm. Raises on non-finite gradients.
    """
    sq = 0.0
    for g in grads.values():
        if not np.all(np.isfinite(g)):
            raise NumericalFault("non-finite gradient before clipping")
        sq += float((g * g).sum())
    norm = float(np.sqrt(sq))
    if max_norm is not None and norm > max_norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Plain Adam on a name->array parameter dict; masked names are never
    touched, so they stay bit-identical across steps."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: GradientBundle, trainable) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name in trainable:
            p, g = params[name], grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            p -= self.lr * (self.m[name] / bias1) / (np.sqrt(self.v[name] / bias2) + self.eps)


class SGD:
    def __init__(self, lr=1e-2):
        self.lr = lr

    def step(self, params, grads, trainable) -> None:
        for name in trainable:
            params[name] -= self.lr * grads[name]


def _batch_grads(model, X, y, config: TrainConfig, snn_seed=None):
    """Loss and gradients of the batch mean, computed over fixed-size
    micro-batches reduced in index order (deterministic for any worker
    count)."""
    total = X.shape[0]
    bounds = list(range(0, total, config.micro_batch))
    chunks = [(lo, min(lo + config.micro_batch, total)) for lo in bounds]

    def one(chunk):
        lo, hi = chunk
        if snn_seed is None:
            loss, grads = ann_backward(model, (X[lo:hi], y[lo:hi]))
        else:
            loss, grads = snn_backward(model, (X[lo:hi], y[lo:hi]), seed=snn_seed)
        return loss, grads, hi - lo

    if config.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one, chunks))
    else:
        results = [one(c) for c in chunks]

    loss = 0.0
    grads = None
    for chunk_loss, chunk_grads, size in results:  # fixed order
        w = size / total
        loss += w * chunk_loss
        if grads is None:
            grads = {k: w * g for k, g in chunk_grads.items()}
        else:
            for k, g in chunk_grads.items():
                grads[k] += w * g
    return loss, grads


def evaluate(model, X, y, chunk=256, seed=0):
    """(loss, accuracy, mean hidden spike rate) on a labeled set."""
    losses = []
    correct = 0
    rates = []
    dtype = model_dtype(model)
    for lo in range(0, X.shape[0], chunk):
        xb = np.asarray(X[lo:lo + chunk], dtype=dtype)
        yb = np.asarray(y[lo:lo + chunk])
        if isinstance(model, AnnLSTM):
            logits = ann_batch_forward(model, xb)
            rate = np.nan
        else:
            logits, _, aux = snn_batch_forward(
                model, xb, model.time_steps, model.encoding, seed)
            rate = aux["mean_hidden_rate"]
        loss, _ = softmax_cross_entropy(logits, yb)
        losses.append(float(loss) * len(yb))
        correct += int((logits.argmax(axis=1) == yb).sum())
        rates.append(rate)
    n = X.shape[0]
    finite_rates = [r for r in rates if not np.isnan(r)]
    rate = float(np.mean(finite_rates)) if finite_rates else float("nan")
    return sum(losses) / n, correct / n, rate


def data_content_hash(*arrays) -> str:
    digest = hashlib.sha256()
    for arr in arrays:
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()


def fit(model, train_set, val_set, config: TrainConfig, out_dir=None):
    """Mini-batch training loop for either model kind.

    train_set / val_set: (X [count, N, F], y [count]) pairs. Writes
    metrics.csv, manifest.json and a best-validation checkpoint under
    out_dir when given. Non-finite loss restores the best parameters and
    raises TrainingDiverged. Fully seed-deterministic for any worker
    count.
    """
    X_train, y_train = train_set
    X_val, y_val = val_set
    if X_train.shape[0] == 0:
        raise ValidationError("training set is empty")
    dtype = np.float32 if config.precision == "f32" else np.float64
    cast_parameters(model, dtype)
    X_train = np.asarray(X_train, dtype=dtype)
    X_val = np.asarray(X_val, dtype=dtype)

    params = model_parameters(model)
    trainable = [k for k in params if config.mask.allows(k)]
    if config.optimizer == "adam":
        opt = Adam(config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    else:
        opt = SGD(config.lr)
    rng = np.random.default_rng(config.seed)
    is_snn = isinstance(model, SpikingLSTM)

    history = []
    best = {"val_accuracy": -1.0, "params": snapshot_parameters(model), "epoch": -1}
    start = time.time()
    try:
        for epoch in range(config.epochs):
            if epoch in set(config.lr_decay_epochs):
                opt.lr *= config.lr_decay_factor
            order = rng.permutation(X_train.shape[0])
            epoch_loss = 0.0
            seen = 0
            for b0 in range(0, len(order), config.batch_size):
                idx = order[b0:b0 + config.batch_size]
                seed = None
                if is_snn:
                    seed = int(np.random.SeedSequence(
                        [config.seed, epoch, b0]).generate_state(1)[0])
                loss, grads = _batch_grads(model, X_train[idx], y_train[idx], config,
                                           snn_seed=seed)
                clip_global_norm(grads, config.grad_clip)
                opt.step(params, grads, trainable)
                epoch_loss += loss * len(idx)
                seen += len(idx)
            k = min(X_train.shape[0], 2048)  # fixed subsample keeps epoch cost bounded
            train_loss, train_acc, train_rate = evaluate(
                model, X_train[:k], y_train[:k], seed=config.seed)
            val_loss, val_acc, val_rate = evaluate(model, X_val, y_val, seed=config.seed)
            now = time.time() - start
            history.append({"epoch": epoch, "split": "train", "loss": train_loss,
                            "accuracy": train_acc, "spike_rate_mean": train_rate,
                            "wall_time": now})
            history.append({"epoch": epoch, "split": "val", "loss": val_loss,
                            "accuracy": val_acc, "spike_rate_mean": val_rate,
                            "wall_time": now})
            if val_acc > best["val_accuracy"]:
                best = {"val_accuracy": val_acc, "params": snapshot_parameters(model),
                        "epoch": epoch}
    except NumericalFault as fault:
        set_parameters(model, best["params"])
        _write_artifacts(model, config, history, best, out_dir,
                         (X_train, y_train), diverged=str(fault))
        raise TrainingDiverged(
            f"training diverged ({fault}); restored epoch-{best['epoch']} checkpoint",
            history=history) from fault

    set_parameters(model, best["params"])
    cast_parameters(model, np.float64)
    _write_artifacts(model, config, history, best, out_dir, (X_train, y_train))
    return model, history


def _write_artifacts(model, config, history, best, out_dir, train_data, diverged=None):
    if out_dir is None:
        return
    import os

    from . import checkpoint as ckpt
    from . import __version__

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "loss", "accuracy", "spike_rate_mean", "wall_time"])
        for row in history:
            rate = row["spike_rate_mean"]
            writer.writerow([row["epoch"], row["split"], f"{row['loss']:.6f}",
                             f"{row['accuracy']:.6f}",
                             "" if np.isnan(rate) else f"{rate:.6f}",
                             f"{row['wall_time']:.3f}"])
    manifest = {
        "config": _config_as_dict(config),
        "seed": config.seed,
        "best_epoch": best["epoch"],
        "best_val_accuracy": best["val_accuracy"],
        "data_hash": data_content_hash(*train_data),
        "package_version": __version__,
        "model_kind": "snn" if isinstance(model, SpikingLSTM) else "ann",
    }
    if diverged:
        manifest["diverged"] = diverged
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    ckpt.save_model(model, os.path.join(out_dir, "model.ckpt"))


def _config_as_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["lr_decay_epochs"] = list(config.lr_decay_epochs)
    return d
