"""Input encoders: direct (analog replication) and Poisson rate coding."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .neuron import SpikeTrain


def encode_direct(x, T: int) -> np.ndarray:
    """Replicate the analog input at each of T steps.

    Shape contract: input [...] -> output [T, ...]. The input-layer
    projection of these values is the one place MACs are allowed.
    """
    if T < 1:
        raise ValidationError("T must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    return np.broadcast_to(x, (T,) + x.shape).copy()


def encode_poisson(x, T: int, rng_seed: int) -> SpikeTrain:
    """Bernoulli spikes with per-step probability x, reproducible by seed.

    Entries must be normalized to [0, 1].
    """
    if T < 1:
        raise ValidationError("T must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0):
        bad = x[(x < 0.0) | (x > 1.0)].flat[0]
        raise ValidationError(f"poisson encoding requires values in [0, 1], got {bad}")
    rng = np.random.default_rng(rng_seed)
    draws = rng.random((T,) + x.shape)
    return SpikeTrain(values=(draws < x).astype(np.float64), kind="binary")


def encode_sequence(sequence: np.ndarray, T: int, encoding: str, rng_seed: int = 0) -> np.ndarray:
    """Encode a whole [N, F] sequence to [N, T, F] step inputs.

    Element n gets its own substream of the seed so results do not depend
    on evaluation order (sequential vs pipelined).
    """
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2:
        raise ValidationError(f"sequence must be [N, F], got shape {sequence.shape}")
    n_elements = sequence.shape[0]
    if encoding == "direct":
        return np.stack([encode_direct(sequence[n], T) for n in range(n_elements)])
    if encoding == "poisson":
        if np.any(sequence < 0.0) or np.any(sequence > 1.0):
            raise ValidationError("poisson encoding requires values in [0, 1]")
        seeds = np.random.SeedSequence(rng_seed).spawn(n_elements)
        out = np.empty((n_elements, T, sequence.shape[1]))
        for n in range(n_elements):
            rng = np.random.default_rng(seeds[n])
            out[n] = (rng.random((T, sequence.shape[1])) < sequence[n]).astype(np.float64)
        return out
    raise ValidationError(f"unknown encoding {encoding!r}")
