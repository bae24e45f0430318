"""Sine-activated MLPs with a hand-written reverse pass, and Adam.

Only what the kernels need: dense layers, ``sin`` activations, batched
inputs.  Parameters travel as flat float64 vectors between the optimizer
and the models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class TapeConsumedError(RuntimeError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class MlpParams:
    weights: list[np.ndarray]      # layer l maps width[l] -> width[l+1], shape (out, in)
    biases: list[np.ndarray]
    omegas: list[float]            # frequency factor of each hidden activation

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def size(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()])
                               for w, b in zip(self.weights, self.biases)])

    def with_vector(self, vec: np.ndarray) -> "MlpParams":
        ws, bs, k = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[k:k + w.size].reshape(w.shape))
            k += w.size
            bs.append(vec[k:k + b.size].copy())
            k += b.size
        if k != vec.size:
            raise ValueError(f"vector of length {vec.size}, expected {k}")
        return MlpParams(ws, bs, list(self.omegas))

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases], list(self.omegas))


def siren_init(widths: Sequence[int], omega0: float = 30.0, rng: np.random.Generator | None = None,
               hidden_omega: float = 1.0) -> MlpParams:
    """Sinusoidal-network initialization.

    First layer weights ~ U(-1/in, 1/in) feeding sin(omega0 * z); later layers
    ~ U(-sqrt(6/in)/omega, sqrt(6/in)/omega) with the layer's own ``omega``
    (1 by default, which is the rescaled form of the usual omega0 = 30
    hidden convention).  Biases ~ U(-1/sqrt(in), 1/sqrt(in)).
    """
    widths = list(widths)
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    rng = np.random.default_rng() if rng is None else rng
    ws, bs = [], []
    for l, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / n_in if l == 0 else math.sqrt(6.0 / n_in) / hidden_omega
        ws.append(rng.uniform(-bound, bound, (n_out, n_in)))
        bs.append(rng.uniform(-1 / math.sqrt(n_in), 1 / math.sqrt(n_in), n_out))
    omegas = [omega0] + [hidden_omega] * (len(widths) - 3)
    return MlpParams(ws, bs, omegas)


@dataclass
class GradTape:
    params: MlpParams
    inputs: np.ndarray
    pre: list[np.ndarray]          # hidden pre-activations z_l
    acts: list[np.ndarray]         # activations feeding each layer (acts[0] = inputs)
    squeeze: bool
    consumed: bool = field(default=False)


def mlp_forward(params: MlpParams, inputs: np.ndarray) -> tuple[np.ndarray, GradTape]:
    x = np.asarray(inputs, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != params.widths[0]:
        raise ValueError(f"input width {x.shape[1]}, network expects {params.widths[0]}")
    acts, pre = [x], []
    a = x
    for w, b, om in zip(params.weights[:-1], params.biases[:-1], params.omegas):
        z = a @ w.T + b
        pre.append(z)
        a = np.sin(om * z)
        acts.append(a)
    out = a @ params.weights[-1].T + params.biases[-1]
    tape = GradTape(params, x, pre, acts, squeeze)
    return (out[0] if squeeze else out), tape


def backward(tape: GradTape, output_adjoint: np.ndarray) -> tuple[MlpParams, np.ndarray]:
    """Reverse pass: parameter gradients (summed over the batch) and input gradients."""
    if tape.consumed:
        raise TapeConsumedError("tape already consumed by a backward pass")
    tape.consumed = True
    p = tape.params
    g = np.atleast_2d(np.asarray(output_adjoint, dtype=np.float64))
    gw = [None] * len(p.weights)
    gb = [None] * len(p.biases)
    for l in range(len(p.weights) - 1, -1, -1):
        gw[l] = g.T @ tape.acts[l]
        gb[l] = g.sum(axis=0)
        g = g @ p.weights[l]
        if l > 0:
            om = p.omegas[l - 1]
            g = g * (om * np.cos(om * tape.pre[l - 1]))
    grads = MlpParams(gw, gb, list(p.omegas))
    return grads, (g[0] if tape.squeeze else g)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, **hyper)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.lr,
                         self.beta1, self.beta2, self.eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError("non-finite gradient; step rejected")
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * grads ** 2
    t = state.t + 1
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.lr, b1, b2, state.eps)
