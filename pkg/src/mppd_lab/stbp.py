"""Surrogate-gradient backpropagation through time.

Forward spikes stay binary; the backward pass replaces ``dH/dv`` with a
triangle of half-width ``omega`` and peak ``1/omega`` at threshold.  The
reset path ``u = v (1 - s)`` is differentiated in full (``du/dv = 1 - s``,
``du/ds = -v``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .network import DLIF, ForwardTrace, NetworkDef, forward
from .numerics import DimensionError


def surrogate_grad(v, u_th: float = 1.0, omega: float = 1.0):
    """``max(omega - |v - u_th|, 0) / omega**2``."""
    if np.any(np.asarray(omega) <= 0):
        raise ValueError("omega must be positive")
    return np.maximum(omega - np.abs(v - u_th), 0.0) / omega**2


def relaxed_spike(d, omega: float = 1.0):
    """Smooth ramp in ``d = v - u_th`` whose derivative is the triangle surrogate.

    Only used as a differentiable stand-in for the Heaviside when checking
    gradients against finite differences.
    """
    d = np.asarray(d, dtype=np.float64)
    w2 = 2.0 * omega**2
    lo = (omega + d) ** 2 / w2
    hi = 1.0 - (omega - d) ** 2 / w2
    return np.where(d <= -omega, 0.0, np.where(d <= 0.0, lo, np.where(d < omega, hi, 1.0)))


@dataclass
class GradientSet:
    weights: list
    a: list
    readout: np.ndarray
    input: Optional[np.ndarray] = None

    @classmethod
    def zeros_like(cls, net: NetworkDef) -> "GradientSet":
        return cls(
            weights=[np.zeros_like(W) for W in net.weights],
            a=[None if a is None else np.zeros_like(a) for a in net.dlif_a],
            readout=np.zeros_like(net.readout),
        )

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(
            weights=[a + b for a, b in zip(self.weights, other.weights)],
            a=[None if a is None else a + b for a, b in zip(self.a, other.a)],
            readout=self.readout + other.readout,
            input=None if self.input is None or other.input is None else self.input + other.input,
        )

    def arrays(self) -> list:
        return [*self.weights, *[a for a in self.a if a is not None], self.readout]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.arrays())


def softmax_cross_entropy(logits, y) -> tuple[float, np.ndarray]:
    """Batch-mean cross-entropy and its gradient with respect to ``logits``."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y))
    B = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=1))
    loss = float(np.mean(lse - z[np.arange(B), y]))
    p = np.exp(z - lse[:, None])
    p[np.arange(B), y] -= 1.0
    return loss, p / B


def backward(
    trace: ForwardTrace,
    net: NetworkDef,
    loss_grad_at_logits,
    omega: float = 1.0,
    current_grad_last=None,
    need_input_grad: bool = False,
) -> GradientSet:
    """Reverse-mode gradients through the unrolled ``T``-step network.

    ``current_grad_last`` optionally injects ``dLoss/dI^L[t]`` (shape
    ``(T, B, N^L)``) for losses defined on the last layer's input currents.
    """
    if len(trace.layers) != net.num_layers or trace.layers[-1].s.shape[-1] != net.layer_sizes[-1]:
        raise DimensionError("trace was not produced by this network")
    dlogits = np.atleast_2d(np.asarray(loss_grad_at_logits, dtype=np.float64))
    T = net.T
    u_th = net.lif.u_th

    grads = GradientSet.zeros_like(net)
    grads.readout = dlogits.T @ trace.rate
    ds = np.broadcast_to((dlogits @ net.readout) / T, trace.layers[-1].s.shape)

    for l in range(net.num_layers - 1, -1, -1):
        rec = trace.layers[l]
        leak = net.leaks(l)
        dI = np.empty_like(rec.v)
        da = np.zeros(T) if net.kinds[l] == DLIF else None
        du = np.zeros(rec.v.shape[1:])
        for t in range(T - 1, -1, -1):
            ds_t = ds[t] - du * rec.v[t]
            dv = ds_t * surrogate_grad(rec.v[t], u_th, omega) + du * (1.0 - rec.s[t])
            dI[t] = dv
            if da is not None and t > 0:
                da[t] = net.lif.lam * np.sum(dv * rec.u[t - 1])
            du = leak[t] * dv
        if l == net.num_layers - 1 and current_grad_last is not None:
            dI = dI + current_grad_last
        if da is not None:
            grads.a[l] = da

        W = net.weights[l]
        if l == 0:
            dI_sum = dI.sum(axis=0)
            grads.weights[0] = dI_sum.T @ trace.x
            if need_input_grad:
                grads.input = dI_sum @ W
        else:
            prev = trace.layers[l - 1].s
            grads.weights[l] = np.einsum("tbi,tbj->ij", dI, prev)
            ds = dI @ W
    return grads


def loss_and_input_grad(net: NetworkDef, x, y, omega: float = 1.0) -> tuple[float, np.ndarray]:
    """Cross-entropy at ``x`` and its surrogate gradient with respect to ``x``."""
    x = np.asarray(x, dtype=np.float64)
    trace = forward(net, x)
    loss, dlogits = softmax_cross_entropy(trace.logits, y)
    g = backward(trace, net, dlogits, omega, need_input_grad=True).input
    return loss, g.reshape(x.shape)


def input_gradient(net: NetworkDef, x, y, omega: float = 1.0) -> np.ndarray:
    return loss_and_input_grad(net, x, y, omega)[1]
