"""Feedforward spiking network with direct input coding and a linear readout."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .neuron import LifParams, heaviside
from .numerics import DimensionError, Rng, make_rng

LIF = "lif"
DLIF = "dlif"


@dataclass
class NetworkDef:
    """Weights ``W^l`` of shape ``(N^l, N^{l-1})`` plus a ``(classes, N^L)`` readout.

    ``dlif_a[l]`` is the per-step decay modulation of layer ``l`` (0-based)
    and is ``None`` for LIF layers.
    """

    weights: list
    readout: np.ndarray
    T: int
    lif: LifParams = field(default_factory=LifParams)
    kinds: list = None
    dlif_a: list = None

    def __post_init__(self):
        self.weights = [np.asarray(W, dtype=np.float64) for W in self.weights]
        self.readout = np.asarray(self.readout, dtype=np.float64)
        L = len(self.weights)
        if L < 1:
            raise ValueError("network needs at least one spiking layer")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        for l in range(1, L):
            if self.weights[l].shape[1] != self.weights[l - 1].shape[0]:
                raise DimensionError(
                    f"layer {l + 1} expects {self.weights[l].shape[1]} inputs but "
                    f"layer {l} has {self.weights[l - 1].shape[0]} neurons"
                )
        if self.readout.ndim != 2 or self.readout.shape[1] != self.weights[-1].shape[0]:
            raise DimensionError(
                f"readout shape {self.readout.shape} incompatible with "
                f"{self.weights[-1].shape[0]} output neurons"
            )
        if self.kinds is None:
            self.kinds = [LIF] * L
        if self.dlif_a is None:
            self.dlif_a = [None] * L
        if len(self.kinds) != L or len(self.dlif_a) != L:
            raise ValueError("kinds and dlif_a need one entry per layer")
        for l, kind in enumerate(self.kinds):
            if kind == DLIF:
                a = np.ones(self.T) if self.dlif_a[l] is None else np.asarray(self.dlif_a[l], dtype=np.float64)
                if a.shape != (self.T,):
                    raise DimensionError(f"layer {l + 1} needs {self.T} DLIF parameters, got {a.shape}")
                self.dlif_a[l] = a
            elif kind == LIF:
                self.dlif_a[l] = None
            else:
                raise ValueError(f"unknown neuron kind {kind!r}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_classes(self) -> int:
        return self.readout.shape[0]

    def leaks(self, l: int) -> np.ndarray:
        """Effective leak per step for layer ``l`` (0-based), shape ``(T,)``."""
        if self.kinds[l] == DLIF:
            return self.lif.lam * self.dlif_a[l]
        return np.full(self.T, self.lif.lam)

    def copy(self) -> "NetworkDef":
        return NetworkDef(
            weights=[W.copy() for W in self.weights],
            readout=self.readout.copy(),
            T=self.T,
            lif=self.lif,
            kinds=list(self.kinds),
            dlif_a=[None if a is None else a.copy() for a in self.dlif_a],
        )


def init_network(
    layer_sizes,
    num_classes: int,
    T: int,
    lif: LifParams,
    rng: Rng,
    kind: str = LIF,
    gain: float = 1.0,
) -> NetworkDef:
    """Uniform ``+-gain/sqrt(fan_in)`` initialisation; DLIF ``a`` starts at 1."""
    weights = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = gain / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
    bound = 1.0 / np.sqrt(layer_sizes[-1])
    readout = rng.uniform(-bound, bound, size=(num_classes, layer_sizes[-1]))
    L = len(weights)
    return NetworkDef(
        weights=weights,
        readout=readout,
        T=T,
        lif=lif,
        kinds=[kind] * L,
        dlif_a=[np.ones(T) if kind == DLIF else None for _ in range(L)],
    )


@dataclass
class LayerTrace:
    """Time-stacked records for one layer, each of shape ``(T, batch, N)``."""

    current: np.ndarray
    v: np.ndarray
    u: np.ndarray
    s: np.ndarray


@dataclass
class ForwardTrace:
    x: np.ndarray  # (batch, N0)
    layers: list
    rate: np.ndarray  # (batch, N^L)
    logits: np.ndarray  # (batch, classes)


SpikeFn = Callable[[np.ndarray], np.ndarray]


def forward(net: NetworkDef, x, spike_fn: Optional[SpikeFn] = None) -> ForwardTrace:
    """Run ``net`` for ``T`` steps on a direct-coded input.

    ``x`` is one image ``(N0,)`` or a batch ``(B, N0)``; the trace is always
    batched.  ``spike_fn`` maps ``v - u_th`` to spikes and defaults to the
    hard Heaviside; a smooth ramp may be substituted for gradient checking.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.layer_sizes[0]:
        raise DimensionError(
            f"input of shape {x.shape} does not match {net.layer_sizes[0]} input neurons"
        )
    fire = heaviside if spike_fn is None else spike_fn
    u_th = net.lif.u_th
    T = net.T

    layers = []
    drive = None  # s^{l-1}[t] per step; layer 1 sees x every step
    for l, W in enumerate(net.weights):
        leak = net.leaks(l)
        if drive is None:
            I1 = x @ W.T
            currents = np.broadcast_to(I1, (T,) + I1.shape).copy()
        else:
            currents = drive @ W.T
        v = np.empty_like(currents)
        u = np.empty_like(currents)
        s = np.empty_like(currents)
        u_prev = np.zeros(currents.shape[1:])
        for t in range(T):
            v[t] = leak[t] * u_prev + currents[t]
            s[t] = fire(v[t] - u_th)
            u[t] = v[t] * (1.0 - s[t])
            u_prev = u[t]
        layers.append(LayerTrace(current=currents, v=v, u=u, s=s))
        drive = s

    rate = layers[-1].s.mean(axis=0)
    logits = rate @ net.readout.T
    return ForwardTrace(x=x, layers=layers, rate=rate, logits=logits)


def forward_pair(net: NetworkDef, x, x_tilde, spike_fn: Optional[SpikeFn] = None):
    """Clean and perturbed traces sharing parameters but no state."""
    return forward(net, x, spike_fn), forward(net, x_tilde, spike_fn)


def predict(net: NetworkDef, x) -> np.ndarray:
    return np.argmax(forward(net, x).logits, axis=1)
