"""LIF and DLIF update-fire-reset recurrences.

State vectors may carry any leading batch dimensions; all operations are
elementwise over the neuron axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LifParams:
    lam: float = 0.99
    u_th: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"leak factor must lie in (0, 1), got {self.lam}")
        if self.u_th <= 0.0:
            raise ValueError(f"threshold must be positive, got {self.u_th}")


@dataclass(frozen=True)
class DlifParams:
    """LIF parameters plus one decay modulation ``a[t]`` per time step.

    ``a`` is indexed from 1 in the recurrence; ``a[t - 1]`` in Python.
    """

    base: LifParams
    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("a must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(a)):
            raise ValueError("a contains non-finite entries")
        object.__setattr__(self, "a", a)

    @property
    def steps(self) -> int:
        return self.a.shape[0]


@dataclass
class LayerState:
    v: np.ndarray
    u: np.ndarray
    s: np.ndarray

    @classmethod
    def rest(cls, shape) -> "LayerState":
        z = np.zeros(shape)
        return cls(v=z.copy(), u=z.copy(), s=z.copy())


def heaviside(x: np.ndarray) -> np.ndarray:
    """Step function with ``H(0) = 1``."""
    return (x >= 0.0).astype(np.float64)


def _advance(u_prev: np.ndarray, current: np.ndarray, leak: float, u_th: float) -> LayerState:
    u_prev = np.asarray(u_prev, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if u_prev.shape != current.shape:
        raise ValueError(f"state shape {u_prev.shape} != input shape {current.shape}")
    v = leak * u_prev + current
    s = heaviside(v - u_th)
    u = v * (1.0 - s)
    return LayerState(v=v, u=u, s=s)


def lif_step(prev: LayerState, input_current, p: LifParams) -> LayerState:
    return _advance(prev.u, input_current, p.lam, p.u_th)


def dlif_step(prev: LayerState, input_current, p: DlifParams, t: int) -> LayerState:
    """One DLIF step at 1-based time index ``t`` with leak ``lam * a[t]``."""
    if not 1 <= t <= p.steps:
        raise IndexError(f"time index {t} outside [1, {p.steps}]")
    return _advance(prev.u, input_current, p.base.lam * p.a[t - 1], p.base.u_th)


def simulate_lif(currents, p: LifParams) -> LayerState:
    """Run a LIF population over a ``(T, ...)`` current sequence.

    Returns a LayerState whose fields are stacked over time.
    """
    currents = np.asarray(currents, dtype=np.float64)
    state = LayerState.rest(currents.shape[1:])
    vs, us, ss = [], [], []
    for I in currents:
        state = lif_step(state, I, p)
        vs.append(state.v)
        us.append(state.u)
        ss.append(state.s)
    return LayerState(v=np.stack(vs), u=np.stack(us), s=np.stack(ss))
