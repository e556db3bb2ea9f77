"""Membrane-potential perturbation dynamics (MPPD) and spike-distance metrics.

Signals are time-major: ``(T, N)`` for one sample or ``(T, B, N)`` for a
batch.  Metrics reduce over time and neurons and keep the batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ForwardTrace
from .numerics import DimensionError


@dataclass
class PerturbationTrace:
    """``eps[t - 1]`` holds the perturbation after step ``t``; ``eps[0]`` before
    any step is implicitly zero and not stored."""

    eps: np.ndarray
    drive: np.ndarray


def _check_lam(lam: float) -> None:
    if not 0.0 < lam < 1.0:
        raise ValueError(f"leak factor must lie in (0, 1), got {lam}")


def mppd_simplified(delta_input, lam: float) -> PerturbationTrace:
    """Reset-free leaky integration ``eps[t] = lam * eps[t-1] + drive[t]``."""
    _check_lam(lam)
    drive = np.asarray(delta_input, dtype=np.float64)
    if drive.ndim == 1:
        drive = drive[:, None]
    if drive.shape[0] < 1:
        raise ValueError("drive needs at least one time step")
    eps = np.empty_like(drive)
    prev = np.zeros(drive.shape[1:])
    for t in range(drive.shape[0]):
        prev = lam * prev + drive[t]
        eps[t] = prev
    return PerturbationTrace(eps=eps, drive=drive)


def mppd_closed_form(J: float, lam: float, t: int) -> float:
    """Perturbation after ``t`` steps of constant drive ``J`` from rest."""
    _check_lam(lam)
    if t < 0:
        raise ValueError("t must be nonnegative")
    return (1.0 - lam**t) / (1.0 - lam) * J


def mppd_unsimplified(trace_clean: ForwardTrace, trace_pert: ForwardTrace, layer: int) -> np.ndarray:
    """Exact membrane difference ``v^l[t] - v~^l[t]`` for 1-based ``layer``."""
    L = len(trace_clean.layers)
    if len(trace_pert.layers) != L:
        raise DimensionError("traces come from networks of different depth")
    if not 1 <= layer <= L:
        raise IndexError(f"layer {layer} outside [1, {L}]")
    a, b = trace_clean.layers[layer - 1], trace_pert.layers[layer - 1]
    if a.v.shape != b.v.shape:
        raise DimensionError(f"trace shapes differ: {a.v.shape} vs {b.v.shape}")
    return a.v - b.v


def mppd_with_reset(trace_clean: ForwardTrace, trace_pert: ForwardTrace, layer: int, leaks) -> np.ndarray:
    """Iterate ``eps[t] = leak[t] eps[t-1] + J[t]`` where ``J`` includes the reset term.

    ``J[t] = dI[t] - leak[t] (v[t-1] s[t-1] - v~[t-1] s~[t-1])``.  Agrees with
    :func:`mppd_unsimplified` up to rounding.
    """
    a, b = trace_clean.layers[layer - 1], trace_pert.layers[layer - 1]
    dI = a.current - b.current
    eps = np.empty_like(dI)
    prev = np.zeros(dI.shape[1:])
    reset = np.zeros(dI.shape[1:])
    for t in range(dI.shape[0]):
        prev = leaks[t] * prev + dI[t] - leaks[t] * reset
        eps[t] = prev
        reset = a.v[t] * a.s[t] - b.v[t] * b.s[t]
    return eps


def last_layer_drive(trace_clean: ForwardTrace, trace_pert: ForwardTrace) -> np.ndarray:
    """Difference of recorded input currents into the last spiking layer."""
    return trace_clean.layers[-1].current - trace_pert.layers[-1].current


def _check_spikes(s, s_tilde):
    s = np.asarray(s, dtype=np.float64)
    s_tilde = np.asarray(s_tilde, dtype=np.float64)
    if s.shape != s_tilde.shape:
        raise DimensionError(f"spike trains differ in shape: {s.shape} vs {s_tilde.shape}")
    if s.ndim == 1:
        s, s_tilde = s[:, None], s_tilde[:, None]
    return s, s_tilde


def tasad(s_clean, s_pert) -> float | np.ndarray:
    """l2 distance between time-averaged spike vectors."""
    s, s_tilde = _check_spikes(s_clean, s_pert)
    T = s.shape[0]
    diff = (s.sum(axis=0) - s_tilde.sum(axis=0)) / T
    out = np.sqrt(np.sum(diff**2, axis=-1))
    return float(out) if out.ndim == 0 else out


def std_metric(s_clean, s_pert) -> float | np.ndarray:
    """Spike train distance ``sqrt(sum_t ||s[t] - s~[t]||^2)``."""
    s, s_tilde = _check_spikes(s_clean, s_pert)
    out = np.sqrt(np.sum((s - s_tilde) ** 2, axis=(0, -1)))
    return float(out) if out.ndim == 0 else out


def ms_mppd(drive_L, lam: float, normalize: bool = False) -> float:
    """Sum over steps and neurons of squared simplified MPPD.

    A ``(T, B, N)`` drive yields the batch mean of per-sample sums.  With
    ``normalize`` the sum is further divided by ``N * T``.
    """
    eps = mppd_simplified(drive_L, lam).eps
    total = float(np.sum(eps**2))
    if eps.ndim == 3:
        total /= eps.shape[1]
    if normalize:
        total /= eps.shape[0] * eps.shape[-1]
    return total


def ms_mppd_grad(drive_L, lam: float) -> tuple[float, np.ndarray]:
    """Value of :func:`ms_mppd` and its gradient with respect to the drive."""
    trace = mppd_simplified(drive_L, lam)
    eps = trace.eps
    scale = 1.0 / eps.shape[1] if eps.ndim == 3 else 1.0
    value = float(np.sum(eps**2)) * scale
    grad = np.empty_like(eps)
    carry = np.zeros(eps.shape[1:])
    for t in range(eps.shape[0] - 1, -1, -1):
        carry = 2.0 * scale * eps[t] + lam * carry
        grad[t] = carry
    return value, grad.reshape(np.shape(drive_L))
