"""Layerwise finite-gain L2 bounds for the perturbation dynamics.

For ``eps[t] = lam * eps[t-1] + W ds[t]`` two gains are reported:

``gamma``
    ``sqrt(1 / (1 - lam)) * ||W||``, the square-root leak bound.
``gamma_geometric``
    ``||W|| / (1 - lam)``, the H-infinity norm of the leaky integrator
    times ``||W||``.  Constant drives along the top singular vector approach
    it, so it is the smallest gain valid for every input.

The two coincide only in the limit ``lam -> 0``; for long, slowly varying
drives the first one can be exceeded (see ``empirical_gain``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .network import DLIF, NetworkDef
from .numerics import Rng, as_matrix, make_rng, prefix_l2_norms, spawn_rng, spectral_norm
from .perturbation import mppd_simplified


@dataclass
class StabilityBound:
    layer: int
    gamma: Optional[float]
    beta: float
    spectral: float
    leak_factor_term: Optional[float]
    lam: float
    gamma_geometric: Optional[float] = None
    applicable: bool = True
    heuristic: bool = False
    note: str = ""


def gain_bound(W, lam: float, tol: float = 1e-10, rng: Rng | None = None, layer: int = 1) -> StabilityBound:
    if not 0.0 < lam < 1.0:
        raise ValueError(f"leak factor must lie in (0, 1) for a finite gain, got {lam}")
    sigma = spectral_norm(W, tol=tol, rng=rng)
    term = float(np.sqrt(1.0 / (1.0 - lam)))
    return StabilityBound(
        layer=layer,
        gamma=term * sigma,
        beta=0.0,
        spectral=sigma,
        leak_factor_term=term,
        lam=lam,
        gamma_geometric=sigma / (1.0 - lam),
    )


def random_drive(rng: Rng, T: int, dim: int, real_valued: bool = False) -> np.ndarray:
    """Spike-difference drive over ``{-1, 0, 1}``, or uniform ``[-1, 1]`` when real."""
    if real_valued:
        return rng.uniform(-1.0, 1.0, size=(T, dim))
    return rng.integers(-1, 2, size=(T, dim)).astype(np.float64)


def gain_ratios(W, lam: float, ds) -> np.ndarray:
    """``||eps[:tau]|| / ||ds[:tau]||`` for every prefix ``tau`` (nan where ``ds`` is zero)."""
    W = as_matrix(W)
    ds = np.asarray(ds, dtype=np.float64)
    eps = mppd_simplified(ds @ W.T, lam).eps
    num = prefix_l2_norms(eps)
    den = prefix_l2_norms(ds)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def prefix_violations(W, lam: float, ds, gamma: float, rel_slack: float = 1e-9) -> int:
    """Number of prefixes where ``||eps[:tau]|| > gamma * ||ds[:tau]||``."""
    W = as_matrix(W)
    ds = np.asarray(ds, dtype=np.float64)
    eps = mppd_simplified(ds @ W.T, lam).eps
    lhs = prefix_l2_norms(eps)
    rhs = gamma * prefix_l2_norms(ds)
    return int(np.sum(lhs > rhs * (1.0 + rel_slack)))


def empirical_gain(
    W,
    lam: float,
    trials: int,
    T: int,
    rng: Rng,
    real_valued: bool = False,
) -> float:
    """Monte-Carlo lower estimate of the L2 gain over random drives.

    Each trial uses its own derived stream, so results do not depend on the
    order trials are evaluated in.
    """
    if trials < 1 or T < 1:
        raise ValueError("trials and T must be at least 1")
    W = as_matrix(W)
    best = None
    for k in range(trials):
        ds = random_drive(spawn_rng(rng, k), T, W.shape[1], real_valued)
        if not np.any(ds):
            continue
        ratio = float(gain_ratios(W, lam, ds)[-1])
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise ValueError("every trial produced an all-zero drive")
    return best


def audit_network(net: NetworkDef, tol: float = 1e-10, seed: int = 0) -> list[StabilityBound]:
    """One bound per spiking layer.

    DLIF layers use the effective leak ``lam * max_t |a[t]|``.  That is an
    artifact-level heuristic, not a published result, and is marked as such;
    layers whose effective leak reaches 1 get no gain.
    """
    rng = make_rng(seed)
    out = []
    for l, W in enumerate(net.weights):
        if net.kinds[l] == DLIF:
            lam_eff = float(net.lif.lam * np.max(np.abs(net.dlif_a[l])))
            if lam_eff >= 1.0:
                out.append(
                    StabilityBound(
                        layer=l + 1,
                        gamma=None,
                        beta=0.0,
                        spectral=spectral_norm(W, tol=tol, rng=rng),
                        leak_factor_term=None,
                        lam=lam_eff,
                        applicable=False,
                        heuristic=True,
                        note=f"effective leak {lam_eff:.6g} >= 1, bound inapplicable",
                    )
                )
                continue
            b = gain_bound(W, lam_eff, tol=tol, rng=rng, layer=l + 1)
            b.heuristic = True
            b.note = "DLIF effective-leak heuristic"
            out.append(b)
        else:
            out.append(gain_bound(W, net.lif.lam, tol=tol, rng=rng, layer=l + 1))
    return out
