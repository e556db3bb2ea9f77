"""Single-neuron MPPD scenarios: constant input with a step perturbation, and
temporally Gaussian input noise.

Perturbations are reported as perturbed minus clean, so a positive input
offset gives a positive, growing simplified curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neuron import LifParams, simulate_lif
from .numerics import gaussian_vector, make_rng
from .perturbation import mppd_closed_form, mppd_simplified, std_metric, tasad

DEMO_COLUMNS = ("t", "drive", "simplified", "closed_form", "unsimplified", "tasad", "std")


@dataclass
class DemoScenario:
    name: str
    drive: np.ndarray  # (T,) input current difference
    simplified: np.ndarray
    unsimplified: np.ndarray
    closed_form: np.ndarray  # NaN where no closed form exists
    tasad: np.ndarray  # over the prefix ending at each step
    std: np.ndarray
    spikes_clean: np.ndarray
    spikes_pert: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.drive)

    def rows(self):
        for t in range(self.steps):
            yield (
                t + 1,
                float(self.drive[t]),
                float(self.simplified[t]),
                float(self.closed_form[t]),
                float(self.unsimplified[t]),
                float(self.tasad[t]),
                float(self.std[t]),
            )


def _scenario(name, clean_in, pert_in, p: LifParams, closed=None) -> DemoScenario:
    clean = simulate_lif(clean_in[:, None], p)
    pert = simulate_lif(pert_in[:, None], p)
    drive = pert_in - clean_in
    simplified = mppd_simplified(drive, p.lam).eps[:, 0]
    s_c, s_p = clean.s[:, 0], pert.s[:, 0]
    T = len(drive)
    return DemoScenario(
        name=name,
        drive=drive,
        simplified=simplified,
        unsimplified=pert.v[:, 0] - clean.v[:, 0],
        closed_form=np.full(T, np.nan) if closed is None else closed,
        tasad=np.array([tasad(s_c[: t + 1], s_p[: t + 1]) for t in range(T)]),
        std=np.array([std_metric(s_c[: t + 1], s_p[: t + 1]) for t in range(T)]),
        spikes_clean=s_c,
        spikes_pert=s_p,
    )


def constant_scenario(steps: int = 30, lif: LifParams = LifParams(), level: float = 0.3, delta: float = 0.1) -> DemoScenario:
    """Input ``level * u_th`` against ``(level + delta) * u_th`` at every step."""
    if steps < 1:
        raise ValueError("steps must be positive")
    clean_in = np.full(steps, level * lif.u_th)
    pert_in = np.full(steps, (level + delta) * lif.u_th)
    J = delta * lif.u_th
    closed = np.array([mppd_closed_form(J, lif.lam, t) for t in range(1, steps + 1)])
    return _scenario("constant", clean_in, pert_in, lif, closed)


def gaussian_scenario(
    steps: int = 30,
    lif: LifParams = LifParams(),
    level: float = 0.3,
    sigma: float = 0.3,
    seed: int = 0,
) -> DemoScenario:
    """Constant input plus per-step noise ``N(0, (sigma * u_th)^2)``."""
    if steps < 1:
        raise ValueError("steps must be positive")
    noise = gaussian_vector(make_rng(seed), steps, sigma * lif.u_th)
    clean_in = np.full(steps, level * lif.u_th)
    return _scenario("gaussian", clean_in, clean_in + noise, lif)


def lag1_autocorr(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3:
        raise ValueError("need at least three samples")
    return float(np.corrcoef(x[:-1], x[1:])[0, 1])


def direction_changes(x) -> int:
    """Number of sign changes in the first difference of ``x``."""
    d = np.sign(np.diff(np.asarray(x, dtype=np.float64)))
    d = d[d != 0]
    return int(np.sum(d[1:] != d[:-1]))
