"""l-infinity input perturbations: FGSM, PGD, RFGSM and Gaussian noise.

All attacks act on the direct-coded image (constant over time) and clip to
the valid pixel range [0, 1].  ``sign(0) = 0``, so pixels with zero gradient
are left untouched.  Gradients come from the surrogate backward pass unless a
``grad_fn(x, y) -> dL/dx`` is supplied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .network import NetworkDef, predict
from .numerics import Rng, gaussian_vector
from .stbp import input_gradient, loss_and_input_grad

FGSM = "fgsm"
PGD = "pgd"
RFGSM = "rfgsm"
GAUSSIAN = "gaussian"
KINDS = (FGSM, PGD, RFGSM, GAUSSIAN)

RFGSM_RANDOM_STEP = 0.001
RFGSM_EPSILON = 4 / 255
EVAL_EPSILON = 8 / 255

GradFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AttackConfig:
    kind: str = PGD
    epsilon: float = EVAL_EPSILON
    step: Optional[float] = None  # defaults to epsilon / 4
    iters: int = 10
    random_start: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.kind == PGD:
            if self.iters < 1:
                raise ValueError("PGD needs at least one iteration")
            if self.step is not None and self.step <= 0:
                raise ValueError("PGD step must be positive")

    @property
    def step_size(self) -> float:
        return self.epsilon / 4 if self.step is None else self.step


def _grad_fn(net: NetworkDef, grad_fn: Optional[GradFn], omega: float) -> GradFn:
    if grad_fn is not None:
        return grad_fn
    return lambda x, y: input_gradient(net, x, y, omega)


def project(x_adv, x, epsilon: float) -> np.ndarray:
    """Clamp to the l-infinity ball around ``x`` intersected with [0, 1]."""
    return np.clip(np.clip(x_adv, x - epsilon, x + epsilon), 0.0, 1.0)


def fgsm(net, x, y, epsilon: float, grad_fn: Optional[GradFn] = None, omega: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = _grad_fn(net, grad_fn, omega)(x, y)
    return np.clip(x + epsilon * np.sign(g), 0.0, 1.0)


def pgd(
    net,
    x,
    y,
    cfg: AttackConfig,
    grad_fn: Optional[GradFn] = None,
    rng: Optional[Rng] = None,
    omega: float = 1.0,
) -> np.ndarray:
    if cfg.kind != PGD:
        raise ValueError(f"pgd called with a {cfg.kind} config")
    x = np.asarray(x, dtype=np.float64)
    grad = _grad_fn(net, grad_fn, omega)
    x_adv = x.copy()
    if cfg.random_start:
        if rng is None:
            raise ValueError("random start needs an rng")
        x_adv = project(x + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape), x, cfg.epsilon)
    for _ in range(cfg.iters):
        x_adv = project(x_adv + cfg.step_size * np.sign(grad(x_adv, y)), x, cfg.epsilon)
    return x_adv


def rfgsm(
    net,
    x,
    y,
    rng: Rng,
    grad_fn: Optional[GradFn] = None,
    omega: float = 1.0,
    random_step: float = RFGSM_RANDOM_STEP,
    epsilon: float = RFGSM_EPSILON,
) -> np.ndarray:
    """Random sign step of ``random_step`` followed by an FGSM step of ``epsilon``."""
    x = np.asarray(x, dtype=np.float64)
    x_start = x + random_step * np.sign(rng.uniform(-1.0, 1.0, size=x.shape))
    g = _grad_fn(net, grad_fn, omega)(x_start, y)
    return np.clip(x_start + epsilon * np.sign(g), 0.0, 1.0)


def gaussian_perturb(x, sigma: float, rng: Rng) -> np.ndarray:
    """``clip01(x + N(0, sigma^2))`` per pixel; ``sigma`` is the noise std."""
    x = np.asarray(x, dtype=np.float64)
    return np.clip(x + gaussian_vector(rng, x.shape, sigma), 0.0, 1.0)


def attack(net, x, y, cfg: AttackConfig, rng: Optional[Rng] = None, omega: float = 1.0) -> np.ndarray:
    if cfg.kind == FGSM:
        return fgsm(net, x, y, cfg.epsilon, omega=omega)
    if cfg.kind == PGD:
        return pgd(net, x, y, cfg, rng=rng, omega=omega)
    if cfg.kind == RFGSM:
        return rfgsm(net, x, y, rng, omega=omega)
    return gaussian_perturb(x, cfg.epsilon, rng)


def accuracy_under_attack(
    net: NetworkDef,
    X,
    Y,
    cfg: Optional[AttackConfig],
    rng: Optional[Rng] = None,
    omega: float = 1.0,
    batch_size: int = 256,
) -> float:
    """Fraction classified correctly after the attack (``cfg=None`` means clean)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    correct = 0
    for i in range(0, len(X), batch_size):
        xb, yb = X[i : i + batch_size], Y[i : i + batch_size]
        if cfg is not None:
            xb = attack(net, xb, yb, cfg, rng, omega)
        correct += int(np.sum(predict(net, xb) == yb))
    return correct / len(X)


def attack_loss(net, x, y, omega: float = 1.0) -> float:
    return loss_and_input_grad(net, x, y, omega)[0]
