"""Clean/perturbed task loss, MS-MPPD regularised total loss and the SGD training loop."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .attacks import EVAL_EPSILON, gaussian_perturb, rfgsm
from .network import NetworkDef, forward_pair
from .numerics import Rng
from .perturbation import last_layer_drive, ms_mppd_grad
from .stbp import GradientSet, backward, input_gradient, softmax_cross_entropy

NATURAL = "natural"
GAUSSIAN = "gaussian"
AT = "at"
REGIMES = (NATURAL, GAUSSIAN, AT)


class NonFiniteLossError(FloatingPointError):
    """Training produced a NaN/Inf loss; ``snapshot`` holds the state at failure."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class TrainConfig:
    rho: float
    chi: float = 0.5
    omega: float = 1.0
    epochs: int = 30
    batch_size: int = 64
    lr0: float = 0.1
    weight_decay: float = 5e-4
    perturb_regime: str = AT
    seed: int = 0
    train_dlif: bool = True
    gaussian_sigma: float = EVAL_EPSILON
    # divide MS-MPPD by N^L * T inside the loss; the recorded metric is always the raw sum
    msmppd_normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.chi <= 1.0:
            raise ValueError(f"chi must lie in [0, 1], got {self.chi}")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.perturb_regime not in REGIMES:
            raise ValueError(f"unknown perturbation regime {self.perturb_regime!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    task_loss: float
    msmppd: float
    total_loss: float
    clean_acc: float
    pert_acc: float
    lr: float
    extra: dict = field(default_factory=dict)


def task_loss(logits_clean, logits_pert, y, chi: float) -> float:
    """``chi * CE(clean) + (1 - chi) * CE(perturbed)``."""
    if not 0.0 <= chi <= 1.0:
        raise ValueError("chi must lie in [0, 1]")
    ce_clean, _ = softmax_cross_entropy(logits_clean, y)
    ce_pert, _ = softmax_cross_entropy(logits_pert, y)
    return chi * ce_clean + (1.0 - chi) * ce_pert


def total_loss(task: float, msmppd: float, rho: float) -> float:
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return task + rho * msmppd


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    if step >= total_steps:
        return 0.0
    return lr0 * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def perturb(net: NetworkDef, x, y, cfg: TrainConfig, rng: Rng) -> np.ndarray:
    if cfg.perturb_regime == NATURAL:
        return np.array(x, dtype=np.float64, copy=True)
    if cfg.perturb_regime == GAUSSIAN:
        return gaussian_perturb(x, cfg.gaussian_sigma, rng)
    # training attack uses the task (cross-entropy) gradient only
    return rfgsm(net, x, y, rng, grad_fn=lambda xs, ys: input_gradient(net, xs, ys, cfg.omega))


def loss_and_grads(net: NetworkDef, x, x_tilde, y, cfg: TrainConfig):
    """Total loss on one batch and its gradient with respect to every parameter.

    The MS-MPPD term is differentiated through both the clean and the
    perturbed branch.  ``stats["msmppd"]`` is the raw double sum (batch mean);
    the loss uses it divided by ``N^L * T`` when ``cfg.msmppd_normalize``.
    """
    lam = net.lif.lam
    tr_c, tr_p = forward_pair(net, x, x_tilde)
    ce_c, dlog_c = softmax_cross_entropy(tr_c.logits, y)
    ce_p, dlog_p = softmax_cross_entropy(tr_p.logits, y)
    task = cfg.chi * ce_c + (1.0 - cfg.chi) * ce_p

    drive = last_layer_drive(tr_c, tr_p)
    msmppd, d_drive = ms_mppd_grad(drive, lam)
    scale = 1.0 / (drive.shape[0] * drive.shape[-1]) if cfg.msmppd_normalize else 1.0
    inject = (cfg.rho * scale) * d_drive if cfg.rho > 0 else None
    g_c = backward(tr_c, net, cfg.chi * dlog_c, cfg.omega, current_grad_last=inject)
    g_p = backward(
        tr_p, net, (1.0 - cfg.chi) * dlog_p, cfg.omega,
        current_grad_last=None if inject is None else -inject,
    )
    stats = {
        "task": task,
        "msmppd": msmppd,
        "total": total_loss(task, scale * msmppd, cfg.rho),
        "clean_correct": int(np.sum(np.argmax(tr_c.logits, axis=1) == y)),
        "pert_correct": int(np.sum(np.argmax(tr_p.logits, axis=1) == y)),
    }
    return stats, g_c + g_p


def sgd_step(net: NetworkDef, grads: GradientSet, lr: float, weight_decay: float, train_dlif: bool) -> None:
    """In-place SGD with l2 weight decay on synaptic and readout weights."""
    for W, g in zip(net.weights, grads.weights):
        W -= lr * (g + weight_decay * W)
    net.readout -= lr * (grads.readout + weight_decay * net.readout)
    if train_dlif:
        for a, g in zip(net.dlif_a, grads.a):
            if a is not None:
                a -= lr * g


def train_epoch(
    net: NetworkDef,
    X,
    Y,
    cfg: TrainConfig,
    rng: Rng,
    epoch: int = 0,
) -> tuple[NetworkDef, EpochRecord]:
    """One pass over ``(X, Y)`` in shuffled mini-batches.

    Returns an updated copy of ``net``.  The learning rate follows the cosine
    schedule over ``cfg.epochs`` epochs, indexed by ``epoch``.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    n = len(X)
    if n == 0:
        raise ValueError("empty dataset")
    net = net.copy()
    n_batches = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    order = rng.permutation(n)

    sums = {"task": 0.0, "msmppd": 0.0, "total": 0.0, "clean_correct": 0, "pert_correct": 0}
    lr = cfg.lr0
    for b in range(n_batches):
        idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
        xb, yb = X[idx], Y[idx]
        x_tilde = perturb(net, xb, yb, cfg, rng)
        stats, grads = loss_and_grads(net, xb, x_tilde, yb, cfg)
        if not (math.isfinite(stats["total"]) and grads.all_finite()):
            raise NonFiniteLossError(
                f"non-finite loss at epoch {epoch}, batch {b}: {stats}",
                snapshot={"epoch": epoch, "batch": b, "stats": stats, "net": net.copy()},
            )
        lr = cosine_lr(epoch * n_batches + b, total_steps, cfg.lr0)
        sgd_step(net, grads, lr, cfg.weight_decay, cfg.train_dlif)
        w = len(idx)
        for key in ("task", "msmppd", "total"):
            sums[key] += stats[key] * w
        sums["clean_correct"] += stats["clean_correct"]
        sums["pert_correct"] += stats["pert_correct"]

    record = EpochRecord(
        epoch=epoch,
        task_loss=sums["task"] / n,
        msmppd=sums["msmppd"] / n,
        total_loss=sums["total"] / n,
        clean_acc=sums["clean_correct"] / n,
        pert_acc=sums["pert_correct"] / n,
        lr=lr,
    )
    return net, record


def fit(net: NetworkDef, X, Y, cfg: TrainConfig, rng: Rng, start_epoch: int = 0, callback=None):
    """Run epochs ``start_epoch .. cfg.epochs - 1``; ``callback(net, record)`` after each."""
    history = []
    for epoch in range(start_epoch, cfg.epochs):
        net, record = train_epoch(net, X, Y, cfg, rng, epoch)
        history.append(record)
        if callback is not None:
            callback(net, record)
    return net, history
