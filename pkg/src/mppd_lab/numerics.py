"""Linear algebra, seeded randomness and discrete-signal norms.

Matrices are 2-D float64 numpy arrays and signals are arrays of shape
``(T, dim)`` indexed by time step.  Randomness comes from a counter-based
Philox generator so a seed reproduces the same stream on every platform.

Gaussian samples are produced with the Box-Muller transform from Philox
uniforms: for ``u1`` in (0, 1] and ``u2`` in [0, 1),
``z = sqrt(-2 ln u1) * cos(2 pi u2)``.  One pair of uniforms is drawn per
output sample (the sine branch is discarded) so the number of draws consumed
depends only on ``dim``.
"""

from __future__ import annotations

import numpy as np

Rng = np.random.Generator


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConvergenceError(RuntimeError):
    """Power iteration did not converge within the iteration budget."""

    def __init__(self, message: str, iterate: np.ndarray, residual: float):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual


def make_rng(seed: int) -> Rng:
    """Return a Philox-backed generator for ``seed`` (64-bit)."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def spawn_rng(rng: Rng, stream: int) -> Rng:
    """Derive an independent child stream without advancing ``rng``."""
    key = rng.bit_generator.state["state"]["key"]
    seed = int(key[0]) ^ (int(key[1]) << 32) ^ (0x9E3779B97F4A7C15 * (stream + 1))
    return make_rng(seed)


def as_matrix(W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("matrix contains non-finite entries")
    return W


def matvec(W, x) -> np.ndarray:
    W = as_matrix(W)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != W.shape[1]:
        raise DimensionError(
            f"cannot multiply matrix of shape {W.shape} by vector of shape {x.shape}"
        )
    return W @ x


def spectral_norm(W, tol: float = 1e-10, max_iters: int = 10_000, rng: Rng | None = None) -> float:
    """Largest singular value of ``W`` by power iteration on ``W.T @ W``.

    Iteration stops once the eigen-residual of the Rayleigh quotient drops
    below ``tol`` relative to the quotient itself.  Raises
    :class:`ConvergenceError` carrying the last iterate otherwise.
    """
    W = as_matrix(W)
    if W.size == 0:
        raise DimensionError("spectral norm of an empty matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not np.any(W):
        return 0.0
    rng = make_rng(0) if rng is None else rng
    # rescale so W.T @ W neither underflows nor overflows
    scale = float(np.max(np.abs(W)))
    W = W / scale

    v = rng.standard_normal(W.shape[1])
    v /= np.linalg.norm(v)
    residual = np.inf
    for _ in range(max_iters):
        Av = W @ v
        w = W.T @ Av
        mu = float(v @ w)
        if mu <= 0.0:
            # start vector in the null space; restart elsewhere
            v = rng.standard_normal(W.shape[1])
            v /= np.linalg.norm(v)
            continue
        residual = float(np.linalg.norm(w - mu * v)) / mu
        if residual <= tol:
            return scale * float(np.sqrt(mu))
        v = w / np.linalg.norm(w)
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(relative residual {residual:.3e})",
        iterate=v,
        residual=residual,
    )


def signal_l2_norm(x, upto: int | None = None) -> float:
    """``sqrt(sum_{t<=upto} ||x[t]||^2)`` for a signal of shape ``(T, dim)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    upto = T if upto is None else upto
    if not 1 <= upto <= T:
        raise ValueError(f"prefix length {upto} outside [1, {T}]")
    return float(np.sqrt(np.sum(x[:upto] ** 2)))


def prefix_l2_norms(x) -> np.ndarray:
    """Norms of every prefix ``x[:1], x[:2], ..., x[:T]`` at once."""
    x = np.asarray(x, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    return np.sqrt(np.cumsum(np.sum(x**2, axis=1)))


def gaussian_vector(rng: Rng, dim: int | tuple, sigma: float = 1.0) -> np.ndarray:
    """I.i.d. ``N(0, sigma^2)`` samples via Box-Muller (see module docstring)."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    u1 = 1.0 - rng.random(dim)  # (0, 1]
    u2 = rng.random(dim)
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return sigma * z
