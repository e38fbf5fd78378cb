"""Sharpness via constrained gradient ascent, dense Hessians, and spectra.

Sharpness of a loss L at parameters w is
100 * (max_{w' in box} L(w') - L(w)) / (1 + L(w)), where the box constrains
each coordinate to |w'_i - w_i| <= zeta * (|w_i| + 1).  The maximum is
estimated by projected stochastic gradient ascent whose running maximum of
the full-data loss (evaluated at each epoch end, and including the start
point) is returned, so the result is always >= 0 and never decreases when
more ascent epochs are added.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .network import LabeledSet, Params, grad, loss_ce

__all__ = [
    "SharpnessConfig",
    "HessianSpectrum",
    "SHARPNESS_PRESETS",
    "box_sharpness",
    "sharpness",
    "flatness",
    "hessian",
    "hessian_spectrum",
    "spectral_norm",
    "top_k_log_product",
    "TopKLogProduct",
    "HESSIAN_PARAM_CAP",
]

HESSIAN_PARAM_CAP = 20_000


@dataclass(frozen=True)
class SharpnessConfig:
    """Box half-size and ascent hyperparameters for the sharpness estimate."""

    zeta: float = 1e-4
    ascent_lr: float = 1e-3
    ascent_batch: int = 32
    ascent_epochs: int = 100

    def __post_init__(self) -> None:
        if not self.zeta > 0:
            raise ValueError("zeta must be > 0")
        if not self.ascent_lr > 0:
            raise ValueError("ascent_lr must be > 0")
        if self.ascent_batch < 1:
            raise ValueError("ascent_batch must be >= 1")
        if self.ascent_epochs < 1:
            raise ValueError("ascent_epochs must be >= 1")


# Ascent hyperparameters by dataset scale: (zeta, batch, lr, epochs).
SHARPNESS_PRESETS = {
    "boolean": SharpnessConfig(zeta=1e-4, ascent_batch=16, ascent_lr=1e-3, ascent_epochs=10),
    "mnist": SharpnessConfig(zeta=1e-4, ascent_batch=32, ascent_lr=1e-3, ascent_epochs=100),
    "cifar10": SharpnessConfig(zeta=1e-5, ascent_batch=128, ascent_lr=5e-5, ascent_epochs=100),
}


def box_sharpness(
    w0: np.ndarray,
    loss_fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    config: SharpnessConfig,
    seed,
    batches_per_epoch: int = 1,
) -> float:
    """Sharpness of an arbitrary loss around the flat vector ``w0``.

    ``grad_fn(w, rng)`` may return a stochastic (minibatch) gradient; the rng
    argument lets it sample batches deterministically.  The ascent starts at
    a seeded uniform point inside the box (the gradient at the exact center
    can vanish), projects back onto the box after every step, and tracks the
    running max of ``loss_fn`` at the start point and at each epoch end.
    """
    rng = np.random.default_rng(seed)
    w0 = np.asarray(w0, dtype=np.float64)
    half = config.zeta * (np.abs(w0) + 1.0)
    lo, hi = w0 - half, w0 + half
    l0 = float(loss_fn(w0))
    if not np.isfinite(l0):
        raise ValueError("loss is non-finite at the ascent start point")
    best = l0
    w = rng.uniform(lo, hi)
    for _ in range(config.ascent_epochs):
        for _ in range(batches_per_epoch):
            w += config.ascent_lr * grad_fn(w, rng)
            np.clip(w, lo, hi, out=w)
        l = float(loss_fn(w))
        if not np.isfinite(l):
            raise ValueError("loss became non-finite during ascent")
        best = max(best, l)
    return 100.0 * (best - l0) / (1.0 + l0)


def sharpness(
    params: Params,
    train_data: LabeledSet,
    config: SharpnessConfig,
    seed,
) -> float:
    """Sharpness of the cross-entropy loss of a network on ``train_data``.

    The ascent maximizes the loss over seeded minibatches of size
    ``ascent_batch``; the running max uses the full-data loss at each epoch
    end, not minibatch values.
    """
    n = len(train_data)
    if n == 0:
        raise ValueError("sharpness needs at least one training example")
    template = params
    batch = min(config.ascent_batch, n)
    batches_per_epoch = (n + batch - 1) // batch

    def loss_fn(w: np.ndarray) -> float:
        return loss_ce(template.with_vector(w), train_data)

    def grad_fn(w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, n, size=batch)
        return grad(template.with_vector(w), train_data.subset(idx)).to_vector()

    return box_sharpness(
        params.to_vector(), loss_fn, grad_fn, config, seed, batches_per_epoch
    )


def flatness(sharpness_value: float) -> float:
    """Reciprocal of sharpness; returns inf (the sentinel) when sharpness is 0."""
    if sharpness_value < 0:
        raise ValueError("sharpness must be >= 0")
    if sharpness_value == 0.0:
        return float("inf")
    return 1.0 / sharpness_value


def hessian(
    params: Params,
    train_data: LabeledSet,
    param_cap: int = HESSIAN_PARAM_CAP,
    h: float = 1e-5,
    symmetrize: bool = True,
) -> np.ndarray:
    """Dense Hessian of the cross-entropy loss at ``params``.

    Columns are central differences of the analytic gradient:
    H[:, j] = (g(w + h e_j) - g(w - h e_j)) / (2h), then symmetrized as
    (H + H^T)/2 unless ``symmetrize`` is False.
    """
    n = params.n_params
    if n > param_cap:
        raise ValueError(f"{n} parameters exceed the Hessian cap of {param_cap}")
    w0 = params.to_vector()
    H = np.empty((n, n), dtype=np.float64)
    for j in range(n):
        wp = w0.copy()
        wp[j] += h
        wm = w0.copy()
        wm[j] -= h
        gp = grad(params.with_vector(wp), train_data).to_vector()
        gm = grad(params.with_vector(wm), train_data).to_vector()
        H[:, j] = (gp - gm) / (2.0 * h)
    if symmetrize:
        H = 0.5 * (H + H.T)
    return H


@dataclass(frozen=True)
class HessianSpectrum:
    """Full eigenvalue list of a dense Hessian, sorted descending."""

    eigenvalues: np.ndarray
    n_params: int

    def __post_init__(self) -> None:
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        object.__setattr__(self, "eigenvalues", ev)
        if ev.shape != (self.n_params,):
            raise ValueError("eigenvalue count must equal n_params")
        if np.any(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be sorted descending")


def hessian_spectrum(H: np.ndarray) -> HessianSpectrum:
    """Dense symmetric eigendecomposition, eigenvalues sorted descending."""
    H = _require_symmetric(H)
    ev = np.linalg.eigvalsh(H)[::-1].copy()
    return HessianSpectrum(ev, H.shape[0])


def _require_symmetric(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    scale = np.max(np.abs(H)) if H.size else 0.0
    if scale > 0 and np.max(np.abs(H - H.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    return H


def _power_top(A: np.ndarray, tol: float, max_iter: int) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    n = A.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    scale = max(np.max(np.abs(A)), 1e-300)
    for _ in range(max_iter):
        u = A @ v
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return 0.0
        u /= norm
        lam = float(u @ (A @ u))
        if np.linalg.norm(A @ u - lam * u) <= tol * scale:
            return lam
        v = u
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


def spectral_norm(H: np.ndarray, tol: float = 1e-12, max_iter: int = 200_000) -> float:
    """Max |eigenvalue| of a symmetric matrix.

    Runs power iteration on the positive-shifted matrices H + cI and cI - H
    (c a Gershgorin bound), which converges for indefinite H, and returns the
    larger recovered magnitude.
    """
    H = _require_symmetric(H)
    if H.size == 0:
        return 0.0
    c = float(np.max(np.sum(np.abs(H), axis=1)))
    if c == 0.0:
        return 0.0
    eye = np.eye(H.shape[0])
    lam_max = _power_top(H + c * eye, tol, max_iter) - c
    lam_min = c - _power_top(c * eye - H, tol, max_iter)
    return max(abs(lam_max), abs(lam_min))


class TopKLogProduct(NamedTuple):
    value: float
    k_used: int


def top_k_log_product(H: np.ndarray, k: int) -> TopKLogProduct:
    """Sum of ln(lambda_i) over the k largest positive Hessian eigenvalues.

    When fewer than k eigenvalues are positive, all positive ones are used
    and the count actually used is reported alongside the value.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ev = hessian_spectrum(H).eigenvalues
    pos = ev[ev > 0]
    if pos.size == 0:
        raise ValueError("no positive eigenvalues")
    k_used = min(k, int(pos.size))
    return TopKLogProduct(float(np.sum(np.log(pos[:k_used]))), k_used)
