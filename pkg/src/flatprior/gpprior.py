"""Infinite-width GP prior over label functions of ReLU networks.

The pre-activation of the output unit of a randomly initialized fully
connected ReLU net converges, layer by layer, to a zero-mean Gaussian
process whose covariance has a closed arc-cosine form.  The probability of
a hard-label fingerprint f under this prior is the Gaussian orthant
integral  P(f) = int prod_i Theta(s_i z_i) N(z; 0, K) dz  with
s_i = 2 bit_i - 1, which is approximated here with Expectation Propagation
under the Heaviside (hard sign) likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import log_ndtr

from .network import FunctionFingerprint, NetworkSpec

__all__ = [
    "KernelMatrix",
    "EPState",
    "arccos_kernel",
    "mc_empirical_kernel",
    "ep_log_marginal",
    "log_prior",
    "log_posterior",
]

JITTER_SCALE = 1e-6
EP_MAX_SWEEPS = 200
EP_TOL = 1e-6
EP_DAMPING = 0.5


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric covariance over a finite input set.

    ``entries`` holds the exact kernel values.  ``jitter_applied`` is the
    diagonal stabilizer (JITTER_SCALE * trace / m) that ep_log_marginal adds
    before factorizing, recorded here so results are reproducible.
    """

    entries: np.ndarray
    jitter_applied: float

    def __post_init__(self) -> None:
        K = np.asarray(self.entries, dtype=np.float64)
        object.__setattr__(self, "entries", K)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError("kernel must be a square matrix")
        if K.size and np.max(np.abs(K - K.T)) > 1e-12 * max(1.0, np.max(np.abs(K))):
            raise ValueError("kernel must be symmetric to 1e-12")
        if self.jitter_applied < 0:
            raise ValueError("jitter must be >= 0")

    @property
    def m(self) -> int:
        return int(self.entries.shape[0])

    def submatrix(self, upto: int) -> "KernelMatrix":
        """Leading principal submatrix as a fresh KernelMatrix (own jitter)."""
        return _with_jitter(self.entries[:upto, :upto].copy())


def _with_jitter(K: np.ndarray) -> KernelMatrix:
    m = K.shape[0]
    jitter = JITTER_SCALE * float(np.trace(K)) / m if m else 0.0
    return KernelMatrix(K, jitter)


def _relu_layer_kernel(K: np.ndarray, sigma_w: float, sigma_b: float) -> np.ndarray:
    """One step of the ReLU arc-cosine recursion applied to a full kernel."""
    d = np.diag(K)
    norm = np.sqrt(np.outer(d, d))
    c = np.clip(K / norm, -1.0, 1.0)
    theta = np.arccos(c)
    K_next = sigma_b**2 + (sigma_w**2 / (2.0 * np.pi)) * norm * (
        np.sin(theta) + (np.pi - theta) * np.cos(theta)
    )
    return 0.5 * (K_next + K_next.T)


def arccos_kernel(X, depth: int, sigma_w: float = 1.0, sigma_b: float = 0.1) -> KernelMatrix:
    """Analytic output-unit covariance of a ReLU net with ``depth`` hidden layers.

    Base case K0(x, x') = sigma_b^2 + sigma_w^2 (x . x') / d, then the ReLU
    recursion
        K_l = sigma_b^2 + (sigma_w^2 / 2 pi) sqrt(K(x,x) K(x',x'))
              * (sin theta + (pi - theta) cos theta)
    with theta = arccos of the normalized previous kernel, applied ``depth``
    times.  Inputs with zero norm are only valid when sigma_b > 0.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a (m, d) matrix with m >= 1")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    d = X.shape[1]
    K = sigma_b**2 + (sigma_w**2 / d) * (X @ X.T)
    K = 0.5 * (K + K.T)
    if np.any(np.diag(K) <= 0.0):
        raise ValueError("degenerate base kernel: zero-norm input with sigma_b = 0")
    for _ in range(depth):
        K = _relu_layer_kernel(K, sigma_w, sigma_b)
    return _with_jitter(K)


def mc_empirical_kernel(spec: NetworkSpec, X, M: int, seed, chunk: int = 64) -> KernelMatrix:
    """Monte Carlo estimate of the output-unit covariance at finite width.

    Averages last-hidden-layer activation inner products over M freshly
    initialized networks of the given spec, then applies the analytic final
    fully connected step:
        K(x, x') = sigma_w^2 / (M n) * sum_nets sum_units h(x) h(x') + sigma_b^2
    with n the last hidden width.  Deterministic given the seed.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a (m, d) matrix")
    if M < 1:
        raise ValueError("M must be >= 1")
    if X.shape[1] != spec.input_dim:
        raise ValueError("input dim does not match spec")
    rng = np.random.default_rng(seed)
    hidden = spec.layer_sizes[1:-1]
    m = X.shape[0]
    S = np.zeros((m, m), dtype=np.float64)
    done = 0
    while done < M:
        b = min(chunk, M - done)
        H = np.broadcast_to(X.T, (b,) + X.T.shape)  # (b, d, m)
        fan_in = spec.input_dim
        for width in hidden:
            W = rng.standard_normal((b, width, fan_in)) * (spec.sigma_w / np.sqrt(fan_in))
            bias = rng.standard_normal((b, width)) * spec.sigma_b
            H = np.maximum(W @ H + bias[:, :, None], 0.0)  # (b, width, m)
            fan_in = width
        S += np.einsum("bum,bun->mn", H, H)
        done += b
    K = (spec.sigma_w**2 / (M * hidden[-1])) * S + spec.sigma_b**2
    return _with_jitter(0.5 * (K + K.T))


@dataclass
class EPState:
    """Converged (or best-effort) site parameters and posterior moments.

    ``site_precisions`` (tau) and ``site_means`` (nu) are the natural
    parameters of the Gaussian sites; ``log_z`` estimates the log orthant
    probability ln P(f).
    """

    site_precisions: np.ndarray
    site_means: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    log_z: float
    sweeps_used: int
    converged: bool


def _tilted_moments(t: float):
    """Ratio r = N(t)/Phi(t) and v = r (t + r), both computed stably.

    v -> 1 as t -> -inf; below t = -25 the leading asymptotic tail
    1 - v = t^-2 is used to dodge catastrophic cancellation.
    """
    log_phi = -0.5 * t * t - 0.5 * np.log(2.0 * np.pi)
    r = float(np.exp(log_phi - log_ndtr(t)))
    if t < -25.0:
        return r, 1.0 - 1.0 / (t * t)
    return r, r * (t + r)


def ep_log_marginal(
    K: KernelMatrix,
    bits: FunctionFingerprint,
    max_sweeps: int = EP_MAX_SWEEPS,
    tol: float = EP_TOL,
    damping: float = EP_DAMPING,
) -> EPState:
    """EP estimate of ln P(f) = ln int prod_i Theta(s_i z_i) N(z; 0, K) dz.

    Sequential site sweeps in fixed index order with damped natural-parameter
    updates; negative site precisions are clamped to zero.  The posterior is
    refreshed from a Cholesky factorization after every sweep.  Convergence
    is max applied site change < tol; on hitting the sweep cap the best
    estimate is returned with converged=False.
    """
    if not isinstance(bits, FunctionFingerprint):
        bits = FunctionFingerprint(bits)
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    m = K.m
    if len(bits) != m:
        raise ValueError("kernel dimension must equal fingerprint length")
    Kj = K.entries + K.jitter_applied * np.eye(m)
    try:
        np.linalg.cholesky(Kj)
    except np.linalg.LinAlgError:
        raise ValueError("kernel is not positive definite after jitter") from None
    s = 2.0 * bits.bits.astype(np.float64) - 1.0

    tau = np.zeros(m)
    nu = np.zeros(m)
    Sigma = Kj.copy()
    mu = np.zeros(m)
    converged = False
    sweeps = 0
    half_logdet_B = 0.0
    # Per-sweep rank-1 updates of the posterior are kept in factored form
    # (update vectors U and coefficients gam): reconstructing just the one
    # column a site needs costs a GEMV instead of rewriting the full matrix,
    # which is what dominates the runtime at a few hundred sites.
    U = np.empty((m, m))
    gam = np.empty(m)
    for sweeps in range(1, max_sweeps + 1):
        delta_max = 0.0
        n_upd = 0
        diag = np.diag(Sigma).copy()
        for i in range(m):
            sii = diag[i]
            tau_c = 1.0 / sii - tau[i]
            if tau_c <= 1e-12:
                continue  # cavity collapsed; leave the site for the next sweep
            nu_c = mu[i] / sii - nu[i]
            mu_c = nu_c / tau_c
            sd_c = np.sqrt(1.0 / tau_c)
            t = float(s[i] * mu_c / sd_c)
            r, v = _tilted_moments(t)
            mu_hat = mu_c + s[i] * sd_c * r
            var_hat = (1.0 / tau_c) * max(1.0 - v, 1e-15)
            tau_target = 1.0 / var_hat - tau_c
            nu_target = mu_hat / var_hat - nu_c
            tau_new = max(tau[i] + damping * (tau_target - tau[i]), 0.0)
            nu_new = nu[i] + damping * (nu_target - nu[i])
            d_tau = tau_new - tau[i]
            d_nu = nu_new - nu[i]
            delta_max = max(delta_max, abs(d_tau), abs(d_nu))
            tau[i] = tau_new
            nu[i] = nu_new
            # Current posterior column i under the pending updates.
            if n_upd:
                col = Sigma[:, i] - U[:n_upd].T @ (gam[:n_upd] * U[:n_upd, i])
            else:
                col = Sigma[:, i].copy()
            coef = d_tau / (1.0 + d_tau * sii)
            mu += (d_nu - coef * (mu[i] + d_nu * sii)) * col
            diag -= coef * col * col
            U[n_upd] = col
            gam[n_upd] = coef
            n_upd += 1
        # Numerically hygienic refresh from the Cholesky of B.
        Sigma, mu, half_logdet_B = _posterior_from_sites(Kj, tau, nu)
        if delta_max < tol:
            converged = True
            break
    log_z = _ep_log_z(Kj, tau, nu, Sigma, mu, s, half_logdet_B)
    return EPState(tau, nu, mu, Sigma, log_z, sweeps, converged)


def _posterior_from_sites(Kj: np.ndarray, tau: np.ndarray, nu: np.ndarray):
    """Posterior (Sigma, mu) and 0.5 ln|B| from site naturals, via Cholesky."""
    sqrt_tau = np.sqrt(tau)
    B = np.eye(len(tau)) + (sqrt_tau[:, None] * Kj) * sqrt_tau[None, :]
    L = cholesky(0.5 * (B + B.T), lower=True)
    V = solve_triangular(L, sqrt_tau[:, None] * Kj, lower=True)
    Sigma = Kj - V.T @ V
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = Sigma @ nu
    return Sigma, mu, float(np.sum(np.log(np.diag(L))))


def _ep_log_z(
    Kj: np.ndarray,
    tau: np.ndarray,
    nu: np.ndarray,
    Sigma: np.ndarray,
    mu: np.ndarray,
    s: np.ndarray,
    half_logdet_B: float,
) -> float:
    """Log normalizer of the EP approximation.

    Each site carries the amplitude fixed by zeroth-moment matching against
    its cavity; collecting those amplitudes and the Gaussian convolution of
    the sites with the prior gives
        ln Z = sum_i [ln Phi(t_i) + 0.5 ln(1 + tau_i sig2c_i)
                      - b_i^2/(2 a_i) + mu_c_i^2/(2 sig2c_i)]
               - 0.5 ln|B| + 0.5 nu^T Sigma nu
    with cavity naturals (tau_c, nu_c), a = tau_c + tau, b = nu_c + nu.
    """
    sig2 = np.diag(Sigma)
    tau_c = np.maximum(1.0 / sig2 - tau, 1e-300)
    nu_c = mu / sig2 - nu
    sig2_c = 1.0 / tau_c
    mu_c = nu_c * sig2_c
    t = s * mu_c / np.sqrt(sig2_c)
    a = tau_c + tau
    b = nu_c + nu
    site_terms = (
        log_ndtr(t)
        + 0.5 * np.log1p(tau * sig2_c)
        - b * b / (2.0 * a)
        + mu_c * mu_c / (2.0 * sig2_c)
    )
    return float(np.sum(site_terms) - half_logdet_B + 0.5 * (nu @ mu))


def log_prior(K: KernelMatrix, fp: FunctionFingerprint, **ep_kwargs) -> float:
    """ln P(f) of a fingerprint over the inputs that built K (S then E order)."""
    return ep_log_marginal(K, fp, **ep_kwargs).log_z


def log_posterior(
    K: KernelMatrix,
    fp: FunctionFingerprint,
    train_labels,
    **ep_kwargs,
) -> float:
    """ln P(f | S) = ln P(f) - ln P(S) for functions that fit the training labels.

    ``K`` and ``fp`` cover the training inputs followed by the test inputs;
    ``train_labels`` are the true labels of the leading block.  A fingerprint
    that disagrees with the training labels has posterior probability 0 and
    raises ValueError.
    """
    y = np.asarray(train_labels, dtype=np.uint8)
    n_s = y.shape[0]
    if n_s > len(fp):
        raise ValueError("more training labels than fingerprint bits")
    if not isinstance(fp, FunctionFingerprint):
        fp = FunctionFingerprint(fp)
    if not np.array_equal(fp.bits[:n_s], y):
        raise ValueError("fingerprint disagrees with the training labels (posterior is 0)")
    lp = log_prior(K, fp, **ep_kwargs)
    if n_s == len(fp):
        return lp - lp  # E empty: the unique restriction has probability 1
    ls = ep_log_marginal(K.submatrix(n_s), FunctionFingerprint(y), **ep_kwargs).log_z
    return lp - ls
