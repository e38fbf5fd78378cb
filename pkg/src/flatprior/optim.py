"""Stochastic optimizers and the train-to-zero-error loop.

Supported update rules: sgd, gd (full batch), momentum, adam, adagrad,
rmsprop and entropy-sgd (SGLD-smoothed).  Training stops at the first epoch
whose exact classification error on the training data is zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import LabeledSet, NetworkSpec, Params, classification_error, grad, loss_ce

__all__ = [
    "OPTIMIZER_KINDS",
    "OptimizerConfig",
    "OptState",
    "TrainResult",
    "TrainingDiverged",
    "NonFiniteGradientError",
    "init_state",
    "step",
    "entropy_sgd_step",
    "local_entropy_estimates",
    "train_epoch",
    "train_to_zero_error",
]

OPTIMIZER_KINDS = ("sgd", "gd", "momentum", "adam", "adagrad", "rmsprop", "entropy-sgd")

# Per-kind learning-rate defaults in the usual framework convention:
# 0.01 for the plain-gradient family, 0.001 for the adaptive family.
_DEFAULT_LR = {
    "sgd": 0.01,
    "gd": 0.01,
    "momentum": 0.01,
    "entropy-sgd": 0.01,
    "adam": 0.001,
    "adagrad": 0.001,
    "rmsprop": 0.001,
}

DIVERGENCE_LOSS_CAP = 1e6


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite or exceeded the divergence cap."""


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN or infinity."""


@dataclass
class OptimizerConfig:
    """Hyperparameters for one optimizer kind.

    ``learning_rate=None`` resolves to the per-kind default.  ``batch_size``
    is ignored for gd.  ``adam_beta1`` doubles as the squared-gradient decay
    of rmsprop (both default to 0.9).  The entropy-sgd fields control the
    inner SGLD loop: ``entropy_gamma`` is the coupling weight of the
    smoothing term (0 disables the smoothing entirely, reducing the step to
    plain sgd), the inner step size is 0.1 * learning_rate, inner iterates
    are averaged exponentially with rate 0.75, and ``entropy_sgld_noise`` is
    the std of the per-step Gaussian noise.
    """

    kind: str = "sgd"
    learning_rate: float | None = None
    batch_size: int = 32
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    eps: float = 1e-8
    entropy_inner_steps: int = 20
    entropy_gamma: float = 100.0
    entropy_sgld_noise: float = 1e-4

    def __post_init__(self) -> None:
        self.kind = str(self.kind).lower().replace("_", "-")
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate is None:
            self.learning_rate = _DEFAULT_LR[self.kind]
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.entropy_inner_steps < 1:
            raise ValueError("entropy_inner_steps must be >= 1")
        if self.entropy_gamma < 0:
            raise ValueError("entropy_gamma must be >= 0")
        if self.entropy_sgld_noise < 0:
            raise ValueError("entropy_sgld_noise must be >= 0")


@dataclass
class OptState:
    """Mutable per-kind accumulators, shaped like the Params they update."""

    kind: str
    t: int = 0
    m: list | None = None  # momentum buffer / adam first moment
    v: list | None = None  # adam second moment / adagrad / rmsprop accumulator


def init_state(cfg: OptimizerConfig, params: Params) -> OptState:
    zeros = lambda: [np.zeros_like(W) for W in params.weights] + [
        np.zeros_like(b) for b in params.biases
    ]
    if cfg.kind in ("momentum", "adam"):
        m = zeros()
    else:
        m = None
    if cfg.kind in ("adam", "adagrad", "rmsprop"):
        v = zeros()
    else:
        v = None
    return OptState(kind=cfg.kind, m=m, v=v)


def _arrays(p: Params) -> list:
    return list(p.weights) + list(p.biases)


def step(state: OptState, params: Params, g: Params, cfg: OptimizerConfig):
    """Apply one update of the configured kind in place.

    Returns (params, state) for convenience; both are modified in place.
    Raises NonFiniteGradientError if the gradient contains NaN/inf.
    """
    gs = _arrays(g)
    for arr in gs:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteGradientError(
                f"non-finite gradient in {cfg.kind} step {state.t + 1}"
            )
    ps = _arrays(params)
    lr = cfg.learning_rate
    state.t += 1
    if cfg.kind in ("sgd", "gd", "entropy-sgd"):
        for p, gr in zip(ps, gs):
            p -= lr * gr
    elif cfg.kind == "momentum":
        for p, gr, buf in zip(ps, gs, state.m):
            buf *= cfg.momentum
            buf += gr
            p -= lr * buf
    elif cfg.kind == "adam":
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        c1 = 1.0 - b1**state.t
        c2 = 1.0 - b2**state.t
        for p, gr, m, v in zip(ps, gs, state.m, state.v):
            m *= b1
            m += (1.0 - b1) * gr
            v *= b2
            v += (1.0 - b2) * gr * gr
            p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    elif cfg.kind == "adagrad":
        for p, gr, v in zip(ps, gs, state.v):
            v += gr * gr
            p -= lr * gr / (np.sqrt(v) + cfg.eps)
    elif cfg.kind == "rmsprop":
        rho = cfg.adam_beta1
        for p, gr, v in zip(ps, gs, state.v):
            v *= rho
            v += (1.0 - rho) * gr * gr
            p -= lr * gr / (np.sqrt(v) + cfg.eps)
    else:  # pragma: no cover
        raise ValueError(f"step does not handle kind {cfg.kind!r}")
    return params, state


def _random_batch(data: LabeledSet, batch_size: int, rng: np.random.Generator) -> LabeledSet:
    idx = rng.integers(0, len(data), size=min(batch_size, len(data)))
    return data.subset(idx)


def local_entropy_estimates(
    w0: np.ndarray,
    grad_fn,
    cfg: OptimizerConfig,
    rng: np.random.Generator,
    inner_steps: int | None = None,
):
    """Run the inner SGLD chain of entropy-sgd around the flat vector ``w0``.

    ``grad_fn(w, rng)`` returns a (possibly minibatch) loss gradient.  Each
    inner step follows the coupled drift grad - gamma * (w0 - w') at step
    size 0.1 * learning_rate plus Gaussian noise of std entropy_sgld_noise.
    Returns (mu_exp, mu_chain): the exponential average (rate 0.75) of the
    iterates, which the outer step uses, and the plain chain average, whose
    error shrinks with the chain length.
    """
    steps = cfg.entropy_inner_steps if inner_steps is None else inner_steps
    inner_lr = 0.1 * cfg.learning_rate
    rho = 0.75
    x = np.asarray(w0, dtype=np.float64)
    xp = x.copy()
    mu = x.copy()
    chain_sum = np.zeros_like(x)
    for _ in range(steps):
        g = grad_fn(xp, rng)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient in entropy-sgd inner loop")
        xp -= inner_lr * (g - cfg.entropy_gamma * (x - xp))
        if cfg.entropy_sgld_noise > 0:
            xp += cfg.entropy_sgld_noise * rng.standard_normal(xp.shape)
        mu = rho * mu + (1.0 - rho) * xp
        chain_sum += xp
    return mu, chain_sum / steps


def entropy_sgd_step(
    params: Params,
    data: LabeledSet,
    cfg: OptimizerConfig,
    rng: np.random.Generator,
) -> Params:
    """One outer entropy-sgd update (in place on ``params``).

    The outer step moves along the smoothed-loss gradient estimate
    gamma * (w - mu) where mu is the exponential average of the inner SGLD
    iterates.  With entropy_gamma == 0 the smoothing term is disabled and the
    update is exactly one sgd step on a single sampled batch.
    """

    def batch_grad(w: np.ndarray, r: np.random.Generator) -> np.ndarray:
        batch = _random_batch(data, cfg.batch_size, r)
        return grad(params.with_vector(w), batch).to_vector()

    x = params.to_vector()
    if cfg.entropy_gamma == 0.0:
        g = batch_grad(x, rng)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient in entropy-sgd step")
        x -= cfg.learning_rate * g
    else:
        mu, _ = local_entropy_estimates(x, batch_grad, cfg, rng)
        x -= cfg.learning_rate * cfg.entropy_gamma * (x - mu)
    new = params.with_vector(x)
    for p, q in zip(_arrays(params), _arrays(new)):
        p[...] = q
    return params


@dataclass
class TrainResult:
    """Outcome of train_to_zero_error.

    ``epochs_to_zero_error`` is the first epoch whose training classification
    error was exactly 0 (0 if the initial params already classify perfectly,
    -1 if never reached).  ``per_epoch_trace`` holds one
    (epoch, train_error, train_loss) triple per completed epoch.
    """

    params: Params
    epochs_to_zero_error: int
    converged: bool
    per_epoch_trace: list = field(default_factory=list)


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for k in range(0, n, batch_size):
        yield perm[k : k + batch_size]


def train_epoch(
    params: Params,
    data: LabeledSet,
    cfg: OptimizerConfig,
    state: OptState,
    rng: np.random.Generator,
) -> None:
    """One pass over ``data``: a seeded shuffle into batches, one update each.

    gd uses a single full batch; entropy-sgd performs one outer step per
    batch slot, drawing its inner batches from ``rng``.  Mutates params and
    state in place.
    """
    n = len(data)
    batch_size = n if cfg.kind == "gd" else min(cfg.batch_size, n)
    if cfg.kind == "entropy-sgd":
        n_outer = (n + batch_size - 1) // batch_size
        for _ in range(n_outer):
            entropy_sgd_step(params, data, cfg, rng)
        return
    for idx in _epoch_batches(n, batch_size, rng):
        step(state, params, grad(params, data.subset(idx)), cfg)


def train_to_zero_error(
    spec: NetworkSpec,
    init: Params,
    train_data: LabeledSet,
    cfg: OptimizerConfig,
    max_epochs: int,
    seed,
    overtrain_epochs: int = 0,
) -> TrainResult:
    """Train until the exact classification error on ``train_data`` is zero.

    Stops at the first zero-error epoch; with ``overtrain_epochs`` > 0 it then
    continues for that many further epochs and, if the error has drifted away
    from zero, keeps going (within ``max_epochs``) until it is zero again so
    the returned params always classify the training data perfectly when
    ``converged`` is True.  Raises TrainingDiverged if the loss goes
    non-finite or above the divergence cap, which is reported distinctly from
    plain non-convergence (converged=False).
    """
    if max_epochs < 1:
        raise ValueError("max_epochs must be >= 1")
    if spec.input_dim != train_data.input_dim:
        raise ValueError("training data dim does not match network spec")
    if cfg.kind != "gd" and cfg.batch_size > len(train_data):
        raise ValueError("batch_size exceeds training-set size")
    rng = np.random.default_rng(seed)
    params = init.copy()
    state = init_state(cfg, params)
    trace: list = []
    if classification_error(params, train_data) == 0.0:
        return TrainResult(params, 0, True, trace)
    first_zero = -1
    extra_left = 0
    for epoch in range(1, max_epochs + 1):
        try:
            train_epoch(params, train_data, cfg, state, rng)
        except NonFiniteGradientError as exc:
            raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
        err = classification_error(params, train_data)
        loss = loss_ce(params, train_data)
        trace.append((epoch, err, loss))
        if not np.isfinite(loss) or loss > DIVERGENCE_LOSS_CAP:
            raise TrainingDiverged(f"training loss {loss!r} at epoch {epoch}")
        if first_zero < 0 and err == 0.0:
            first_zero = epoch
            extra_left = overtrain_epochs
            if extra_left == 0:
                return TrainResult(params, first_zero, True, trace)
            continue
        if first_zero >= 0:
            if extra_left > 0:
                extra_left -= 1
            if extra_left == 0 and err == 0.0:
                return TrainResult(params, first_zero, True, trace)
    return TrainResult(params, first_zero, False, trace)
