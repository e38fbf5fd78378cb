"""Experiment pipelines, generalization-bound arithmetic, and output writers.

Three pipelines: an exhaustive-input Boolean study (empirical function
frequencies under random initialization vs flatness of trained solutions),
an attack-set correlation study (train to zero error on S plus mislabeled A,
then relate test error to log prior and sharpness), and a per-epoch temporal
trace with an optional mid-run rescaling event.  All runs are deterministic
given their seeds and emit CSV with 10-significant-digit decimals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import gpprior, optim
from .data import SplitConfig, boolean_inputs, make_split
from .flatness import (
    HESSIAN_PARAM_CAP,
    SHARPNESS_PRESETS,
    SharpnessConfig,
    hessian,
    sharpness,
    spectral_norm,
    top_k_log_product,
)
from .network import (
    FunctionFingerprint,
    LabeledSet,
    NetworkSpec,
    classification_error,
    fingerprint,
    init_params,
)
from .rescale import RescaleOp, alpha_scale, verify_invariance

__all__ = [
    "ExperimentRecord",
    "BooleanRecord",
    "run_boolean",
    "run_correlation",
    "run_temporal",
    "bound_value",
    "spearman",
    "pearson",
    "sample_boolean_frequencies",
    "perceptron_fingerprint_counts",
    "correlation_summary",
    "write_experiment_csv",
    "write_boolean_csv",
    "read_csv_columns",
    "write_scatter_svg",
    "EXPERIMENT_CSV_HEADER",
]

EXPERIMENT_CSV_HEADER = (
    "run_id,optimizer,attack_size,epoch,train_error,test_error,"
    "sharpness,spectral_norm,topk_logprod,log_prior,log_posterior,bound_value"
)


@dataclass
class ExperimentRecord:
    """One measured run (or one epoch of a temporal trace)."""

    run_id: str
    optimizer: str
    attack_size: int
    epoch: int
    train_error: float
    test_error: float
    sharpness: float | None = None
    spectral_norm: float | None = None
    top_k_log_product: float | None = None
    log_prior: float | None = None
    log_posterior: float | None = None
    bound_value: float | None = None


@dataclass
class BooleanRecord:
    """One trained Boolean function with its sampled-frequency prior."""

    fingerprint: FunctionFingerprint
    sample_frequency: int
    log_prior_empirical: float
    sharpness: float
    spectral_norm: float | None = None


# ---------------------------------------------------------------------------
# Correlation statistics and the bound
# ---------------------------------------------------------------------------


def _as_float_array(xs, name: str) -> np.ndarray:
    a = np.asarray(xs, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return a


def pearson(xs, ys) -> float:
    """Moment correlation coefficient in [-1, 1]."""
    x = _as_float_array(xs, "xs")
    y = _as_float_array(ys, "ys")
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need equal-length inputs with at least 3 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for a constant input vector")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Rank correlation with average-rank tie handling."""
    x = _as_float_array(xs, "xs")
    y = _as_float_array(ys, "ys")
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need equal-length inputs with at least 3 points")
    return pearson(_average_ranks(x), _average_ranks(y))


def bound_value(log_prior: float, m: int, delta: float) -> float:
    """Test-error bound (-ln P(f) + ln(1/delta)) / m for zero-train-error functions."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if log_prior > 1e-6:
        raise ValueError("log_prior must be <= 0")
    return (-min(log_prior, 0.0) + math.log(1.0 / delta)) / m


# ---------------------------------------------------------------------------
# Boolean pipeline
# ---------------------------------------------------------------------------


def sample_boolean_frequencies(
    spec: NetworkSpec,
    n_samples: int,
    seed,
    chunk: int = 512,
) -> dict[bytes, int]:
    """Tally fingerprint frequencies of ``n_samples`` random initializations.

    Each sample is one fresh parameter draw evaluated on all 2^n Boolean
    inputs; the key is the bit-packed fingerprint.  Vectorized over chunks of
    networks so a 10^6-sample tally of a two-hidden-layer net stays in the
    minutes range.
    """
    n_in = spec.input_dim
    X = boolean_inputs(n_in)
    rng = np.random.default_rng(seed)
    hidden = spec.layer_sizes[1:-1]
    counts: dict[bytes, int] = {}
    done = 0
    while done < n_samples:
        b = min(chunk, n_samples - done)
        H = np.broadcast_to(X.T, (b,) + X.T.shape)  # (b, d, 2^n)
        fan_in = n_in
        for width in hidden:
            W = rng.standard_normal((b, width, fan_in)) * (spec.sigma_w / np.sqrt(fan_in))
            bias = rng.standard_normal((b, width)) * spec.sigma_b
            H = np.maximum(W @ H + bias[:, :, None], 0.0)
            fan_in = width
        w_out = rng.standard_normal((b, 1, fan_in)) * (spec.sigma_w / np.sqrt(fan_in))
        b_out = rng.standard_normal((b, 1)) * spec.sigma_b
        z = (w_out @ H)[:, 0, :] + b_out
        packed = np.packbits((z >= 0.0), axis=1)
        for row in packed:
            key = row.tobytes()
            counts[key] = counts.get(key, 0) + 1
        done += b
    return counts


def _unpack_key(key: bytes, n_bits: int) -> FunctionFingerprint:
    bits = np.unpackbits(np.frombuffer(key, dtype=np.uint8))[:n_bits]
    return FunctionFingerprint(bits)


def run_boolean(
    spec: NetworkSpec,
    n_samples: int,
    n_sgd_runs: int,
    seed,
    opt_cfg: optim.OptimizerConfig | None = None,
    sharp_cfg: SharpnessConfig | None = None,
    max_epochs: int = 3000,
    pool_factor: int = 2,
    hessian_metrics: bool = False,
):
    """Boolean-system pipeline on the full 2^n input space.

    (i) tally fingerprint frequencies over ``n_samples`` random parameter
    draws; (ii) train ``n_sgd_runs`` networks on target functions drawn at
    random (without replacement) from the top ``pool_factor * n_sgd_runs``
    tallied functions, keeping runs that reach zero error on every input;
    (iii) record each trained function's empirical log prior
    ln(frequency / n_samples) and its sharpness.  Returns
    (records, counts, n_failed) where n_failed counts targets whose training
    did not converge.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    if opt_cfg is None:
        opt_cfg = optim.OptimizerConfig(kind="sgd", learning_rate=0.1, batch_size=16)
    if opt_cfg.batch_size > 2**spec.input_dim:
        opt_cfg = optim.OptimizerConfig(
            kind=opt_cfg.kind, learning_rate=opt_cfg.learning_rate,
            batch_size=2**spec.input_dim,
        )
    if sharp_cfg is None:
        sharp_cfg = SHARPNESS_PRESETS["boolean"]
    rng = np.random.default_rng(seed)
    counts = sample_boolean_frequencies(spec, n_samples, rng)
    n_bits = 2**spec.input_dim
    X = boolean_inputs(spec.input_dim)
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    pool = top[: max(pool_factor * n_sgd_runs, n_sgd_runs)]
    order = rng.permutation(len(pool))[:n_sgd_runs]
    records: list[BooleanRecord] = []
    n_failed = 0
    for pick in order:
        key, freq = pool[pick]
        target = _unpack_key(key, n_bits)
        data = LabeledSet(X, target.bits)
        params0 = init_params(spec, rng)
        try:
            result = optim.train_to_zero_error(
                spec, params0, data, opt_cfg, max_epochs, rng.integers(2**32)
            )
        except optim.TrainingDiverged:
            n_failed += 1
            continue
        if not result.converged:
            n_failed += 1
            continue
        sharp = sharpness(result.params, data, sharp_cfg, rng.integers(2**32))
        snorm = None
        if hessian_metrics:
            snorm = spectral_norm(hessian(result.params, data))
        records.append(
            BooleanRecord(
                fingerprint=target,
                sample_frequency=int(freq),
                log_prior_empirical=math.log(freq / n_samples),
                sharpness=sharp,
                spectral_norm=snorm,
            )
        )
    return records, counts, n_failed


def perceptron_fingerprint_counts(n_samples: int, seed) -> dict[str, int]:
    """Fingerprint tally of the 1-input sign perceptron z = w x + b, w,b ~ N(0,1).

    Inputs are the ordered pair (0, 1); keys are the two-bit patterns
    '00', '01', '10', '11' with bit = 1 iff z >= 0.
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(n_samples)
    b = rng.standard_normal(n_samples)
    bit0 = b >= 0.0
    bit1 = (w + b) >= 0.0
    patterns = 2 * bit0.astype(int) + bit1.astype(int)
    labels = {0: "00", 1: "01", 2: "10", 3: "11"}
    return {labels[k]: int(np.sum(patterns == k)) for k in range(4)}


# ---------------------------------------------------------------------------
# Attack-set correlation pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationConfig:
    """Knobs of the attack-set study (sizes, optimizer, measurement)."""

    train_size: int = 100
    test_size: int = 500
    attack_sizes: tuple[int, ...] = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    seeds: tuple[int, ...] = (0, 1, 2)
    max_epochs: int = 2000
    delta: float = 0.05
    overtrain_epochs: int = 0
    kernel: str = "analytic"  # or "empirical"
    mc_samples: int | None = None  # default 0.1 * (|S| + |E|)
    hessian_metrics: bool = False

    def __post_init__(self) -> None:
        if self.kernel not in ("analytic", "empirical"):
            raise ValueError("kernel must be 'analytic' or 'empirical'")
        if any(a < 0 for a in self.attack_sizes):
            raise ValueError("attack sizes must be nonnegative")


def _build_kernel(spec: NetworkSpec, X: np.ndarray, cfg: CorrelationConfig, seed):
    if cfg.kernel == "analytic":
        return gpprior.arccos_kernel(X, spec.n_hidden_layers, spec.sigma_w, spec.sigma_b)
    M = cfg.mc_samples if cfg.mc_samples else max(1, int(0.1 * X.shape[0]))
    return gpprior.mc_empirical_kernel(spec, X, M, seed)


def _measure_run(
    spec: NetworkSpec,
    full: LabeledSet,
    attack_size: int,
    seed: int,
    opt_cfg: optim.OptimizerConfig,
    sharp_cfg: SharpnessConfig,
    cfg: CorrelationConfig,
    log_p_s: float,
):
    """Train one (attack_size, seed) run to zero error and measure it."""
    split = SplitConfig(cfg.train_size, attack_size, cfg.test_size, seed)
    s, a, e = make_split(full, split)
    train = LabeledSet.concat(s, a) if attack_size else s
    params0 = init_params(spec, seed)
    result = optim.train_to_zero_error(
        spec, params0, train, opt_cfg, cfg.max_epochs, seed,
        overtrain_epochs=cfg.overtrain_epochs,
    )
    if not result.converged:
        return None, result
    params = result.params
    se_inputs = np.concatenate([s.inputs, e.inputs], axis=0)
    fp = fingerprint(params, se_inputs)
    K = _build_kernel(spec, se_inputs, cfg, seed)
    lp = gpprior.log_prior(K, fp)
    lpost = lp - log_p_s
    sharp = sharpness(params, train, sharp_cfg, seed)
    snorm = topk = None
    if cfg.hessian_metrics and params.n_params <= HESSIAN_PARAM_CAP:
        H = hessian(params, train)
        snorm = spectral_norm(H)
        try:
            topk = top_k_log_product(H, 50).value
        except ValueError:
            topk = None
    rec = ExperimentRecord(
        run_id=f"{opt_cfg.kind}-a{attack_size:04d}-s{seed}",
        optimizer=opt_cfg.kind,
        attack_size=attack_size,
        epoch=result.epochs_to_zero_error + cfg.overtrain_epochs,
        train_error=classification_error(params, train),
        test_error=classification_error(params, e),
        sharpness=sharp,
        spectral_norm=snorm,
        top_k_log_product=topk,
        log_prior=lp,
        log_posterior=lpost,
        bound_value=bound_value(min(lp, 0.0), cfg.train_size, cfg.delta),
    )
    return rec, result


def run_correlation(
    full: LabeledSet,
    spec: NetworkSpec,
    opt_cfg: optim.OptimizerConfig,
    cfg: CorrelationConfig,
    sharp_cfg: SharpnessConfig | None = None,
    jobs: int = 1,
):
    """Attack-set study: one record per converged (attack_size, seed) run.

    The shared per-seed quantity ln P(S) (the training set is the same slice
    for every attack size under one seed) is computed once per seed.  Returns
    (records, skipped) where skipped lists (run_id, reason) for runs that
    never reached zero training error or diverged.
    """
    if sharp_cfg is None:
        sharp_cfg = SHARPNESS_PRESETS["mnist"]
    log_p_s: dict[int, float] = {}
    for seed in cfg.seeds:
        split = SplitConfig(cfg.train_size, 0, cfg.test_size, seed)
        s, _, _ = make_split(full, split)
        K_ss = _build_kernel(spec, s.inputs, cfg, seed)
        log_p_s[seed] = gpprior.ep_log_marginal(K_ss, FunctionFingerprint(s.labels)).log_z

    tasks = [(a, seed) for a in cfg.attack_sizes for seed in cfg.seeds]
    worker = _CorrelationTask(full, spec, opt_cfg, cfg, sharp_cfg, log_p_s)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(worker, tasks))
    else:
        outcomes = [worker(t) for t in tasks]
    records = [r for r, _ in outcomes if r is not None]
    skipped = [s for _, s in outcomes if s is not None]
    records.sort(key=lambda r: (r.attack_size, r.run_id))
    skipped.sort()
    return records, skipped


class _CorrelationTask:
    """Picklable task wrapper so a worker pool can run independent runs."""

    def __init__(self, full, spec, opt_cfg, cfg, sharp_cfg, log_p_s):
        self.full = full
        self.spec = spec
        self.opt_cfg = opt_cfg
        self.cfg = cfg
        self.sharp_cfg = sharp_cfg
        self.log_p_s = log_p_s

    def __call__(self, task):
        attack, seed = task
        run_id = f"{self.opt_cfg.kind}-a{attack:04d}-s{seed}"
        try:
            rec, _ = _measure_run(
                self.spec, self.full, attack, seed, self.opt_cfg,
                self.sharp_cfg, self.cfg, self.log_p_s[seed],
            )
        except optim.TrainingDiverged as exc:
            return None, (run_id, f"diverged: {exc}")
        if rec is None:
            return None, (run_id, "no zero-error epoch within max_epochs")
        return rec, None


def correlation_summary(records: Sequence[ExperimentRecord]) -> dict[str, float]:
    """Spearman/Pearson coefficients relating prior and sharpness to test error."""
    test_err = [r.test_error for r in records]
    lp = [r.log_prior for r in records]
    sh = [r.sharpness for r in records]
    out = {"n_records": float(len(records))}
    try:
        out["spearman_neg_log_prior_vs_test_error"] = spearman([-v for v in lp], test_err)
        out["pearson_log_prior_vs_test_accuracy"] = pearson(lp, [1.0 - v for v in test_err])
    except (ValueError, TypeError):
        pass
    try:
        out["spearman_sharpness_vs_test_error"] = spearman(sh, test_err)
    except (ValueError, TypeError):
        pass
    return out


# ---------------------------------------------------------------------------
# Temporal pipeline
# ---------------------------------------------------------------------------


def run_temporal(
    full: LabeledSet,
    spec: NetworkSpec,
    opt_cfg: optim.OptimizerConfig,
    train_size: int,
    test_size: int,
    scale_epoch: int,
    alpha: float,
    total_epochs: int,
    seed: int,
    sharp_cfg: SharpnessConfig | None = None,
    scale_layer: int = 1,
    prior_every: int = 1,
    sharpness_every: int = 1,
    measure_window: tuple[int, int] | None = None,
    kernel: str = "analytic",
):
    """Per-epoch trace with a rescaling event between epochs.

    Trains on S (no attack set) for ``total_epochs`` epochs, recording train
    and test error every epoch, plus sharpness and the log prior of the S+E
    fingerprint on their cadences (every ``sharpness_every`` /
    ``prior_every`` epochs; both always measured inside ``measure_window``
    and at the epochs flanking the scaling event).  The log posterior is
    recorded alongside the prior whenever the train error is zero.
    Immediately after the training pass of ``scale_epoch`` the
    (scale_layer, scale_layer+1) pair is alpha-scaled, so that epoch's
    record measures the rescaled parameters.  Returns (records, diag) where
    diag reports the fingerprint and forward-output agreement across the
    scaling event.
    """
    if not 1 <= scale_epoch < total_epochs:
        raise ValueError("need 1 <= scale_epoch < total_epochs")
    if sharp_cfg is None:
        sharp_cfg = SHARPNESS_PRESETS["mnist"]
    split = SplitConfig(train_size, 0, test_size, seed)
    s, _, e = make_split(full, split)
    se_inputs = np.concatenate([s.inputs, e.inputs], axis=0)
    if kernel == "analytic":
        K = gpprior.arccos_kernel(se_inputs, spec.n_hidden_layers, spec.sigma_w, spec.sigma_b)
        K_ss = gpprior.arccos_kernel(s.inputs, spec.n_hidden_layers, spec.sigma_w, spec.sigma_b)
    else:
        M = max(1, int(0.1 * se_inputs.shape[0]))
        K = gpprior.mc_empirical_kernel(spec, se_inputs, M, seed)
        K_ss = gpprior.mc_empirical_kernel(spec, s.inputs, M, seed)
    log_p_s = gpprior.ep_log_marginal(K_ss, FunctionFingerprint(s.labels)).log_z

    rng = np.random.default_rng(seed)
    params = init_params(spec, seed)
    state = optim.init_state(opt_cfg, params)
    records: list[ExperimentRecord] = []
    diag: dict = {}
    for epoch in range(1, total_epochs + 1):
        optim.train_epoch(params, s, opt_cfg, state, rng)
        if epoch == scale_epoch:
            fp_pre = fingerprint(params, se_inputs)
            scaled = alpha_scale(params, RescaleOp(scale_layer, alpha))
            fp_post = fingerprint(scaled, se_inputs)
            diag = {
                "scale_epoch": scale_epoch,
                "alpha": alpha,
                "fingerprint_unchanged": fp_pre == fp_post,
                "max_forward_dev": verify_invariance(params, scaled, se_inputs),
            }
            params = scaled
        train_err = classification_error(params, s)
        test_err = classification_error(params, e)
        in_window = measure_window is not None and (
            measure_window[0] <= epoch <= measure_window[1]
        )
        near_scale = abs(epoch - scale_epoch) <= 1
        # Measurement draws come from per-epoch generators so the training
        # stream is identical with and without measurements.
        sharp = None
        if epoch % sharpness_every == 0 or in_window or near_scale:
            sharp = sharpness(params, s, sharp_cfg, (seed, epoch, 1))
        lp = lpost = None
        if epoch % prior_every == 0 or in_window or near_scale:
            fp = fingerprint(params, se_inputs)
            lp = gpprior.log_prior(K, fp)
            if train_err == 0.0:
                lpost = lp - log_p_s
        records.append(
            ExperimentRecord(
                run_id=f"{opt_cfg.kind}-temporal-s{seed}",
                optimizer=opt_cfg.kind,
                attack_size=0,
                epoch=epoch,
                train_error=train_err,
                test_error=test_err,
                sharpness=sharp,
                log_prior=lp,
                log_posterior=lpost,
            )
        )
    return records, diag


# ---------------------------------------------------------------------------
# CSV and SVG output
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def _meta_lines(meta: dict) -> list[str]:
    return [f"# {k} = {meta[k]}" for k in meta]


def write_experiment_csv(path, records: Sequence[ExperimentRecord], meta: dict) -> None:
    lines = _meta_lines(meta)
    lines.append(EXPERIMENT_CSV_HEADER)
    for r in records:
        lines.append(
            ",".join(
                [
                    r.run_id,
                    r.optimizer,
                    str(r.attack_size),
                    str(r.epoch),
                    _fmt(r.train_error),
                    _fmt(r.test_error),
                    _fmt(r.sharpness),
                    _fmt(r.spectral_norm),
                    _fmt(r.top_k_log_product),
                    _fmt(r.log_prior),
                    _fmt(r.log_posterior),
                    _fmt(r.bound_value),
                ]
            )
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


BOOLEAN_CSV_HEADER = "fingerprint,sample_frequency,log_prior_empirical,sharpness,spectral_norm"


def write_boolean_csv(path, records: Sequence[BooleanRecord], meta: dict) -> None:
    lines = _meta_lines(meta)
    lines.append(BOOLEAN_CSV_HEADER)
    for r in records:
        lines.append(
            ",".join(
                [
                    r.fingerprint.to_bitstring(),
                    str(r.sample_frequency),
                    _fmt(r.log_prior_empirical),
                    _fmt(r.sharpness),
                    _fmt(r.spectral_norm),
                ]
            )
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv_columns(path) -> dict[str, list[str]]:
    """Parse a pipeline CSV (skipping # comments) into header -> column lists."""
    with open(path) as fh:
        rows = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    header = rows[0].split(",")
    cols: dict[str, list[str]] = {h: [] for h in header}
    for row in rows[1:]:
        parts = row.split(",")
        if len(parts) != len(header):
            raise ValueError(f"{path}: ragged row {row!r}")
        for h, v in zip(header, parts):
            cols[h].append(v)
    return cols


def write_scatter_svg(path, xs, ys, xlabel: str, ylabel: str, title: str = "") -> None:
    """Minimal deterministic SVG scatter plot of one (x, y) column pair."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size != ys.size or xs.size == 0:
        raise ValueError("need equal nonzero x/y lengths")
    W, H, pad = 640, 480, 60

    def axis(vals):
        lo, hi = float(np.min(vals)), float(np.max(vals))
        if lo == hi:
            lo, hi = lo - 1.0, hi + 1.0
        span = hi - lo
        return lo - 0.05 * span, hi + 0.05 * span

    x0, x1 = axis(xs)
    y0, y1 = axis(ys)
    sx = lambda v: pad + (v - x0) / (x1 - x0) * (W - 2 * pad)
    sy = lambda v: H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H-pad}" x2="{W-pad}" y2="{H-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H-pad}" stroke="black"/>',
    ]
    for k in range(5):
        fx = x0 + (x1 - x0) * k / 4
        fy = y0 + (y1 - y0) * k / 4
        parts.append(
            f'<text x="{sx(fx):.1f}" y="{H-pad+18}" font-size="11" text-anchor="middle">{fx:.4g}</text>'
        )
        parts.append(
            f'<text x="{pad-8}" y="{sy(fy):.1f}" font-size="11" text-anchor="end">{fy:.4g}</text>'
        )
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="steelblue" fill-opacity="0.7"/>')
    parts.append(
        f'<text x="{W/2:.0f}" y="{H-16}" font-size="13" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{H/2:.0f}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {H/2:.0f})">{ylabel}</text>'
    )
    if title:
        parts.append(f'<text x="{W/2:.0f}" y="24" font-size="14" text-anchor="middle">{title}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
