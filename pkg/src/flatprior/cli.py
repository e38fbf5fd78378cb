"""Command-line front end.

One entry point with subcommands: boolean, correlate, temporal, prior,
sharpness, rescale-demo, plot.  Flags may also come from a flat INI config
file (one section per subcommand, ``key = value``); explicit flags override
the file, unknown keys are rejected.  Exit codes: 0 success, 1 usage error,
2 runtime failure.  Same argv + same data files + same seeds produce
byte-identical output files.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from . import experiments, gpprior, optim
from .data import SplitConfig, boolean_inputs, load_cifar10_binary, load_mnist, make_split
from .experiments import CorrelationConfig
from .flatness import SHARPNESS_PRESETS, SharpnessConfig, sharpness
from .network import FunctionFingerprint, LabeledSet, NetworkSpec, init_params
from .optim import OptimizerConfig, train_to_zero_error
from .rescale import RescaleOp, alpha_scale, verify_invariance

DATA_DIR_ENV = "FLATPRIOR_DATA"

_MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--config", default=None, help="INI config file, section per subcommand")
    p.add_argument("--jobs", type=int, default=1, help="worker pool size for independent runs (default 1)")


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", default="mnist", choices=["mnist", "cifar10"],
                   help="dataset family (default mnist)")
    p.add_argument("--images", default=None, help="IDX image file (mnist)")
    p.add_argument("--labels", default=None, help="IDX label file (mnist)")
    p.add_argument("--batches", default=None,
                   help="comma-separated CIFAR-10 binary batch files (cifar10)")
    p.add_argument("--data-dir", default=None,
                   help=f"directory with standard file names (default ${DATA_DIR_ENV})")
    p.add_argument("--hidden", default="40,40", help="hidden widths, comma separated (default 40,40)")
    p.add_argument("--sigma-w", type=float, default=1.0, help="weight scale (default 1.0)")
    p.add_argument("--sigma-b", type=float, default=0.1, help="bias scale (default 0.1)")


def _add_opt_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--opt", default="sgd", choices=list(optim.OPTIMIZER_KINDS),
                   help="optimizer kind (default sgd)")
    p.add_argument("--lr", type=float, default=None,
                   help="learning rate (default 0.01 sgd family, 0.001 adaptive family)")
    p.add_argument("--batch", type=int, default=32, help="batch size (default 32)")
    p.add_argument("--max-epochs", type=int, default=2000,
                   help="training epoch cap (default 2000)")


def _add_sharp_flags(p: argparse.ArgumentParser) -> None:
    d = SHARPNESS_PRESETS["mnist"]
    p.add_argument("--zeta", type=float, default=d.zeta, help=f"box half-size factor (default {d.zeta})")
    p.add_argument("--ascent-lr", type=float, default=d.ascent_lr,
                   help=f"ascent step size (default {d.ascent_lr})")
    p.add_argument("--ascent-batch", type=int, default=d.ascent_batch,
                   help=f"ascent batch size (default {d.ascent_batch})")
    p.add_argument("--ascent-epochs", type=int, default=d.ascent_epochs,
                   help=f"ascent epochs (default {d.ascent_epochs})")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="flatprior", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("boolean", help="Boolean-system pipeline (frequency tally + trained sharpness)")
    _add_common(p)
    p.add_argument("--n", type=int, default=7, help="Boolean input bits (default 7)")
    p.add_argument("--samples", type=int, default=1_000_000,
                   help="random parameter draws for the tally (default 1000000)")
    p.add_argument("--sgd-runs", type=int, default=120, help="training runs on top functions (default 120)")
    p.add_argument("--hidden", default="40,40", help="hidden widths (default 40,40)")
    p.add_argument("--sigma-w", type=float, default=1.0)
    p.add_argument("--sigma-b", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.1, help="training rate (default 0.1)")
    p.add_argument("--batch", type=int, default=16, help="training batch (default 16)")
    p.add_argument("--max-epochs", type=int, default=3000)

    p = sub.add_parser("correlate", help="attack-set correlation pipeline")
    _add_common(p)
    _add_dataset_flags(p)
    _add_opt_flags(p)
    _add_sharp_flags(p)
    p.add_argument("--train", type=int, default=100, help="|S| (default 100)")
    p.add_argument("--test", type=int, default=500, help="|E| (default 500)")
    p.add_argument("--attack", default="0,10,20,30,40,50,60,70,80,90,100",
                   help="comma-separated attack sizes")
    p.add_argument("--reps", type=int, default=3, help="seeds per attack size (default 3)")
    p.add_argument("--delta", type=float, default=0.05, help="bound confidence (default 0.05)")
    p.add_argument("--overtrain", type=int, default=0,
                   help="extra epochs past zero error before measuring (default 0)")
    p.add_argument("--kernel", default="analytic", choices=["analytic", "empirical"])
    p.add_argument("--mc-samples", type=int, default=None,
                   help="networks for the empirical kernel (default 0.1(|S|+|E|))")
    p.add_argument("--hessian", action="store_true", help="also record Hessian metrics (small nets)")

    p = sub.add_parser("temporal", help="per-epoch trace with a rescaling event")
    _add_common(p)
    _add_dataset_flags(p)
    _add_opt_flags(p)
    _add_sharp_flags(p)
    p.add_argument("--train", type=int, default=100)
    p.add_argument("--test", type=int, default=100)
    p.add_argument("--scale-epoch", type=int, default=150, help="epoch of the rescaling event")
    p.add_argument("--alpha", type=float, default=5.9, help="rescaling factor (default 5.9)")
    p.add_argument("--layer", type=int, default=1, help="first layer of the rescaled pair (default 1)")
    p.add_argument("--epochs", type=int, default=300, help="total epochs (default 300)")
    p.add_argument("--prior-every", type=int, default=1,
                   help="epochs between log-prior measurements (default 1)")
    p.add_argument("--sharpness-every", type=int, default=1,
                   help="epochs between sharpness measurements (default 1)")

    p = sub.add_parser("prior", help="log P(f) of a fingerprint file")
    _add_common(p)
    p.add_argument("--fingerprint-file", required=True, help="text file of 0/1 characters")
    p.add_argument("--inputs-file", default=None,
                   help="whitespace-separated input matrix, one row per input")
    p.add_argument("--boolean-n", type=int, default=None,
                   help="use all 2^n Boolean inputs instead of --inputs-file")
    p.add_argument("--kernel", default="analytic", choices=["analytic", "empirical"])
    p.add_argument("--depth", type=int, default=2, help="hidden-layer count (default 2)")
    p.add_argument("--hidden", default="40,40", help="hidden widths for the empirical kernel")
    p.add_argument("--sigma-w", type=float, default=1.0)
    p.add_argument("--sigma-b", type=float, default=0.1)
    p.add_argument("--mc-samples", type=int, default=None)

    p = sub.add_parser("sharpness", help="train one run and print its sharpness")
    _add_common(p)
    _add_dataset_flags(p)
    _add_opt_flags(p)
    _add_sharp_flags(p)
    p.add_argument("--train", type=int, default=100)
    p.add_argument("--attack", type=int, default=0, help="attack size (default 0)")

    p = sub.add_parser("rescale-demo", help="train, alpha-scale, report invariance and sharpness change")
    _add_common(p)
    _add_dataset_flags(p)
    _add_opt_flags(p)
    _add_sharp_flags(p)
    p.add_argument("--train", type=int, default=100)
    p.add_argument("--alpha", type=float, default=8.0)
    p.add_argument("--layer", type=int, default=1)
    p.add_argument("--probes", type=int, default=1000, help="random probe inputs (default 1000)")

    p = sub.add_parser("plot", help="SVG scatter of two CSV columns")
    _add_common(p)
    p.add_argument("--in", dest="infile", required=True, help="pipeline CSV")
    p.add_argument("--x", required=True, help="x column name")
    p.add_argument("--y", required=True, help="y column name")
    p.add_argument("--title", default="", help="plot title")
    return top


def _option_types(parser: argparse.ArgumentParser, command: str) -> dict:
    """dest -> coercion callable for one subcommand's flags."""
    out: dict = {}
    for action in parser._actions:  # noqa: SLF001 - argparse keeps this stable
        if isinstance(action, argparse._SubParsersAction):
            sub = action.choices[command]
            for a in sub._actions:
                if a.dest == "help":
                    continue
                if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                    out[a.dest] = lambda raw: raw.strip().lower() in ("1", "true", "yes", "on")
                elif a.type is not None:
                    out[a.dest] = a.type
                else:
                    out[a.dest] = str
    return out


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse argv; values from --config fill in wherever no flag was given."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    command = args.command
    ini = configparser.ConfigParser()
    read = ini.read(args.config)
    if not read:
        raise FileNotFoundError(f"config file not found: {args.config}")
    if not ini.has_section(command):
        return args
    # Flags given on the command line win over the file.
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    types = _option_types(parser, command)
    for key, raw in ini.items(command):
        dest = key.replace("-", "_")
        if dest not in types:
            raise UsageError(f"unknown config key [{command}] {key}")
        if dest in explicit:
            continue
        setattr(args, dest, types[dest](raw))
    return args


def _resolve_paths(args) -> list[str]:
    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV, "")
    if args.dataset == "mnist":
        images = args.images or (os.path.join(data_dir, _MNIST_FILES[0]) if data_dir else None)
        labels = args.labels or (os.path.join(data_dir, _MNIST_FILES[1]) if data_dir else None)
        if not images or not labels:
            raise FileNotFoundError(
                "mnist needs --images/--labels, --data-dir, or $" + DATA_DIR_ENV
            )
        return [images, labels]
    if not args.batches:
        raise FileNotFoundError("cifar10 needs --batches with at least one file")
    return [p.strip() for p in args.batches.split(",") if p.strip()]


def _load_dataset(args) -> LabeledSet:
    paths = _resolve_paths(args)
    for p in paths:
        if not os.path.exists(p):
            raise FileNotFoundError(f"data file not found: {p}")
    if args.dataset == "mnist":
        return load_mnist(paths[0], paths[1])
    return load_cifar10_binary(paths)


def _spec_for(args, input_dim: int) -> NetworkSpec:
    hidden = tuple(int(h) for h in str(args.hidden).split(",") if h.strip())
    return NetworkSpec((input_dim, *hidden, 1), sigma_w=args.sigma_w, sigma_b=args.sigma_b)


def _opt_cfg(args) -> OptimizerConfig:
    return OptimizerConfig(kind=args.opt, learning_rate=args.lr, batch_size=args.batch)


def _sharp_cfg(args) -> SharpnessConfig:
    return SharpnessConfig(
        zeta=args.zeta, ascent_lr=args.ascent_lr,
        ascent_batch=args.ascent_batch, ascent_epochs=args.ascent_epochs,
    )


def _meta(args, **extra) -> dict:
    meta = {"command": args.command, "seed": args.seed}
    meta.update(extra)
    return meta


def _cmd_boolean(args) -> int:
    hidden = tuple(int(h) for h in str(args.hidden).split(",") if h.strip())
    spec = NetworkSpec((args.n, *hidden, 1), sigma_w=args.sigma_w, sigma_b=args.sigma_b)
    opt_cfg = OptimizerConfig(kind="sgd", learning_rate=args.lr, batch_size=args.batch)
    records, counts, n_failed = experiments.run_boolean(
        spec, args.samples, args.sgd_runs, args.seed,
        opt_cfg=opt_cfg, max_epochs=args.max_epochs,
    )
    if args.out:
        experiments.write_boolean_csv(
            args.out, records,
            _meta(args, samples=args.samples, sgd_runs=args.sgd_runs, failed=n_failed),
        )
    ok = [r for r in records if r.sharpness > 0]
    corr = ""
    if len(ok) >= 3:
        rho = experiments.spearman(
            [np.log(r.sample_frequency) for r in ok],
            [-np.log(r.sharpness) for r in ok],
        )
        corr = f" spearman(ln freq, ln flatness)={rho:.4f}"
    print(
        f"boolean: {len(counts)} distinct functions in {args.samples} samples, "
        f"{len(records)} trained, {n_failed} failed{corr}"
    )
    return 0


def _cmd_correlate(args) -> int:
    full = _load_dataset(args)
    spec = _spec_for(args, full.input_dim)
    attack = tuple(int(a) for a in str(args.attack).split(",") if a.strip() != "")
    cfg = CorrelationConfig(
        train_size=args.train, test_size=args.test, attack_sizes=attack,
        seeds=tuple(args.seed + k for k in range(args.reps)),
        max_epochs=args.max_epochs, delta=args.delta,
        overtrain_epochs=args.overtrain, kernel=args.kernel,
        mc_samples=args.mc_samples, hessian_metrics=args.hessian,
    )
    records, skipped = experiments.run_correlation(
        full, spec, _opt_cfg(args), cfg, _sharp_cfg(args), jobs=args.jobs
    )
    if args.out:
        meta = _meta(args, optimizer=args.opt, train=args.train, test=args.test,
                     attack=args.attack, reps=args.reps,
                     skipped=";".join(f"{rid}({why})" for rid, why in skipped) or "none")
        experiments.write_experiment_csv(args.out, records, meta)
    summary = experiments.correlation_summary(records)
    stats = " ".join(f"{k}={v:.4f}" for k, v in summary.items() if k != "n_records")
    print(f"correlate: {len(records)} records, {len(skipped)} skipped; {stats}")
    return 0


def _cmd_temporal(args) -> int:
    full = _load_dataset(args)
    spec = _spec_for(args, full.input_dim)
    records, diag = experiments.run_temporal(
        full, spec, _opt_cfg(args), args.train, args.test,
        args.scale_epoch, args.alpha, args.epochs, args.seed,
        sharp_cfg=_sharp_cfg(args), scale_layer=args.layer,
        prior_every=args.prior_every, sharpness_every=args.sharpness_every,
    )
    if args.out:
        meta = _meta(args, optimizer=args.opt, alpha=args.alpha,
                     scale_epoch=args.scale_epoch,
                     fingerprint_unchanged=diag.get("fingerprint_unchanged"),
                     max_forward_dev=diag.get("max_forward_dev"))
        experiments.write_experiment_csv(args.out, records, meta)
    print(
        f"temporal: {len(records)} epochs, scaling alpha={args.alpha} at {args.scale_epoch}, "
        f"fingerprint_unchanged={diag.get('fingerprint_unchanged')}"
    )
    return 0


def _cmd_prior(args) -> int:
    with open(args.fingerprint_file) as fh:
        fp = FunctionFingerprint.from_bitstring(fh.read())
    if args.boolean_n is not None:
        X = boolean_inputs(args.boolean_n)
    elif args.inputs_file:
        X = np.loadtxt(args.inputs_file, ndmin=2)
    else:
        raise UsageError("prior needs --inputs-file or --boolean-n")
    if X.shape[0] != len(fp):
        raise ValueError(f"{len(fp)} fingerprint bits but {X.shape[0]} inputs")
    if args.kernel == "analytic":
        K = gpprior.arccos_kernel(X, args.depth, args.sigma_w, args.sigma_b)
    else:
        hidden = tuple(int(h) for h in str(args.hidden).split(",") if h.strip())
        spec = NetworkSpec((X.shape[1], *hidden, 1), sigma_w=args.sigma_w, sigma_b=args.sigma_b)
        M = args.mc_samples or max(1, int(0.1 * X.shape[0]))
        K = gpprior.mc_empirical_kernel(spec, X, M, args.seed)
    state = gpprior.ep_log_marginal(K, fp)
    print(f"log_prior = {state.log_z:.10g} (converged={state.converged}, sweeps={state.sweeps_used})")
    return 0


def _train_single(args, attack_size: int = 0):
    full = _load_dataset(args)
    spec = _spec_for(args, full.input_dim)
    test = max(len(full) - args.train - attack_size, 0)
    test = min(test, 1000)
    s, a, e = make_split(full, SplitConfig(args.train, attack_size, test, args.seed))
    train = LabeledSet.concat(s, a) if attack_size else s
    params0 = init_params(spec, args.seed)
    result = train_to_zero_error(spec, params0, train, _opt_cfg(args), args.max_epochs, args.seed)
    return spec, train, e, result


def _cmd_sharpness(args) -> int:
    _, train, _, result = _train_single(args, args.attack)
    if not result.converged:
        raise RuntimeError("training did not reach zero error within --max-epochs")
    value = sharpness(result.params, train, _sharp_cfg(args), args.seed)
    print(
        f"sharpness = {value:.10g} (zero error at epoch {result.epochs_to_zero_error}, "
        f"zeta={args.zeta})"
    )
    return 0


def _cmd_rescale_demo(args) -> int:
    _, train, _, result = _train_single(args)
    if not result.converged:
        raise RuntimeError("training did not reach zero error within --max-epochs")
    params = result.params
    scaled = alpha_scale(params, RescaleOp(args.layer, args.alpha))
    rng = np.random.default_rng(args.seed)
    probes = rng.uniform(0.0, 1.0, size=(args.probes, train.input_dim))
    dev = verify_invariance(params, scaled, probes)
    s0 = sharpness(params, train, _sharp_cfg(args), args.seed)
    s1 = sharpness(scaled, train, _sharp_cfg(args), args.seed)
    print(
        f"rescale-demo: alpha={args.alpha} layer={args.layer} max|dz|={dev:.3e} "
        f"sharpness {s0:.6g} -> {s1:.6g}"
    )
    return 0


def _cmd_plot(args) -> int:
    cols = experiments.read_csv_columns(args.infile)
    for name in (args.x, args.y):
        if name not in cols:
            raise ValueError(f"column {name!r} not in {args.infile} (have {list(cols)})")
    xs, ys = [], []
    for xv, yv in zip(cols[args.x], cols[args.y]):
        if xv == "" or yv == "":
            continue
        xs.append(float(xv))
        ys.append(float(yv))
    if not xs:
        raise ValueError("no complete (x, y) rows to plot")
    out = args.out or "scatter.svg"
    experiments.write_scatter_svg(out, xs, ys, args.x, args.y, args.title)
    print(f"plot: {len(xs)} points -> {out}")
    return 0


_COMMANDS = {
    "boolean": _cmd_boolean,
    "correlate": _cmd_correlate,
    "temporal": _cmd_temporal,
    "prior": _cmd_prior,
    "sharpness": _cmd_sharpness,
    "rescale-demo": _cmd_rescale_demo,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except SystemExit as exc:
        # argparse prints its own message; map its exit code onto 1/0.
        return 0 if exc.code in (0, None) else 1
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
