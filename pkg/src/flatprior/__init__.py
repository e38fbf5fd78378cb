"""Flatness, function priors, and generalization for small ReLU classifiers."""

from .data import SplitConfig, boolean_inputs, load_cifar10_binary, load_mnist, make_split
from .flatness import (
    HessianSpectrum,
    SharpnessConfig,
    box_sharpness,
    flatness,
    hessian,
    hessian_spectrum,
    sharpness,
    spectral_norm,
    top_k_log_product,
)
from .gpprior import (
    EPState,
    KernelMatrix,
    arccos_kernel,
    ep_log_marginal,
    log_posterior,
    log_prior,
    mc_empirical_kernel,
)
from .network import (
    FunctionFingerprint,
    LabeledSet,
    NetworkSpec,
    Params,
    classification_error,
    fingerprint,
    forward,
    grad,
    init_params,
    loss_ce,
    predict_labels,
)
from .optim import OptimizerConfig, TrainResult, entropy_sgd_step, step, train_to_zero_error
from .rescale import RescaleOp, alpha_scale, verify_invariance

__version__ = "0.1.0"
