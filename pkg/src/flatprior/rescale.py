"""Function-preserving rescaling of adjacent ReLU layers.

Scaling (W_i, b_i) by alpha > 0 and W_{i+1} by 1/alpha leaves every network
output unchanged (ReLU is positively homogeneous) while changing gradients,
Hessians, and hence local flatness measures arbitrarily.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Params, forward

__all__ = ["RescaleOp", "alpha_scale", "verify_invariance"]


@dataclass(frozen=True)
class RescaleOp:
    """Layer pair to rescale (1-based index of the first layer) and the factor."""

    layer_index: int = 1
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.layer_index < 1:
            raise ValueError("layer_index is 1-based and must be >= 1")


def alpha_scale(params: Params, op: RescaleOp) -> Params:
    """New Params with (W_i, b_i, W_{i+1}) -> (alpha W_i, alpha b_i, W_{i+1}/alpha).

    Layer i must have a following layer (i < number of weight layers); the
    bias of layer i+1 and all other layers are untouched.
    """
    i = op.layer_index - 1
    if i + 1 >= params.n_layers:
        raise ValueError(
            f"layer_index {op.layer_index} has no following layer "
            f"(network has {params.n_layers} weight layers)"
        )
    out = params.copy()
    out.weights[i] *= op.alpha
    out.biases[i] *= op.alpha
    out.weights[i + 1] /= op.alpha
    return out


def verify_invariance(params: Params, params_scaled: Params, probe_inputs) -> float:
    """Max |forward(params, x) - forward(params_scaled, x)| over the probes."""
    X = np.asarray(probe_inputs, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    a = forward(params, X)
    b = forward(params_scaled, X)
    return float(np.max(np.abs(a - b))) if len(X) else 0.0
