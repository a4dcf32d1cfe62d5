"""Training of bias grids and attention parameters.

Loss is KL divergence after internal L1 normalization of both arguments;
optimization is RMSProp with batch size 1. Every analytic gradient here is
checked against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .interp import resize_bilinear, resize_bilinear_adjoint
from .multiscale import (
    AttentionParams,
    ScaleStack,
    attention_backward,
    attention_forward_cached,
    integrate,
)
from .saliency import BiasGrid, select_bias_channel

KLD_EPS = 1e-8
RMSPROP_RHO = 0.9
RMSPROP_EPS = 1e-8


@dataclass
class TrainConfig:
    """Hyperparameters shared by the two trainers."""

    lr_bias: float = 1e-4
    lr_attention: float = 1e-5
    epochs: int = 5
    rho: float = RMSPROP_RHO
    eps_opt: float = RMSPROP_EPS
    eps_kld: float = KLD_EPS
    seed: int = 0
    max_steps: int | None = None
    shuffle: bool = True

    def __post_init__(self):
        if self.lr_bias <= 0 or self.lr_attention <= 0:
            raise ConfigError("learning rates must be positive")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}")
        if self.epochs < 1:
            raise ConfigError("at least one epoch is required")


def kld_loss(pred: np.ndarray, target: np.ndarray, eps: float = KLD_EPS):
    """KL divergence of target from prediction, both L1-normalized internally.

    Returns (loss, grad) where grad is the gradient with respect to the raw
    (un-normalized) prediction, propagated through the normalization.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ConfigError(f"shape mismatch: pred {pred.shape}, target {target.shape}")
    if np.any(pred < 0) or np.any(target < 0):
        raise DegenerateInputError("kld_loss expects non-negative maps")
    sp = float(pred.sum())
    st = float(target.sum())
    if sp <= 0.0 or st <= 0.0:
        raise DegenerateInputError("kld_loss expects maps with positive sums")
    p = pred / sp
    t = target / st
    loss = float((t * np.log((t + eps) / (p + eps))).sum())
    g_norm = -t / (p + eps)
    grad = (g_norm - float((g_norm * p).sum())) / sp
    return loss, grad


def rmsprop_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: np.ndarray,
    lr: float,
    rho: float = RMSPROP_RHO,
    eps: float = RMSPROP_EPS,
):
    """One RMSProp update: v <- rho*v + (1-rho)*g^2; p <- p - lr*g/sqrt(v+eps)."""
    if param.shape != grad.shape or param.shape != state.shape:
        raise ConfigError("param, grad, and state shapes must agree")
    state = rho * state + (1.0 - rho) * grad * grad
    param = param - lr * grad / np.sqrt(state + eps)
    return param, state


class RmsProp:
    """Keyed RMSProp over a dict of parameter arrays (single-writer)."""

    def __init__(self, lr: float, rho: float = RMSPROP_RHO, eps: float = RMSPROP_EPS):
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self._state: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            v = self._state.get(name)
            if v is None:
                v = np.zeros_like(p)
            p_new, v_new = rmsprop_step(p, grads[name], v, self.lr, self.rho, self.eps)
            p[...] = p_new
            self._state[name] = v_new


def bias_loss_and_grad(raw, elevation, target, bias: BiasGrid, eps: float = KLD_EPS):
    """Loss of the biased prediction and its gradient over the full bias grid."""
    raw = np.asarray(raw, dtype=float)
    k = select_bias_channel(bias, elevation)
    if bias.grid_shape == raw.shape:
        up = bias.weights[k]
    else:
        up = resize_bilinear(bias.weights[k], raw.shape)
    loss, g_pred = kld_loss(raw * up, target, eps=eps)
    g_up = g_pred * raw
    grad = np.zeros_like(bias.weights)
    if bias.grid_shape == raw.shape:
        grad[k] = g_up
    else:
        grad[k] = resize_bilinear_adjoint(g_up, bias.grid_shape)
    return loss, grad


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)

    def loss_curve(self) -> list[tuple[int, float]]:
        return list(enumerate(self.losses))


def _sample_order(n: int, cfg: TrainConfig) -> list[int]:
    rng = np.random.default_rng(cfg.seed)
    order: list[int] = []
    budget = cfg.max_steps if cfg.max_steps is not None else cfg.epochs * n
    for _ in range(cfg.epochs):
        idx = rng.permutation(n) if cfg.shuffle else np.arange(n)
        order.extend(int(i) for i in idx)
        if len(order) >= budget:
            break
    return order[:budget]


def train_bias(dataset, bias: BiasGrid, cfg: TrainConfig) -> tuple[BiasGrid, TrainResult]:
    """Fit bias-grid weights on (raw patch map, elevation, target patch) samples.

    Batch-size-1 RMSProp on the KLD loss; only the bias grid updates, and its
    weights are clamped to the positivity floor after every step. Deterministic
    for a fixed seed.
    """
    samples = list(dataset)
    if not samples:
        raise ConfigError("train_bias needs a non-empty dataset")
    bias = bias.copy()
    opt = RmsProp(cfg.lr_bias, cfg.rho, cfg.eps_opt)
    result = TrainResult()
    for i in _sample_order(len(samples), cfg):
        raw, elevation, target = samples[i]
        try:
            loss, grad = bias_loss_and_grad(raw, elevation, target, bias, eps=cfg.eps_kld)
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"sample {i}: {exc}") from exc
        opt.step({"bias": bias.weights}, {"bias": grad})
        bias.clamp()
        result.losses.append(loss)
    return bias, result


def attention_loss_and_grad(
    stack: ScaleStack,
    features,
    target,
    params: AttentionParams,
    eps: float = KLD_EPS,
):
    """Loss of the integrated prediction plus gradients for every conv layer."""
    weights, cache = attention_forward_cached(stack, params, features)
    pred = integrate(stack, weights)
    loss, g_pred = kld_loss(pred, target, eps=eps)
    grad_weights = g_pred[None, :, :] * stack.maps
    layer_grads = attention_backward(params, cache, weights, grad_weights)
    return loss, layer_grads


def train_attention(
    dataset,
    params: AttentionParams,
    cfg: TrainConfig,
) -> tuple[AttentionParams, TrainResult]:
    """Fit attention parameters on (ScaleStack, features, target) samples.

    Features may be None for architectures 1 and 2. Gradients flow through
    integration, the channel softmax, and every convolution analytically.
    """
    samples = list(dataset)
    if not samples:
        raise ConfigError("train_attention needs a non-empty dataset")
    params = params.copy()
    opt = RmsProp(cfg.lr_attention, cfg.rho, cfg.eps_opt)
    result = TrainResult()
    for i in _sample_order(len(samples), cfg):
        stack, features, target = samples[i]
        if stack.n_scales != params.n_scales:
            raise ConfigError(
                f"sample {i}: stack has {stack.n_scales} scales, params expect {params.n_scales}"
            )
        try:
            loss, layer_grads = attention_loss_and_grad(
                stack, features, target, params, eps=cfg.eps_kld
            )
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"sample {i}: {exc}") from exc
        pdict = {}
        gdict = {}
        for li, (layer, (gw, gb)) in enumerate(zip(params.layers, layer_grads)):
            pdict[f"w{li}"] = layer.weight
            pdict[f"b{li}"] = layer.bias
            gdict[f"w{li}"] = gw
            gdict[f"b{li}"] = gb
        opt.step(pdict, gdict)
        result.losses.append(loss)
    return params, result


def smoothed_is_non_increasing(losses, window: int = 10, slack: float = 0.05) -> bool:
    """Trend check used by tests: the moving average must not rise more than
    ``slack`` (relative) from its running minimum."""
    if len(losses) < 2 * window:
        return True
    kernel = np.ones(window) / window
    smooth = np.convolve(np.asarray(losses, dtype=float), kernel, mode="valid")
    running_min = np.minimum.accumulate(smooth)
    scale = max(abs(float(smooth[0])), 1e-12)
    return bool(np.all(smooth - running_min <= slack * scale + 1e-12))
