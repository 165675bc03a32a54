"""Dense layers, losses, Adam with decoupled weight decay, and step LR decay.

Everything operates on per-sample vectors; mini-batch averaging is the
caller's job so that accumulation order stays deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    LabelError,
    NumericFaultError,
    ShapeError,
)

ACTIVATIONS = ("none", "relu", "tanh")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray     # (out_dim,)
    activation: str = "none"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("weights must be 2-d and bias 1-d")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != rows {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def param_count(self) -> int:
        return self.weights.size + self.bias.size


def init_dense(rng: np.random.Generator, in_dim: int, out_dim: int,
               activation: str = "none") -> DenseLayer:
    """Uniform +-1/sqrt(fan_in) init for weights and bias."""
    bound = 1.0 / np.sqrt(in_dim)
    w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    b = rng.uniform(-bound, bound, size=out_dim)
    return DenseLayer(w, b, activation)


def _activate(u: np.ndarray, activation: str) -> np.ndarray:
    if activation == "none":
        return u
    if activation == "relu":
        return np.maximum(u, 0.0)
    return np.tanh(u)


def _activation_grad(u: np.ndarray, activation: str) -> np.ndarray:
    if activation == "none":
        return np.ones_like(u)
    if activation == "relu":
        return (u > 0.0).astype(float)
    t = np.tanh(u)
    return 1.0 - t * t


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (layer.in_dim,):
        raise ShapeError(f"expected input of length {layer.in_dim}, got {x.shape}")
    return _activate(layer.weights @ x + layer.bias, layer.activation)


def dense_backward(layer: DenseLayer, x: np.ndarray,
                   upstream_grad: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Chain rule through activation then affine map.

    Returns (weight_grads, bias_grads, input_grads).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(upstream_grad, dtype=float)
    if x.shape != (layer.in_dim,):
        raise ShapeError(f"expected input of length {layer.in_dim}, got {x.shape}")
    if g.shape != (layer.out_dim,):
        raise ShapeError(f"expected upstream of length {layer.out_dim}, got {g.shape}")
    u = layer.weights @ x + layer.bias
    delta = g * _activation_grad(u, layer.activation)
    return np.outer(delta, x), delta, layer.weights.T @ delta


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    return shifted - np.log(np.sum(np.exp(shifted)))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def cross_entropy_loss(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Negative log softmax probability of the label, plus logit gradients."""
    logits = np.asarray(logits, dtype=float)
    if not 0 <= label < logits.shape[0]:
        raise LabelError(f"label {label} outside 0..{logits.shape[0] - 1}")
    logp = log_softmax(logits)
    grads = np.exp(logp)
    grads[label] -= 1.0
    return float(-logp[label]), grads


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 2.0
    alpha: float = 0.4

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must be in [0, 1], got {self.alpha}")


def distillation_loss(student_logits: np.ndarray, teacher_logits: np.ndarray,
                      label: int, cfg: DistillConfig) -> tuple[float, np.ndarray]:
    """alpha * CE(student, label) + (1 - alpha) * T^2 * KL(teacher || student).

    Both softmaxes are softened by T. The T^2 factor keeps the soft-target
    gradient scale comparable across temperatures.
    """
    s = np.asarray(student_logits, dtype=float)
    t = np.asarray(teacher_logits, dtype=float)
    if s.shape != t.shape:
        raise ShapeError(f"logit shapes differ: {s.shape} vs {t.shape}")
    temp, alpha = cfg.temperature, cfg.alpha
    ce, ce_grads = cross_entropy_loss(s, label)
    log_ps = log_softmax(s / temp)
    log_pt = log_softmax(t / temp)
    p_t = np.exp(log_pt)
    # 0 * log 0 := 0 so saturated teacher probabilities stay finite
    kl = float(np.sum(np.where(p_t > 0.0, p_t * (log_pt - log_ps), 0.0)))
    loss = alpha * ce + (1.0 - alpha) * (temp * temp) * kl
    grads = alpha * ce_grads + (1.0 - alpha) * temp * (np.exp(log_ps) - p_t)
    return loss, grads


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def fresh(cls, n_params: int, lr: float = 1e-3,
              weight_decay: float = 0.0) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), lr=lr,
                   weight_decay=weight_decay)


def adam_update(state: AdamState, params: np.ndarray,
                grads: np.ndarray) -> np.ndarray:
    """One Adam step with bias correction; decoupled decay runs first.

    Mutates the optimizer state and returns the updated parameter vector.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ShapeError(
            f"param/grad/moment shapes differ: {params.shape}, {grads.shape}, "
            f"{state.first_moment.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise NumericFaultError("non-finite gradient in Adam step")
    if state.weight_decay > 0.0:
        params = params - state.lr * state.weight_decay * params
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    state.second_moment = (state.beta2 * state.second_moment
                           + (1.0 - state.beta2) * grads * grads)
    m_hat = state.first_moment / (1.0 - state.beta1 ** t)
    v_hat = state.second_moment / (1.0 - state.beta2 ** t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def step_lr(base_lr: float, epoch: int, step_size: int, gamma: float) -> float:
    """base_lr * gamma^(epoch // step_size), accumulated multiplicatively."""
    if step_size < 1:
        raise ConfigurationError(f"step_size must be >= 1, got {step_size}")
    lr = base_lr
    for _ in range(epoch // step_size):
        lr = lr * gamma
    return lr
