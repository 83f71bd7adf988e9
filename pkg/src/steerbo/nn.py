"""ReLU MLP with explicit parameter vectors: forward, Jacobians, Adam training.

Parameters live in a single flat float64 vector (per layer: weight matrix
row-major, then bias) so Gaussian posteriors over the whole network are
plain dense linear algebra downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from steerbo.types import Observation


class TrainingError(RuntimeError):
    """Raised when a training run produces a non-finite loss."""


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden: tuple[int, ...] = (50, 50)
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim != 1:
            raise ValueError("architecture must map at least one input to one output")
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_params(self) -> int:
        sizes = self.layer_sizes
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(sizes, sizes[1:]))


def init_params(arch: MlpArchitecture, rng: np.random.Generator) -> np.ndarray:
    """He-normal weights, zero biases."""
    chunks = []
    sizes = arch.layer_sizes
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def unpack_params(arch: MlpArchitecture, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    if theta.shape != (arch.n_params,):
        raise ValueError(f"expected {arch.n_params} parameters, got shape {theta.shape}")
    layers = []
    sizes = arch.layer_sizes
    off = 0
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        w = theta[off : off + fan_in * fan_out].reshape(fan_out, fan_in)
        off += fan_in * fan_out
        b = theta[off : off + fan_out]
        off += fan_out
        layers.append((w, b))
    return layers


def _forward_cached(arch, theta, X):
    """Returns (outputs (n,), pre-activations per layer, post-activations per layer)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"expected inputs of dimension {arch.input_dim}, got {X.shape[1]}")
    layers = unpack_params(arch, theta)
    h = X
    pre, post = [], [X]
    for k, (w, b) in enumerate(layers):
        a = h @ w.T + b
        pre.append(a)
        h = a if k == len(layers) - 1 else np.maximum(a, 0.0)
        post.append(h)
    return h[:, 0], pre, post


def mlp_forward(arch: MlpArchitecture, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Scalar outputs for a batch of inputs (single input allowed)."""
    single = np.asarray(X).ndim == 1
    out, _, _ = _forward_cached(arch, theta, X)
    return out[0] if single else out


def mlp_grad(arch: MlpArchitecture, theta: np.ndarray, X: np.ndarray, out_weights: np.ndarray) -> np.ndarray:
    """Gradient of sum_i out_weights[i] * f(x_i) with respect to theta."""
    out, pre, post = _forward_cached(arch, theta, X)
    n_layers = len(arch.layer_sizes) - 1
    layers = unpack_params(arch, theta)
    delta = np.asarray(out_weights, dtype=np.float64)[:, None]  # d(loss)/d(a_last)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        grads_w[k] = delta.T @ post[k]
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ layers[k][0]) * (pre[k - 1] > 0.0)
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)])


def mlp_param_jacobian(arch: MlpArchitecture, theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Per-sample Jacobian of the scalar output w.r.t. theta, shape (n, P)."""
    out, pre, post = _forward_cached(arch, theta, X)
    n = out.shape[0]
    n_layers = len(arch.layer_sizes) - 1
    layers = unpack_params(arch, theta)
    J = np.empty((n, arch.n_params))
    delta = np.ones((n, 1))
    blocks_w = [None] * n_layers
    blocks_b = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        blocks_w[k] = np.einsum("no,ni->noi", delta, post[k]).reshape(n, -1)
        blocks_b[k] = delta
        if k > 0:
            delta = (delta @ layers[k][0]) * (pre[k - 1] > 0.0)
    off = 0
    for gw, gb in zip(blocks_w, blocks_b):
        J[:, off : off + gw.shape[1]] = gw
        off += gw.shape[1]
        J[:, off : off + gb.shape[1]] = gb
        off += gb.shape[1]
    return J


class Adam:
    """Plain full-batch Adam on a flat parameter vector."""

    def __init__(self, n_params: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class TrainedNetwork:
    """MAP-trained MLP plus the constants needed to interpret its outputs.

    Inputs are optionally mapped from the campaign box to [-1, 1] before the
    forward pass (He-init activations stay O(1) regardless of the domain
    scale); targets are standardized for regression likelihoods.
    """

    architecture: MlpArchitecture
    theta_star: np.ndarray
    final_loss: float
    grad_norm: float
    prior_precision: float
    noise_variance: float = 1e-2
    target_mean: float = 0.0
    target_std: float = 1.0
    input_center: float = 0.0
    input_halfwidth: float = 1.0
    loss_curve: tuple[float, ...] = field(default=(), repr=False)

    def scale_inputs(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.input_center) / self.input_halfwidth

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Forward pass mapped back to raw target units."""
        out = mlp_forward(self.architecture, self.theta_star, self.scale_inputs(X))
        return out * self.target_std + self.target_mean


def box_scaling(bounds: Optional[tuple[float, float]]) -> tuple[float, float]:
    """(center, halfwidth) mapping [lb, ub] onto [-1, 1]; identity when None."""
    if bounds is None:
        return 0.0, 1.0
    lb, ub = bounds
    if not lb < ub:
        raise ValueError(f"invalid input bounds [{lb}, {ub}]")
    return (lb + ub) / 2.0, (ub - lb) / 2.0


def train_regression(
    data: list[Observation],
    arch: MlpArchitecture,
    steps: int = 500,
    lr: float = 1e-3,
    prior_precision: float = 1e-4,
    rng: Optional[np.random.Generator] = None,
    init_theta: Optional[np.ndarray] = None,
    noise_variance: float = 1e-2,
    input_bounds: Optional[tuple[float, float]] = None,
) -> TrainedNetwork:
    """Adam on MSE of standardized targets plus a Gaussian ridge on theta."""
    if len(data) < 2:
        raise TrainingError("regression training needs at least two observations")
    center, halfwidth = box_scaling(input_bounds)
    X = (np.stack([obs.x for obs in data]) - center) / halfwidth
    y = np.array([obs.y for obs in data])
    mu = float(y.mean())
    sd = float(y.std())
    if sd < 1e-12:
        sd = 1.0
    t = (y - mu) / sd
    m = X.shape[0]

    if init_theta is not None:
        theta = np.array(init_theta, dtype=np.float64, copy=True)
    else:
        if rng is None:
            raise TrainingError("either an RNG (fresh init) or init_theta is required")
        theta = init_params(arch, rng)

    def loss_and_grad(th):
        resid = mlp_forward(arch, th, X) - t
        loss = float(resid @ resid) / m + 0.5 * prior_precision * float(th @ th)
        grad = mlp_grad(arch, th, X, 2.0 * resid / m) + prior_precision * th
        return loss, grad

    opt = Adam(arch.n_params, lr)
    curve = []
    for _ in range(steps):
        loss, grad = loss_and_grad(theta)
        if not np.isfinite(loss):
            raise TrainingError(f"regression loss became non-finite ({loss})")
        curve.append(loss)
        theta = opt.step(theta, grad)
    final_loss, final_grad = loss_and_grad(theta)
    curve.append(final_loss)
    return TrainedNetwork(
        architecture=arch,
        theta_star=theta,
        final_loss=final_loss,
        grad_norm=float(np.linalg.norm(final_grad)),
        prior_precision=prior_precision,
        noise_variance=noise_variance,
        target_mean=mu,
        target_std=sd,
        input_center=center,
        input_halfwidth=halfwidth,
        loss_curve=tuple(curve),
    )
