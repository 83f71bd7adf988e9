"""Bayesian pairwise-preference model: an MLP score trained under the
Bradley-Terry likelihood with a Gauss-Newton Gaussian posterior on top.

Scores are identified only up to an additive constant; every consumer works
with score differences or their softmax, never absolute values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from steerbo.laplace import (
    LaplacePosterior,
    chol_lower,
    covariance_from_curvature,
    lla_sample_scores,
    lla_thompson_sample,
)
from steerbo.nn import (
    Adam,
    MlpArchitecture,
    TrainedNetwork,
    TrainingError,
    box_scaling,
    init_params,
    mlp_forward,
    mlp_grad,
    mlp_param_jacobian,
)
from steerbo.types import PreferenceExample


@dataclass(frozen=True)
class PreferencePosterior:
    posterior: LaplacePosterior
    snapshot_version: int = 0

    @property
    def network(self) -> TrainedNetwork:
        return self.posterior.network


def bt_log_likelihood(r0, r1, label) -> np.ndarray:
    """Log probability of the observed label under softmax([r0, r1])."""
    r0 = np.asarray(r0, dtype=np.float64)
    r1 = np.asarray(r1, dtype=np.float64)
    winner = np.where(np.asarray(label) == 0, r0, r1)
    return winner - np.logaddexp(r0, r1)


def bt_likelihood(r0: float, r1: float, label: int) -> float:
    """Probability of the observed label for one scored pair."""
    return float(np.exp(bt_log_likelihood(r0, r1, label)))


def _pair_arrays(data: list[PreferenceExample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x0 = np.stack([ex.x0 for ex in data])
    x1 = np.stack([ex.x1 for ex in data])
    labels = np.array([ex.label for ex in data])
    return x0, x1, labels


def train_preference(
    data: list[PreferenceExample],
    arch: MlpArchitecture,
    steps: int = 300,
    lr: float = 1e-3,
    prior_precision: float = 1.0,
    rng: Optional[np.random.Generator] = None,
    init_psi: Optional[np.ndarray] = None,
    input_bounds: Optional[tuple[float, float]] = None,
) -> TrainedNetwork:
    """Adam on the summed Bradley-Terry negative log likelihood plus a ridge.

    Warm-start from a previous snapshot's parameters via init_psi; the score
    scale is left in its native units (no target standardization).
    """
    if not data:
        raise TrainingError("preference training needs at least one labeled pair")
    center, halfwidth = box_scaling(input_bounds)
    x0, x1, labels = _pair_arrays(data)
    m = x0.shape[0]
    X = (np.concatenate([x0, x1]) - center) / halfwidth

    if init_psi is not None:
        psi = np.array(init_psi, dtype=np.float64, copy=True)
    else:
        if rng is None:
            raise TrainingError("either an RNG (fresh init) or init_psi is required")
        psi = init_params(arch, rng)

    def loss_and_grad(p):
        scores = mlp_forward(arch, p, X)
        r0, r1 = scores[:m], scores[m:]
        loss = -float(np.sum(bt_log_likelihood(r0, r1, labels)))
        loss += 0.5 * prior_precision * float(p @ p)
        # d(-log p)/d(r0 - r1) = q - 1{label = 0}, with q = P(label = 0).
        q = _sigmoid(r0 - r1)
        coeff = q - (labels == 0)
        grad = mlp_grad(arch, p, X, np.concatenate([coeff, -coeff]))
        grad += prior_precision * p
        return loss, grad

    opt = Adam(arch.n_params, lr)
    curve = []
    for _ in range(steps):
        loss, grad = loss_and_grad(psi)
        if not np.isfinite(loss):
            raise TrainingError(f"preference loss became non-finite ({loss})")
        curve.append(loss)
        psi = opt.step(psi, grad)
    final_loss, final_grad = loss_and_grad(psi)
    curve.append(final_loss)
    return TrainedNetwork(
        architecture=arch,
        theta_star=psi,
        final_loss=final_loss,
        grad_norm=float(np.linalg.norm(final_grad)),
        prior_precision=prior_precision,
        noise_variance=float("nan"),  # not a regression likelihood
        input_center=center,
        input_halfwidth=halfwidth,
        loss_curve=tuple(curve),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_laplace_preference(
    net: TrainedNetwork,
    data: list[PreferenceExample],
    covariance_prior_precision: Optional[float] = None,
) -> PreferencePosterior:
    """Gaussian posterior over the score parameters via the Bradley-Terry GGN.

    Each pair contributes G_i^T Lambda_i G_i with G_i the (2, P) Jacobian of
    the pair logits and Lambda_i the softmax curvature, which collapses to a
    weighted outer product of the Jacobian difference with weight p0 * p1.

    The covariance prior precision may be set independently of the training
    ridge (as the regression path does): over a full parameter space the
    training ridge leaves the unconstrained directions so wide that score
    draws would be dominated by prior noise.
    """
    tau = covariance_prior_precision
    if tau is None:
        tau = net.prior_precision
    x0, x1, _ = _pair_arrays(data)
    m = x0.shape[0]
    X = net.scale_inputs(np.concatenate([x0, x1]))
    scores = mlp_forward(net.architecture, net.theta_star, X)
    J = mlp_param_jacobian(net.architecture, net.theta_star, X)
    q = _sigmoid(scores[:m] - scores[m:])
    weights = q * (1.0 - q)
    B = np.sqrt(weights)[:, None] * (J[:m] - J[m:])
    cov = covariance_from_curvature(B, tau, net.architecture.n_params)
    return PreferencePosterior(
        posterior=LaplacePosterior(network=net, covariance_chol=chol_lower(cov))
    )


def pref_thompson_sample(
    post: PreferencePosterior,
    X: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> np.ndarray:
    """One joint draw of the latent score over a pool."""
    return lla_thompson_sample(post.posterior, X, rng=rng, noise=noise)


def pref_sample_scores(
    post: PreferencePosterior, X: np.ndarray, rng: np.random.Generator, n_samples: int
) -> np.ndarray:
    """(n_samples, n) joint score draws; shared by BALD and label prediction."""
    return lla_sample_scores(post.posterior, X, rng=rng, n_samples=n_samples)


def pref_predict_label(
    post: PreferencePosterior,
    x0: np.ndarray,
    x1: np.ndarray,
    n_samples: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Posterior probability that x0 is preferred (label 0), by Monte Carlo."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    X = np.stack([np.asarray(x0, dtype=np.float64), np.asarray(x1, dtype=np.float64)])
    draws = pref_sample_scores(post, X, rng, n_samples)
    return float(np.mean(_sigmoid(draws[:, 0] - draws[:, 1])))
