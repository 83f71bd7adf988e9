"""Gaussian parameter posteriors for trained MLPs via Gauss-Newton curvature.

The posterior covariance is (GGN + tau * I)^-1 over the full parameter
vector. The curvature factor B (GGN = B^T B) has at most one row per
training case, so the dense P x P covariance is assembled from an SVD of B
instead of inverting a P x P matrix directly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from steerbo.nn import MlpArchitecture, TrainedNetwork, mlp_forward, mlp_param_jacobian
from steerbo.store import PosteriorSnapshot
from steerbo.types import Observation

EVIDENCE_GRID = tuple(np.logspace(-3.0, 3.0, 13))


class LaplaceError(RuntimeError):
    """Raised when a posterior covariance cannot be factorized."""


@dataclass(frozen=True)
class LaplacePosterior:
    network: TrainedNetwork
    covariance_chol: np.ndarray  # (P, P) lower triangular

    @property
    def n_params(self) -> int:
        return self.network.architecture.n_params


def covariance_from_curvature(B: np.ndarray, prior_precision: float, n_params: int) -> np.ndarray:
    """Dense (B^T B + tau I)^-1 built from the thin SVD of B (rows <= cases)."""
    tau = float(prior_precision)
    if tau <= 0:
        raise LaplaceError("prior precision must be positive")
    cov = np.eye(n_params) / tau
    if B.shape[0] > 0:
        _, s, vt = np.linalg.svd(B, full_matrices=False)
        scale = 1.0 / (s**2 + tau) - 1.0 / tau
        cov += (vt.T * scale) @ vt
    return 0.5 * (cov + cov.T)


def chol_lower(matrix: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise LaplaceError(f"posterior covariance is not positive definite: {exc}") from None


def regression_evidence(
    net: TrainedNetwork, singular_values: np.ndarray, sq_resid_sum: float, m: int, tau: float
) -> float:
    """Marginal-likelihood estimate of the data at fixed MAP, as a function of tau."""
    sigma2 = net.noise_variance
    theta = net.theta_star
    p = theta.shape[0]
    loglik = -0.5 * sq_resid_sum / sigma2 - 0.5 * m * np.log(2.0 * np.pi * sigma2)
    log_prior_at_map = -0.5 * tau * float(theta @ theta) + 0.5 * p * np.log(tau)
    r = singular_values.shape[0]
    logdet_precision = float(np.sum(np.log(singular_values**2 + tau))) + (p - r) * np.log(tau)
    return float(loglik + log_prior_at_map - 0.5 * logdet_precision)


def fit_laplace_regression(
    net: TrainedNetwork,
    data: list[Observation],
    prior_precision_grid: Optional[tuple[float, ...]] = None,
) -> LaplacePosterior:
    """Gaussian posterior around theta_star with evidence-selected precision.

    Curvature is the Gauss-Newton matrix J^T J / noise_variance over the
    standardized training targets.
    """
    grid = EVIDENCE_GRID if prior_precision_grid is None else prior_precision_grid
    X = net.scale_inputs(np.stack([obs.x for obs in data]))
    y = np.array([obs.y for obs in data])
    t = (y - net.target_mean) / net.target_std
    J = mlp_param_jacobian(net.architecture, net.theta_star, X)
    B = J / np.sqrt(net.noise_variance)
    s = np.linalg.svd(B, compute_uv=False)
    resid = mlp_forward(net.architecture, net.theta_star, X) - t
    sq_resid_sum = float(resid @ resid)

    evidences = [regression_evidence(net, s, sq_resid_sum, X.shape[0], tau) for tau in grid]
    tau_star = float(grid[int(np.argmax(evidences))])

    cov = covariance_from_curvature(B, tau_star, net.architecture.n_params)
    return LaplacePosterior(
        network=replace(net, prior_precision=tau_star),
        covariance_chol=chol_lower(cov),
    )


def lla_predict(post: LaplacePosterior, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Linearized predictive mean and covariance over a pool, in target units."""
    X = np.atleast_2d(X)
    _check_pool(X)
    net = post.network
    mean = net.predict(X)
    J = mlp_param_jacobian(net.architecture, net.theta_star, net.scale_inputs(X))
    half = J @ post.covariance_chol  # J Sigma J^T = (J L)(J L)^T
    cov = (half @ half.T) * net.target_std**2
    cov = 0.5 * (cov + cov.T)
    cov[np.diag_indices_from(cov)] += 1e-10
    return mean, cov


def lla_thompson_sample(
    post: LaplacePosterior,
    X: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> np.ndarray:
    """One joint function draw over the pool via a parameter-space sample."""
    return lla_sample_scores(post, X, rng=rng, n_samples=1, noise=noise)[0]


def lla_sample_scores(
    post: LaplacePosterior,
    X: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    n_samples: int = 1,
    noise: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(n_samples, n) joint draws f(x) = f_MAP(x) + J(x) (theta - theta_star)."""
    X = np.atleast_2d(X)
    _check_pool(X)
    net = post.network
    p = post.n_params
    if noise is None:
        if rng is None:
            raise ValueError("an RNG is required when no noise vector is injected")
        eps = rng.standard_normal((p, n_samples))
    else:
        eps = np.asarray(noise, dtype=np.float64).reshape(p, -1)
    delta = post.covariance_chol @ eps  # (P, S)
    J = mlp_param_jacobian(net.architecture, net.theta_star, net.scale_inputs(X))
    return net.predict(X)[None, :] + (J @ delta).T * net.target_std


def _check_pool(X: np.ndarray) -> None:
    if X.shape[0] > 4096:
        raise ValueError(f"pool of {X.shape[0]} exceeds the 4096-point dense budget")


def posterior_to_snapshot(post: LaplacePosterior, training_set_size: int) -> PosteriorSnapshot:
    net = post.network
    return PosteriorSnapshot(
        map_parameters=net.theta_star,
        covariance_factor=post.covariance_chol,
        architecture=net.architecture.layer_sizes,
        training_set_size=training_set_size,
        input_center=net.input_center,
        input_halfwidth=net.input_halfwidth,
    )


def snapshot_to_posterior(snap: PosteriorSnapshot) -> LaplacePosterior:
    sizes = snap.architecture
    arch = MlpArchitecture(input_dim=sizes[0], hidden=sizes[1:-1], output_dim=sizes[-1])
    net = TrainedNetwork(
        architecture=arch,
        theta_star=snap.map_parameters,
        final_loss=float("nan"),
        grad_norm=float("nan"),
        prior_precision=float("nan"),
        input_center=snap.input_center,
        input_halfwidth=snap.input_halfwidth,
    )
    return LaplacePosterior(network=net, covariance_chol=snap.covariance_factor)
