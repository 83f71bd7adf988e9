"""Gaussian-process regression surrogate with Matern-5/2 and Tanimoto kernels.

Hyperparameters (log lengthscales / signal variance / noise variance) are
trained by full-batch Adam on the exact negative log marginal likelihood of
standardized targets; predictions are mapped back to raw target units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from steerbo.nn import Adam, box_scaling
from steerbo.types import Observation

NOISE_FLOOR = 1e-6
SQRT5 = np.sqrt(5.0)
JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
# Weakly-informative log-normal prior on ARD lengthscales, centered at the
# sqrt(d)/2 init. Plain marginal likelihood with ARD freedom collapses into
# noise-free interpolation on rugged objectives at small m; the prior keeps
# the fit in the smooth regime while data can still move it a few e-folds.
LS_PRIOR_SIGMA = 0.5


class GpFitError(RuntimeError):
    """Raised when the kernel matrix cannot be factorized."""


@dataclass(frozen=True)
class KernelParams:
    log_lengthscales: Optional[np.ndarray]  # None for the Tanimoto kernel
    log_signal_variance: float
    log_noise_variance: float

    def __post_init__(self):
        clamped = max(self.log_noise_variance, np.log(NOISE_FLOOR))
        object.__setattr__(self, "log_noise_variance", float(clamped))
        if self.log_lengthscales is not None:
            object.__setattr__(
                self, "log_lengthscales", np.asarray(self.log_lengthscales, dtype=np.float64)
            )

    @property
    def signal_variance(self) -> float:
        return float(np.exp(self.log_signal_variance))

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.log_noise_variance))


def default_params(kernel_kind: str, d: int) -> KernelParams:
    if kernel_kind == "tanimoto":
        return KernelParams(None, 0.0, np.log(1e-2))
    return KernelParams(np.full(d, np.log(np.sqrt(d) / 2.0)), 0.0, np.log(1e-2))


def _scaled_sqdists(X1: np.ndarray, X2: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    A = X1 / lengthscales
    B = X2 / lengthscales
    r2 = np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(r2, 0.0)


def matern52_gram(X1: np.ndarray, X2: np.ndarray, params: KernelParams) -> np.ndarray:
    """Signal-scaled Matern-5/2 with ARD lengthscales, no noise term."""
    ls = np.exp(params.log_lengthscales)
    r = np.sqrt(_scaled_sqdists(np.atleast_2d(X1), np.atleast_2d(X2), ls))
    return params.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * np.exp(-SQRT5 * r)


def matern52(x: np.ndarray, x2: np.ndarray, params: KernelParams) -> float:
    return float(matern52_gram(np.atleast_2d(x), np.atleast_2d(x2), params)[0, 0])


def tanimoto(u: np.ndarray, v: np.ndarray) -> float:
    """Jaccard similarity of binary vectors; 0 when both are all-zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    inner = float(u @ v)
    denom = float(u @ u) + float(v @ v) - inner
    return inner / denom if denom > 0 else 0.0


def tanimoto_gram(X1: np.ndarray, X2: np.ndarray, params: Optional[KernelParams] = None) -> np.ndarray:
    X1 = np.atleast_2d(np.asarray(X1, dtype=np.float64))
    X2 = np.atleast_2d(np.asarray(X2, dtype=np.float64))
    inner = X1 @ X2.T
    denom = np.sum(X1**2, axis=1)[:, None] + np.sum(X2**2, axis=1)[None, :] - inner
    sim = np.divide(inner, denom, out=np.zeros_like(inner), where=denom > 0)
    return sim if params is None else params.signal_variance * sim


def kernel_gram(kernel_kind: str, X1, X2, params: KernelParams) -> np.ndarray:
    if kernel_kind == "matern52":
        return matern52_gram(X1, X2, params)
    if kernel_kind == "tanimoto":
        return tanimoto_gram(X1, X2, params)
    raise ValueError(f"unknown kernel kind {kernel_kind!r}")


def chol_with_jitter(matrix: np.ndarray, base_jitter: float = 1e-8) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating additive jitter until it succeeds.

    The ladder scales with base_jitter so a retry with a doubled base doubles
    every rung.
    """
    for level in JITTER_LADDER:
        jitter = level * (base_jitter / 1e-8)
        try:
            if jitter > 0:
                matrix = matrix.copy()
                matrix[np.diag_indices_from(matrix)] += jitter
            return np.linalg.cholesky(matrix), jitter
        except np.linalg.LinAlgError:
            continue
    raise GpFitError("Cholesky factorization failed after jitter escalation")


@dataclass(frozen=True)
class GpPosterior:
    """Fitted GP surrogate.

    Inputs are optionally mapped from the campaign box onto [-1, 1] before
    any kernel evaluation so the default lengthscales are scale-free; the
    mapping constants travel with the posterior and train_inputs are stored
    in the mapped coordinates.
    """

    kernel_kind: str
    train_inputs: np.ndarray  # already mapped to model coordinates
    train_targets_std: np.ndarray
    target_mean: float
    target_std: float
    chol_K: np.ndarray
    alpha: np.ndarray
    params: KernelParams
    input_center: float = 0.0
    input_halfwidth: float = 1.0
    nll_curve: tuple[float, ...] = field(default=(), repr=False)

    def scale_inputs(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.input_center) / self.input_halfwidth


def _nll_and_grad(kernel_kind, X, t, vec, d, D2, base_jitter):
    """Penalized negative log marginal likelihood and its gradient.

    The objective is the exact NLL of the standardized targets plus the
    log-normal lengthscale prior (Matern only).
    """
    m = X.shape[0]
    if kernel_kind == "matern52":
        params = KernelParams(vec[:d], float(vec[d]), float(vec[d + 1]))
    else:
        params = KernelParams(None, float(vec[0]), float(vec[1]))
    sv, nv = params.signal_variance, params.noise_variance

    K_sig = kernel_gram(kernel_kind, X, X, params)
    K = K_sig + nv * np.eye(m)
    L, _ = chol_with_jitter(K, base_jitter)
    alpha = cho_solve((L, True), t)
    nll = 0.5 * float(t @ alpha) + float(np.log(np.diag(L)).sum()) + 0.5 * m * np.log(2.0 * np.pi)

    K_inv = cho_solve((L, True), np.eye(m))
    M = K_inv - np.outer(alpha, alpha)  # dNLL/dp = 0.5 tr(M dK/dp)
    grad = np.empty_like(vec)
    if kernel_kind == "matern52":
        ls2 = np.exp(2.0 * params.log_lengthscales)
        r = np.sqrt(np.maximum(_scaled_sqdists(X, X, np.sqrt(ls2)), 0.0))
        envelope = (5.0 / 3.0) * sv * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)
        for j in range(d):
            dK = envelope * (D2[:, :, j] / ls2[j])
            grad[j] = 0.5 * float(np.sum(M * dK))
        grad[d] = 0.5 * float(np.sum(M * K_sig))
        grad[d + 1] = 0.5 * float(np.trace(M)) * nv
        center = np.log(np.sqrt(d) / 2.0)
        dev = vec[:d] - center
        nll += 0.5 * float(dev @ dev) / LS_PRIOR_SIGMA**2
        grad[:d] += dev / LS_PRIOR_SIGMA**2
    else:
        grad[0] = 0.5 * float(np.sum(M * K_sig))
        grad[1] = 0.5 * float(np.trace(M)) * nv
    return nll, grad, params, L, alpha


def fit_gp(
    data: list[Observation],
    kernel_kind: str = "matern52",
    steps: int = 50,
    lr: float = 0.05,
    init_params: Optional[KernelParams] = None,
    base_jitter: float = 1e-8,
    input_bounds: Optional[tuple[float, float]] = None,
) -> GpPosterior:
    """Adam ascent on the log marginal likelihood, warm-startable via init_params."""
    if len(data) < 2:
        raise GpFitError("GP fitting needs at least two observations")
    X = np.stack([obs.x for obs in data])
    y = np.array([obs.y for obs in data])
    if kernel_kind == "tanimoto":
        if not np.isin(X, (0.0, 1.0)).all():
            raise GpFitError("the Tanimoto kernel requires binary inputs")
        if input_bounds is not None:
            raise GpFitError("the Tanimoto kernel operates on raw binary inputs")
    center, halfwidth = box_scaling(input_bounds)
    X = (X - center) / halfwidth
    mu = float(y.mean())
    sd = float(y.std())
    if sd < 1e-12:
        sd = 1.0
    t = (y - mu) / sd
    d = X.shape[1]

    params = init_params if init_params is not None else default_params(kernel_kind, d)
    if kernel_kind == "matern52":
        vec = np.concatenate([params.log_lengthscales, [params.log_signal_variance, params.log_noise_variance]])
        diffs = X[:, None, :] - X[None, :, :]
        D2 = diffs**2
    else:
        vec = np.array([params.log_signal_variance, params.log_noise_variance])
        D2 = None

    opt = Adam(vec.shape[0], lr)
    curve = []
    for _ in range(steps):
        nll, grad, *_ = _nll_and_grad(kernel_kind, X, t, vec, d, D2, base_jitter)
        curve.append(nll)
        vec = opt.step(vec, grad)
        vec[-1] = max(vec[-1], np.log(NOISE_FLOOR))  # noise floor

    nll, _, params, L, alpha = _nll_and_grad(kernel_kind, X, t, vec, d, D2, base_jitter)
    curve.append(nll)
    return GpPosterior(
        kernel_kind=kernel_kind,
        train_inputs=X,
        train_targets_std=t,
        target_mean=mu,
        target_std=sd,
        chol_K=L,
        alpha=alpha,
        params=params,
        input_center=center,
        input_halfwidth=halfwidth,
        nll_curve=tuple(curve),
    )


def gp_predict(post: GpPosterior, pool: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Latent predictive mean and covariance over a pool, in raw target units."""
    pool = post.scale_inputs(np.atleast_2d(pool))
    Ks = kernel_gram(post.kernel_kind, pool, post.train_inputs, post.params)
    Kss = kernel_gram(post.kernel_kind, pool, pool, post.params)
    mean_std = Ks @ post.alpha
    V = solve_triangular(post.chol_K, Ks.T, lower=True)
    cov_std = Kss - V.T @ V
    cov_std = 0.5 * (cov_std + cov_std.T)
    cov_std[np.diag_indices_from(cov_std)] += 1e-10
    mean = post.target_mean + post.target_std * mean_std
    return mean, post.target_std**2 * cov_std


def gp_thompson_sample(
    post: GpPosterior, pool: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One joint posterior function draw over the pool."""
    pool = np.atleast_2d(pool)
    if pool.shape[0] > 4096:
        raise ValueError(f"pool of {pool.shape[0]} exceeds the 4096-point dense budget")
    mean, cov = gp_predict(post, pool)
    L, _ = chol_with_jitter(cov)
    return mean + L @ rng.standard_normal(pool.shape[0])
