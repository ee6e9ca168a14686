"""Gaussian mixture model fitted by expectation-maximisation.

P(x | theta) = sum_k lambda_k N(x | mu_k, Sigma_k)

Scores are log-densities computed with log-sum-exp over per-component
Cholesky log-densities. EM adds ``reg * I`` to every covariance in the
M-step and only accepts an update that does not lower the total
log-likelihood, so the recorded likelihood trace is non-decreasing.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from hmof_vad.util.errors import DataError, ModelError
from hmof_vad.util.logging import log_event

logger = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)
# Components lighter than this are re-seeded.
_COLLAPSE_WEIGHT = 1e-8


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Mixture parameters theta = {lambda_k, mu_k, Sigma_k}.

    Attributes:
        weights: (K,) mixture weights summing to 1.
        means: (K, h) component means.
        covariances: (K, h, h) symmetric positive-definite covariances.
        reg: Diagonal regulariser added during fitting.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    reg: float = 0.0

    def __post_init__(self) -> None:
        k, h = self.means.shape
        if self.weights.shape != (k,) or self.covariances.shape != (k, h, h):
            raise ModelError(
                f"inconsistent mixture shapes: weights {self.weights.shape}, "
                f"means {self.means.shape}, covariances {self.covariances.shape}"
            )
        if np.any(self.weights < 0) or not np.isclose(self.weights.sum(), 1.0, atol=1e-9):
            raise ModelError("mixture weights must be non-negative and sum to 1")

    @property
    def n_components(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def cholesky_factors(self) -> np.ndarray:
        """Lower Cholesky factor of every covariance.

        Raises:
            ModelError: If a covariance is not positive definite.
        """
        try:
            return np.stack([linalg.cholesky(cov, lower=True) for cov in self.covariances])
        except linalg.LinAlgError as e:
            raise ModelError(f"covariance is not positive definite: {e}") from e


@dataclass
class EmResult:
    """Outcome of ``fit_em``.

    Attributes:
        model: Fitted mixture.
        log_likelihoods: Total log-likelihood of every accepted parameter set.
        n_iter: EM iterations run.
        converged: True if the improvement fell below tol before max_iters.
    """

    model: GmmModel
    log_likelihoods: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def _as_points(x: np.ndarray, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    points = arr[None, :] if arr.ndim == 1 else arr
    if points.ndim != 2 or points.shape[1] != dim:
        raise DataError(f"feature dimension {points.shape[-1]} does not match model dimension {dim}")
    return points


def component_log_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """log N(x_i | mu_k, Sigma_k) as an (n, K) array."""
    points = _as_points(x, model.dim)
    chols = model.cholesky_factors()
    out = np.empty((points.shape[0], model.n_components))
    for k in range(model.n_components):
        diff = points - model.means[k]
        solved = linalg.solve_triangular(chols[k], diff.T, lower=True)
        maha = np.sum(solved * solved, axis=0)
        log_det = 2.0 * np.sum(np.log(np.diag(chols[k])))
        out[:, k] = -0.5 * (model.dim * _LOG_2PI + log_det + maha)
    return out


def _log_weights(weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(weights)


def score_samples(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """log P(x_i | theta) for every row of an (n, h) array."""
    return logsumexp(component_log_densities(model, x) + _log_weights(model.weights), axis=1)


def score(model: GmmModel, x: np.ndarray) -> float:
    """log P(x | theta) for one latent vector.

    Raises:
        DataError: If the dimension does not match the model.
        ModelError: If a covariance is not positive definite.
    """
    vector = np.asarray(x, dtype=np.float64).ravel()
    return float(score_samples(model, vector)[0])


def _population_covariance(data: np.ndarray) -> np.ndarray:
    centred = data - data.mean(axis=0)
    return centred.T @ centred / data.shape[0]


def fit_em(
    features: np.ndarray,
    k: int,
    *,
    seed: int = 1,
    max_iters: int = 200,
    tol: float = 1e-6,
    reg: float = 1e-6,
) -> EmResult:
    """Fit a K-component mixture by maximum likelihood.

    Initialisation: K distinct random data points as means, the shared data
    covariance (+ reg I) for every component, uniform weights.

    Args:
        features: (n, h) training points.
        k: Number of components.
        seed: Initialisation seed.
        max_iters: Maximum EM iterations.
        tol: Stop once the log-likelihood gain drops below this.
        reg: Diagonal covariance regulariser.

    Returns:
        EmResult with the fitted model and likelihood trace.

    Raises:
        ValueError: If k < 1 or reg <= 0.
        DataError: If the data are non-finite or too few (n < k * (h + 1)).
    """
    if k < 1:
        raise ValueError(f"number of components must be >= 1, got {k}")
    if not reg > 0:
        raise ValueError(f"reg must be > 0, got {reg}")
    data = np.asarray(features, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2 or data.shape[0] == 0:
        raise DataError("cannot fit a mixture to an empty feature set")
    if not np.all(np.isfinite(data)):
        raise DataError("cannot fit a mixture to non-finite features")
    n, h = data.shape
    if n < k * (h + 1):
        raise DataError(
            f"insufficient data: {n} points for K={k} components of dimension {h} "
            f"(need at least {k * (h + 1)})"
        )

    rng = np.random.default_rng(seed)
    eye = np.eye(h)
    shared = _population_covariance(data) + reg * eye
    model = GmmModel(
        weights=np.full(k, 1.0 / k),
        means=data[rng.choice(n, size=k, replace=False)].copy(),
        covariances=np.repeat(shared[None, :, :], k, axis=0),
        reg=reg,
    )

    log_joint = component_log_densities(model, data) + _log_weights(model.weights)
    per_point = logsumexp(log_joint, axis=1)
    trace = [float(per_point.sum())]
    converged = False
    n_iter = 0

    for n_iter in range(1, max_iters + 1):
        resp = np.exp(log_joint - per_point[:, None])
        nk = resp.sum(axis=0)

        weights = nk / n
        means = np.empty((k, h))
        covs = np.empty((k, h, h))
        for j in range(k):
            if weights[j] < _COLLAPSE_WEIGHT:
                worst = int(np.argmin(per_point))
                means[j] = data[worst]
                covs[j] = shared
                weights[j] = 1.0 / n
                log_event(
                    logger,
                    logging.DEBUG,
                    f"EM component {j} collapsed; re-seeded at point {worst}",
                    event="em_component_reseeded",
                    component=j,
                    point=worst,
                )
                continue
            means[j] = resp[:, j] @ data / nk[j]
            diff = data - means[j]
            covs[j] = (resp[:, j, None] * diff).T @ diff / nk[j] + reg * eye
        weights = weights / weights.sum()

        candidate = GmmModel(weights=weights, means=means, covariances=covs, reg=reg)
        cand_joint = component_log_densities(candidate, data) + _log_weights(candidate.weights)
        cand_point = logsumexp(cand_joint, axis=1)
        cand_ll = float(cand_point.sum())

        if cand_ll < trace[-1]:
            converged = True
            break

        gain = cand_ll - trace[-1]
        model, log_joint, per_point = candidate, cand_joint, cand_point
        trace.append(cand_ll)
        if gain < tol:
            converged = True
            break

    log_event(
        logger,
        logging.INFO,
        f"EM finished after {n_iter} iterations: log-likelihood {trace[-1]:.6g}",
        event="em_converged" if converged else "em_max_iters",
        k=k,
        n_points=n,
        n_iter=n_iter,
        log_likelihood=trace[-1],
    )
    return EmResult(model=model, log_likelihoods=trace, n_iter=n_iter, converged=converged)
