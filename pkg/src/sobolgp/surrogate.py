"""Gaussian process regression with a constant mean and an ARD
squared-exponential kernel.

Hyperparameters are fitted by maximising the log marginal likelihood with
multi-start L-BFGS-B in log space.  The constant mean is profiled out: for
fixed kernel hyperparameters its maximum-likelihood value is the generalized
least-squares estimate, so it never enters the optimizer.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotrf
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .design import DesignMatrix, Frame, ResponseVector, make_rng
from .exceptions import (
    FitFailureError,
    IllConditionedKernelError,
    ShapeError,
    ValidationError,
)

__all__ = [
    "GprHyperparams",
    "TrainingSet",
    "FitConfig",
    "GaussianProcessSurrogate",
    "GprModel",
    "kernel_se",
    "kernel_matrix",
    "cholesky_with_jitter",
    "log_marginal_likelihood",
    "fit_gpr",
    "predict_mean",
    "predict_cov",
    "sample_posterior",
]

_LOG_2PI = math.log(2.0 * math.pi)
_PREDICT_BLOCK = 8192


@dataclass(frozen=True)
class GprHyperparams:
    mu0: float
    sigma0_sq: float
    length_scales: tuple
    nugget: float = 1e-10

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.length_scales))
        object.__setattr__(self, "length_scales", ls)
        if not self.sigma0_sq > 0:
            raise ValidationError("sigma0_sq must be positive")
        if not ls or min(ls) <= 0:
            raise ValidationError("length scales must be positive")
        if not self.nugget >= 0:
            raise ValidationError("nugget must be non-negative")

    def to_dict(self):
        return {
            "mu0": float(self.mu0),
            "sigma0_sq": float(self.sigma0_sq),
            "length_scales": list(self.length_scales),
            "nugget": float(self.nugget),
        }


@dataclass(frozen=True, eq=False)
class TrainingSet:
    inputs: DesignMatrix
    responses: ResponseVector

    def __post_init__(self):
        if self.inputs.frame is Frame.PHYSICAL:
            raise ValidationError("training inputs must be in the unit or gaussian frame")
        if not self.responses.standardized:
            raise ValidationError("training responses must be standardized")
        if self.inputs.n != self.responses.n:
            raise ShapeError(
                f"{self.inputs.n} inputs but {self.responses.n} responses"
            )
        if self.inputs.n < 2:
            raise ValidationError("a training set needs at least two points")


@dataclass(frozen=True)
class FitConfig:
    n_restarts: int = 8
    length_scale_bounds: tuple = (0.05, 20.0)
    log_sigma0_sq_bounds: tuple = (-6.0, 6.0)
    nugget: float = 1e-10
    max_nugget: float = 1e-4
    seed: int = 0
    n_jobs: int = 1


def kernel_matrix(X1, X2, sigma0_sq, length_scales):
    ls = np.asarray(length_scales, dtype=float)
    sq = cdist(np.asarray(X1, dtype=float) / ls, np.asarray(X2, dtype=float) / ls, "sqeuclidean")
    return sigma0_sq * np.exp(-0.5 * sq)


def _sq_diffs(X):
    # (d, n, n) per-dimension squared differences, exact (no expansion)
    return (X.T[:, :, None] - X.T[:, None, :]) ** 2


def kernel_se(a, b, hyper: GprHyperparams) -> float:
    """Squared-exponential covariance between two points."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    ls = np.asarray(hyper.length_scales)
    if a.shape != b.shape or a.shape != ls.shape:
        raise ShapeError(
            f"points of shape {a.shape} and {b.shape} for {ls.size} length scales"
        )
    return float(hyper.sigma0_sq * np.exp(-0.5 * np.sum(((a - b) / ls) ** 2)))


def cholesky_with_jitter(K, nugget=1e-10, max_nugget=1e-4):
    """Lower Cholesky factor of ``K + nugget*I``, escalating ``nugget`` x10.

    Only the lower triangle of ``K`` is read. Returns ``(L, nugget_used)``.
    """
    n = K.shape[0]
    diag = np.diag_indices(n)
    jitter = float(nugget)
    while True:
        Kt = np.array(K, dtype=float, order="F")
        Kt[diag] += jitter
        L, info = dpotrf(Kt, lower=1, clean=1, overwrite_a=1)
        if info == 0 and np.all(np.isfinite(np.diag(L))):
            return L, jitter
        if jitter >= max_nugget * (1 - 1e-12):
            raise IllConditionedKernelError(
                f"Cholesky failed with jitter up to {jitter:.1e} (n={n})"
            )
        jitter = min(max(jitter * 10.0, 1e-16), max_nugget)


def _profiled_objective(theta, X, y, sqd, nugget, max_nugget, grad=True):
    """Negative profiled log marginal likelihood (and gradient) in log space."""
    sigma0_sq = math.exp(theta[0])
    inv_ls2 = np.exp(-2.0 * np.asarray(theta[1:]))
    scaled = np.tensordot(inv_ls2, sqd, axes=1)
    K = sigma0_sq * np.exp(-0.5 * scaled)
    L, _ = cholesky_with_jitter(K, nugget, max_nugget)
    n = y.size
    ones = np.ones(n)
    k_inv_1 = cho_solve((L, True), ones)
    k_inv_y = cho_solve((L, True), y)
    mu0 = float(ones @ k_inv_y / (ones @ k_inv_1))
    alpha = k_inv_y - mu0 * k_inv_1
    resid = y - mu0
    lml = -0.5 * resid @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG_2PI
    if not grad:
        return -lml, mu0
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    g = np.empty(theta.size)
    WK = W * K
    g[0] = 0.5 * np.sum(WK)
    for i in range(theta.size - 1):
        g[i + 1] = 0.5 * np.sum(WK * sqd[i]) * inv_ls2[i]
    return -lml, -g


class GaussianProcessSurrogate(RegressorMixin, BaseEstimator):
    """GP regressor with a constant mean and ARD squared-exponential kernel.

    Parameters
    ----------
    n_restarts : int
        Number of L-BFGS-B starts. The first starts from unit length scales
        and unit variance, the rest are drawn uniformly in the log bounds.
    length_scale_bounds : (float, float)
        Bounds on every length scale.
    log_sigma0_sq_bounds : (float, float)
        Bounds on the natural log of the prior variance.
    nugget : float
        Initial diagonal jitter; escalated x10 on Cholesky failure.
    max_nugget : float
        Largest jitter tried before giving up.
    random_state : int
        Seed for the restart draws.
    n_jobs : int
        Threads used for restarts. Results do not depend on it.

    Attributes
    ----------
    hyper_ : GprHyperparams
    log_ml_ : float
    chol_ : ndarray
        Lower Cholesky factor of ``K + nugget*I``.
    alpha_ : ndarray
    restarts_ : list of dict
        Per-restart log marginal likelihood or failure message.
    """

    def __init__(
        self,
        n_restarts=8,
        length_scale_bounds=(0.05, 20.0),
        log_sigma0_sq_bounds=(-6.0, 6.0),
        nugget=1e-10,
        max_nugget=1e-4,
        random_state=0,
        n_jobs=1,
    ):
        self.n_restarts = n_restarts
        self.length_scale_bounds = length_scale_bounds
        self.log_sigma0_sq_bounds = log_sigma0_sq_bounds
        self.nugget = nugget
        self.max_nugget = max_nugget
        self.random_state = random_state
        self.n_jobs = n_jobs

    # fitting

    def _bounds(self, d):
        lo, hi = self.length_scale_bounds
        return [tuple(self.log_sigma0_sq_bounds)] + [(math.log(lo), math.log(hi))] * d

    def _starts(self, d):
        bounds = np.array(self._bounds(d))
        children = np.random.SeedSequence(int(self.random_state)).spawn(int(self.n_restarts))
        starts = []
        for i, child in enumerate(children):
            if i == 0:
                x0 = np.zeros(d + 1)
            else:
                rng = make_rng(child)
                x0 = rng.uniform(bounds[:, 0], bounds[:, 1])
            starts.append(np.clip(x0, bounds[:, 0], bounds[:, 1]))
        return starts

    def _run_restart(self, x0, X, y, sqd):
        fun = lambda t: _profiled_objective(t, X, y, sqd, self.nugget, self.max_nugget)
        try:
            res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=self._bounds(X.shape[1]))
        except IllConditionedKernelError as exc:
            return None, str(exc)
        if not np.isfinite(res.fun):
            return None, "non-finite objective"
        return res, None

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[0] < 2:
            raise ValidationError("need at least two training points")
        if self.n_restarts < 1:
            raise ValidationError("n_restarts must be >= 1")
        sqd = _sq_diffs(X)
        starts = self._starts(X.shape[1])
        run = lambda x0: self._run_restart(x0, X, y, sqd)
        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=int(self.n_jobs)) as pool:
                results = list(pool.map(run, starts))
        else:
            results = [run(x0) for x0 in starts]

        best, best_idx, diagnostics = None, -1, []
        for i, (res, err) in enumerate(results):
            if res is None:
                diagnostics.append({"restart": i, "error": err})
                continue
            diagnostics.append({"restart": i, "log_ml": float(-res.fun), "nit": int(res.nit)})
            # strict '>' keeps the lowest index on ties
            if best is None or -res.fun > -best.fun:
                best, best_idx = res, i
        if best is None:
            raise FitFailureError("every likelihood restart failed", diagnostics)

        theta = best.x
        _, mu0 = _profiled_objective(theta, X, y, sqd, self.nugget, self.max_nugget, grad=False)
        hyper = GprHyperparams(
            mu0=mu0,
            sigma0_sq=math.exp(theta[0]),
            length_scales=tuple(np.exp(theta[1:])),
            nugget=self.nugget,
        )
        self._set_state(X, y, hyper)
        self.restarts_ = diagnostics
        self.best_restart_ = best_idx
        return self

    def _set_state(self, X, y, hyper):
        X = np.array(X, dtype=float)
        y = np.array(y, dtype=float)
        ls = np.asarray(hyper.length_scales)
        if ls.size != X.shape[1]:
            raise ShapeError("length scale count does not match input width")
        K = kernel_matrix(X, X, hyper.sigma0_sq, ls)
        L, used = cholesky_with_jitter(K, hyper.nugget, max(self.max_nugget, hyper.nugget))
        hyper = GprHyperparams(hyper.mu0, hyper.sigma0_sq, hyper.length_scales, used)
        self.X_train_ = X
        self.y_train_ = y
        self.hyper_ = hyper
        self.chol_ = L
        self.alpha_ = cho_solve((L, True), y - hyper.mu0)
        resid = y - hyper.mu0
        self.log_ml_ = float(
            -0.5 * resid @ self.alpha_ - np.sum(np.log(np.diag(L))) - 0.5 * y.size * _LOG_2PI
        )
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_hyperparams(cls, X, y, hyper: GprHyperparams, **params):
        """A fitted model at fixed hyperparameters (no optimization)."""
        model = cls(**params)
        X, y = check_X_y(X, y, y_numeric=True)
        model._set_state(X, y, hyper)
        model.input_frame_ = Frame.GAUSSIAN
        model.restarts_ = []
        model.best_restart_ = -1
        return model

    # prediction

    def _check_query(self, X):
        check_is_fitted(self, "alpha_")
        X = check_array(X, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(
                f"query has {X.shape[1]} columns, model was fitted on {self.n_features_in_}"
            )
        return X

    def _cross(self, X):
        h = self.hyper_
        return kernel_matrix(X, self.X_train_, h.sigma0_sq, np.asarray(h.length_scales))

    def predict(self, X, return_std=False, return_cov=False):
        """Posterior mean, optionally with standard deviation or full covariance."""
        X = self._check_query(X)
        if return_cov:
            mean, cov = self._mean_cov(X)
            return mean, cov
        mean = np.empty(X.shape[0])
        std = np.empty(X.shape[0]) if return_std else None
        for s in range(0, X.shape[0], _PREDICT_BLOCK):
            Ks = self._cross(X[s:s + _PREDICT_BLOCK])
            mean[s:s + _PREDICT_BLOCK] = self.hyper_.mu0 + Ks @ self.alpha_
            if return_std:
                v = solve_triangular(self.chol_, Ks.T, lower=True)
                var = self.hyper_.sigma0_sq - np.sum(v * v, axis=0)
                std[s:s + _PREDICT_BLOCK] = np.sqrt(np.maximum(var, 0.0))
        return (mean, std) if return_std else mean

    def _mean_cov(self, X, symmetrize=True):
        h = self.hyper_
        Ks = self._cross(X)
        mean = h.mu0 + Ks @ self.alpha_
        v = solve_triangular(self.chol_, Ks.T, lower=True, check_finite=False)
        cov = kernel_matrix(X, X, h.sigma0_sq, np.asarray(h.length_scales))
        cov -= v.T @ v
        if symmetrize:
            cov = 0.5 * (cov + cov.T)
        return mean, cov

    def sample_y(self, X, n_samples=1, random_state=None):
        """Joint posterior draws, shape ``(n_samples, n_query)``."""
        X = self._check_query(X)
        if n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        mean, cov = self._mean_cov(X, symmetrize=False)
        L, _ = cholesky_with_jitter(cov, self.hyper_.nugget, max(self.max_nugget, self.hyper_.nugget))
        rng = make_rng(0 if random_state is None else random_state)
        z = rng.standard_normal((X.shape[0], int(n_samples)))
        return (mean[:, None] + L @ z).T

    def log_marginal_likelihood(self, hyper: GprHyperparams | None = None):
        check_is_fitted(self, "alpha_")
        if hyper is None:
            return self.log_ml_
        return _log_ml(self.X_train_, self.y_train_, hyper, self.max_nugget)

    # persistence

    def to_dict(self):
        check_is_fitted(self, "alpha_")
        return {
            # n_jobs is a runtime choice and must not leak into file digests
            "params": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in self.get_params().items() if k != "n_jobs"},
            "hyper": self.hyper_.to_dict(),
            "X_train": self.X_train_.tolist(),
            "y_train": self.y_train_.tolist(),
            "log_ml": self.log_ml_,
            "restarts": self.restarts_,
            "best_restart": self.best_restart_,
            "input_frame": getattr(self, "input_frame_", Frame.GAUSSIAN).value,
        }

    @classmethod
    def from_dict(cls, d):
        params = dict(d["params"])
        for key in ("length_scale_bounds", "log_sigma0_sq_bounds"):
            params[key] = tuple(params[key])
        h = d["hyper"]
        hyper = GprHyperparams(h["mu0"], h["sigma0_sq"], tuple(h["length_scales"]), h["nugget"])
        model = cls(**params)
        model._set_state(np.array(d["X_train"], dtype=float), np.array(d["y_train"], dtype=float), hyper)
        model.restarts_ = list(d.get("restarts", []))
        model.best_restart_ = d.get("best_restart", -1)
        model.input_frame_ = Frame(d.get("input_frame", "gaussian"))
        return model


GprModel = GaussianProcessSurrogate


def _log_ml(X, y, hyper, max_nugget=1e-4):
    K = kernel_matrix(X, X, hyper.sigma0_sq, np.asarray(hyper.length_scales))
    L, _ = cholesky_with_jitter(K, hyper.nugget, max(max_nugget, hyper.nugget))
    resid = y - hyper.mu0
    alpha = cho_solve((L, True), resid)
    return float(-0.5 * resid @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * y.size * _LOG_2PI)


def log_marginal_likelihood(training: TrainingSet, hyper: GprHyperparams) -> float:
    """Gaussian log marginal likelihood of the standardized responses."""
    X = np.asarray(training.inputs.values)
    if X.shape[1] != len(hyper.length_scales):
        raise ShapeError("length scale count does not match input width")
    return _log_ml(X, np.asarray(training.responses.values), hyper)


def fit_gpr(training: TrainingSet, config: FitConfig = FitConfig()) -> GaussianProcessSurrogate:
    model = GaussianProcessSurrogate(
        n_restarts=config.n_restarts,
        length_scale_bounds=tuple(config.length_scale_bounds),
        log_sigma0_sq_bounds=tuple(config.log_sigma0_sq_bounds),
        nugget=config.nugget,
        max_nugget=config.max_nugget,
        random_state=config.seed,
        n_jobs=config.n_jobs,
    )
    model.fit(np.asarray(training.inputs.values), np.asarray(training.responses.values))
    model.input_frame_ = training.inputs.frame
    return model


def _check_frame(model, query):
    expected = getattr(model, "input_frame_", Frame.GAUSSIAN)
    if query.frame is not expected:
        raise ValidationError(
            f"model was fitted in the {expected.value} frame, query is {query.frame.value}"
        )


def predict_mean(model: GaussianProcessSurrogate, query: DesignMatrix) -> ResponseVector:
    """Posterior mean in standardized units."""
    _check_frame(model, query)
    return ResponseVector(model.predict(query.values), standardized=True)


def predict_cov(model: GaussianProcessSurrogate, query: DesignMatrix) -> np.ndarray:
    _check_frame(model, query)
    return model.predict(query.values, return_cov=True)[1]


def sample_posterior(model: GaussianProcessSurrogate, query: DesignMatrix, k: int, seed) -> np.ndarray:
    _check_frame(model, query)
    return model.sample_y(query.values, n_samples=k, random_state=seed)
