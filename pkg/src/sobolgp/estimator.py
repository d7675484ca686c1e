"""Scikit-learn style front end.

:class:`SurrogateSensitivity` chains the preprocessing the surrogate needs
(physical inputs to the unit or gaussian frame, standardized responses) with a
:class:`~sobolgp.surrogate.GaussianProcessSurrogate`, and computes Sobol'
indices on the fitted posterior.  :class:`SobolAnalyzer` runs the pick-freeze
estimators directly on any evaluable model.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import __version__
from .design import (
    DesignMatrix,
    Frame,
    ParameterSpace,
    ResponseStandardizer,
    to_gaussian,
    to_unit,
)
from .exceptions import IntegrityError, ShapeError, ValidationError
from .sobol import sobol_on_function, sobol_on_surrogate
from .surrogate import GaussianProcessSurrogate

__all__ = ["SurrogateSensitivity", "SobolAnalyzer", "MODEL_FORMAT"]

MODEL_FORMAT = "sobolgp.surrogate/1"


def _digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


class SurrogateSensitivity(RegressorMixin, BaseEstimator):
    """GP surrogate over a physical parameter space.

    ``fit`` maps inputs to the unit frame (or takes them directly through
    ``X_unit``), and for ``input_frame="gaussian"`` on through the inverse
    normal CDF; responses are standardized with a population standard
    deviation.  ``predict`` returns physical units.

    Parameters
    ----------
    space : ParameterSpace
    input_frame : {"unit", "gaussian"}
        Coordinates the GP is fitted in.  Sobol' indices are invariant to
        the choice, the surrogate's accuracy is not: a stationary kernel on
        the unit frame resolves the benchmark functions noticeably better.
    n_restarts, length_scale_bounds, log_sigma0_sq_bounds, nugget, max_nugget,
    random_state, n_jobs
        Forwarded to :class:`GaussianProcessSurrogate`.
    """

    def __init__(
        self,
        space=None,
        input_frame="unit",
        n_restarts=8,
        length_scale_bounds=(0.05, 20.0),
        log_sigma0_sq_bounds=(-6.0, 6.0),
        nugget=1e-10,
        max_nugget=1e-4,
        random_state=0,
        n_jobs=1,
    ):
        self.space = space
        self.input_frame = input_frame
        self.n_restarts = n_restarts
        self.length_scale_bounds = length_scale_bounds
        self.log_sigma0_sq_bounds = log_sigma0_sq_bounds
        self.nugget = nugget
        self.max_nugget = max_nugget
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _frame(self):
        frame = Frame(self.input_frame)
        if frame is Frame.PHYSICAL:
            raise ValidationError("input_frame must be 'unit' or 'gaussian'")
        return frame

    def _from_unit(self, unit):
        if self._frame() is Frame.GAUSSIAN:
            unit = to_gaussian(unit)
        return np.array(unit.values)

    def _transform(self, X):
        X = check_array(X)
        if X.shape[1] != self.space.dim:
            raise ShapeError(f"expected {self.space.dim} columns, got {X.shape[1]}")
        return self._from_unit(to_unit(DesignMatrix(X, Frame.PHYSICAL, self.space)))

    def fit(self, X, y, X_unit=None):
        if self.space is None:
            raise ValidationError("SurrogateSensitivity needs a parameter space")
        X, y = check_X_y(X, y, y_numeric=True)
        if X_unit is not None:
            unit = DesignMatrix(check_array(X_unit), Frame.UNIT, self.space)
            if unit.n != X.shape[0]:
                raise ShapeError("X_unit and X disagree on the number of rows")
            Z = self._from_unit(unit)
        else:
            Z = self._transform(X)
        self.standardizer_ = ResponseStandardizer().fit(y)
        ys = self.standardizer_.transform(y)
        self.gp_ = GaussianProcessSurrogate(
            n_restarts=self.n_restarts,
            length_scale_bounds=tuple(self.length_scale_bounds),
            log_sigma0_sq_bounds=tuple(self.log_sigma0_sq_bounds),
            nugget=self.nugget,
            max_nugget=self.max_nugget,
            random_state=self.random_state,
            n_jobs=self.n_jobs,
        ).fit(Z, ys)
        self.gp_.input_frame_ = self._frame()
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def response_scale(self):
        check_is_fitted(self, "gp_")
        return self.standardizer_.mean_, self.standardizer_.scale_

    def predict(self, X, return_std=False):
        check_is_fitted(self, "gp_")
        Z = self._transform(X)
        mean, sd = self.response_scale
        if return_std:
            mu, std = self.gp_.predict(Z, return_std=True)
            return mu * sd + mean, std * sd
        return self.gp_.predict(Z) * sd + mean

    def sobol(self, n_base=2**14, k_draws=50, seed=0, n_bootstrap=500, joint_draw_size=4096):
        """Sobol' indices on the posterior; moments in physical units."""
        check_is_fitted(self, "gp_")
        return sobol_on_surrogate(
            self.gp_, self.space, n_base, k_draws, seed,
            n_bootstrap=n_bootstrap,
            joint_draw_size=joint_draw_size,
            response_scale=self.response_scale,
            frame=self._frame(),
        )

    # persistence

    def to_dict(self, provenance=None):
        check_is_fitted(self, "gp_")
        payload = {
            "format": MODEL_FORMAT,
            "version": __version__,
            "space": self.space.to_dict(),
            "frame": self._frame().value,
            "standardization": {"mean": self.standardizer_.mean_, "sd": self.standardizer_.scale_},
            "gp": self.gp_.to_dict(),
            "provenance": provenance or {},
        }
        return {"payload": payload, "sha256": _digest(payload)}

    def save(self, path, provenance=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(provenance), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc):
        try:
            payload = doc["payload"]
            if doc["sha256"] != _digest(payload):
                raise IntegrityError("model file digest mismatch; the file was modified or truncated")
            if payload.get("format") != MODEL_FORMAT:
                raise IntegrityError(f"unknown model format {payload.get('format')!r}")
            space = ParameterSpace.from_dict(payload["space"])
            gp = GaussianProcessSurrogate.from_dict(payload["gp"])
            std = payload["standardization"]
        except (KeyError, TypeError) as exc:
            raise IntegrityError(f"model file is incomplete: missing {exc}") from None
        gp_params = gp.get_params()
        model = cls(space=space, input_frame=payload.get("frame", "gaussian"), **gp_params)
        model.gp_ = gp
        model.standardizer_ = ResponseStandardizer()
        model.standardizer_.mean_ = float(std["mean"])
        model.standardizer_.scale_ = float(std["sd"])
        model.n_features_in_ = space.dim
        model.provenance_ = payload.get("provenance", {})
        return model

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(doc)


class SobolAnalyzer(BaseEstimator):
    """Pick-freeze Sobol' analysis as an estimator.

    ``fit(model)`` accepts an :class:`~sobolgp.models.EvaluableModel` (or any
    vectorized callable together with ``space``) or a fitted
    :class:`SurrogateSensitivity`.

    Attributes
    ----------
    result_ : SobolResult
    first_order_, total_order_ : ndarray
    """

    def __init__(self, n_base=2**14, n_bootstrap=500, k_draws=50, joint_draw_size=4096,
                 random_state=0, n_jobs=1):
        self.n_base = n_base
        self.n_bootstrap = n_bootstrap
        self.k_draws = k_draws
        self.joint_draw_size = joint_draw_size
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, model, space=None):
        if isinstance(model, SurrogateSensitivity):
            result = model.sobol(self.n_base, self.k_draws, self.random_state,
                                 self.n_bootstrap, self.joint_draw_size)
        else:
            space = space or getattr(model, "space", None)
            if space is None:
                raise ValidationError("a parameter space is required for plain callables")
            result = sobol_on_function(model, space, self.n_base, self.random_state,
                                       n_bootstrap=self.n_bootstrap, n_jobs=self.n_jobs)
        self.result_ = result
        self.first_order_ = np.array(result.first_order)
        self.total_order_ = np.array(result.total_order)
        return self
