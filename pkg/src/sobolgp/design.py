"""Parameter spaces, Latin hypercube designs and coordinate frames.

A design lives in one of three frames:

* ``UNIT``: the unit hypercube, where sampling happens;
* ``PHYSICAL``: affine image of the unit frame on the parameter bounds;
* ``GAUSSIAN``: per-column inverse normal CDF of the unit frame, available
  as an alternative fitting frame for the surrogate.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    DegenerateResponseError,
    FrameMismatchError,
    InvalidDesignError,
    ShapeError,
    ValidationError,
)
from .stats import inv_norm_cdf, norm_cdf

__all__ = [
    "Frame",
    "ParameterDef",
    "ParameterSpace",
    "DesignMatrix",
    "ResponseVector",
    "RNG_ALGORITHM",
    "make_rng",
    "lhs_sample",
    "to_physical",
    "to_unit",
    "to_gaussian",
    "from_gaussian",
    "standardize",
    "destandardize",
    "SpaceTransformer",
    "ResponseStandardizer",
    "write_design_csv",
    "read_design_csv",
    "GAUSSIAN_CLAMP",
]

GAUSSIAN_CLAMP = 1e-12
RNG_ALGORITHM = "numpy.random.PCG64"


def make_rng(seed):
    """Return the package's seeded generator (PCG64 behind ``SeedSequence``)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


class Frame(str, enum.Enum):
    UNIT = "unit"
    PHYSICAL = "physical"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ParameterDef:
    """One uniformly distributed uncertain parameter."""

    name: str
    lower: float
    upper: float
    unit: str = ""

    def __post_init__(self):
        if not self.name or not str(self.name).isidentifier():
            raise ValidationError(f"parameter name {self.name!r} is not an identifier")
        lo, hi = float(self.lower), float(self.upper)
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise ValidationError(
                f"parameter {self.name!r}: need finite lower < upper, got [{lo}, {hi}]"
            )
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def to_dict(self):
        return {"name": self.name, "lower": self.lower, "upper": self.upper, "unit": self.unit}


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered collection of independent uniform parameters."""

    params: tuple

    def __init__(self, params: Sequence[ParameterDef]):
        params = tuple(params)
        if not params:
            raise ValidationError("a parameter space needs at least one parameter")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate parameter names in {names}")
        object.__setattr__(self, "params", params)

    @classmethod
    def from_bounds(cls, bounds, names=None, units=None):
        """Build a space from ``[(lower, upper), ...]``; names default to ``x1, x2, ...``."""
        names = names or [f"x{i + 1}" for i in range(len(bounds))]
        units = units or [""] * len(bounds)
        return cls([ParameterDef(n, lo, hi, u) for n, (lo, hi), u in zip(names, bounds, units)])

    @classmethod
    def from_dict(cls, items):
        try:
            return cls([ParameterDef(**item) for item in items])
        except TypeError as exc:
            raise ValidationError(f"malformed parameter definition: {exc}") from None

    def to_dict(self):
        return [p.to_dict() for p in self.params]

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list:
        return [p.name for p in self.params]

    @property
    def lower(self) -> np.ndarray:
        return np.array([p.lower for p in self.params])

    @property
    def upper(self) -> np.ndarray:
        return np.array([p.upper for p in self.params])

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def __len__(self):
        return self.dim


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """An ``n_d x n_theta`` sample table tagged with its coordinate frame."""

    values: np.ndarray
    frame: Frame
    space: ParameterSpace

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1 and values.size == 0:
            values = values.reshape(0, self.space.dim)
        if values.ndim != 2 or values.shape[1] != self.space.dim:
            raise ShapeError(
                f"design must be (n, {self.space.dim}); got shape {values.shape}"
            )
        frame = Frame(self.frame)
        if not np.all(np.isfinite(values)):
            raise InvalidDesignError("design contains non-finite entries")
        if frame is Frame.UNIT and np.any((values < 0.0) | (values > 1.0)):
            raise InvalidDesignError("unit-frame design has entries outside [0, 1]")
        if frame is Frame.PHYSICAL:
            bad = (values < self.space.lower) | (values > self.space.upper)
            if bad.any():
                rows = sorted(set(np.nonzero(bad)[0].tolist()))
                raise InvalidDesignError(f"physical design out of bounds at rows {rows}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "frame", frame)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def _require(self, frame):
        if self.frame is not frame:
            raise FrameMismatchError(f"expected a {frame.value} design, got {self.frame.value}")


@dataclass(frozen=True, eq=False)
class ResponseVector:
    """Responses with the constants needed to undo standardization."""

    values: np.ndarray
    standardized: bool = False
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.size

    def to_physical(self, values=None):
        """Map standardized values (``self.values`` by default) back to raw units."""
        values = self.values if values is None else np.asarray(values, dtype=float)
        if not self.standardized:
            return np.array(values, dtype=float)
        return values * self.sd + self.mean


def lhs_sample(space: ParameterSpace, n: int, seed) -> DesignMatrix:
    """Randomized Latin hypercube design in the unit frame.

    Each column is an independent permutation of the ``n`` strata with the
    point drawn uniformly inside its cell.
    """
    n = int(n)
    if n < 1:
        raise InvalidDesignError(f"Latin hypercube needs n >= 1, got {n}")
    rng = make_rng(seed)
    out = np.empty((n, space.dim))
    for j in range(space.dim):
        strata = rng.permutation(n)
        u = (strata + rng.random(n)) / n
        # rounding in the division may land exactly on the upper cell edge
        upper = np.nextafter((strata + 1) / n, -np.inf)
        out[:, j] = np.minimum(u, upper)
    return DesignMatrix(out, Frame.UNIT, space)


def to_physical(design: DesignMatrix) -> DesignMatrix:
    design._require(Frame.UNIT)
    sp = design.space
    values = sp.lower + design.values * sp.width
    # guard the closed upper bound against rounding
    values = np.clip(values, sp.lower, sp.upper)
    return DesignMatrix(values, Frame.PHYSICAL, sp)


def to_unit(design: DesignMatrix) -> DesignMatrix:
    """Inverse of :func:`to_physical` (or of :func:`to_gaussian`)."""
    if design.frame is Frame.GAUSSIAN:
        return from_gaussian(design)
    design._require(Frame.PHYSICAL)
    sp = design.space
    values = np.clip((design.values - sp.lower) / sp.width, 0.0, 1.0)
    return DesignMatrix(values, Frame.UNIT, sp)


def to_gaussian(design: DesignMatrix) -> DesignMatrix:
    design._require(Frame.UNIT)
    u = np.clip(design.values, GAUSSIAN_CLAMP, 1.0 - GAUSSIAN_CLAMP)
    return DesignMatrix(inv_norm_cdf(u), Frame.GAUSSIAN, design.space)


def from_gaussian(design: DesignMatrix) -> DesignMatrix:
    design._require(Frame.GAUSSIAN)
    return DesignMatrix(norm_cdf(design.values), Frame.UNIT, design.space)


def standardize(responses: ResponseVector) -> ResponseVector:
    """Center and scale to zero mean, unit (population) standard deviation."""
    y = responses.to_physical()
    if y.size < 2:
        raise ValidationError("standardization needs at least two responses")
    if not np.all(np.isfinite(y)):
        raise ValidationError("responses contain non-finite values")
    mean = float(np.mean(y))
    sd = float(np.std(y))
    if not sd > 1e-12 * max(abs(mean), np.finfo(float).tiny):
        raise DegenerateResponseError(
            "responses have zero variance; the model output is constant over the design"
        )
    return ResponseVector((y - mean) / sd, standardized=True, mean=mean, sd=sd)


def destandardize(values, responses: ResponseVector) -> np.ndarray:
    return responses.to_physical(values)


class SpaceTransformer(TransformerMixin, BaseEstimator):
    """Map physical-frame arrays to the unit or Gaussian frame of ``space``.

    Stateless apart from input validation; ``fit`` only records the input
    width so the estimator composes with scikit-learn pipelines.
    """

    def __init__(self, space=None, frame="gaussian"):
        self.space = space
        self.frame = frame

    def fit(self, X, y=None):
        X = check_array(X)
        if self.space is None or X.shape[1] != self.space.dim:
            raise ShapeError("SpaceTransformer needs a space matching the input width")
        if Frame(self.frame) is Frame.PHYSICAL:
            raise ValidationError("target frame must be 'unit' or 'gaussian'")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        unit = to_unit(DesignMatrix(X, Frame.PHYSICAL, self.space))
        if Frame(self.frame) is Frame.UNIT:
            return np.array(unit.values)
        return np.array(to_gaussian(unit).values)

    def inverse_transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        design = DesignMatrix(X, Frame(self.frame), self.space)
        if design.frame is Frame.GAUSSIAN:
            design = from_gaussian(design)
        return np.array(to_physical(design).values)


class ResponseStandardizer(TransformerMixin, BaseEstimator):
    """Zero-mean, unit-variance scaling of a 1-D response (population sd)."""

    def fit(self, y, X=None):
        rv = standardize(ResponseVector(np.asarray(y, dtype=float).ravel()))
        self.mean_ = rv.mean
        self.scale_ = rv.sd
        return self

    def transform(self, y):
        check_is_fitted(self, "scale_")
        return (np.asarray(y, dtype=float) - self.mean_) / self.scale_

    def inverse_transform(self, y):
        check_is_fitted(self, "scale_")
        return np.asarray(y, dtype=float) * self.scale_ + self.mean_


def write_design_csv(design: DesignMatrix, path, sample_ids=None):
    """Write ``sample_id,<names...>``; floats use ``repr`` so reads are exact."""
    ids = list(range(1, design.n + 1)) if sample_ids is None else list(sample_ids)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *design.space.names])
        for sid, row in zip(ids, design.values):
            w.writerow([sid, *(repr(float(v)) for v in row)])


def read_design_csv(path, space: ParameterSpace, frame=Frame.PHYSICAL):
    """Read a design written by :func:`write_design_csv`; returns ``(ids, design)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["sample_id", *space.names]:
        raise ValidationError(
            f"{path}: header must be sample_id,{','.join(space.names)}"
        )
    ids = [r[0] for r in rows[1:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    return ids, DesignMatrix(values.reshape(-1, space.dim), frame, space)
