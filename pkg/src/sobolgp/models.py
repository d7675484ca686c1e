"""Black-box response models and sample sets.

Every model maps a physical-frame point to one scalar response.  Models are
vectorized: calling a model on an ``(n, d)`` array returns ``n`` responses.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .design import DesignMatrix, Frame, ParameterDef, ParameterSpace, ResponseVector
from .exceptions import (
    GeometryError,
    IngestionError,
    ModelEvaluationError,
    ShapeError,
    ValidationError,
)

__all__ = [
    "EvaluableModel",
    "FunctionModel",
    "Ishigami",
    "GFunction",
    "PressureBin",
    "PressureBinParams",
    "SampleSet",
    "SampleSource",
    "ishigami",
    "g_function",
    "pressure_bin_standin",
    "pressure_bin_space",
    "generate_sample_set",
    "evaluate_rows",
    "evaluate_parallel",
    "ingest",
    "export_sample_set",
    "BUILTIN_MODELS",
    "make_builtin",
]


def ishigami(theta, a=7.0, b=0.1):
    """``sin(x1) + a sin(x2)^2 + b x3^4 sin(x1)``; accepts ``(3,)`` or ``(n, 3)``."""
    theta = np.asarray(theta, dtype=float)
    x1, x2, x3 = theta[..., 0], theta[..., 1], theta[..., 2]
    s1 = np.sin(x1)
    return s1 + a * np.sin(x2) ** 2 + b * x3**4 * s1


def g_function(theta, a):
    """Sobol' g-function ``prod (|4 x_i - 2| + a_i) / (1 + a_i)`` on ``[0, 1]^n``."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValidationError("g-function coefficients must be non-negative")
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != a.size:
        raise ShapeError(f"g-function with {a.size} coefficients got {theta.shape[-1]} inputs")
    return np.prod((np.abs(4.0 * theta - 2.0) + a) / (1.0 + a), axis=-1)


@dataclass(frozen=True)
class PressureBinParams:
    """Geometry and load of the thick-walled cylinder stand-in (mm, MPa).

    ``youngs_modulus`` (MPa) and ``poisson_ratio`` are carried for provenance
    only; the elastic hoop stress of a pressurized cylinder does not depend
    on them.
    """

    inner_radius: float = 11.6
    nominal_min_wall: float = 1.3
    cavity_depth: float = 70.0
    pressure: float = 50.0
    indentation_factor: float = 0.02
    youngs_modulus: float = 207_000.0
    poisson_ratio: float = 0.3

    def __post_init__(self):
        if not self.inner_radius > 0:
            raise ValidationError("inner radius must be positive")
        if not self.nominal_min_wall > 0:
            raise ValidationError("nominal wall thickness must be positive")

    def to_dict(self):
        return dict(self.__dict__)


def pressure_bin_space(max_angle_deg=0.25, max_indentation_mm=1.0) -> ParameterSpace:
    return ParameterSpace([
        ParameterDef("angle_of_attack_deg", 0.0, max_angle_deg, "deg"),
        ParameterDef("additional_indentation_mm", 0.0, max_indentation_mm, "mm"),
    ])


def pressure_bin_standin(phi, h, params: PressureBinParams = PressureBinParams()):
    """Peak hoop stress (MPa) in the cavity wall for punch tilt ``phi`` (deg)
    and extra indentation ``h`` (mm).

    The thinnest wall is ``t0 - D tan(phi)``; the Lamé inner-surface hoop
    stress ``p (b^2 + a^2) / (b^2 - a^2)`` is then amplified by
    ``1 + beta h``.
    """
    phi = np.asarray(phi, dtype=float)
    h = np.asarray(h, dtype=float)
    t_min = params.nominal_min_wall - params.cavity_depth * np.tan(np.deg2rad(phi))
    if np.any(t_min <= 0):
        raise GeometryError("tilt leaves no wall: minimum wall thickness <= 0")
    a = params.inner_radius
    b = a + t_min
    hoop = params.pressure * (b * b + a * a) / (b * b - a * a)
    out = hoop * (1.0 + params.indentation_factor * h)
    return out if out.ndim else float(out)


class EvaluableModel:
    """Deterministic scalar response over a parameter space.

    Subclasses implement :meth:`_evaluate` on an ``(n, d)`` physical-frame
    array.
    """

    name = "model"

    def __init__(self, space: ParameterSpace):
        self.space = space

    def _evaluate(self, X):
        raise NotImplementedError

    def evaluate(self, theta) -> float:
        theta = np.asarray(theta, dtype=float).reshape(1, -1)
        return float(self(theta)[0])

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.space.dim:
            raise ShapeError(f"{self.name} expects (n, {self.space.dim}) inputs, got {X.shape}")
        return np.asarray(self._evaluate(X), dtype=float).reshape(-1)

    def describe(self):
        return {"name": self.name, "space": self.space.to_dict()}


class FunctionModel(EvaluableModel):
    """Wrap a vectorized callable ``f(X) -> (n,)``."""

    def __init__(self, func: Callable, space: ParameterSpace, name="function"):
        super().__init__(space)
        self.func = func
        self.name = name

    def _evaluate(self, X):
        return self.func(X)


class Ishigami(EvaluableModel):
    name = "ishigami"

    def __init__(self, a=7.0, b=0.1, space=None):
        super().__init__(space or ParameterSpace.from_bounds([(-math.pi, math.pi)] * 3))
        self.a = float(a)
        self.b = float(b)

    def _evaluate(self, X):
        return ishigami(X, self.a, self.b)

    def describe(self):
        return {**super().describe(), "a": self.a, "b": self.b}


class GFunction(EvaluableModel):
    name = "g_function"

    def __init__(self, a=(0.0, 1.0, 4.5, 9.0)):
        a = np.asarray(a, dtype=float)
        if np.any(a < 0):
            raise ValidationError("g-function coefficients must be non-negative")
        super().__init__(ParameterSpace.from_bounds([(0.0, 1.0)] * a.size))
        self.a = a

    def _evaluate(self, X):
        return g_function(X, self.a)

    def describe(self):
        return {**super().describe(), "a": self.a.tolist()}


class PressureBin(EvaluableModel):
    """Analytic stand-in for the pressure-bin FE run (see :func:`pressure_bin_standin`)."""

    name = "pressure_bin"

    def __init__(self, params: PressureBinParams = PressureBinParams(), space=None):
        space = space or pressure_bin_space()
        if space.dim != 2:
            raise ShapeError("the pressure bin has exactly two parameters (angle, indentation)")
        super().__init__(space)
        self.params = params
        phi_max = max(abs(space.params[0].lower), abs(space.params[0].upper))
        if params.nominal_min_wall <= params.cavity_depth * math.tan(math.radians(phi_max)):
            raise GeometryError(
                f"wall thickness {params.nominal_min_wall} mm vanishes at {phi_max} deg tilt"
            )

    def _evaluate(self, X):
        return pressure_bin_standin(X[:, 0], X[:, 1], self.params)

    def describe(self):
        return {**super().describe(), "params": self.params.to_dict()}


BUILTIN_MODELS = {
    "pressure_bin": lambda **kw: PressureBin(PressureBinParams(**kw)),
    "ishigami": lambda **kw: Ishigami(**kw),
    "g_function": lambda **kw: GFunction(**kw),
}


def make_builtin(name, params=None) -> EvaluableModel:
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ValidationError(
            f"unknown model {name!r}; choose from {sorted(BUILTIN_MODELS)}"
        ) from None
    try:
        return factory(**(params or {}))
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {name}: {exc}") from None


class SampleSource(str, enum.Enum):
    INGESTED = "ingested"
    GENERATED = "generated"


@dataclass(frozen=True, eq=False)
class SampleSet:
    design: DesignMatrix
    responses: ResponseVector
    source: SampleSource = SampleSource.GENERATED
    sample_ids: tuple = ()
    model_name: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.design.frame is not Frame.PHYSICAL:
            raise ValidationError("sample sets hold physical-frame designs")
        if self.design.n != self.responses.n:
            raise ShapeError(f"{self.design.n} design rows but {self.responses.n} responses")
        if not np.all(np.isfinite(self.responses.values)):
            raise ValidationError("sample set responses must be finite")
        ids = tuple(self.sample_ids) or tuple(str(i) for i in range(1, self.design.n + 1))
        if len(ids) != self.design.n:
            raise ShapeError("one sample id per design row required")
        object.__setattr__(self, "sample_ids", tuple(str(i) for i in ids))

    def __len__(self):
        return self.design.n


def evaluate_rows(model, X):
    """Evaluate ``model`` on ``X``; failures are pinned to the offending row."""
    X = np.asarray(X, dtype=float)
    try:
        out = np.asarray(model(X), dtype=float).reshape(-1)
    except Exception as exc:
        for i, row in enumerate(X):
            try:
                model(row[None, :])
            except Exception as row_exc:
                raise ModelEvaluationError(
                    f"model failed at row {i} ({row.tolist()}): {row_exc}", row=i, point=row
                ) from row_exc
        raise ModelEvaluationError(f"model failed on the batch: {exc}") from exc
    if out.shape[0] != X.shape[0]:
        raise ShapeError(f"model returned {out.shape[0]} values for {X.shape[0]} rows")
    bad = np.nonzero(~np.isfinite(out))[0]
    if bad.size:
        i = int(bad[0])
        raise ModelEvaluationError(
            f"model returned {out[i]} at row {i} ({X[i].tolist()})", row=i, point=X[i]
        )
    return out


def evaluate_parallel(model, X, n_jobs=1):
    """Row-chunked threaded evaluation; output order never depends on ``n_jobs``."""
    X = np.asarray(X, dtype=float)
    if n_jobs is None or n_jobs <= 1 or X.shape[0] < 2:
        return evaluate_rows(model, X)
    chunks = np.array_split(np.arange(X.shape[0]), min(int(n_jobs), X.shape[0]))
    with ThreadPoolExecutor(max_workers=int(n_jobs)) as pool:
        parts = list(pool.map(lambda idx: evaluate_rows(model, X[idx]), chunks))
    return np.concatenate(parts)


def generate_sample_set(model: EvaluableModel, design: DesignMatrix, seed=None, n_jobs=1) -> SampleSet:
    if design.frame is not Frame.PHYSICAL:
        raise ValidationError("generate_sample_set needs a physical-frame design")
    if design.space.names != model.space.names:
        raise ValidationError(
            f"design parameters {design.space.names} do not match model {model.space.names}"
        )
    if design.n == 0:
        responses = np.empty(0)
    else:
        responses = evaluate_parallel(model, design.values, n_jobs)
    return SampleSet(
        design, ResponseVector(responses), SampleSource.GENERATED,
        model_name=model.name, seed=seed,
    )


def _read_table(path, required, label):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError:
        raise
    missing = [c for c in required if c not in header]
    if missing:
        raise IngestionError(f"{label} {path}: missing columns {missing} (header: {header})")
    return rows


def _parse_float(text, what):
    try:
        return float(text.strip())
    except (ValueError, AttributeError):
        raise IngestionError(f"{what}: cannot parse {text!r} as a number") from None


def ingest(design_csv, responses_csv, space: ParameterSpace, columns=None) -> SampleSet:
    """Read an externally computed design/response pair.

    ``columns`` maps canonical names (``sample_id``, each parameter name,
    ``response``) to the column headers actually used in the files.
    Rows are matched on ``sample_id`` and returned in design order.
    """
    columns = dict(columns or {})
    col = lambda key: columns.get(key, key)
    id_col, resp_col = col("sample_id"), col("response")
    param_cols = [col(n) for n in space.names]

    drows = _read_table(design_csv, [id_col, *param_cols], "design")
    rrows = _read_table(responses_csv, [id_col, resp_col], "responses")

    def ids_of(rows, label):
        ids = [r[id_col].strip() for r in rows]
        seen, dups = set(), []
        for sid in ids:
            if sid in seen:
                dups.append(sid)
            seen.add(sid)
        if dups:
            raise IngestionError(f"{label}: duplicate sample_id {sorted(set(dups))}")
        if "" in seen:
            raise IngestionError(f"{label}: empty sample_id")
        return ids

    design_ids = ids_of(drows, "design")
    resp_ids = ids_of(rrows, "responses")
    missing = [s for s in design_ids if s not in set(resp_ids)]
    extra = [s for s in resp_ids if s not in set(design_ids)]
    if missing:
        raise IngestionError(f"responses missing sample_id {missing}")
    if extra:
        raise IngestionError(f"responses have unknown sample_id {extra}")

    values = np.array(
        [[_parse_float(r[c], f"design row {k} column {c}") for c in param_cols]
         for k, r in enumerate(drows, start=1)],
        dtype=float,
    ).reshape(-1, space.dim)
    bad_rows = []
    for k, row in enumerate(values, start=1):
        if not np.all(np.isfinite(row)) or np.any(row < space.lower) or np.any(row > space.upper):
            bad_rows.append(k)
    if bad_rows:
        raise IngestionError(
            f"design rows {bad_rows} lie outside the parameter bounds "
            f"{list(zip(space.names, space.lower.tolist(), space.upper.tolist()))}"
        )

    by_id = {r[id_col].strip(): (k, r) for k, r in enumerate(rrows, start=1)}
    responses = np.empty(len(design_ids))
    bad = []
    for i, sid in enumerate(design_ids):
        k, r = by_id[sid]
        v = _parse_float(r[resp_col], f"responses row {k}")
        if not math.isfinite(v):
            bad.append(f"row {k} (sample_id {sid})")
        responses[i] = v
    if bad:
        raise IngestionError(f"non-finite responses at {', '.join(bad)}")

    return SampleSet(
        DesignMatrix(values, Frame.PHYSICAL, space),
        ResponseVector(responses),
        SampleSource.INGESTED,
        sample_ids=tuple(design_ids),
    )


def export_sample_set(samples: SampleSet, design_csv, responses_csv):
    """Write the two CSV files :func:`ingest` reads (exact float round trip)."""
    with open(design_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *samples.design.space.names])
        for sid, row in zip(samples.sample_ids, samples.design.values):
            w.writerow([sid, *(repr(float(v)) for v in row)])
    with open(responses_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "response"])
        for sid, v in zip(samples.sample_ids, samples.responses.values):
            w.writerow([sid, repr(float(v))])
