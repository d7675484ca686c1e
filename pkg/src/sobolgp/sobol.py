"""First-order and total Sobol' indices.

Indices are estimated by pick-freeze Monte Carlo: Saltelli (2010) for the
first-order index and Jansen (1999) for the total index, both normalised by
the variance of the pooled ``A``/``B`` evaluations.  Confidence half-widths
come from a bootstrap over the base-sample index and, for GP surrogates,
from the spread of the indices across joint posterior function draws.

:func:`brute_force_sobol` evaluates the same variance ratios by tensor
midpoint quadrature and serves as an independent oracle in low dimension.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .design import (
    DesignMatrix,
    Frame,
    GAUSSIAN_CLAMP,
    ParameterSpace,
    lhs_sample,
    make_rng,
    to_physical,
)
from .exceptions import UnsupportedDimensionError, ValidationError
from .models import evaluate_parallel, evaluate_rows
from .stats import inv_norm_cdf
from .surrogate import cholesky_with_jitter

__all__ = [
    "SobolResult",
    "PickFreezeDesign",
    "build_pick_freeze",
    "first_order",
    "total_order",
    "estimate_moments",
    "sobol_on_function",
    "sobol_on_surrogate",
    "brute_force_sobol",
    "DEGENERACY_THRESHOLD",
    "FIRST_ORDER_ESTIMATOR",
    "TOTAL_ORDER_ESTIMATOR",
]

DEGENERACY_THRESHOLD = 1e-12
FIRST_ORDER_ESTIMATOR = "saltelli2010"
TOTAL_ORDER_ESTIMATOR = "jansen1999"
_BOOTSTRAP_BATCH = 25


@dataclass(frozen=True, eq=False)
class SobolResult:
    """Per-parameter indices with Monte Carlo and surrogate half-widths.

    Stored indices are the raw estimates; they may stray slightly outside
    ``[0, 1]``. :meth:`clamped` gives the report view.
    """

    names: tuple
    first_order: np.ndarray
    total_order: np.ndarray
    mean: float
    variance: float
    mc_ci_first: np.ndarray
    mc_ci_total: np.ndarray
    surrogate_ci_first: np.ndarray | None = None
    surrogate_ci_total: np.ndarray | None = None
    n_base: int = 0
    seed: int | None = None
    degenerate: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("first_order", "total_order", "mc_ci_first", "mc_ci_total",
                     "surrogate_ci_first", "surrogate_ci_total"):
            v = getattr(self, name)
            if v is not None:
                arr = np.array(v, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def mc_ci(self):
        return {"first": self.mc_ci_first, "total": self.mc_ci_total}

    @property
    def surrogate_ci(self):
        if self.surrogate_ci_first is None:
            return None
        return {"first": self.surrogate_ci_first, "total": self.surrogate_ci_total}

    def clamped(self):
        return np.clip(self.first_order, 0, 1), np.clip(self.total_order, 0, 1)

    def to_dict(self):
        arr = lambda v: None if v is None else [float(x) for x in v]
        return {
            "names": list(self.names),
            "first_order": arr(self.first_order),
            "total_order": arr(self.total_order),
            "mean": float(self.mean),
            "variance": float(self.variance),
            "mc_ci_first": arr(self.mc_ci_first),
            "mc_ci_total": arr(self.mc_ci_total),
            "surrogate_ci_first": arr(self.surrogate_ci_first),
            "surrogate_ci_total": arr(self.surrogate_ci_total),
            "n_base": int(self.n_base),
            "seed": self.seed,
            "degenerate": bool(self.degenerate),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def write_summary_csv(self, path):
        header = ["name", "S_i", "S_Ti", "mc_ci_first", "mc_ci_total"]
        with_sur = self.surrogate_ci_first is not None
        if with_sur:
            header += ["surrogate_ci_first", "surrogate_ci_total"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i, name in enumerate(self.names):
                row = [name, self.first_order[i], self.total_order[i],
                       self.mc_ci_first[i], self.mc_ci_total[i]]
                if with_sur:
                    row += [self.surrogate_ci_first[i], self.surrogate_ci_total[i]]
                w.writerow([row[0], *(repr(float(v)) for v in row[1:])])

    def write_bar_csv(self, path):
        """Plot-ready bars: clamped indices with combined error half-widths."""
        s, st = self.clamped()
        err_s = np.array(self.mc_ci_first)
        err_st = np.array(self.mc_ci_total)
        if self.surrogate_ci_first is not None:
            err_s = err_s + self.surrogate_ci_first
            err_st = err_st + self.surrogate_ci_total
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "first_order", "first_order_err", "total_order", "total_order_err"])
            for i, name in enumerate(self.names):
                w.writerow([name, *(repr(float(v)) for v in (s[i], err_s[i], st[i], err_st[i]))])


@dataclass(frozen=True, eq=False)
class PickFreezeDesign:
    """Base matrices ``A``, ``B`` and the ``AB_i`` hybrids (``A`` with column
    ``i`` taken from ``B``)."""

    A: np.ndarray
    B: np.ndarray
    AB: tuple
    frame: Frame
    space: ParameterSpace

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def budget(self):
        return self.n * (self.space.dim + 2)

    def stacked(self):
        """All evaluation points, ordered ``A, B, AB_1, ..., AB_d``."""
        return np.vstack([self.A, self.B, *self.AB])

    def to_frame(self, frame):
        frame = Frame(frame)
        if self.frame is not Frame.UNIT:
            raise ValidationError("only unit-frame pick-freeze designs can be remapped")
        if frame is Frame.UNIT:
            return self
        if frame is Frame.PHYSICAL:
            conv = lambda M: to_physical(DesignMatrix(M, Frame.UNIT, self.space)).values
        else:
            conv = lambda M: inv_norm_cdf(np.clip(M, GAUSSIAN_CLAMP, 1 - GAUSSIAN_CLAMP))
        return PickFreezeDesign(
            conv(self.A), conv(self.B), tuple(conv(M) for M in self.AB), frame, self.space
        )


def _streams(seed, k=4):
    # 0: matrix A, 1: matrix B, 2: bootstrap, 3: posterior draws
    return np.random.SeedSequence(int(seed)).spawn(k)


def build_pick_freeze(space: ParameterSpace, n: int, seed) -> PickFreezeDesign:
    if n < 2:
        raise ValidationError("pick-freeze designs need n >= 2")
    sa, sb = _streams(seed)[:2]
    A = np.array(lhs_sample(space, n, sa).values)
    B = np.array(lhs_sample(space, n, sb).values)
    AB = []
    for i in range(space.dim):
        M = A.copy()
        M[:, i] = B[:, i]
        AB.append(M)
    return PickFreezeDesign(A, B, tuple(AB), Frame.UNIT, space)


def _core(fA, fB, fAB):
    """Vectorized estimators.

    ``fA``, ``fB``: ``(..., N)``; ``fAB``: ``(..., d, N)``.
    Returns ``S``, ``ST`` of shape ``(..., d)``, pooled variance ``(...)`` and
    a degeneracy mask ``(...)``.  Outputs are centered on the pooled mean
    first; the first-order estimator's noise otherwise grows with the mean.
    """
    pooled = np.concatenate([fA, fB], axis=-1)
    scale = np.max(np.abs(pooled), axis=-1)
    shift = np.mean(pooled, axis=-1, keepdims=True)
    fA = fA - shift
    fB = fB - shift
    fAB = fAB - shift[..., None]
    var = np.var(pooled, axis=-1, ddof=1)
    degenerate = var <= DEGENERACY_THRESHOLD * scale**2
    safe = np.where(degenerate, 1.0, var)[..., None]
    fA_ = fA[..., None, :]
    S = np.mean(fB[..., None, :] * (fAB - fA_), axis=-1) / safe
    ST = 0.5 * np.mean((fA_ - fAB) ** 2, axis=-1) / safe
    S = np.where(degenerate[..., None], 0.0, S)
    ST = np.where(degenerate[..., None], 0.0, ST)
    return S, ST, var, degenerate


def _check_vectors(fA, fB, fABi):
    fA, fB, fABi = (np.asarray(v, dtype=float).reshape(-1) for v in (fA, fB, fABi))
    if not fA.size == fB.size == fABi.size:
        raise ValidationError("response vectors must have equal length")
    if fA.size < 2:
        raise ValidationError("need at least two base samples")
    return fA, fB, fABi


def first_order(fA, fB, fABi) -> float:
    """Saltelli first-order estimate ``mean(fB (fAB_i - fA)) / V``.

    Returns 0.0 when the pooled variance is degenerate.
    """
    fA, fB, fABi = _check_vectors(fA, fB, fABi)
    S, _, _, _ = _core(fA, fB, fABi[None, :])
    return float(S[0])


def total_order(fA, fB, fABi) -> float:
    """Jansen total-order estimate ``mean((fA - fAB_i)^2) / (2 V)``."""
    fA, fB, fABi = _check_vectors(fA, fB, fABi)
    _, ST, _, _ = _core(fA, fB, fABi[None, :])
    return float(ST[0])


def _half_width(samples, axis=0):
    lo, hi = np.percentile(samples, [2.5, 97.5], axis=axis)
    return 0.5 * (hi - lo)


def _bootstrap(fA, fB, fAB, n_bootstrap, seed_seq):
    """Bootstrap half-widths over the base-sample index.

    Every estimator is a ratio of sample sums, so a resample reduces to a
    count-weighted sum of per-sample terms: ``counts @ terms``.
    """
    d, N = fAB.shape
    if n_bootstrap < 1:
        return np.zeros(d), np.zeros(d)
    shift = np.mean(np.concatenate([fA, fB]))
    a, b, ab = fA - shift, fB - shift, fAB - shift
    diff = ab - a
    terms = np.column_stack([(b * diff).T, diff.T, (diff * diff).T, a, b, a * a, b * b])
    rng = make_rng(seed_seq)
    S_b, ST_b = [], []
    for start in range(0, n_bootstrap, _BOOTSTRAP_BATCH):
        nb = min(_BOOTSTRAP_BATCH, n_bootstrap - start)
        idx = rng.integers(0, N, size=(nb, N))
        idx += np.arange(nb)[:, None] * N
        counts = np.bincount(idx.ravel(), minlength=nb * N).reshape(nb, N).astype(float)
        sums = counts @ terms
        t1, t2, t3 = sums[:, :d], sums[:, d:2 * d], sums[:, 2 * d:3 * d]
        sa, sb, saa, sbb = sums[:, 3 * d], sums[:, 3 * d + 1], sums[:, 3 * d + 2], sums[:, 3 * d + 3]
        m = (sa + sb) / (2 * N)
        var = (saa + sbb - 2 * N * m * m) / (2 * N - 1)
        safe = np.where(var > 0, var, 1.0)[:, None]
        S_b.append((t1 - m[:, None] * t2) / N / safe)
        ST_b.append(0.5 * t3 / N / safe)
    return _half_width(np.concatenate(S_b)), _half_width(np.concatenate(ST_b))


def _split(y, n, d):
    return y[:n], y[n:2 * n], y[2 * n:].reshape(d, n)


def estimate_moments(f, space: ParameterSpace, n: int, seed):
    """Plain Monte Carlo mean and (n-1) variance under uniform inputs."""
    if n < 2:
        raise ValidationError("estimate_moments needs n >= 2")
    rng = make_rng(seed)
    X = space.lower + rng.random((int(n), space.dim)) * space.width
    y = evaluate_rows(f, X)
    return float(np.mean(y)), float(np.var(y, ddof=1))


def _provenance(extra=None):
    out = {
        "first_order_estimator": FIRST_ORDER_ESTIMATOR,
        "total_order_estimator": TOTAL_ORDER_ESTIMATOR,
        "pick_freeze_sampling": "independent latin hypercubes for A and B",
        "ci": "95% percentile half-width",
    }
    out.update(extra or {})
    return out


def sobol_on_function(f, space: ParameterSpace, n: int, seed, n_bootstrap=500, n_jobs=1) -> SobolResult:
    """Sobol' indices of ``f`` (a vectorized callable on physical points).

    Uses ``n * (dim + 2)`` evaluations.
    """
    design = build_pick_freeze(space, n, seed).to_frame(Frame.PHYSICAL)
    y = evaluate_parallel(f, design.stacked(), n_jobs)
    fA, fB, fAB = _split(y, design.n, space.dim)
    S, ST, _, degenerate = _core(fA, fB, fAB)
    ci_s, ci_st = _bootstrap(fA, fB, fAB, n_bootstrap, _streams(seed)[2])
    pooled = np.concatenate([fA, fB])
    return SobolResult(
        names=space.names,
        first_order=S,
        total_order=ST,
        mean=float(np.mean(pooled)),
        variance=float(np.var(pooled, ddof=1)),
        mc_ci_first=ci_s,
        mc_ci_total=ci_st,
        n_base=int(n),
        seed=int(seed),
        degenerate=bool(degenerate),
        provenance=_provenance({
            "target": getattr(f, "name", "function"),
            "n_bootstrap": int(n_bootstrap),
            "evaluations": int(design.budget),
        }),
    )


def _posterior_draw_indices(model, design, k_draws, seed_seq, joint_draw_size):
    """Indices on ``k_draws`` joint posterior draws over the pick-freeze design.

    Draws are joint within blocks of base rows (all ``d + 2`` matrices of a
    row stay together) and independent across blocks.
    """
    n, d = design.n, design.space.dim
    rows_per_block = max(1, int(joint_draw_size) // (d + 2))
    starts = list(range(0, n, rows_per_block))
    children = seed_seq.spawn(len(starts))
    mats = [design.A, design.B, *design.AB]
    fA = np.empty((k_draws, n))
    fB = np.empty((k_draws, n))
    fAB = np.empty((k_draws, d, n))
    nugget = model.hyper_.nugget
    max_nugget = max(model.max_nugget, nugget)
    for s, child in zip(starts, children):
        e = min(s + rows_per_block, n)
        m = e - s
        pts = np.vstack([M[s:e] for M in mats])
        mean, cov = model._mean_cov(pts, symmetrize=False)
        L, _ = cholesky_with_jitter(cov, nugget, max_nugget)
        z = make_rng(child).standard_normal((pts.shape[0], k_draws))
        draws = (mean[:, None] + L @ z).T
        fA[:, s:e] = draws[:, :m]
        fB[:, s:e] = draws[:, m:2 * m]
        fAB[:, :, s:e] = draws[:, 2 * m:].reshape(k_draws, d, m)
    S, ST, _, _ = _core(fA, fB, fAB)
    return S, ST, len(starts)


def sobol_on_surrogate(
    model,
    space: ParameterSpace,
    n: int,
    k_draws: int,
    seed,
    n_bootstrap=500,
    joint_draw_size=4096,
    response_scale=(0.0, 1.0),
    frame=None,
) -> SobolResult:
    """Sobol' indices of a GP surrogate.

    Point estimates use the posterior mean; ``surrogate_ci_*`` is the spread
    over ``k_draws`` posterior function draws (omitted when ``k_draws == 0``).
    ``response_scale`` is the ``(mean, sd)`` used to standardize the training
    responses, so moments are reported in physical units.  ``frame`` is the
    input frame the GP was fitted in (defaults to the model's
    ``input_frame_``, else gaussian).
    """
    frame = Frame(frame or getattr(model, "input_frame_", Frame.GAUSSIAN))
    if frame is Frame.PHYSICAL:
        raise ValidationError("surrogates are fitted in the unit or gaussian frame")
    if getattr(model, "n_features_in_", None) != space.dim:
        raise ValidationError("surrogate was not fitted on this parameter space")
    if k_draws < 0:
        raise ValidationError("k_draws must be >= 0")
    streams = _streams(seed)
    design = build_pick_freeze(space, n, seed).to_frame(frame)
    y = model.predict(design.stacked())
    fA, fB, fAB = _split(y, design.n, space.dim)
    S, ST, var, degenerate = _core(fA, fB, fAB)
    ci_s, ci_st = _bootstrap(fA, fB, fAB, n_bootstrap, streams[2])

    sur_s = sur_st = None
    n_blocks = 0
    if k_draws > 0:
        S_k, ST_k, n_blocks = _posterior_draw_indices(model, design, int(k_draws), streams[3], joint_draw_size)
        sur_s, sur_st = _half_width(S_k), _half_width(ST_k)

    r_mean, r_sd = (float(v) for v in response_scale)
    pooled = np.concatenate([fA, fB])
    return SobolResult(
        names=space.names,
        first_order=S,
        total_order=ST,
        mean=float(np.mean(pooled)) * r_sd + r_mean,
        variance=float(var) * r_sd**2,
        mc_ci_first=ci_s,
        mc_ci_total=ci_st,
        surrogate_ci_first=sur_s,
        surrogate_ci_total=sur_st,
        n_base=int(n),
        seed=int(seed),
        degenerate=bool(degenerate),
        provenance=_provenance({
            "target": "gp_posterior_mean",
            "input_frame": frame.value,
            "n_bootstrap": int(n_bootstrap),
            "k_draws": int(k_draws),
            "joint_draw_size": int(joint_draw_size),
            "joint_draw_blocks": int(n_blocks),
            "joint_draw_approximation": "blocks of base rows drawn independently" if n_blocks > 1 else "none",
            "evaluations": int(design.budget),
        }),
    )


def brute_force_sobol(f, space: ParameterSpace, grid: int = 128) -> SobolResult:
    """Indices by tensor midpoint quadrature (``dim <= 3``)."""
    d = space.dim
    if d > 3:
        raise UnsupportedDimensionError(f"quadrature oracle supports dim <= 3, got {d}")
    if grid < 32:
        raise ValidationError("quadrature grid must have at least 32 nodes per axis")
    nodes = [(np.arange(grid) + 0.5) / grid * w + lo for lo, w in zip(space.lower, space.width)]
    mesh = np.meshgrid(*nodes, indexing="ij")
    X = np.column_stack([m.ravel() for m in mesh])
    Y = evaluate_rows(f, X).reshape((grid,) * d)

    mean = float(Y.mean())
    V = float(Y.var())
    scale = float(np.max(np.abs(Y)))
    degenerate = V <= DEGENERACY_THRESHOLD * scale**2
    S = np.zeros(d)
    ST = np.zeros(d)
    if not degenerate:
        for i in range(d):
            others = tuple(j for j in range(d) if j != i)
            S[i] = np.var(Y.mean(axis=others)) / V if others else 1.0
            ST[i] = (V - np.var(Y.mean(axis=i))) / V
    return SobolResult(
        names=space.names,
        first_order=S,
        total_order=ST,
        mean=mean,
        variance=V,
        mc_ci_first=np.zeros(d),
        mc_ci_total=np.zeros(d),
        n_base=int(grid**d),
        seed=None,
        degenerate=bool(degenerate),
        provenance={"estimator": "tensor midpoint quadrature", "grid": int(grid)},
    )
