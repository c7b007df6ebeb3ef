"""Fitting growth models to body-weight data.

Two routes:

* :func:`fit_logistic` fits the deterministic logistic curve to a series of
  averaged weights by least squares.
* :func:`grid_search` moment-matches the uncertain logistic model to one-day
  competition samples over a lattice of ``(r, w_lo, w_hi, a, b)`` indexed by
  integers ``(i, j, k, l, m)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError, ValidationError
from .growth import (
    DEFAULT_QUAD_POINTS,
    LogisticParams,
    MaxWeightDistribution,
    StatsSummary,
    UncertainGrowthModel,
    logistic_curve,
    model_stats,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightSeries:
    """Averaged body weights (g) against growth-day (days since May 1)."""

    days: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        days = np.asarray(self.days, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if days.shape != weights.shape or days.ndim != 1:
            raise ValidationError("days and weights must be 1-d sequences of equal length")
        if not (np.all(np.isfinite(days)) and np.all(np.isfinite(weights))):
            raise ValidationError("series contains non-finite values")
        bad = np.flatnonzero(np.diff(days) <= 0)
        if bad.size:
            raise ValidationError(f"days must be strictly increasing (row {bad[0] + 1})")
        bad = np.flatnonzero(weights <= 0)
        if bad.size:
            raise ValidationError(f"weights must be positive (row {bad[0]})")
        object.__setattr__(self, "days", tuple(days.tolist()))
        object.__setattr__(self, "weights", tuple(weights.tolist()))

    def __len__(self):
        return len(self.days)


@dataclass(frozen=True)
class CompetitionSample:
    """Individual fish weights (g) caught on a single growth-day."""

    day: float
    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValidationError("a competition sample needs at least two weights")
        if not np.all(np.isfinite(w)):
            raise ValidationError("sample contains non-finite weights")
        bad = np.flatnonzero(w <= 0)
        if bad.size:
            raise ValidationError(f"weights must be positive (row {bad[0]})")
        object.__setattr__(self, "weights", tuple(w.tolist()))


# ---------------------------------------------------------------------------
# deterministic logistic fit
# ---------------------------------------------------------------------------


def _resid(theta, t, y):
    w0, w_max, r = np.exp(theta)
    return logistic_curve(t, w0, w_max, r) - y


def fit_logistic(series: WeightSeries, return_residual: bool = False):
    """Least-squares logistic fit ``(w0, w_max, r)`` to an averaged weight series.

    Levenberg-Marquardt in log-parameters (which keeps everything positive)
    from eight deterministic starts; the smallest residual wins. ``w0`` is
    fitted jointly.
    """
    if len(series) < 3:
        raise ValidationError("need at least 3 observations to fit three parameters")
    t = np.asarray(series.days)
    y = np.asarray(series.weights)
    if np.ptp(y) <= 1e-12 * np.max(y):
        raise FitError("no sigmoid signal: weights are flat")

    starts = [
        (w0, wm, r)
        for w0 in (y[0], 0.5 * y[0])
        for wm in (1.1 * y.max(), 2.0 * y.max())
        for r in (0.01, 0.05)
    ]
    best_x, best_sse, converged = None, np.inf, False
    for start in starts:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            res = least_squares(_resid, np.log(start), args=(t, y), method="lm",
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        sse = float(res.fun @ res.fun)
        if np.isfinite(sse) and sse < best_sse:
            best_x, best_sse, converged = res.x, sse, res.status > 0
    if best_x is None:
        raise FitError("least squares failed from every start")
    w0, w_max, r = np.exp(best_x)
    try:
        params = LogisticParams(float(w0), float(w_max), float(r))
    except ValidationError as exc:
        raise FitError(f"fit left the admissible region: {exc}", best=(w0, w_max, r),
                       residual=best_sse) from exc
    if not converged and best_sse > 1e-6 * float(y @ y):
        raise FitError("least squares did not converge from any start", best=params, residual=best_sse)
    if return_residual:
        return params, best_sse
    return params


# ---------------------------------------------------------------------------
# moment matching
# ---------------------------------------------------------------------------


def empirical_stats(sample: CompetitionSample) -> StatsSummary:
    """Population (biased) mean, std and skewness plus order statistics."""
    w = np.asarray(sample.weights)
    mean = float(np.mean(w))
    d = w - mean
    var = float(np.mean(d * d))
    std = math.sqrt(var)
    flags: tuple[str, ...] = ()
    if std <= 1e-14 * abs(mean):
        std = 0.0
        skew = math.nan
        flags = ("skew_undefined",)
    else:
        skew = float(np.mean(d**3)) / std**3
    return StatsSummary(
        mean=mean, std=std, skew=skew, median=float(np.median(w)),
        min=float(w.min()), max=float(w.max()), count=int(w.size), flags=flags,
    )


def error_metric(target: StatsSummary, fitted: StatsSummary) -> float:
    """Sum of squared relative errors of the mean and the standard deviation."""
    if target.mean == 0 or target.std == 0:
        raise ValidationError("target mean and std must be nonzero")
    return ((target.mean - fitted.mean) / target.mean) ** 2 + (
        (target.std - fitted.std) / target.std
    ) ** 2


@dataclass(frozen=True)
class CalibrationGrid:
    """Integer lattice of candidate parameters.

    ``r = r0 + r_step * i``, ``w_lo = j``, ``w_hi = k``, ``a = shape_step * l``,
    ``b = shape_step * m``. Index ranges are inclusive; ``k`` runs from ``j + 1``
    to ``k_max`` since ``k = j`` leaves an empty support.
    """

    i_range: tuple[int, int] = (0, 40)
    j_range: tuple[int, int] = (1, 50)
    k_max: int = 300
    l_range: tuple[int, int] = (1, 40)
    m_range: tuple[int, int] = (1, 40)
    r0: float = 0.020
    r_step: float = 0.001
    shape_step: float = 0.25

    def __post_init__(self):
        for name in ("i_range", "j_range", "l_range", "m_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name} is empty: {lo}..{hi}")
        if self.j_range[0] < 1 or self.l_range[0] < 1 or self.m_range[0] < 1:
            raise ValidationError("j, l, m start at 1")
        if self.i_range[0] < 0 or self.r0 + self.r_step * self.i_range[0] <= 0:
            raise ValidationError("decoded growth rates must be positive")

    def decode(self, i: int, j: int, k: int, l: int, m: int):
        """Index tuple to ``(r, w_lo, w_hi, a, b)``."""
        return (self.r0 + self.r_step * i, float(j), float(k),
                self.shape_step * l, self.shape_step * m)

    def contains(self, idx: Sequence[int]) -> bool:
        i, j, k, l, m = idx
        return (self.i_range[0] <= i <= self.i_range[1]
                and self.j_range[0] <= j <= self.j_range[1]
                and j <= k <= self.k_max
                and self.l_range[0] <= l <= self.l_range[1]
                and self.m_range[0] <= m <= self.m_range[1])

    @classmethod
    def spanning(cls, rest: "Restriction") -> "CalibrationGrid":
        """Lattice whose index box is the restriction, clipped to valid indices."""
        i_lo = max(rest.i[0], 0)
        return cls(
            i_range=(i_lo, max(rest.i[1], i_lo)),
            j_range=(max(rest.j[0], 1), max(rest.j[1], 1)),
            k_max=max(rest.k[1], 2),
            l_range=(max(rest.l[0], 1), max(rest.l[1], 1)),
            m_range=(max(rest.m[0], 1), max(rest.m[1], 1)),
        )

    def size(self) -> int:
        ni = self.i_range[1] - self.i_range[0] + 1
        nlm = (self.l_range[1] - self.l_range[0] + 1) * (self.m_range[1] - self.m_range[0] + 1)
        njk = sum(max(self.k_max - j, 0) for j in range(self.j_range[0], self.j_range[1] + 1))
        return ni * njk * nlm


@dataclass(frozen=True)
class Restriction:
    """Inclusive index sub-ranges ``(lo, hi)`` for each of ``i, j, k, l, m``."""

    i: tuple[int, int]
    j: tuple[int, int]
    k: tuple[int, int]
    l: tuple[int, int]
    m: tuple[int, int]

    @classmethod
    def around(cls, idx: Sequence[int], steps: int = 3) -> "Restriction":
        return cls(*[(v - steps, v + steps) for v in idx])

    @classmethod
    def parse(cls, text: str) -> "Restriction":
        """Parse ``i0:i1,j0:j1,k0:k1,l0:l1,m0:m1``."""
        parts = text.split(",")
        if len(parts) != 5:
            raise ValidationError(f"restriction needs 5 ranges, got {text!r}")
        ranges = []
        for p in parts:
            try:
                lo, hi = (int(s) for s in p.split(":"))
            except ValueError:
                raise ValidationError(f"bad range {p!r} in restriction") from None
            ranges.append((lo, hi))
        return cls(*ranges)

    def format(self) -> str:
        return ",".join(f"{lo}:{hi}" for lo, hi in (self.i, self.j, self.k, self.l, self.m))


@dataclass(frozen=True)
class CalibrationResult:
    model: UncertainGrowthModel
    indices: tuple[int, int, int, int, int]
    er: float
    fitted_stats: StatsSummary
    target_stats: StatsSummary
    day: float
    candidates: int = 0
    skipped: int = field(default=0)


def build_model(w0: float, params, quad_points: int = DEFAULT_QUAD_POINTS) -> UncertainGrowthModel:
    r, w_lo, w_hi, a, b = params
    dist = MaxWeightDistribution(w_lo, w_hi, a, b, resolution=quad_points)
    return UncertainGrowthModel(w0=w0, r=r, dist=dist, quad_points=quad_points)


def evaluate_candidate(indices, w0: float, day: float, target: StatsSummary,
                       grid: CalibrationGrid | None = None):
    """Decode one index tuple and score it at ``day``.

    Returns ``(model, er)``, or ``None`` when the decoded support is empty
    (``w_lo >= w_hi``); such candidates are skipped, not errors.
    """
    grid = grid or CalibrationGrid()
    if day <= 0:
        raise ValidationError("evaluation day must be positive")
    if not grid.contains(indices):
        raise ValidationError(f"indices {tuple(indices)} are outside the grid")
    r, w_lo, w_hi, a, b = grid.decode(*indices)
    if w_lo >= w_hi:
        return None
    model = build_model(w0, (r, w_lo, w_hi, a, b))
    return model, error_metric(target, model_stats(day, model))


# -- vectorized sweep --------------------------------------------------------

_JK_BLOCK = 256


def _shape_matrix(l_vals, m_vals, step, quad_points):
    """Normalized beta masses on the unit midpoint grid, one column per (l, m)."""
    u = (np.arange(quad_points) + 0.5) / quad_points
    a = step * np.repeat(l_vals, len(m_vals))
    b = step * np.tile(m_vals, len(l_vals))
    P = u[:, None] ** (a - 1.0) * (1.0 - u[:, None]) ** (b - 1.0)
    return P / P.sum(axis=0)


def _scan_chunk(args):
    """Best (er, idx) over one fixed ``i`` and a block of (j, k) pairs."""
    i, jk, lm, P, grid, w0, day, mean_e, std_e, quad_points = args
    r = grid.r0 + grid.r_step * i
    u = (np.arange(quad_points) + 0.5) / quad_points
    j = jk[:, 0:1].astype(float)
    k = jk[:, 1:2].astype(float)
    x = j + (k - j) * u
    W = logistic_curve(day, w0, x, r)
    m1 = W @ P
    m2 = (W * W) @ P
    std = np.sqrt(np.maximum(m2 - m1 * m1, 0.0))
    er = ((mean_e - m1) / mean_e) ** 2 + ((std_e - std) / std_e) ** 2
    # row-major flattening is lexicographic in (j, k, l, m): argmin picks the smallest tie
    flat = int(np.argmin(er))
    row, col = divmod(flat, er.shape[1])
    idx = (int(i), int(jk[row, 0]), int(jk[row, 1]), int(lm[col, 0]), int(lm[col, 1]))
    return float(er[row, col]), idx


def _chunks(grid: CalibrationGrid, rest: Restriction | None, target, w0, day, quad_points):
    def clip(rng, lo, hi):
        return max(rng[0], lo), min(rng[1], hi)

    i_lo, i_hi = grid.i_range
    j_lo, j_hi = grid.j_range
    k_lo, k_hi = 1, grid.k_max
    l_lo, l_hi = grid.l_range
    m_lo, m_hi = grid.m_range
    if rest is not None:
        i_lo, i_hi = clip(rest.i, i_lo, i_hi)
        j_lo, j_hi = clip(rest.j, j_lo, j_hi)
        k_lo, k_hi = clip(rest.k, k_lo, k_hi)
        l_lo, l_hi = clip(rest.l, l_lo, l_hi)
        m_lo, m_hi = clip(rest.m, m_lo, m_hi)
    jk = np.array([(j, k) for j in range(j_lo, j_hi + 1)
                   for k in range(max(k_lo, j + 1), k_hi + 1)], dtype=np.int64).reshape(-1, 2)
    skipped_jk = sum(1 for j in range(j_lo, j_hi + 1) if k_lo <= j <= k_hi)
    l_vals = np.arange(l_lo, l_hi + 1)
    m_vals = np.arange(m_lo, m_hi + 1)
    if i_lo > i_hi or len(jk) == 0 or l_vals.size == 0 or m_vals.size == 0:
        raise ValidationError("restriction leaves no admissible candidates")
    lm = np.array([(l, m) for l in l_vals for m in m_vals], dtype=np.int64)
    P = _shape_matrix(l_vals, m_vals, grid.shape_step, quad_points)
    tasks = [
        (i, jk[s:s + _JK_BLOCK], lm, P, grid, w0, day, target.mean, target.std, quad_points)
        for i in range(i_lo, i_hi + 1)
        for s in range(0, len(jk), _JK_BLOCK)
    ]
    n = (i_hi - i_lo + 1) * len(jk) * len(lm)
    skipped = (i_hi - i_lo + 1) * skipped_jk * len(lm)
    return tasks, n, skipped


def grid_search(w0: float, sample: CompetitionSample | StatsSummary, grid: CalibrationGrid | None = None,
                restriction: Restriction | None = None, day: float | None = None,
                workers: int = 1, quad_points: int = DEFAULT_QUAD_POINTS) -> CalibrationResult:
    """Exhaustive minimization of the moment-matching error over the lattice.

    ``sample`` is either raw competition weights or their summary (then
    ``day`` is required). The argmin is reduced over ``(er, index tuple)`` so
    ties go to the lexicographically smallest indices and the result does not
    depend on ``workers``. The returned ``er`` is recomputed through
    :func:`model_stats` for the winning model.
    """
    grid = grid or CalibrationGrid()
    if isinstance(sample, CompetitionSample):
        target = empirical_stats(sample)
        day = sample.day if day is None else day
    else:
        target = sample
    if day is None or day <= 0:
        raise ValidationError("a positive evaluation day is required")
    if target.mean == 0 or target.std == 0:
        raise ValidationError("target mean and std must be nonzero")
    tasks, n, skipped = _chunks(grid, restriction, target, w0, day, quad_points)
    log.info("grid search over %d candidates in %d chunks", n, len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_chunk, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        results = [_scan_chunk(t) for t in tasks]
    _, best_idx = min(results)
    model = build_model(w0, grid.decode(*best_idx), quad_points)
    fitted = model_stats(day, model)
    return CalibrationResult(
        model=model, indices=best_idx, er=error_metric(target, fitted), fitted_stats=fitted,
        target_stats=target, day=float(day), candidates=n, skipped=skipped,
    )


def index_of(fit, grid: CalibrationGrid | None = None) -> tuple[int, int, int, int, int]:
    """Lattice indices of a published or user parameter set ``(r, w_lo, w_hi, a, b)``."""
    grid = grid or CalibrationGrid()
    r, w_lo, w_hi, a, b = fit
    return (round((r - grid.r0) / grid.r_step), int(round(w_lo)), int(round(w_hi)),
            round(a / grid.shape_step), round(b / grid.shape_step))

