"""Entropic lower bound of the average body weight under model distortion.

For an uncertainty-aversion level ``eta > 0``

    omega(t, n) = -(1 / eta) ln E[exp(-eta W(t, W_max))],

which is the infimum over likelihood ratios ``phi`` (with ``E[phi] = 1``) of
the distorted mean ``E[phi W]`` plus ``(1 / eta)`` times the relative
entropy ``E[phi ln phi - phi + 1]``. The minimizer is the exponential tilt
``phi* = exp(-eta W) / E[exp(-eta W)]``.

Expectations are midpoint sums over the model's quadrature nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import ValidationError
from .growth import MaxWeightDistribution, UncertainGrowthModel, beta_density

# the installed TBB may be too old and warns on every import; try it last
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# below this the eta -> 0 limit (the plain mean) is used
ETA_EPS = 1e-10
FEASIBILITY_TOL = 1e-8

FORMS = ("constant", "linear-decreasing", "affine-increasing", "affine", "table")


@dataclass(frozen=True)
class UncertaintyAversion:
    """State-dependent aversion ``eta(n) >= 0`` (1/g) on ``[0, n_max]``.

    ``constant``: ``mu``; ``linear-decreasing``: ``mu (1 - n / n_max)``;
    ``affine-increasing``: ``mu (1 + n / n_max)``; ``affine``:
    ``mu (1 + slope n / n_max)``; ``table``: piecewise-linear through the
    ``(n, eta)`` breakpoints, held constant outside them.
    """

    mu: float
    form: str = "constant"
    n_max: float = 1.0
    slope: float = 0.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValidationError(f"unknown aversion form {self.form!r}; expected one of {FORMS}")
        if self.n_max <= 0:
            raise ValidationError("n_max must be positive")
        if self.form == "table":
            if len(self.table) < 1:
                raise ValidationError("table form needs at least one breakpoint")
            ns = [p[0] for p in self.table]
            if any(b <= a for a, b in zip(ns, ns[1:])):
                raise ValidationError("table breakpoints must be strictly increasing in n")
            if min(p[1] for p in self.table) < 0:
                raise ValidationError("aversion must be nonnegative")
        else:
            if not np.isfinite(self.mu) or self.mu < 0:
                raise ValidationError(f"mu must be a nonnegative number, got {self.mu}")
            if self.mu * min(1.0, 1.0 + self.effective_slope) < 0:
                raise ValidationError("aversion becomes negative on [0, n_max]")

    @property
    def effective_slope(self) -> float:
        return {"constant": 0.0, "linear-decreasing": -1.0, "affine-increasing": 1.0}.get(
            self.form, self.slope)

    def affine_coeffs(self):
        """``(eta(0), d eta / dn)`` for the affine family, ``None`` for tables."""
        if self.form == "table":
            return None
        return self.mu, self.mu * self.effective_slope / self.n_max

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        if self.form == "table":
            xs, ys = zip(*self.table)
            out = np.interp(n, xs, ys)
        else:
            eta0, d = self.affine_coeffs()
            out = eta0 + d * n
        return np.maximum(out, 0.0)[()]


def _omega_from(W, w, eta: float) -> float:
    if eta < ETA_EPS:
        return float(W @ w)
    wm = W.min()
    s = float(np.exp(-eta * (W - wm)) @ w)
    return float(wm - np.log(s) / eta)


def entropic_bound(t: float, n: float, eta: UncertaintyAversion, model: UncertainGrowthModel) -> float:
    """Worst-case average body weight ``omega(t, n)`` in grams.

    ``t`` is growth time (days since May 1). Uses a max-shifted log-sum-exp;
    for ``eta(n) < ETA_EPS`` returns the undistorted mean.
    """
    return _omega_from(model.weights_at(t), model.weights, float(eta(n)))


def _check_feasible(phi, w):
    phi = np.asarray(phi, dtype=float)
    if phi.shape != w.shape:
        raise ValidationError(f"phi must have one value per node ({w.size}), got {phi.shape}")
    if np.any(phi < 0) or not np.all(np.isfinite(phi)):
        raise ValidationError("phi must be finite and nonnegative")
    mass = float(phi @ w)
    if abs(mass - 1.0) > FEASIBILITY_TOL:
        raise ValidationError(f"phi must have unit expectation, got {mass:.12g}")
    return phi


def variational_objective(phi, t: float, n: float, eta: UncertaintyAversion,
                          model: UncertainGrowthModel) -> float:
    """Distorted mean plus the entropy penalty for a likelihood ratio ``phi`` on the nodes.

    The penalty enters with a plus sign: that is what makes the infimum over
    ``phi`` finite and equal to :func:`entropic_bound`.
    """
    w = model.weights
    phi = _check_feasible(phi, w)
    W = model.weights_at(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(phi > 0, phi * np.log(np.where(phi > 0, phi, 1.0)), 0.0)
    divergence = float((plogp - phi + 1.0) @ w)
    e = float(eta(n))
    distorted = float((phi * W) @ w)
    if e < ETA_EPS:
        # infinite penalty weight: only the undistorted law is admissible
        return distorted if divergence <= FEASIBILITY_TOL else np.inf
    return distorted + divergence / e


@dataclass(frozen=True)
class DistortedDensity:
    """Worst-case likelihood ratio on the quadrature nodes and the tilted density."""

    nodes: np.ndarray
    values: np.ndarray
    base: MaxWeightDistribution
    masses: np.ndarray
    t: float = 0.0
    eta: float = 0.0

    @property
    def density(self) -> np.ndarray:
        """``phi* p`` in 1/g."""
        return self.values * beta_density(self.nodes, self.base)

    def total_mass(self) -> float:
        return float(self.values @ self.masses)

    def mean_wmax(self) -> float:
        """Mean of the maximum body weight under the distorted law."""
        return float((self.values * self.nodes) @ self.masses)


def worst_case_distortion(t: float, n: float, eta: UncertaintyAversion,
                          model: UncertainGrowthModel) -> DistortedDensity:
    e = float(eta(n))
    w = model.weights
    if e < ETA_EPS:
        values = np.ones_like(w)
    else:
        W = model.weights_at(t)
        tilt = np.exp(-e * (W - W.min()))
        values = tilt / float(tilt @ w)
    return DistortedDensity(nodes=model.nodes, values=values, base=model.dist,
                            masses=w, t=float(t), eta=e)


# -- lattice precomputation ------------------------------------------------


@numba.njit(cache=True)
def _time_slice(t, nodes, w, w0, r, W):
    """Fill ``W`` with the curves at ``t``; return (min, mean)."""
    e = np.exp(-r * t)
    wm = np.inf
    mean = 0.0
    for k in range(nodes.size):
        W[k] = nodes[k] / (1.0 + (nodes[k] / w0 - 1.0) * e)
        mean += W[k] * w[k]
        if W[k] < wm:
            wm = W[k]
    return wm, mean


# rows are independent, so the thread count never changes the result
@numba.njit(cache=True, parallel=True)
def _affine_sums(times, nodes, w, w0, r, eta0, deta, n_cols, sums, shifts, means):
    q = nodes.size
    for i in numba.prange(times.size):
        W = np.empty(q)
        b = np.empty(q)
        ratio = np.empty(q)
        wm, mean = _time_slice(times[i], nodes, w, w0, r, W)
        shifts[i] = wm
        means[i] = mean
        for k in range(q):
            d = W[k] - wm
            b[k] = w[k] * np.exp(-eta0 * d)
            ratio[k] = np.exp(-deta * d)
        # exp(-(eta0 + j deta) d) built by repeated multiplication
        for j in range(n_cols):
            s = 0.0
            for k in range(q):
                s += b[k]
                b[k] *= ratio[k]
            sums[i, j] = s


@numba.njit(cache=True, parallel=True)
def _general_sums(times, nodes, w, w0, r, etas, sums, shifts, means):
    q = nodes.size
    for i in numba.prange(times.size):
        W = np.empty(q)
        wm, mean = _time_slice(times[i], nodes, w, w0, r, W)
        shifts[i] = wm
        means[i] = mean
        for j in range(etas.size):
            s = 0.0
            for k in range(q):
                s += w[k] * np.exp(-etas[j] * (W[k] - wm))
            sums[i, j] = s


def omega_lattice(times, ns, eta: UncertaintyAversion, model: UncertainGrowthModel) -> np.ndarray:
    """``omega`` on the tensor grid ``times x ns`` (growth-days x population).

    Affine aversion laws on a uniform ``ns`` reuse one exponential per node
    and time; the tilt for the next ``n`` is a single multiplication.
    """
    times = np.ascontiguousarray(times, dtype=float)
    ns = np.ascontiguousarray(ns, dtype=float)
    etas = np.asarray(eta(ns), dtype=float).reshape(ns.shape)
    nodes = np.ascontiguousarray(model.nodes)
    w = np.ascontiguousarray(model.weights)
    shifts = np.empty(times.size)
    means = np.empty(times.size)
    coeffs = eta.affine_coeffs()
    uniform = ns.size > 1 and np.allclose(np.diff(ns), ns[1] - ns[0], rtol=1e-12, atol=0.0)
    affine = coeffs is not None and uniform and bool(
        np.all(coeffs[0] + coeffs[1] * ns >= -ETA_EPS))
    if coeffs is not None and coeffs[1] == 0.0:
        sums = np.empty((times.size, 1))
        _general_sums(times, nodes, w, model.w0, model.r, etas[:1].copy(), sums, shifts, means)
        sums = np.broadcast_to(sums, (times.size, ns.size))
    elif affine:
        sums = np.empty((times.size, ns.size))
        eta_first = coeffs[0] + coeffs[1] * float(ns[0])
        deta = coeffs[1] * float(ns[1] - ns[0])
        _affine_sums(times, nodes, w, model.w0, model.r, eta_first, deta, ns.size, sums, shifts, means)
    else:
        uniq, inverse = np.unique(etas, return_inverse=True)
        sub = np.empty((times.size, uniq.size))
        _general_sums(times, nodes, w, model.w0, model.r, uniq, sub, shifts, means)
        sums = sub[:, inverse]
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = shifts[:, None] - np.log(sums) / etas[None, :]
    small = etas < ETA_EPS
    if np.any(small):
        omega[:, small] = means[:, None]
    return omega
