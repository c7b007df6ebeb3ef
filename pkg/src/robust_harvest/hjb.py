"""Backward finite-difference solvers for the robust harvesting HJB equation.

The value function solves

    -dPhi/dt = -delta Phi + omega(t, n) / (h + dPhi/dn),   0 <= t < T, n > 0,

with ``Phi(T, n) = S(n)`` and ``Phi(t, 0) = 0``, where ``omega`` is the
entropic bound of :mod:`robust_harvest.robust` evaluated on the growth clock
``t0 + t``. The utility exponent is fixed at one half; that is what makes the
Hamiltonian ``sup_q {2 sqrt(omega q) - (h + p) q} = omega / (h + p)`` explicit.

Three upwind schemes march from ``i = I_t`` down to ``i = 0``:

``explicit``
    everything from row ``i``; monotone under
    ``1 - (delta + W_bar / (h^2 dn)) dt >= 0``.
``semi_implicit``
    the discount term taken at row ``i - 1``; needs only
    ``1 - W_bar dt / (h^2 dn) >= 0``.
``implicit``
    the whole Hamiltonian at row ``i - 1``. Each node is the larger root of
    a quadratic, swept left to right, and the scheme is monotone for any
    ``dt``.

Every sweep re-checks the discrete guarantees (boundary value,
nonnegativity, the uniform upper bound, ``Phi_{i,j-1} < Phi_{i,j} + h dn``
and, whenever ``omega`` is non-decreasing in ``n``, monotonicity in ``n``)
and aborts on the first failure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numba
import numpy as np

from .errors import InvariantViolation, StabilityError, ValidationError
from .growth import UncertainGrowthModel
from .robust import UncertaintyAversion, omega_lattice

log = logging.getLogger(__name__)

SCHEMES = ("explicit", "semi_implicit", "implicit")
_SCHEME_CODE = {name: code for code, name in enumerate(SCHEMES)}
_ALIASES = {"semi": "semi_implicit", "semi-implicit": "semi_implicit"}

# relative slack for the monotonicity check; the schemes are monotone in exact arithmetic
MONOTONE_RTOL = 1e-12


def scheme_name(scheme: str) -> str:
    name = _ALIASES.get(scheme, scheme)
    if name not in SCHEMES:
        raise ValidationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES} or 'semi'")
    return name


@dataclass(frozen=True)
class TerminalReward:
    """Non-decreasing terminal reward ``S(n)`` with ``S(0) = 0`` and ``S <= s_bar``.

    ``step``: ``height`` for ``n >= threshold``, zero below. ``table``:
    piecewise-linear through ``breakpoints`` (``(n, S)`` pairs), flat beyond the last.
    """

    form: str = "zero"
    height: float = 0.0
    threshold: float = 0.0
    breakpoints: tuple[tuple[float, float], ...] = ()
    s_bar: float | None = None

    def __post_init__(self):
        if self.form not in ("zero", "step", "table"):
            raise ValidationError(f"unknown terminal form {self.form!r}")
        if self.form == "step":
            if self.height < 0:
                raise ValidationError("step height must be nonnegative")
            if self.threshold <= 0:
                raise ValidationError("step threshold must be positive so that S(0) = 0")
            top = self.height
        elif self.form == "table":
            if not self.breakpoints or self.breakpoints[0] != (0.0, 0.0):
                raise ValidationError("table breakpoints must start at (0, 0)")
            ns = [p[0] for p in self.breakpoints]
            ss = [p[1] for p in self.breakpoints]
            if any(b <= a for a, b in zip(ns, ns[1:])):
                raise ValidationError("table breakpoints must be strictly increasing in n")
            if any(b < a for a, b in zip(ss, ss[1:])):
                raise ValidationError("terminal reward must be non-decreasing")
            top = ss[-1]
        else:
            top = 0.0
        if self.s_bar is None:
            object.__setattr__(self, "s_bar", float(top))
        elif self.s_bar < top:
            raise ValidationError(f"declared s_bar={self.s_bar} is below max S={top}")

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        if self.form == "step":
            out = np.where(n >= self.threshold, self.height, 0.0)
        elif self.form == "table":
            xs, ys = zip(*self.breakpoints)
            out = np.interp(n, xs, ys)
        else:
            out = np.zeros_like(n)
        return out[()]


@dataclass(frozen=True)
class HarvestProblem:
    """Finite-horizon robust harvesting problem.

    Attributes:
        horizon: season length ``T`` in days.
        growth_offset: growth-day at solver time zero (61 for a July 1 start).
        delta: discount rate (1/day).
        h: harvest cost per unit population.
        model: uncertain growth model supplying ``omega``.
        eta: uncertainty aversion law.
        terminal: terminal sustainability reward.
        n_max: upper end of the computational population domain.
        alpha: utility exponent; only 1/2 is supported.
    """

    horizon: float
    growth_offset: float
    delta: float
    h: float
    model: UncertainGrowthModel
    eta: UncertaintyAversion
    terminal: TerminalReward = field(default_factory=TerminalReward)
    n_max: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.alpha != 0.5:
            raise ValidationError("only alpha = 1/2 admits the closed-form Hamiltonian")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        if not self.delta >= 0:
            raise ValidationError("discount rate must be nonnegative")
        if not self.h > 0:
            raise ValidationError("harvest cost h must be positive")
        if not self.n_max > 0:
            raise ValidationError("n_max must be positive")

    @property
    def w_bar(self) -> float:
        """Upper bound on ``omega``: the top of the maximum-weight support."""
        return max(self.model.dist.w_hi, self.model.w0)

    @property
    def q_max(self) -> float:
        """Largest harvest rate the optimal feedback can produce, ``W_bar / h^2``."""
        return self.w_bar / self.h**2

    def value_bound(self, scheme: str) -> float:
        """Uniform upper bound on the discrete value function for ``scheme``."""
        s_bar = float(self.terminal.s_bar)
        if self.delta == 0:
            return s_bar + self.horizon * self.w_bar / self.h
        base = self.w_bar / (self.h * self.delta)
        if scheme_name(scheme) == "implicit":
            return s_bar + base * (1.0 + self.delta * self.horizon)
        return s_bar + base


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time lattice: ``i_t`` time steps and ``i_n`` population steps."""

    i_t: int
    i_n: int

    def __post_init__(self):
        if int(self.i_t) != self.i_t or int(self.i_n) != self.i_n:
            raise ValidationError("grid counts must be integers")
        if self.i_t < 2 or self.i_n < 2:
            raise ValidationError("grid counts must be at least 2")

    def dt(self, problem: HarvestProblem) -> float:
        return problem.horizon / self.i_t

    def dn(self, problem: HarvestProblem) -> float:
        return problem.n_max / self.i_n

    def times(self, problem: HarvestProblem) -> np.ndarray:
        return np.arange(self.i_t + 1) * self.dt(problem)

    def ns(self, problem: HarvestProblem) -> np.ndarray:
        return np.arange(self.i_n + 1) * self.dn(problem)


def cfl_margin(problem: HarvestProblem, grid: GridSpec) -> float:
    """``1 - (delta + W_bar / (h^2 dn)) dt``; the explicit scheme needs it nonnegative."""
    return 1.0 - (problem.delta + problem.w_bar / (problem.h**2 * grid.dn(problem))) * grid.dt(problem)


def semi_implicit_margin(problem: HarvestProblem, grid: GridSpec) -> float:
    """``1 - W_bar dt / (h^2 dn)``, the weaker condition of the semi-implicit scheme."""
    return 1.0 - problem.w_bar * grid.dt(problem) / (problem.h**2 * grid.dn(problem))


def critical_dt(problem: HarvestProblem, grid: GridSpec) -> float:
    """Largest time step allowed by the explicit CFL condition at this ``dn``."""
    return 1.0 / (problem.delta + problem.w_bar / (problem.h**2 * grid.dn(problem)))


# -- kernels -----------------------------------------------------------------


@numba.njit(cache=True)
def _explicit_row(u, om, dt, dn, delta, h, out):
    out[0] = 0.0
    for j in range(1, u.size):
        slope = (u[j] - u[j - 1]) / dn
        out[j] = u[j] + dt * (-delta * u[j] + om[j] / (h + slope))


@numba.njit(cache=True)
def _semi_row(u, om, dt, dn, delta, h, out):
    out[0] = 0.0
    damp = 1.0 + delta * dt
    for j in range(1, u.size):
        slope = (u[j] - u[j - 1]) / dn
        out[j] = (u[j] + dt * om[j] / (h + slope)) / damp


@numba.njit(cache=True)
def _implicit_node(phi_next, phi_left, om, dt, dn, delta, h):
    ca = 1.0 + delta * dt
    g = h * dn - phi_left
    cb = ca * g - phi_next
    cc = om * dt * dn + g * phi_next
    # cb^2 + 4 ca cc written as a sum of squares plus a nonnegative term
    disc = (ca * g + phi_next) ** 2 + 4.0 * ca * om * dt * dn
    root = math.sqrt(disc)
    if cb > 0.0:
        # same larger root, rationalized to avoid cancellation
        return 2.0 * cc / (cb + root)
    return (-cb + root) / (2.0 * ca)


@numba.njit(cache=True)
def _implicit_row(u, om, dt, dn, delta, h, out):
    out[0] = 0.0
    for j in range(1, u.size):
        out[j] = _implicit_node(u[j], out[j - 1], om[j], dt, dn, delta, h)


@numba.njit(cache=True)
def _check_row(out, monotone, bound, h, dn, rtol):
    """(0, -1) if the row is admissible, else (code, j) of the first violation."""
    if out[0] != 0.0:
        return 1, 0
    for j in range(out.size):
        v = out[j]
        if not v >= 0.0:
            return 2, j
        if v > bound:
            return 3, j
        if j > 0:
            if monotone and out[j - 1] > v + rtol * (1.0 + abs(v)):
                return 4, j
            if not out[j - 1] < v + h * dn:
                return 5, j
    return 0, -1


@numba.njit(cache=True)
def _sweep(scheme, values, omega, dt, dn, delta, h, bound, rtol, check, monotone):
    n_rows = values.shape[0]
    for i in range(n_rows - 1, 0, -1):
        u = values[i]
        om = omega[i - 1]
        out = values[i - 1]
        if scheme == 0:
            _explicit_row(u, om, dt, dn, delta, h, out)
        elif scheme == 1:
            _semi_row(u, om, dt, dn, delta, h, out)
        else:
            _implicit_row(u, om, dt, dn, delta, h, out)
        if check:
            code, j = _check_row(out, monotone, bound, h, dn, rtol)
            if code != 0:
                return code, i - 1, j
    return 0, -1, -1


_VIOLATION = {
    1: "boundary value Phi(t, 0) != 0",
    2: "negative or non-finite value",
    3: "value above the uniform stability bound",
    4: "value decreasing in n",
    5: "well-posedness Phi_{i,j-1} < Phi_{i,j} + h dn failed",
}


# -- public single-step API ----------------------------------------------------


def _row_args(problem: HarvestProblem, grid: GridSpec):
    return grid.dt(problem), grid.dn(problem), float(problem.delta), float(problem.h)


def explicit_step(row_next, problem: HarvestProblem, grid: GridSpec, omega_row, force: bool = False):
    """One explicit step: values at ``t_i`` to values at ``t_{i-1}``.

    ``omega_row`` holds ``omega(t_{i-1}, n_j)``. Refuses to run when the CFL
    margin is negative unless ``force``.
    """
    margin = cfl_margin(problem, grid)
    if margin < 0 and not force:
        raise StabilityError(f"explicit scheme violates the CFL condition (margin {margin:.6g})", margin)
    u = np.ascontiguousarray(row_next, dtype=float)
    out = np.empty_like(u)
    _explicit_row(u, np.ascontiguousarray(omega_row, dtype=float), *_row_args(problem, grid), out)
    return out


def semi_implicit_step(row_next, problem: HarvestProblem, grid: GridSpec, omega_row, force: bool = False):
    """One semi-implicit step; the discount is applied at the new time level."""
    margin = semi_implicit_margin(problem, grid)
    if margin < 0 and not force:
        raise StabilityError(
            f"semi-implicit scheme violates 1 - W_bar dt / (h^2 dn) >= 0 (margin {margin:.6g})", margin)
    u = np.ascontiguousarray(row_next, dtype=float)
    out = np.empty_like(u)
    _semi_row(u, np.ascontiguousarray(omega_row, dtype=float), *_row_args(problem, grid), out)
    return out


def implicit_node_update(phi_next: float, phi_left: float, omega: float,
                         problem: HarvestProblem, grid: GridSpec) -> float:
    """Larger root of ``C_A x^2 + C_B x - C_C = 0`` for node ``(i-1, j)``.

    ``phi_next`` is ``Phi_{i,j}`` and ``phi_left`` is the already updated
    ``Phi_{i-1,j-1}``.
    """
    return float(_implicit_node(float(phi_next), float(phi_left), float(omega), *_row_args(problem, grid)))


def implicit_step(row_next, problem: HarvestProblem, grid: GridSpec, omega_row):
    u = np.ascontiguousarray(row_next, dtype=float)
    out = np.empty_like(u)
    _implicit_row(u, np.ascontiguousarray(omega_row, dtype=float), *_row_args(problem, grid), out)
    return out


# -- full solve ------------------------------------------------------------------


@lru_cache(maxsize=4)
def _omega_cached(model, eta, offset, horizon, n_max, i_t, i_n):
    times = offset + np.arange(i_t + 1) * (horizon / i_t)
    ns = np.arange(i_n + 1) * (n_max / i_n)
    out = omega_lattice(times, ns, eta, model)
    out.flags.writeable = False
    return out


def omega_grid(problem: HarvestProblem, grid: GridSpec) -> np.ndarray:
    """``omega(t0 + t_i, n_j)`` on the solver lattice, shape ``(i_t + 1, i_n + 1)``.

    Cached per (problem, grid) so all three schemes share one evaluation.
    """
    return _omega_cached(problem.model, problem.eta, float(problem.growth_offset),
                         float(problem.horizon), float(problem.n_max), int(grid.i_t), int(grid.i_n))


@dataclass(frozen=True, eq=False)
class ValueGrid:
    """Discrete value function ``values[i, j] = Phi(t_i, n_j)`` (solver time ``t_i``)."""

    values: np.ndarray
    omega: np.ndarray
    scheme: str
    problem: HarvestProblem
    grid: GridSpec
    monotone_checked: bool = False

    @property
    def times(self) -> np.ndarray:
        return self.grid.times(self.problem)

    @property
    def ns(self) -> np.ndarray:
        return self.grid.ns(self.problem)


@dataclass(frozen=True, eq=False)
class PolicyGrid:
    """Feedback harvest rate ``q[i, j] = omega / (h + one-sided slope)^2``, zero at ``n = 0``."""

    value: ValueGrid

    @cached_property
    def q(self) -> np.ndarray:
        v = self.value
        slope = np.diff(v.values, axis=1) / v.grid.dn(v.problem)
        q = np.zeros_like(v.values)
        q[:, 1:] = v.omega[:, 1:] / (v.problem.h + slope) ** 2
        q.flags.writeable = False
        return q


def check_policy(policy: PolicyGrid) -> None:
    q = policy.q
    cap = policy.value.problem.q_max
    if np.any(q[:, 0] != 0):
        raise InvariantViolation("harvest rate at n = 0 must vanish")
    bad = np.argwhere(~((q >= 0) & (q <= cap * (1 + 1e-12))))
    if bad.size:
        i, j = bad[0]
        raise InvariantViolation(f"harvest rate {q[i, j]:.6g} outside [0, {cap:.6g}]", int(i), int(j))


def solve(problem: HarvestProblem, grid: GridSpec, scheme: str = "semi_implicit",
          force: bool = False, check: bool = True) -> tuple[ValueGrid, PolicyGrid]:
    """March the chosen scheme from the terminal reward back to ``t = 0``.

    Raises:
        StabilityError: the scheme's time-step condition fails and ``force`` is off.
        InvariantViolation: a discrete guarantee failed mid-sweep (only when ``check``).
    """
    name = scheme_name(scheme)
    if name == "explicit":
        margin = cfl_margin(problem, grid)
        if margin < 0 and not force:
            raise StabilityError(f"explicit scheme violates the CFL condition (margin {margin:.6g})", margin)
    elif name == "semi_implicit":
        margin = semi_implicit_margin(problem, grid)
        if margin < 0 and not force:
            raise StabilityError(
                f"semi-implicit scheme violates 1 - W_bar dt / (h^2 dn) >= 0 (margin {margin:.6g})", margin)

    omega = omega_grid(problem, grid)
    # monotonicity in n is only guaranteed when omega is non-decreasing in n
    monotone = bool(np.all(omega[:, 1:] >= omega[:, :-1]))
    if check and not monotone:
        log.warning("omega decreases in n somewhere; skipping the monotonicity check")
    values = np.empty((grid.i_t + 1, grid.i_n + 1))
    values[-1] = problem.terminal(grid.ns(problem))
    values[:, 0] = 0.0
    bound = problem.value_bound(name)
    if check:
        code, j = _check_row(values[-1], True, bound, problem.h, grid.dn(problem), MONOTONE_RTOL)
        if code:
            raise InvariantViolation(f"terminal row: {_VIOLATION[code]}", grid.i_t, j)
    code, i, j = _sweep(_SCHEME_CODE[name], values, omega, grid.dt(problem), grid.dn(problem),
                        float(problem.delta), float(problem.h), bound, MONOTONE_RTOL, check, monotone)
    if code:
        raise InvariantViolation(f"{name}: {_VIOLATION[code]}", int(i), int(j))
    values.flags.writeable = False
    value = ValueGrid(values=values, omega=omega, scheme=name, problem=problem, grid=grid,
                      monotone_checked=check and monotone)
    policy = PolicyGrid(value)
    if check:
        check_policy(policy)
    log.info("%s solve done: I_t=%d I_n=%d max Phi=%.6g", name, grid.i_t, grid.i_n, values.max())
    return value, policy


@dataclass(frozen=True)
class SchemeDifference:
    label: str
    diff: np.ndarray
    max_abs: float
    signed_mean: float


def difference(a: ValueGrid, b: ValueGrid) -> SchemeDifference:
    d = a.values - b.values
    return SchemeDifference(label=f"{a.scheme}-{b.scheme}", diff=d,
                            max_abs=float(np.max(np.abs(d))), signed_mean=float(np.mean(d)))


def compare_schemes(problem: HarvestProblem, grid: GridSpec, force: bool = False,
                    values: dict | None = None) -> dict[str, SchemeDifference]:
    """Pairwise differences explicit-semi, explicit-implicit and semi-implicit."""
    values = values or {name: solve(problem, grid, name, force=force)[0] for name in SCHEMES}
    e, s, i = (values[name] for name in SCHEMES)
    return {
        "explicit-semi_implicit": difference(e, s),
        "explicit-implicit": difference(e, i),
        "semi_implicit-implicit": difference(s, i),
    }
