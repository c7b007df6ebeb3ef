"""Harvest policies, controlled population paths and the worst-case weight law along them."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .hjb import GridSpec, HarvestProblem, ValueGrid, difference, solve
from .robust import DistortedDensity, worst_case_distortion

log = logging.getLogger(__name__)

DEFAULT_TERMINALS = tuple(round(0.1 * k, 1) for k in range(1, 10))

# low-harvest plateau detector: q below this fraction of the median ...
PLATEAU_FRACTION = 0.05
# ... for at least this many consecutive samples
PLATEAU_MIN_SAMPLES = 5


def _bracket(value: ValueGrid, n: float):
    dn = value.grid.dn(value.problem)
    x = min(max(n / dn, 0.0), float(value.grid.i_n))
    j = min(int(x), value.grid.i_n - 1)
    return j, x - j


def _interp_slope_omega(value: ValueGrid, t_index: int, n: float):
    row = value.values[t_index]
    dn = value.grid.dn(value.problem)
    j, frac = _bracket(value, n)
    # one-sided slopes live on nodes 1..I_n; node 0 borrows node 1's
    s_lo = (row[max(j, 1)] - row[max(j, 1) - 1]) / dn
    s_hi = (row[j + 1] - row[j]) / dn
    om = value.omega[t_index]
    return (1 - frac) * s_lo + frac * s_hi, (1 - frac) * om[j] + frac * om[j + 1]


def optimal_control_at(value: ValueGrid, t_index: int, n: float) -> float:
    """Feedback harvest rate at solver step ``t_index`` and population ``n``.

    Slope and ``omega`` are interpolated linearly between the bracketing nodes;
    the rate is clamped to ``[0, W_bar / h^2]`` and vanishes at ``n = 0``.
    """
    problem = value.problem
    if not 0.0 <= n <= problem.n_max * (1 + 1e-12):
        raise ValidationError(f"population {n} outside [0, {problem.n_max}]")
    if n <= 0.0:
        return 0.0
    slope, om = _interp_slope_omega(value, t_index, n)
    q = om / (problem.h + slope) ** 2
    return float(min(max(q, 0.0), problem.q_max))


@dataclass(frozen=True)
class Trajectory:
    """Controlled path on the solver time grid (forward-ordered)."""

    t: np.ndarray
    n: np.ndarray
    q: np.ndarray
    omega: np.ndarray
    terminal_n: float
    left_domain: bool = False
    growth_offset: float = 0.0

    def n_at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.n))


def backtrack_trajectory(value: ValueGrid, terminal_n: float) -> Trajectory:
    """Integrate ``dN = -q dt`` backwards from ``N_T = terminal_n``.

    Reverse explicit Euler on the solver grid: ``N_{i-1} = N_i + dt q(t_i, N_i)``.
    Paths that would leave ``[0, n_max]`` are clamped and flagged ``left_domain``.
    """
    problem, grid = value.problem, value.grid
    if not 0.0 <= terminal_n <= problem.n_max:
        raise ValidationError(f"terminal population {terminal_n} outside [0, {problem.n_max}]")
    dt = grid.dt(problem)
    n = np.empty(grid.i_t + 1)
    q = np.empty(grid.i_t + 1)
    om = np.empty(grid.i_t + 1)
    n[-1] = terminal_n
    left = False
    for i in range(grid.i_t, -1, -1):
        q[i] = optimal_control_at(value, i, n[i])
        om[i] = _interp_slope_omega(value, i, n[i])[1]
        if i:
            nxt = n[i] + dt * q[i]
            if nxt > problem.n_max:
                nxt, left = problem.n_max, True
            n[i - 1] = nxt
    return Trajectory(t=grid.times(problem), n=n, q=q, omega=om, terminal_n=float(terminal_n),
                      left_domain=left, growth_offset=float(problem.growth_offset))


def forward_trajectory(value: ValueGrid, initial_n: float) -> Trajectory:
    """Forward explicit Euler ``N_{i+1} = N_i - dt q(t_i, N_i)`` under the feedback policy."""
    problem, grid = value.problem, value.grid
    if not 0.0 <= initial_n <= problem.n_max:
        raise ValidationError(f"initial population {initial_n} outside [0, {problem.n_max}]")
    dt = grid.dt(problem)
    n = np.empty(grid.i_t + 1)
    q = np.empty(grid.i_t + 1)
    om = np.empty(grid.i_t + 1)
    n[0] = initial_n
    for i in range(grid.i_t + 1):
        q[i] = optimal_control_at(value, i, n[i])
        om[i] = _interp_slope_omega(value, i, n[i])[1]
        if i < grid.i_t:
            n[i + 1] = max(n[i] - dt * q[i], 0.0)
    return Trajectory(t=grid.times(problem), n=n, q=q, omega=om, terminal_n=float(n[-1]),
                      growth_offset=float(problem.growth_offset))


def low_harvest_plateaus(traj: Trajectory, fraction: float = PLATEAU_FRACTION,
                         min_samples: int = PLATEAU_MIN_SAMPLES) -> list[tuple[int, int]]:
    """Index ranges ``[start, stop)`` where ``q`` stays below ``fraction`` of its median."""
    low = traj.q < fraction * np.median(traj.q)
    runs = []
    start = None
    for k, flag in enumerate(np.append(low, False)):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if k - start >= min_samples:
                runs.append((start, k))
            start = None
    return runs


def distortion_along(traj: Trajectory, times: Sequence[float], problem: HarvestProblem) -> list[DistortedDensity]:
    """Worst-case maximum-weight law at solver times ``times`` along ``traj``."""
    out = []
    for t in times:
        if not 0.0 <= t <= problem.horizon:
            raise ValidationError(f"time {t} outside [0, {problem.horizon}]")
        out.append(worst_case_distortion(problem.growth_offset + t, traj.n_at(t), problem.eta, problem.model))
    return out


@dataclass
class VariantReport:
    label: str
    problem: HarvestProblem
    value: ValueGrid
    max_abs_value_delta: float
    signed_mean_value_delta: float
    value_below_nominal: bool
    trajectories: dict[float, Trajectory] = field(default_factory=dict)
    forward: Trajectory | None = None


def sensitivity_suite(base: HarvestProblem, variants: Sequence[tuple[str, dict]], grid: GridSpec,
                      scheme: str = "semi_implicit", terminals: Sequence[float] = DEFAULT_TERMINALS,
                      common_initial_n: float | None = None) -> list[VariantReport]:
    """Solve the nominal problem and each variant; report deltas against the nominal.

    ``variants`` are ``(label, overrides)`` pairs applied with
    :func:`dataclasses.replace`. Besides backtracked fans, each variant is also
    simulated forward from ``common_initial_n`` (by default the starting point of
    the nominal path that ends at one half).
    """
    nominal, _ = solve(base, grid, scheme)
    if common_initial_n is None:
        common_initial_n = float(backtrack_trajectory(nominal, 0.5).n[0])
    reports = []
    for label, overrides in [("nominal", {})] + list(variants):
        problem = dataclasses.replace(base, **overrides) if overrides else base
        value = nominal if not overrides else solve(problem, grid, scheme)[0]
        d = difference(value, nominal)
        report = VariantReport(
            label=label, problem=problem, value=value, max_abs_value_delta=d.max_abs,
            signed_mean_value_delta=d.signed_mean,
            value_below_nominal=bool(np.all(d.diff <= 1e-12 * (1 + np.abs(nominal.values)))),
            trajectories={tn: backtrack_trajectory(value, tn) for tn in terminals},
            forward=forward_trajectory(value, common_initial_n),
        )
        log.info("variant %s: max |dPhi| = %.4g", label, d.max_abs)
        reports.append(report)
    return reports
