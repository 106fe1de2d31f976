"""Threshold solver: backward shooting on the potential-slope ODE.

For a candidate boundary ``b`` the slope ``g`` of the candidate potential
solves the Riccati-type equation

    (1/2) sigma^2(x) g'(x) + x mu(x) g(x) - (eps/2) sigma^2(x) g(x)^2
        = lam(b) + gamma,        g(b) = 1,

where ``lam`` is the ambiguity-adjusted drift and ``gamma`` a diagnostic
perturbation of the right-hand side.  A boundary is *admissible* when the
slope stays at or above one all the way down; the optimal threshold is the
smallest admissible boundary.  Since admissibility is monotone in ``b``
(larger boundaries dominate), a bisection between the drift peak (never
admissible) and the drift zero (always admissible) pins it down.

Blow-up of the slope near zero is expected for admissible boundaries (the
potential's derivative genuinely diverges there), so growth past the
overflow guard classifies as admissible with a warning, while a dip below
one classifies as inadmissible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import ivp
from .errors import (AssumptionViolationError, InputDomainError,
                     MonotonicityViolationError, SingularIntegrationError,
                     TransformBreakdownError)
from .model import AmbiguityProblem, check_assumptions

__all__ = [
    "ShootingGrid",
    "BoundaryClass",
    "PotentialGrid",
    "ThresholdSolution",
    "integrate_slope",
    "slope_above_boundary",
    "classify_boundary",
    "solve_threshold",
    "build_potential",
    "cole_hopf_slope",
    "floor_sensitivity",
]

DIP_FLOOR = 2e-8           # x_min = DIP_FLOOR * drift_peak; see solve docstring
DIP_TOLERANCE = 1e-8       # below integrator accuracy a dip is noise
OVERFLOW_GUARD = 1e8
RTOL = 1e-10
ATOL = 1e-12
BETA_RTOL = 5e-9           # bisection width relative to the drift zero
N_GRID_LEFT = 2000
N_GRID_RIGHT = 500
FD_STEP_ABS = 1e-6         # companion offset, relative to the threshold
FD_STEP_REL = 2.5e-4       # companion offset cap, relative to the abscissa


@dataclass
class ShootingGrid:
    """Slope solution tabulated on a descending grid from the boundary.

    ``terminated_early`` marks a dip stop (final value below one minus the
    dip tolerance); ``blew_up`` marks an overflow-guard stop.  On a dip,
    ``dip_crossing`` is the largest abscissa where the slope crossed below
    one, refined on the recorded step history.
    """

    boundary: float
    gamma: float
    xs: np.ndarray
    slopes: np.ndarray
    slope_derivs: np.ndarray
    terminated_early: bool
    blew_up: bool
    dip_crossing: float | None

    @property
    def x_final(self):
        return float(self.xs[-1])

    @property
    def slope_final(self):
        return float(self.slopes[-1])


def _slope_rhs(problem: AmbiguityProblem, boundary: float, gamma: float):
    mu = problem.model.mu
    sigma = problem.model.sigma
    eps = problem.epsilon
    level = problem.drift(boundary) + gamma

    def rhs(x, g):
        s = sigma(x)
        s2 = s * s
        return 2.0 * (level - x * mu(x) * g + 0.5 * eps * s2 * g * g) / s2

    return rhs


def integrate_slope(problem: AmbiguityProblem, boundary: float, gamma: float = 0.0,
                    x_min: float | None = None, *, rtol=RTOL, atol=ATOL,
                    dip_tolerance=DIP_TOLERANCE, overflow_guard=OVERFLOW_GUARD,
                    forced_nodes=None, stop_on_dip=True,
                    min_step: float | None = None) -> ShootingGrid:
    """Integrate the slope ODE from the boundary down to x_min.

    Stops early once the slope drops below ``1 - dip_tolerance`` (recording
    the refined unit crossing) or exceeds the overflow guard.  When the step
    size underflows near a blow-up and the ambiguity level is positive, the
    integration switches to the linear Cole-Hopf form, which stays finite
    where the slope itself explodes, and continues to x_min.
    """
    if x_min is None:
        x_min = DIP_FLOOR * problem.drift_peak
    if not 0.0 < x_min < boundary <= problem.x_max:
        raise InputDomainError(
            f"need 0 < x_min < boundary <= x_max, got x_min={x_min!r}, "
            f"boundary={boundary!r}, x_max={problem.x_max!r}")
    rhs = _slope_rhs(problem, boundary, gamma)
    dip_level = (1.0 - dip_tolerance) if stop_on_dip else None
    if min_step is None:
        min_step = 1e-14 * boundary
    try:
        res = ivp.integrate(
            rhs, boundary, 1.0, x_min, rtol=rtol, atol=atol,
            forced_nodes=forced_nodes, dip_level=dip_level, crossing_level=1.0,
            guard=overflow_guard, min_step=min_step,
            first_step=1e-6 * boundary)
    except SingularIntegrationError:
        if problem.epsilon <= 0.0:
            raise
        res = _cole_hopf_rescue(problem, boundary, gamma, x_min, rtol=rtol,
                                atol=atol, dip_level=dip_level,
                                guard=overflow_guard, forced_nodes=forced_nodes)
    return ShootingGrid(
        boundary=boundary, gamma=gamma, xs=res.xs, slopes=res.ys,
        slope_derivs=res.dys, terminated_early=res.status == "dip",
        blew_up=res.status == "guard", dip_crossing=res.crossing_x)


def slope_above_boundary(problem: AmbiguityProblem, boundary: float,
                         x_top: float, gamma: float = 0.0, *,
                         rtol=RTOL, atol=ATOL, forced_nodes=None):
    """Forward extension of the slope on (boundary, x_top]; ascending arrays.

    Used by the property checks on the region above the boundary, where the
    slope must stay at or above one.
    """
    if not boundary < x_top <= problem.x_max:
        raise InputDomainError(
            f"need boundary < x_top <= x_max, got {boundary!r}, {x_top!r}")
    rhs = _slope_rhs(problem, boundary, gamma)
    res = ivp.integrate(rhs, boundary, 1.0, x_top, rtol=rtol, atol=atol,
                        forced_nodes=forced_nodes,
                        min_step=1e-14 * x_top, first_step=1e-6 * boundary)
    return res.xs, res.ys, res.dys


def _cole_hopf_rescue(problem, boundary, gamma, x_min, *, rtol, atol,
                      dip_level, guard, forced_nodes):
    """Full-interval fallback through the linear form (positive ambiguity)."""
    grid = cole_hopf_slope(problem, boundary, x_min, gamma=gamma,
                           eval_xs=forced_nodes)
    status = "reached"
    crossing = None
    ys = grid.slopes
    if dip_level is not None and np.any(ys < dip_level):
        cut = int(np.argmax(ys < dip_level))
        grid_xs, ys, dys = grid.xs[:cut + 1], ys[:cut + 1], grid.slope_derivs[:cut + 1]
        status = "dip"
        crossing = ivp._refine_crossing(grid_xs, ys, dys, 1.0)
        return ivp.IntegrationResult(grid_xs, ys, dys, status, crossing)
    if np.any(np.abs(ys) > guard):
        cut = int(np.argmax(np.abs(ys) > guard))
        return ivp.IntegrationResult(grid.xs[:cut + 1], ys[:cut + 1],
                                     grid.slope_derivs[:cut + 1], "guard")
    return ivp.IntegrationResult(grid.xs, ys, grid.slope_derivs, status, crossing)


def cole_hopf_slope(problem: AmbiguityProblem, boundary: float, x_min: float,
                    gamma: float = 0.0, *, rtol=1e-12, atol=1e-14,
                    eval_xs=None, n_eval=400) -> ShootingGrid:
    """Slope via the linear second-order form; independent cross-check.

    Substituting f = -ln(phi)/eps turns the quadratic slope ODE into

        (1/2) sigma^2 phi'' + x mu phi' = -(lam(b) + gamma) eps phi,
        phi(b) = 1,  phi'(b) = -eps,

    and the slope is recovered as g = -phi'/(eps phi), so g(b) = 1.  A zero
    crossing of phi before x_min means the slope has blown up; the sign of
    phi' there separates a dip to -infinity (phi' > 0 moving down) from
    admissible growth to +infinity.
    """
    eps = problem.epsilon
    if eps <= 0.0:
        raise InputDomainError("the linear form requires epsilon > 0")
    if not 0.0 < x_min < boundary:
        raise InputDomainError(
            f"need 0 < x_min < boundary, got {x_min!r}, {boundary!r}")
    mu = problem.model.mu
    sigma = problem.model.sigma
    level = problem.drift(boundary) + gamma

    def rhs(x, y):
        phi, dphi = y
        s = sigma(x)
        return (dphi, (-level * eps * phi - x * mu(x) * dphi) * 2.0 / (s * s))

    def phi_zero(x, y):
        return y[0]
    phi_zero.terminal = True

    if eval_xs is None:
        eval_xs = np.geomspace(boundary, x_min, n_eval)
    else:
        eval_xs = np.asarray(eval_xs, dtype=float)
        eval_xs = eval_xs[(eval_xs <= boundary) & (eval_xs >= x_min)]
        if eval_xs.size == 0 or eval_xs[0] != boundary:
            eval_xs = np.concatenate(([boundary], eval_xs))
        if eval_xs[-1] != x_min:
            eval_xs = np.concatenate((eval_xs, [x_min]))
    sol = solve_ivp(rhs, (boundary, x_min), (1.0, -eps), method="DOP853",
                    t_eval=eval_xs, events=phi_zero, rtol=rtol, atol=atol,
                    dense_output=False)
    if sol.status == 1 and len(sol.t_events[0]):
        x_cross = float(sol.t_events[0][0])
        dphi_sign = float(np.sign(sol.y_events[0][0][1]))
        raise TransformBreakdownError(
            f"base function crossed zero at x={x_cross} before x_min={x_min}; "
            f"slope blew up toward {'-inf' if dphi_sign > 0 else '+inf'}",
            crossing_x=x_cross, derivative_sign=dphi_sign)
    if not sol.success:
        raise SingularIntegrationError(
            f"linear-form integration failed: {sol.message}",
            last_x=float(sol.t[-1]) if sol.t.size else boundary)
    phi, dphi = sol.y
    slopes = -dphi / (eps * phi)
    rhs_slope = _slope_rhs(problem, boundary, gamma)
    derivs = np.array([rhs_slope(x, g) for x, g in zip(sol.t, slopes)])
    return ShootingGrid(
        boundary=boundary, gamma=gamma, xs=sol.t.copy(), slopes=slopes,
        slope_derivs=derivs, terminated_early=False, blew_up=False,
        dip_crossing=None)


@dataclass(frozen=True)
class BoundaryClass:
    """Admissibility verdict for one candidate boundary."""

    boundary: float
    in_set: bool
    dip_crossing: float | None
    blowup_warning: bool
    grid: ShootingGrid


def classify_boundary(problem: AmbiguityProblem, boundary: float,
                      x_min: float | None = None, *, rtol=RTOL, atol=ATOL,
                      dip_tolerance=DIP_TOLERANCE,
                      overflow_guard=OVERFLOW_GUARD) -> BoundaryClass:
    """Decide whether the slope stays >= 1 - dip_tolerance down to x_min.

    Boundaries at or below the drift peak are rejected outright: no boundary
    there is admissible, and the bisection never needs to probe them.
    Blow-up through the overflow guard without a prior dip is the expected
    admissible behaviour near zero and classifies as in-set with a warning.
    """
    if boundary <= problem.drift_peak:
        raise InputDomainError(
            f"boundary {boundary!r} is at or below the drift peak "
            f"{problem.drift_peak!r}; no such boundary is admissible")
    if boundary > problem.drift_zero:
        raise InputDomainError(
            f"boundary {boundary!r} exceeds the drift zero "
            f"{problem.drift_zero!r}")
    grid = integrate_slope(problem, boundary, 0.0, x_min, rtol=rtol, atol=atol,
                           dip_tolerance=dip_tolerance,
                           overflow_guard=overflow_guard)
    return BoundaryClass(
        boundary=boundary, in_set=not grid.terminated_early,
        dip_crossing=grid.dip_crossing, blowup_warning=grid.blew_up,
        grid=grid)


@dataclass(frozen=True)
class PotentialGrid:
    """Tabulated potential: slope and value on nodes straddling the threshold.

    ``nodes_x`` ascend and carry every accepted integrator step at or below
    the threshold (forced evaluation nodes included), so cubic Hermite
    interpolation between them retains integrator-level accuracy.  Above the
    threshold the slope is identically one and the value is linear.

    ``fd_*`` hold companion slope evaluations at x +/- h for interior nodes;
    they support a finite-difference cross-check of the curvature that does
    not reuse the ODE identity.
    """

    threshold: float
    x_min: float
    nodes_x: np.ndarray
    nodes_slope: np.ndarray
    nodes_slope_deriv: np.ndarray
    nodes_value: np.ndarray
    grid_x: np.ndarray          # requested left grid (ascending, <= threshold)
    grid_right_x: np.ndarray    # requested right grid (> threshold)
    fd_x: np.ndarray
    fd_h: np.ndarray
    fd_slope_minus: np.ndarray
    fd_slope_plus: np.ndarray
    truncated_at: float | None  # > x_min when integration stopped early

    def _hermite_segments(self, x):
        xs = self.nodes_x
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        x0 = xs[idx]
        x1 = xs[idx + 1]
        return idx, x0, x1

    def slope_at(self, x):
        """Potential slope; one above the threshold, Hermite below."""
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.ones_like(arr)
        below = arr < self.threshold
        if np.any(below):
            xb = np.clip(arr[below], self.nodes_x[0], self.threshold)
            idx, x0, x1 = self._hermite_segments(xb)
            out[below] = _hermite_vec(
                xb, x0, x1,
                self.nodes_slope[idx], self.nodes_slope_deriv[idx],
                self.nodes_slope[idx + 1], self.nodes_slope_deriv[idx + 1])
        return out if np.ndim(x) else float(out[0])

    def value_at(self, x):
        """Potential value, anchored to zero at the threshold."""
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = arr - self.threshold
        below = arr < self.threshold
        if np.any(below):
            xb = np.clip(arr[below], self.nodes_x[0], self.threshold)
            idx, x0, x1 = self._hermite_segments(xb)
            out[below] = _hermite_vec(
                xb, x0, x1,
                self.nodes_value[idx], self.nodes_slope[idx],
                self.nodes_value[idx + 1], self.nodes_slope[idx + 1])
        return out if np.ndim(x) else float(out[0])


def _hermite_vec(x, x0, x1, y0, d0, y1, d1):
    h = x1 - x0
    t = (x - x0) / h
    u = 1.0 - t
    return (y0 * (1.0 + 2.0 * t) * u * u + d0 * h * t * u * u
            + y1 * t * t * (3.0 - 2.0 * t) + d1 * h * t * t * (t - 1.0))


def build_potential(problem: AmbiguityProblem, threshold: float, *,
                    x_min: float | None = None, n_left=N_GRID_LEFT,
                    n_right=N_GRID_RIGHT, x_plot_max=None,
                    fd_step_abs=FD_STEP_ABS, fd_step_rel=FD_STEP_REL,
                    rtol=RTOL, atol=ATOL, dip_tolerance=DIP_TOLERANCE,
                    overflow_guard=OVERFLOW_GUARD) -> PotentialGrid:
    """Tabulate the potential for an admissible threshold.

    The slope is the shooting ODE solution left of the threshold (forced
    onto a log-spaced grid plus finite-difference companion nodes) and
    identically one to the right; the value integrates the slope with the
    normalization value(threshold) = 0 and extends linearly above.

    Raises ``InputDomainError`` when the threshold is inadmissible (the
    integration dips); an overflow-guard stop truncates the grid above
    ``x_min`` and records the truncation point instead of failing.
    """
    if x_min is None:
        x_min = DIP_FLOOR * problem.drift_peak
    if x_plot_max is None:
        x_plot_max = min(2.0 * problem.drift_zero, problem.x_max)
    grid_left = np.geomspace(x_min, threshold, n_left)
    h = np.minimum(fd_step_abs * threshold, fd_step_rel * grid_left)
    interior = (grid_left - h > x_min) & (grid_left + h < threshold)
    fd_x = grid_left[interior]
    fd_h = h[interior]
    forced = np.unique(np.concatenate(
        [grid_left, fd_x - fd_h, fd_x + fd_h]))[::-1]
    forced = forced[(forced < threshold) & (forced > x_min)]

    grid = integrate_slope(problem, threshold, 0.0, x_min, rtol=rtol,
                           atol=atol, dip_tolerance=dip_tolerance,
                           overflow_guard=overflow_guard, forced_nodes=forced)
    if grid.terminated_early:
        raise InputDomainError(
            f"threshold {threshold!r} is not admissible: slope dipped below "
            f"one near x={grid.dip_crossing!r}")
    truncated_at = grid.x_final if grid.blew_up else None

    # Ascending node order for interpolation and quadrature.
    nodes_x = grid.xs[::-1].copy()
    nodes_g = grid.slopes[::-1].copy()
    nodes_dg = grid.slope_derivs[::-1].copy()

    # Cumulative Hermite-corrected trapezoid, anchored at the threshold:
    # over [a, b]: h (g_a + g_b)/2 + h^2 (g'_a - g'_b)/12, exact for cubics.
    dx = np.diff(nodes_x)
    seg = (dx * (nodes_g[:-1] + nodes_g[1:]) / 2.0
           + dx * dx * (nodes_dg[:-1] - nodes_dg[1:]) / 12.0)
    value = np.concatenate(([0.0], np.cumsum(seg)))
    value -= value[-1]   # zero at the threshold (the last ascending node)

    pos = np.searchsorted(nodes_x, grid_left)
    present = (pos < nodes_x.size) & (nodes_x[np.minimum(pos, nodes_x.size - 1)]
                                      == grid_left)
    grid_x = grid_left[present]

    keep = (fd_x - fd_h >= nodes_x[0]) & (fd_x + fd_h <= nodes_x[-1])
    fd_x, fd_h = fd_x[keep], fd_h[keep]
    minus_pos = np.searchsorted(nodes_x, fd_x - fd_h)
    plus_pos = np.searchsorted(nodes_x, fd_x + fd_h)
    fd_minus = nodes_g[minus_pos]
    fd_plus = nodes_g[plus_pos]

    right = np.linspace(threshold, x_plot_max, n_right + 1)[1:]
    return PotentialGrid(
        threshold=threshold, x_min=x_min, nodes_x=nodes_x,
        nodes_slope=nodes_g, nodes_slope_deriv=nodes_dg, nodes_value=value,
        grid_x=grid_x, grid_right_x=right, fd_x=fd_x, fd_h=fd_h,
        fd_slope_minus=fd_minus, fd_slope_plus=fd_plus,
        truncated_at=truncated_at)


@dataclass(frozen=True)
class ThresholdSolution:
    """Optimal threshold, long-run yield, and the tabulated potential."""

    problem: AmbiguityProblem
    threshold: float
    long_run_yield: float
    grid: PotentialGrid
    bisection_trace: tuple
    iterations: int
    x_min: float
    beta_tolerance: float

    def vprime(self, x):
        return self.grid.slope_at(x)

    def v(self, x):
        return self.grid.value_at(x)

    def vsecond(self, x):
        """Curvature through the ODE identity (zero above the threshold)."""
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros_like(arr)
        below = arr <= self.threshold
        if np.any(below):
            xb = arr[below]
            gp = self.grid.slope_at(xb)
            s = np.asarray(self.problem.model.sigma(xb), dtype=float)
            s2 = s * s
            level = self.problem.drift(self.threshold)
            mu = np.asarray(self.problem.model.mu(xb), dtype=float)
            out[below] = 2.0 * (level - xb * mu * gp
                                + 0.5 * self.problem.epsilon * s2 * gp * gp) / s2
        return out if np.ndim(x) else float(out[0])


def solve_threshold(problem: AmbiguityProblem, *, beta_rtol=BETA_RTOL,
                    dip_floor=DIP_FLOOR, rtol=RTOL, atol=ATOL,
                    dip_tolerance=DIP_TOLERANCE, overflow_guard=OVERFLOW_GUARD,
                    n_left=N_GRID_LEFT, n_right=N_GRID_RIGHT, x_plot_max=None,
                    verify_assumptions=True, assume_ok=False) -> ThresholdSolution:
    """Bisect for the optimal threshold and assemble its potential.

    The lower end starts at the drift peak (never admissible), the upper end
    at the drift zero (validated admissible); the returned threshold is the
    admissible end of the final interval, so the certified slope bound holds
    at it.  The recorded trace is checked for the monotone structure the
    bisection relies on: every admissible probe must exceed every
    inadmissible one.

    The classification floor is ``dip_floor * drift_peak``.  Lowering the
    floor moves the threshold by an amount proportional to the floor, so the
    default keeps that bias well inside the bisection tolerance.
    """
    if verify_assumptions and not assume_ok:
        report = check_assumptions(problem)
        if not report.all_passed:
            failure = report.first_failure()
            raise AssumptionViolationError(
                f"assumption check failed: ({failure.assumption}) "
                f"{failure.name}; pass assume_ok=True to override")
    x_min = dip_floor * problem.drift_peak
    beta_tol = beta_rtol * problem.drift_zero
    lo = problem.drift_peak
    hi = problem.drift_zero
    trace = []
    iterations = 0

    top = classify_boundary(problem, hi, x_min, rtol=rtol, atol=atol,
                            dip_tolerance=dip_tolerance,
                            overflow_guard=overflow_guard)
    iterations += 1
    trace.append((hi, "in" if top.in_set else "out"))
    if not top.in_set:
        raise MonotonicityViolationError(
            f"drift zero {hi!r} classified inadmissible; assumption failure "
            "or tolerances too loose")

    while hi - lo > beta_tol:
        mid = 0.5 * (lo + hi)
        verdict = classify_boundary(problem, mid, x_min, rtol=rtol, atol=atol,
                                    dip_tolerance=dip_tolerance,
                                    overflow_guard=overflow_guard)
        iterations += 1
        trace.append((mid, "in" if verdict.in_set else "out"))
        if verdict.in_set:
            hi = mid
        else:
            lo = mid

    ins = [b for b, kind in trace if kind == "in"]
    outs = [b for b, kind in trace if kind == "out"]
    if ins and outs and max(outs) > min(ins):
        raise MonotonicityViolationError(
            f"bisection trace is not monotone: inadmissible boundary "
            f"{max(outs)!r} above admissible {min(ins)!r}")

    threshold = hi
    grid = build_potential(problem, threshold, x_min=x_min, n_left=n_left,
                           n_right=n_right, x_plot_max=x_plot_max, rtol=rtol,
                           atol=atol, dip_tolerance=dip_tolerance,
                           overflow_guard=overflow_guard)
    return ThresholdSolution(
        problem=problem, threshold=threshold,
        long_run_yield=float(problem.drift(threshold)), grid=grid,
        bisection_trace=tuple(trace), iterations=iterations, x_min=x_min,
        beta_tolerance=beta_tol)


def floor_sensitivity(problem: AmbiguityProblem, *, dip_floor=DIP_FLOOR,
                      **solver_kwargs):
    """Threshold shift when the classification floor drops tenfold."""
    base = solve_threshold(problem, dip_floor=dip_floor, **solver_kwargs)
    refined = solve_threshold(problem, dip_floor=dip_floor / 10.0,
                              **solver_kwargs)
    return base.threshold, refined.threshold, abs(base.threshold
                                                  - refined.threshold)
