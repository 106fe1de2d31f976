"""Reflected Euler-Maruyama simulation of the harvested population.

The threshold policy keeps the population in [0, beta] by harvesting
exactly the overshoot at the upper boundary (the interval Skorokhod map
reduces, per Euler step, to a min with the boundary plus the clipped
excess).  Under the worst-case measure the drift gains sigma(x) psi(x)
with the adverse kernel psi(x) = -eps sigma(x) v'(x), and the payoff adds
the divergence penalty psi^2 / (2 eps) per unit time.  The long-run average
of harvest plus penalty estimates the solved yield.

Paths are independent units of work with their own counter-based random
streams (Philox keyed by master seed and path index), so results are
bit-identical regardless of how paths are batched or scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputDomainError, SimulationAbortError
from .model import AmbiguityProblem
from .shooting import ThresholdSolution

__all__ = [
    "SimConfig",
    "PathStats",
    "PayoffEstimate",
    "X0IndependenceReport",
    "path_rng",
    "reflect_step",
    "worst_case_kernel",
    "simulate_path",
    "estimate_payoff",
    "x0_independence_check",
]

_MASK64 = (1 << 64) - 1

MEASURES = ("reference", "worstcase", "custom")


def path_rng(seed: int, path_id: int) -> np.random.Generator:
    """Counter-based generator for one path: Philox keyed by (seed, path)."""
    key = ((seed & _MASK64) << 64) | (path_id & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def reflect_step(x, drift, noise, beta):
    """One projected Euler step of the threshold policy.

    ``proposed = x + drift + noise`` is pushed back to the boundary: the
    overshoot above beta is harvested (dZ), a negative proposal is clipped
    to zero with no harvest (the event is counted by the caller; zero is
    unattainable for the continuous dynamics, so clipping preserves the
    model instead of inventing a regulator there).

    Works elementwise on scalars or arrays; returns (x_next, dZ).
    """
    proposed = x + drift + noise
    dZ = np.maximum(proposed - beta, 0.0)
    x_next = np.minimum(proposed, beta)
    x_next = np.maximum(x_next, 0.0)
    if np.ndim(proposed) == 0:
        return float(x_next), float(dZ)
    return x_next, dZ


class _CubicTable:
    """Piecewise-cubic slope evaluator (standard-form Hermite coefficients)."""

    def __init__(self, xs, ys, dys):
        self.xs = xs.copy()
        self.x0 = xs[:-1]
        h = np.diff(xs)
        y0, y1 = ys[:-1], ys[1:]
        d0, d1 = dys[:-1], dys[1:]
        self.c0 = y0.copy()
        self.c1 = d0.copy()
        self.c2 = (3.0 * (y1 - y0) / h - 2.0 * d0 - d1) / h
        self.c3 = (d0 + d1 - 2.0 * (y1 - y0) / h) / (h * h)
        self.lo = float(xs[0])
        self.hi = float(xs[-1])

    def __call__(self, x):
        xc = np.clip(x, self.lo, self.hi)
        idx = np.clip(np.searchsorted(self.xs, xc, side="right") - 1,
                      0, self.x0.size - 1)
        u = xc - self.x0[idx]
        return self.c0[idx] + u * (self.c1[idx] + u * (self.c2[idx]
                                                       + u * self.c3[idx]))


def _solution_slope_table(sol: ThresholdSolution) -> _CubicTable:
    g = sol.grid
    xs = np.concatenate((g.nodes_x, [sol.threshold + 1.0]))
    ys = np.concatenate((g.nodes_slope, [1.0]))
    ds = np.concatenate((g.nodes_slope_deriv, [0.0]))
    # Make the last tabulated node paste exactly into the unit branch.
    ys[len(g.nodes_x) - 1] = 1.0
    ds[len(g.nodes_x) - 1] = 0.0
    return _CubicTable(xs, ys, ds)


def worst_case_kernel(problem: AmbiguityProblem, sol: ThresholdSolution, x):
    """Adverse Girsanov kernel -eps sigma(x) v'(x); zero when eps is zero.

    Below the tabulated grid floor the slope is clamped to its floor value
    (the reflected process spends vanishing time there); the simulation
    engine counts clamped evaluations.
    """
    eps = problem.epsilon
    if eps == 0.0:
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
    table = _solution_slope_table(sol)
    xv = np.asarray(x, dtype=float)
    out = -eps * np.asarray(problem.model.sigma(xv), dtype=float) * table(xv)
    return out if np.ndim(x) else float(out)


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Monte Carlo configuration for one threshold policy.

    ``measure`` selects the simulated drift: the reference dynamics, the
    worst-case change of measure built from a solved potential slope, or a
    custom tabulated kernel theta(x) (linearly interpolated).  ``burn_in``
    is the fraction of the horizon discarded before time averaging.
    """

    problem: AmbiguityProblem
    beta: float
    x0: float
    dt: float = 1e-4
    horizon: float = 200.0
    n_paths: int = 256
    burn_in: float = 0.1
    measure: str = "reference"
    solution: ThresholdSolution | None = None
    kernel_xs: np.ndarray | None = None
    kernel_values: np.ndarray | None = None
    seed: int = 0
    n_bins: int = 50
    occupation_stride: int = 8
    block_steps: int = 16384

    def __post_init__(self):
        if not self.beta > 0.0:
            raise InputDomainError(f"beta must be positive, got {self.beta!r}")
        if not self.x0 > 0.0:
            raise InputDomainError(f"x0 must be positive, got {self.x0!r}")
        if not 0.0 < self.dt < self.horizon:
            raise InputDomainError(
                f"need 0 < dt < horizon, got dt={self.dt!r}, "
                f"horizon={self.horizon!r}")
        if not 0.0 <= self.burn_in <= 0.5:
            raise InputDomainError(
                f"burn_in must be in [0, 0.5], got {self.burn_in!r}")
        if self.n_paths < 1:
            raise InputDomainError("n_paths must be at least 1")
        if self.measure not in MEASURES:
            raise InputDomainError(
                f"measure must be one of {MEASURES}, got {self.measure!r}")
        if self.measure == "worstcase" and self.solution is None:
            raise InputDomainError("worstcase measure needs a solved potential")
        if self.measure == "custom" and (self.kernel_xs is None
                                         or self.kernel_values is None):
            raise InputDomainError("custom measure needs a tabulated kernel")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def burn_steps(self):
        return int(round(self.burn_in * self.n_steps))


@dataclass
class PathStats:
    """Accumulators of one simulated trajectory (retained window only)."""

    path_id: int
    harvest_total: float
    kl_penalty: float
    payoff_estimate: float
    occupation_histogram: np.ndarray
    max_x: float
    negative_proposals: int
    floor_clamps: int
    first_half_payoff: float
    second_half_payoff: float
    aborted: bool


def _kernel_fn(cfg: SimConfig):
    """Vectorized psi(x) for the configured measure, or None for reference."""
    eps = cfg.problem.epsilon
    if cfg.measure == "reference" or (cfg.measure == "worstcase" and eps == 0.0):
        return None
    if cfg.measure == "worstcase":
        table = _solution_slope_table(cfg.solution)
        sigma = cfg.problem.model.sigma
        floor = table.lo

        def psi(x):
            return -eps * sigma(x) * table(x), x < floor
        return psi
    kxs = np.asarray(cfg.kernel_xs, dtype=float)
    kvs = np.asarray(cfg.kernel_values, dtype=float)

    def psi(x):
        return np.interp(x, kxs, kvs), x < kxs[0]
    return psi


def _run_paths(cfg: SimConfig, path_ids) -> list[PathStats]:
    problem = cfg.problem
    mu = problem.model.mu
    sigma = problem.model.sigma
    beta = cfg.beta
    dt = cfg.dt
    sqdt = math.sqrt(dt)
    eps = problem.epsilon
    n = len(path_ids)
    n_steps = cfg.n_steps
    burn = cfg.burn_steps
    retained = n_steps - burn
    mid = burn + retained // 2
    psi_fn = _kernel_fn(cfg)
    kl_scale = dt / (2.0 * eps) if (psi_fn is not None and eps > 0.0) else 0.0

    x = np.full(n, min(cfg.x0, beta), dtype=float)
    Z = np.full(n, max(cfg.x0 - beta, 0.0), dtype=float)  # instant harvest
    KL = np.zeros(n)
    neg = np.zeros(n, dtype=np.int64)
    clamps = np.zeros(n, dtype=np.int64)
    occ = np.zeros((n, cfg.n_bins), dtype=np.int64)
    max_x = x.copy()
    aborted = np.zeros(n, dtype=bool)
    rows = np.arange(n)
    bin_scale = cfg.n_bins / beta

    Z_burn = KL_burn = Z_mid = KL_mid = None
    if burn == 0:
        # Window starts at time zero minus: the instant initial harvest counts.
        Z_burn, KL_burn = np.zeros(n), np.zeros(n)

    gens = [path_rng(cfg.seed, int(pid)) for pid in path_ids]
    block = cfg.block_steps
    noise = np.empty((block, n))
    done = 0
    # NaN/inf paths are quarantined at block boundaries; silence the float
    # warnings their garbage values would emit in the meantime.
    with np.errstate(invalid="ignore", over="ignore"):
        while done < n_steps:
            m = min(block, n_steps - done)
            for j, gen in enumerate(gens):
                noise[:m, j] = gen.standard_normal(m)
            for i in range(m):
                k = done + i
                sig = sigma(x)
                if psi_fn is None:
                    drift = x * mu(x) * dt
                else:
                    psi, low = psi_fn(x)
                    drift = (x * mu(x) + sig * psi) * dt
                    if k >= burn:
                        KL += psi * psi * kl_scale
                        clamps += low
                proposed = x + drift + sig * (sqdt * noise[i])
                over = proposed - beta
                np.maximum(over, 0.0, out=over)
                if k >= burn:
                    Z += over
                    neg += proposed < 0.0
                np.minimum(proposed, beta, out=proposed)
                np.maximum(proposed, 0.0, out=proposed)
                x = proposed
                np.maximum(max_x, x, out=max_x)
                if k >= burn and (k - burn) % cfg.occupation_stride == 0:
                    # Clip from below too: a quarantined NaN path casts to
                    # INT64_MIN and must not break the indexing.
                    bins = np.clip((x * bin_scale).astype(np.int64), 0,
                                   cfg.n_bins - 1)
                    occ[rows, bins] += 1
                if k + 1 == burn:
                    Z_burn, KL_burn = Z.copy(), KL.copy()
                elif k + 1 == mid:
                    Z_mid, KL_mid = Z.copy(), KL.copy()
            bad = ~(np.isfinite(x) & np.isfinite(Z) & np.isfinite(KL))
            if np.any(bad):
                aborted |= bad
                x[bad] = beta  # park the path; excluded from aggregates
            done += m

    if Z_burn is None:
        Z_burn, KL_burn = Z.copy(), KL.copy()
    if Z_mid is None:
        Z_mid, KL_mid = Z.copy(), KL.copy()

    t_ret = retained * dt
    t_first = (mid - burn) * dt
    t_second = t_ret - t_first
    stats = []
    for j, pid in enumerate(path_ids):
        harvest = float(Z[j] - Z_burn[j])
        kl = float(KL[j] - KL_burn[j])
        payoff = (harvest + kl) / t_ret if t_ret > 0.0 else float("nan")
        first = ((float(Z_mid[j] - Z_burn[j]) + float(KL_mid[j] - KL_burn[j]))
                 / t_first if t_first > 0.0 else float("nan"))
        second = ((float(Z[j] - Z_mid[j]) + float(KL[j] - KL_mid[j]))
                  / t_second if t_second > 0.0 else float("nan"))
        stats.append(PathStats(
            path_id=int(pid), harvest_total=harvest, kl_penalty=kl,
            payoff_estimate=payoff, occupation_histogram=occ[j].copy(),
            max_x=float(max_x[j]), negative_proposals=int(neg[j]),
            floor_clamps=int(clamps[j]), first_half_payoff=first,
            second_half_payoff=second, aborted=bool(aborted[j])))
    return stats


def simulate_path(cfg: SimConfig, path_id: int = 0) -> PathStats:
    """Simulate a single path; identical to the same path in a batched run."""
    return _run_paths(cfg, [path_id])[0]


@dataclass(frozen=True)
class PayoffEstimate:
    """Aggregate of per-path payoff estimates.

    ``std_error`` is zero with ``se_defined`` False when only one path ran.
    ``split_consistent`` reports the first-half/second-half window check
    (within three combined standard errors), a guard on treating the plain
    long-window average as the ergodic limit.
    """

    mean: float
    std_error: float
    se_defined: bool
    n_paths: int
    n_aborted: int
    first_half_mean: float
    second_half_mean: float
    split_consistent: bool
    per_path: tuple[PathStats, ...] = field(repr=False)


def estimate_payoff(cfg: SimConfig, *, jobs: int = 1) -> PayoffEstimate:
    """Run all configured paths and aggregate their payoff estimates.

    Paths are batched; with ``jobs > 1`` batches run in separate processes.
    Per-path streams make the result independent of the batching.  Raises
    ``SimulationAbortError`` when more than 10% of paths aborted.
    """
    ids = list(range(cfg.n_paths))
    if jobs <= 1 or cfg.n_paths == 1:
        stats = _run_paths(cfg, ids)
    else:
        jobs = min(jobs, cfg.n_paths)
        chunks = [ids[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_paths, [cfg] * len(chunks), chunks))
        stats = sorted((s for part in parts for s in part),
                       key=lambda s: s.path_id)

    good = [s for s in stats if not s.aborted]
    n_aborted = len(stats) - len(good)
    if n_aborted > 0.10 * len(stats):
        raise SimulationAbortError(
            f"{n_aborted} of {len(stats)} paths aborted (NaN/overflow)")
    payoffs = np.array([s.payoff_estimate for s in good])
    mean = float(np.mean(payoffs))
    if payoffs.size >= 2:
        se = float(np.std(payoffs, ddof=1) / math.sqrt(payoffs.size))
        se_defined = True
    else:
        se, se_defined = 0.0, False
    firsts = np.array([s.first_half_payoff for s in good])
    seconds = np.array([s.second_half_payoff for s in good])
    fm, sm = float(np.mean(firsts)), float(np.mean(seconds))
    if payoffs.size >= 2:
        se_f = float(np.std(firsts, ddof=1) / math.sqrt(firsts.size))
        se_s = float(np.std(seconds, ddof=1) / math.sqrt(seconds.size))
        split_ok = abs(fm - sm) <= 3.0 * math.hypot(se_f, se_s)
    else:
        split_ok = True
    return PayoffEstimate(
        mean=mean, std_error=se, se_defined=se_defined, n_paths=len(stats),
        n_aborted=n_aborted, first_half_mean=fm, second_half_mean=sm,
        split_consistent=bool(split_ok), per_path=tuple(stats))


@dataclass(frozen=True)
class X0IndependenceReport:
    """Pairwise agreement of payoff estimates across starting points."""

    x0_values: tuple[float, ...]
    means: tuple[float, ...]
    std_errors: tuple[float, ...]
    consistent: bool

    def worst_pair_gap(self):
        gaps = []
        for i in range(len(self.means)):
            for j in range(i + 1, len(self.means)):
                sigma = math.hypot(self.std_errors[i], self.std_errors[j])
                gaps.append(abs(self.means[i] - self.means[j])
                            / (3.0 * sigma if sigma > 0.0 else 1.0))
        return max(gaps) if gaps else 0.0


def x0_independence_check(cfg: SimConfig, x0_list, *, jobs: int = 1,
                          ci_multiple: float = 3.0) -> X0IndependenceReport:
    """Ergodic start-insensitivity: estimates across x0 agree pairwise.

    Each starting point reuses the same seed, so the comparison is between
    runs driven by identical noise.
    """
    means, ses = [], []
    for x0 in x0_list:
        est = estimate_payoff(replace(cfg, x0=float(x0)), jobs=jobs)
        means.append(est.mean)
        ses.append(est.std_error)
    consistent = True
    for i in range(len(means)):
        for j in range(i + 1, len(means)):
            bound = ci_multiple * math.hypot(ses[i], ses[j])
            if abs(means[i] - means[j]) > bound:
                consistent = False
    return X0IndependenceReport(
        x0_values=tuple(float(v) for v in x0_list), means=tuple(means),
        std_errors=tuple(ses), consistent=bool(consistent))
