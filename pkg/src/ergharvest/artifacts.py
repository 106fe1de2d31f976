"""Run artifacts: CSV tables, JSON summaries, and the sweep plot script.

All reals are written with 17 significant digits so files round-trip losslessly
and repeated runs with the same configuration and seed are bit-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import MissingInputError
from .model import AmbiguityProblem
from .shooting import PotentialGrid, ThresholdSolution, _slope_rhs

SOLUTION_CSV = "solution.csv"
FD_CSV = "vprime_fd.csv"
PATHS_CSV = "paths.csv"
HISTOGRAM_CSV = "occupation.csv"
SWEEP_CSV = "sweep.csv"
PLOT_SCRIPT = "sweep.gnuplot"
SUMMARY_JSON = "summary.json"
CONFIG_ECHO_JSON = "resolved_config.json"


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_solution_csv(path, sol: ThresholdSolution):
    """Columns: x, v, vprime; ascending x across both sides of the threshold."""
    xs = np.concatenate((sol.grid.grid_x, sol.grid.grid_right_x))
    vs = sol.v(xs)
    vps = sol.vprime(xs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "v", "vprime"])
        for x, v, vp in zip(xs, vs, vps):
            w.writerow([fmt(x), fmt(v), fmt(vp)])


def write_fd_csv(path, sol: ThresholdSolution):
    """Finite-difference companion slopes recorded during the solve."""
    g = sol.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "h", "vprime_minus", "vprime_plus"])
        for x, h, lo, hi in zip(g.fd_x, g.fd_h, g.fd_slope_minus,
                                g.fd_slope_plus):
            w.writerow([fmt(x), fmt(h), fmt(lo), fmt(hi)])


def _read_csv(path, columns):
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"required file {p} is missing")
    with open(p, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != columns:
            raise MissingInputError(
                f"{p} has columns {header}, expected {columns}")
        rows = [[float(v) for v in row] for row in r]
    return [np.array(col) for col in zip(*rows)]


def load_solution(run_dir, problem: AmbiguityProblem) -> ThresholdSolution:
    """Rebuild a usable solution from persisted artifacts.

    The slope derivatives are recovered from the ODE itself (they are a
    function of x and the slope once the threshold is known), so the
    reconstruction interpolates exactly like the original within the
    persisted grid.  Companion values are restored when their file exists.
    """
    run = Path(run_dir)
    summary_path = run / SUMMARY_JSON
    if not summary_path.exists():
        raise MissingInputError(f"required file {summary_path} is missing")
    summary = json.loads(summary_path.read_text())
    try:
        threshold = float(summary["solution"]["beta_eps"])
        long_run_yield = float(summary["solution"]["ell_eps"])
    except KeyError as exc:
        raise MissingInputError(f"{summary_path} lacks a solution block: {exc}")

    xs, vs, vps = _read_csv(run / SOLUTION_CSV, ["x", "v", "vprime"])
    left = xs <= threshold
    nodes_x = xs[left]
    nodes_slope = vps[left]
    nodes_value = vs[left]
    rhs = _slope_rhs(problem, threshold, 0.0)
    nodes_deriv = np.array([rhs(x, g) for x, g in zip(nodes_x, nodes_slope)])

    fd_path = run / FD_CSV
    if fd_path.exists():
        fd_x, fd_h, fd_lo, fd_hi = _read_csv(
            fd_path, ["x", "h", "vprime_minus", "vprime_plus"])
    else:
        fd_x = fd_h = fd_lo = fd_hi = np.array([])

    grid = PotentialGrid(
        threshold=threshold, x_min=float(nodes_x[0]), nodes_x=nodes_x,
        nodes_slope=nodes_slope, nodes_slope_deriv=nodes_deriv,
        nodes_value=nodes_value, grid_x=nodes_x, grid_right_x=xs[~left],
        fd_x=fd_x, fd_h=fd_h, fd_slope_minus=fd_lo, fd_slope_plus=fd_hi,
        truncated_at=None)
    return ThresholdSolution(
        problem=problem, threshold=threshold, long_run_yield=long_run_yield,
        grid=grid, bisection_trace=(), iterations=0,
        x_min=float(nodes_x[0]), beta_tolerance=float("nan"))


def write_paths_csv(path, per_path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "harvest_total", "kl_penalty",
                    "payoff_estimate", "aborted_flag"])
        for s in per_path:
            w.writerow([s.path_id, fmt(s.harvest_total), fmt(s.kl_penalty),
                        fmt(s.payoff_estimate), int(s.aborted)])


def write_histogram_csv(path, beta, n_bins, per_path):
    counts = np.zeros(n_bins, dtype=np.int64)
    for s in per_path:
        counts += s.occupation_histogram
    edges = np.linspace(0.0, beta, n_bins + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([fmt(lo), fmt(hi), int(c)])


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epsilon", "x_eps", "x_bar_eps", "beta_eps", "ell_eps",
                    "iterations", "wall_ms"])
        for r in rows:
            w.writerow([fmt(r.epsilon), fmt(r.x_eps), fmt(r.x_bar_eps),
                        fmt(r.beta_eps), fmt(r.ell_eps), r.iterations,
                        fmt(r.wall_ms)])


def write_plot_script(path, csv_name=SWEEP_CSV):
    """Gnuplot commands referencing the sweep CSV by relative path."""
    text = f"""\
set datafile separator ','
set key autotitle columnhead
set xlabel 'ambiguity level'
set grid

set terminal pngcairo size 900,600
set output 'threshold_vs_ambiguity.png'
set ylabel 'optimal threshold'
plot '{csv_name}' using 1:4 with linespoints title 'threshold'

set output 'yield_vs_ambiguity.png'
set ylabel 'optimal long-run yield'
plot '{csv_name}' using 1:5 with linespoints title 'yield'
unset output
"""
    Path(path).write_text(text)


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
