"""Run configuration: a single JSON file, strictly validated.

Unknown keys are rejected with the accepted keys listed; parse errors carry
the line number.  Flags on the command line override file values.  The fully
resolved configuration (defaults filled in) is echoed beside every run's
outputs so a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import shooting
from .errors import ConfigError
from .model import CoefficientModel, model_from_config

_MODEL_KEYS = {"family", "params", "x_max"}
_SOLVER_KEYS = {"beta_rtol", "dip_floor", "rtol", "atol", "dip_tolerance",
                "overflow_guard", "n_grid_left", "n_grid_right"}
_SIM_KEYS = {"dt", "horizon", "n_paths", "burn_in", "x0", "measure",
             "n_bins", "occupation_stride", "ci_multiple"}
_TOP_KEYS = {"model", "epsilon", "eps_grid", "solver", "sim", "seed",
             "output_dir"}

_SOLVER_DEFAULTS = {
    "beta_rtol": shooting.BETA_RTOL,
    "dip_floor": shooting.DIP_FLOOR,
    "rtol": shooting.RTOL,
    "atol": shooting.ATOL,
    "dip_tolerance": shooting.DIP_TOLERANCE,
    "overflow_guard": shooting.OVERFLOW_GUARD,
    "n_grid_left": shooting.N_GRID_LEFT,
    "n_grid_right": shooting.N_GRID_RIGHT,
}

_SIM_DEFAULTS = {
    "dt": 1e-4,
    "horizon": 200.0,
    "n_paths": 256,
    "burn_in": 0.1,
    "x0": None,          # resolved to the solved threshold
    "measure": "worstcase",
    "n_bins": 50,
    "occupation_stride": 8,
    "ci_multiple": 3.0,
}


def _reject_unknown(section: dict, accepted: set, where: str):
    unknown = sorted(set(section) - accepted)
    if unknown:
        raise ConfigError(
            f"unknown key(s) {unknown} in {where}; accepted keys: "
            f"{sorted(accepted)}")


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


@dataclass(frozen=True)
class RunConfig:
    """Parsed and fully resolved run configuration."""

    model: CoefficientModel
    epsilon: float | None
    eps_grid: tuple | None
    solver: dict
    sim: dict
    seed: int
    output_dir: str | None
    resolved: dict

    def solver_kwargs(self):
        s = self.solver
        return {
            "beta_rtol": s["beta_rtol"], "dip_floor": s["dip_floor"],
            "rtol": s["rtol"], "atol": s["atol"],
            "dip_tolerance": s["dip_tolerance"],
            "overflow_guard": s["overflow_guard"],
            "n_left": s["n_grid_left"], "n_right": s["n_grid_right"],
        }


def parse_config(raw: dict) -> RunConfig:
    """Validate a configuration mapping and fill in defaults."""
    _require(isinstance(raw, dict), "configuration root must be an object")
    _reject_unknown(raw, _TOP_KEYS, "the configuration root")
    _require("model" in raw, "configuration needs a 'model' block")

    mblock = raw["model"]
    _require(isinstance(mblock, dict), "'model' must be an object")
    _reject_unknown(mblock, _MODEL_KEYS, "'model'")
    _require("family" in mblock, "'model' needs a 'family'")
    family = mblock["family"]
    params = mblock.get("params", {})
    _require(isinstance(params, dict), "'model.params' must be an object")
    x_max = mblock.get("x_max")
    _require(x_max is None or (isinstance(x_max, (int, float)) and x_max > 0),
             "'model.x_max' must be a positive number")
    try:
        model = model_from_config(family, params, x_max)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad model parameters for family {family!r}: {exc}")
    except Exception as exc:
        raise ConfigError(f"bad model block: {exc}")

    epsilon = raw.get("epsilon")
    eps_grid = raw.get("eps_grid")
    _require(not (epsilon is not None and eps_grid is not None),
             "give either 'epsilon' or 'eps_grid', not both")
    if epsilon is not None:
        _require(isinstance(epsilon, (int, float)) and epsilon >= 0,
                 "'epsilon' must be a number >= 0")
        epsilon = float(epsilon)
    if eps_grid is not None:
        _require(isinstance(eps_grid, list) and len(eps_grid) >= 1
                 and all(isinstance(e, (int, float)) and e >= 0
                         for e in eps_grid),
                 "'eps_grid' must be a list of numbers >= 0")
        eps_grid = tuple(float(e) for e in eps_grid)

    solver = dict(_SOLVER_DEFAULTS)
    sblock = raw.get("solver", {})
    _require(isinstance(sblock, dict), "'solver' must be an object")
    _reject_unknown(sblock, _SOLVER_KEYS, "'solver'")
    for key, value in sblock.items():
        if key in ("n_grid_left", "n_grid_right"):
            _require(isinstance(value, int) and value >= 16,
                     f"'solver.{key}' must be an integer >= 16")
            solver[key] = value
        else:
            _require(isinstance(value, (int, float)) and value > 0,
                     f"'solver.{key}' must be a positive number")
            solver[key] = float(value)

    sim = dict(_SIM_DEFAULTS)
    simblock = raw.get("sim", {})
    _require(isinstance(simblock, dict), "'sim' must be an object")
    _reject_unknown(simblock, _SIM_KEYS, "'sim'")
    for key, value in simblock.items():
        if key == "measure":
            _require(value in ("reference", "worstcase"),
                     "'sim.measure' must be 'reference' or 'worstcase'")
            sim[key] = value
        elif key in ("n_paths", "n_bins", "occupation_stride"):
            _require(isinstance(value, int) and value >= 1,
                     f"'sim.{key}' must be a positive integer")
            sim[key] = value
        elif key == "burn_in":
            _require(isinstance(value, (int, float)) and 0 <= value <= 0.5,
                     "'sim.burn_in' must be in [0, 0.5]")
            sim[key] = float(value)
        elif key == "x0":
            _require(value is None or (isinstance(value, (int, float))
                                       and value > 0),
                     "'sim.x0' must be a positive number")
            sim[key] = None if value is None else float(value)
        else:
            _require(isinstance(value, (int, float)) and value > 0,
                     f"'sim.{key}' must be a positive number")
            sim[key] = float(value)

    seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and seed >= 0,
             "'seed' must be a nonnegative integer")
    output_dir = raw.get("output_dir")
    _require(output_dir is None or isinstance(output_dir, str),
             "'output_dir' must be a string")

    resolved = {
        "model": {"family": family, "params": dict(params), "x_max": x_max},
        "epsilon": epsilon,
        "eps_grid": list(eps_grid) if eps_grid is not None else None,
        "solver": dict(solver),
        "sim": dict(sim),
        "seed": seed,
        "output_dir": output_dir,
    }
    return RunConfig(model=model, epsilon=epsilon, eps_grid=eps_grid,
                     solver=solver, sim=sim, seed=seed, output_dir=output_dir,
                     resolved=resolved)


def load_config(path) -> RunConfig:
    """Read and validate a JSON configuration file."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"cannot parse {path}: {exc.msg} at line {exc.lineno}, "
            f"column {exc.colno}", line=exc.lineno)
    return parse_config(raw)
