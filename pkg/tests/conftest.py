import numpy as np
import pytest

from ergharvest import AmbiguityProblem, VerhulstPearl, solve_threshold

# Solves are deterministic and reused across many tests; solve once per run.


@pytest.fixture(scope="session")
def vp_model():
    return VerhulstPearl(mu_bar=1.0, gamma_bar=1.0, sigma_bar=1.0)


@pytest.fixture(scope="session")
def problem0(vp_model):
    return AmbiguityProblem.build(vp_model, 0.0)


@pytest.fixture(scope="session")
def problem1(vp_model):
    return AmbiguityProblem.build(vp_model, 1.0)


@pytest.fixture(scope="session")
def sol0(problem0):
    return solve_threshold(problem0)


@pytest.fixture(scope="session")
def sol1(problem1):
    return solve_threshold(problem1)


@pytest.fixture(scope="session")
def solutions_by_eps(vp_model, problem0, problem1, sol0, sol1):
    """Solved problems keyed by ambiguity level, for the verification suites."""
    out = {0.0: (problem0, sol0), 1.0: (problem1, sol1)}
    for eps in (0.5, 5.0):
        p = AmbiguityProblem.build(vp_model, eps)
        out[eps] = (p, solve_threshold(p))
    return out
