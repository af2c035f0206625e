import math

import numpy as np
import pytest

from pathrde.controlled import rho_control
from pathrde.errors import (CapabilityError, ExponentError, GridAlignmentError,
                            NonConvergenceError)
from pathrde.functionals import PathFunctional, constant, endpoint, running_max, smoothed_running_max
from pathrde.oracle import euler_level2
from pathrde.path_core import DiscretePath
from pathrde.rde_solver import (RdeProblem, picard_iterates, set_a_norm, solution_map, solve,
                                trivial_seed, verify_solution)
from pathrde.rough_lift import brownian_lift

from conftest import linear_driver


def exp_problem(n=512, p=2.1):
    return RdeProblem(constant([0.0]), endpoint(1).reshaped((1, 1)), linear_driver(n, p),
                      DiscretePath([0.0], [[1.0]]))


def smax_problem(n=256, seed=3):
    return RdeProblem(constant([0.0]), smoothed_running_max(0.5).reshaped((1, 1)),
                      brownian_lift(seed, n, p=2.1), DiscretePath([0.0], [[1.0]]))


def test_exponential_error_is_the_scheme_error():
    for n in (129, 257):
        sol = solve(exp_problem(n), tol=1e-10)
        err = sol.path.flat[-1, 0] - math.e
        # Left-point compensated sums of y' = y reproduce e^{t} up to e * dt^2 / 6.
        assert err == pytest.approx(-math.e / (6 * (n - 1) ** 2), rel=0.05)


def test_verification_and_postconditions():
    for problem in (exp_problem(257), smax_problem(128)):
        tol = 1e-10
        sol = solve(problem, tol=tol)
        rep = verify_solution(problem, sol.solution, tol)
        assert rep["passed"], rep
        assert sol.residual <= 2 * tol
        assert np.isfinite(sol.remainder_q_variation)
        for w in sol.windows:
            assert w["set_a_norm"] <= 1.0
            ds = w["distances"]
            assert all(b <= a * (1 + 1e-9) for a, b in zip(ds[1:], ds[2:]))


def test_windows_tile_the_horizon():
    sol = solve(exp_problem(257))
    ends = [(w["i_start"], w["i_end"]) for w in sol.windows]
    assert ends[0][0] == 0 and ends[-1][1] == 256
    assert all(a[1] == b[0] for a, b in zip(ends, ends[1:]))


def test_additive_noise_is_exact():
    rp = brownian_lift(6, 100, d=2, p=2.2)
    A = np.array([[0.5, -1.0]])
    problem = RdeProblem(constant([0.3]), constant(A), rp, DiscretePath([0.0], [[1.0]]))
    sol = solve(problem)
    want = 1.0 + 0.3 * rp.times + rp.base.flat @ A[0]
    assert np.max(np.abs(sol.path.flat[:, 0] - want)) <= 1e-12


def test_markovian_case_matches_one_step_scheme():
    rp = brownian_lift(1, 128, p=2.1)
    sig = PathFunctional("sin", lambda sp: np.array([[np.sin(sp.current[0])]]), (1, 1),
                         vertical=lambda sp: np.array([[[np.cos(sp.current[0])]]]))
    problem = RdeProblem(constant([0.0]), sig, rp, DiscretePath([0.0], [[0.5]]))
    sol = solve(problem)
    coarse = euler_level2(problem, 128)
    fine = euler_level2(problem, 128 * 32)
    e_sol = np.max(np.abs(sol.path.flat[:, 0] - fine.flat[::32, 0]))
    e_coarse = np.max(np.abs(coarse.flat[:, 0] - fine.flat[::32, 0]))
    assert e_sol <= 2 * e_coarse
    assert e_sol <= 5e-2


def test_history_prefix_is_kept():
    rp = linear_driver(65)
    hist = DiscretePath(rp.times[:9], 1.0 + 0.1 * np.sin(20 * rp.times[:9]))
    problem = RdeProblem(constant([0.0]), endpoint(1).reshaped((1, 1)), rp, hist)
    sol = solve(problem)
    assert np.array_equal(sol.path.flat[:9, 0], hist.flat[:, 0])
    assert verify_solution(problem, sol.solution, 1e-10)["history_ok"]


def test_picard_iterates_match_taylor():
    problem = exp_problem(512)
    t = problem.driver.times
    its = picard_iterates(problem, 6)
    grid_err = abs(solve(problem).path.flat[-1, 0] - math.e)
    for k, cp in enumerate(its):
        taylor = sum(t ** j / math.factorial(j) for j in range(k + 1))
        assert np.max(np.abs(cp.y.flat[:, 0] - taylor)) <= 10 * grid_err


def test_set_a_first_application():
    for problem in (exp_problem(512), smax_problem()):
        sol = solve(problem)
        control = rho_control(problem.driver)
        w = sol.windows[0]
        a, b = w["i_start"], w["i_end"]
        y = np.zeros((len(problem.driver), problem.k))
        y[:a + 1] = problem.initial.flat
        seed = trivial_seed(problem, y, a, b)
        first = solution_map(problem, seed, (problem.driver.times[a], problem.driver.times[b]))
        assert set_a_norm(problem, first, a, b, control) <= 1.0


def test_non_convergence_raises_with_diagnostics():
    with pytest.raises(NonConvergenceError) as info:
        solve(exp_problem(65), tol=1e-16, max_iter=2)
    assert info.value.diagnostics


def test_guards():
    with pytest.raises(ExponentError):
        exp_problem(65, p=2.5)
    with pytest.raises(CapabilityError):
        RdeProblem(constant([0.0]), running_max(), brownian_lift(0, 32, p=2.1),
                   DiscretePath([0.0], [[1.0]]))
    with pytest.raises(GridAlignmentError):
        RdeProblem(constant([0.0]), endpoint(1).reshaped((1, 1)), linear_driver(33),
                   DiscretePath([0.0, 0.01], [[1.0], [1.0]]))


def test_deterministic():
    a = solve(smax_problem(128)).path.flat
    b = solve(smax_problem(128)).path.flat
    assert np.array_equal(a, b)
