import numpy as np
import pytest

from pathrde.errors import DomainError, GuardError
from pathrde.oracle import OracleConfig, euler_level2, euler_plain, pvar_bruteforce, rs_integral
from pathrde.path_core import DiscretePath

from conftest import linear_driver


def test_config_guards():
    with pytest.raises(GuardError):
        OracleConfig(enumeration_cap=17)
    with pytest.raises(DomainError):
        OracleConfig(refinement_factor=1)


def test_bruteforce_examples():
    zig = DiscretePath([0, 0.5, 1], [0.0, 1.0, 0.0])
    assert pvar_bruteforce(zig, 2) == 2.0
    mono = DiscretePath(np.linspace(0, 1, 7), [0, 0.1, 0.4, 0.5, 1.0, 1.2, 2.0])
    assert pvar_bruteforce(mono, 2.5) == pytest.approx(2.0 ** 2.5, rel=1e-15)
    with pytest.raises(GuardError):
        pvar_bruteforce(DiscretePath(np.arange(13.0), np.arange(13.0)), 2)


def test_rs_examples():
    t = np.linspace(0, 1, 4097)
    path = DiscretePath(t, t)
    assert rs_integral(t, path) == pytest.approx(0.5, abs=1e-15)
    # Frozen: midpoint sum of t^2 on 4096 steps = 1/3 + h^2/6.
    assert rs_integral(t ** 2, path) == 0.3333333432674408
    bm = np.cumsum(np.random.default_rng(0).normal(size=1000)) * 0.03
    bm = np.concatenate([[0.0], bm])
    bpath = DiscretePath(np.linspace(0, 1, 1001), bm)
    assert rs_integral(bm, bpath) == pytest.approx(bm[-1] ** 2 / 2, abs=1e-12)


def _exp_problem(n):
    from pathrde.functionals import constant, endpoint
    from pathrde.rde_solver import RdeProblem
    return RdeProblem(constant([0.0]), endpoint(1).reshaped((1, 1)), linear_driver(n),
                      DiscretePath([0.0], [[1.0]]))


def test_euler_level2_order_on_exponential():
    errs = [abs(euler_level2(_exp_problem(17), 17 * r).flat[-1, 0] - np.e) for r in (2, 4, 8)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.0)
    plain = abs(euler_plain(_exp_problem(17), 17 * 8).flat[-1, 0] - np.e)
    assert plain > 10 * errs[-1]


def test_euler_additive_noise_exact():
    from pathrde.functionals import constant
    from pathrde.rde_solver import RdeProblem
    from pathrde.rough_lift import brownian_lift
    rp = brownian_lift(4, 33, p=2.1)
    problem = RdeProblem(constant([0.0]), constant([[0.7]]), rp, DiscretePath([0.0], [[2.0]]))
    out = euler_level2(problem, 33 * 4)
    assert np.allclose(out.flat[::4, 0], 2.0 + 0.7 * rp.base.flat[:, 0], atol=1e-13)


def test_euler_requires_multiple():
    with pytest.raises(DomainError):
        euler_level2(_exp_problem(17), 100)


def test_euler_level2_frozen_smax_value():
    from pathrde.functionals import constant, smoothed_running_max
    from pathrde.rde_solver import RdeProblem
    from pathrde.rough_lift import brownian_lift
    problem = RdeProblem(constant([0.0]), smoothed_running_max(0.5).reshaped((1, 1)),
                         brownian_lift(3, 256, p=2.1), DiscretePath([0.0], [[1.0]]))
    ref = euler_level2(problem, 8192)
    assert ref.flat[-1, 0] == 0.5596837251772487
    assert float(np.max(np.abs(ref.flat))) == 1.3415633098013566
