import numpy as np
import pytest

from pathrde.controlled import ControlledPath, controlled_norm
from pathrde.errors import CapabilityError, ExponentError, ReferenceMismatchError
from pathrde.functionals import (constant, endpoint, functional_remainder, linear_endpoint,
                                 running_max, smoothed_running_max)
from pathrde.oracle import rs_integral
from pathrde.path_core import DiscretePath
from pathrde.rough_integral import (compose_controlled, integrate_functional, rough_integrate,
                                    sewing_slope)
from pathrde.rough_lift import brownian_lift, refine, smooth_lift

from conftest import linear_driver


def test_constant_integrand():
    rp = brownian_lift(1, 50, d=2, p=2.2)
    cp = ControlledPath.from_arrays(np.broadcast_to([[1.0, 0.0]], (50, 1, 2)).copy(),
                                    np.zeros((50, 1, 2, 2)), rp)
    res = rough_integrate(cp, rp)
    assert res.total[0] == pytest.approx(rp.increment(0, 49)[0], abs=1e-14)


def test_identity_integral_is_half():
    rp = linear_driver(9)
    cp = ControlledPath.from_arrays(rp.times, np.ones(9), rp)
    assert rough_integrate(cp, rp).total[0] == 0.5
    assert integrate_functional(endpoint(1), rp).total[0] == 0.5


def test_square_integrand_against_oracle():
    rp = linear_driver(64)
    t = rp.times
    cp = ControlledPath.from_arrays(t ** 2, 2 * t, rp)
    z = rough_integrate(cp, rp).total[0]
    fine = np.linspace(0, 1, 4097)
    oracle = rs_integral(fine ** 2, DiscretePath(fine, fine))
    # The compensated sum is exact for the piecewise-linear model up to a
    # left-point quadrature error of (mesh^2)/3 per unit length.
    assert abs(z - 1 / 3) == pytest.approx((1 / 63) ** 2 / 3, rel=1e-6)
    assert abs(oracle - 1 / 3) <= 1e-7


def test_additivity():
    rp = brownian_lift(5, 129, d=2, p=2.2)
    F = linear_endpoint(np.array([[1.0, -0.5], [0.3, 2.0]]))
    whole = integrate_functional(F, rp).total
    t = rp.times
    left = integrate_functional(F, rp, (t[0], t[40])).total
    right = integrate_functional(F, rp, (t[40], t[128])).total
    assert np.max(np.abs(left + right - whole)) <= 1e-13


def test_chain_rule_for_quadratic():
    for seed in range(4):
        rp = brownian_lift(seed, 200, p=2.1)
        x = rp.base.flat[:, 0]
        cp = ControlledPath.from_arrays(2 * x, np.full(200, 2.0), rp)
        assert rough_integrate(cp, rp).total[0] == pytest.approx(x[-1] ** 2 - x[0] ** 2, abs=1e-12)


def test_chain_rule_cubic_shrinks():
    errs = []
    for n in (65, 129, 257):
        rp = smooth_lift(DiscretePath(np.linspace(0, 1, n), np.sin(np.linspace(0, 2, n))), 2.0)
        x = rp.base.flat[:, 0]
        cp = ControlledPath.from_arrays(3 * x ** 2, 6 * x, rp)
        errs.append(abs(rough_integrate(cp, rp).total[0] - (x[-1] ** 3 - x[0] ** 3)))
    assert errs[0] > errs[1] > errs[2]


def test_sewing_slope_brownian():
    for seed in range(3):
        rp = brownian_lift(seed, 1024, p=2.1)
        x = rp.base.flat[:, 0]
        cp = ControlledPath.from_arrays(x ** 2, 2 * x, rp)
        assert sewing_slope(rough_integrate(cp, rp)) >= 1.0 - 0.15


def test_smax_against_refined_oracle():
    rp = brownian_lift(11, 256, p=2.1)
    F = smoothed_running_max(0.25)
    coarse = integrate_functional(F, rp).total[0]
    fine = integrate_functional(F, refine(rp, 16)).total[0]
    assert abs(coarse - fine) <= 1e-3 * max(1.0, abs(fine)) * 10
    res = integrate_functional(F, rp)
    assert set(res.estimate_terms) == {"x_p_times_remainder_q", "grad_p_times_xx_p2"}
    assert all(np.isfinite(v) for v in res.estimate_terms.values())


def test_constant_functional():
    rp = brownian_lift(3, 64, p=2.1)
    res = integrate_functional(constant([2.0]), rp)
    assert res.total[0] == pytest.approx(2.0 * rp.increment(0, 63)[0], abs=1e-14)


def test_stability_ratio_bounded():
    ratios = []
    for seed in range(5):
        rp = brownian_lift(seed, 64, p=2.1)
        x = rp.base.flat[:, 0]
        cp = ControlledPath.from_arrays(np.cos(x), -np.sin(x), rp)
        z = rough_integrate(cp, rp).as_controlled
        lhs = controlled_norm(z).total
        rhs = controlled_norm(cp).total * (1 + rp.second_level_variation())
        ratios.append(lhs / rhs)
    assert max(ratios) < 10.0


def test_compose_examples_and_decomposition():
    rp = brownian_lift(7, 80, p=2.1)
    x = rp.base.flat[:, 0]
    ident = ControlledPath.from_arrays(x, np.ones(80), rp)
    out = compose_controlled(endpoint(1), ident)
    assert np.array_equal(out.y.flat, ident.y.flat)
    A = np.array([[2.0]])
    lin = compose_controlled(linear_endpoint(A), ident)
    assert np.allclose(lin.y.flat, 2 * x[:, None], atol=0)
    F = smoothed_running_max(0.25)
    comp = compose_controlled(F, ident)
    grads = F.vertical_along(rp.base)
    worst = 0.0
    for i in range(0, 80, 3):
        for j in range(i, 80, 5):
            lhs = comp.remainder_at(i, j)
            rf = functional_remainder(F, rp.base, rp.times[i], rp.times[j])
            rhs = rf + grads[i] @ ident.remainder_at(i, j)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    assert worst <= 1e-12


def test_errors():
    rp = brownian_lift(0, 32, p=2.5)
    with pytest.raises(ExponentError):
        integrate_functional(endpoint(1), rp)
    ok = brownian_lift(0, 32, p=2.1)
    with pytest.raises(CapabilityError):
        integrate_functional(running_max(), ok)
    other = brownian_lift(1, 32, p=2.1)
    cp = ControlledPath.from_arrays(ok.base.flat, np.ones(32), ok)
    with pytest.raises(ReferenceMismatchError):
        rough_integrate(cp, other)
