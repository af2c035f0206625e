import numpy as np
import pytest

from pathrde.errors import CapabilityError, HorizonError
from pathrde.functionals import (StoppedPath, d_infty, discrete_time_functional, endpoint,
                                 functional_remainder, horizontal_derivative, integral_functional,
                                 regularity_report, remainder_scaling, running_max,
                                 second_vertical_derivative, smoothed_running_max,
                                 smoothing_polynomial, vertical_derivative, vertical_fd)
from pathrde.oracle import fd_derivative_check
from pathrde.path_core import DiscretePath
from pathrde.rough_lift import brownian_lift


def _line(n=33, T=1.0):
    t = np.linspace(0, T, n)
    return DiscretePath(t, t)


def test_d_infty_examples():
    t = np.linspace(0, 1, 11)
    zero = DiscretePath(t, np.zeros(11))
    const = DiscretePath(t, np.full(11, -2.5))
    a = StoppedPath.from_path(zero, 1.0)
    assert d_infty(a, a) == 0.0
    assert d_infty(a, StoppedPath.from_path(const, 1.0)) == 2.5
    assert d_infty(StoppedPath.from_path(zero, 0.3), StoppedPath.from_path(zero, 0.7)) == \
        pytest.approx(0.4, abs=1e-15)


def test_stopped_path_freezes_tail():
    path = _line()
    sp = StoppedPath.from_path(path, 0.5)
    assert np.array_equal(sp.value_at(np.array([0.6, 0.9, 1.0])), np.full((3, 1), 0.5))
    bumped = sp.bump([0.1])
    assert bumped.current[0] == pytest.approx(0.6)
    assert bumped.left_limit[0] == pytest.approx(0.5)
    with pytest.raises(HorizonError):
        sp.advance(0.6)


def test_non_anticipativity():
    rng = np.random.default_rng(3)
    t = np.linspace(0, 1, 41)
    x = np.cumsum(rng.normal(size=41)) * 0.1
    y = x.copy()
    y[21:] += rng.normal(size=20)
    px, py = DiscretePath(t, x), DiscretePath(t, y)
    fams = [endpoint(1), running_max(), smoothed_running_max(0.25),
            smoothed_running_max(0.1, "quadratic"),
            discrete_time_functional([0.3, 0.8], lambda s, xs: np.array([xs[0, 0] * xs[1, 0]])),
            integral_functional(lambda s, xs, yv: xs[:, 0] * yv[0])]
    for F in fams:
        assert np.array_equal(F(t[20], px), F(t[20], py)), F.name


def test_vertical_examples():
    path = _line()
    sp = StoppedPath.from_path(path, 0.5)
    assert np.array_equal(vertical_derivative(endpoint(1), sp), [[1.0]])
    F = integral_functional(lambda s, xs, y: xs[:, 0])
    assert np.allclose(vertical_derivative(F, sp, analytic=False), 0.0, atol=1e-9)
    assert vertical_derivative(smoothed_running_max(0.25), sp)[0, 0] == 1.0


def test_horizontal_examples():
    path = _line()
    sp = StoppedPath.from_path(path, 0.5)
    assert horizontal_derivative(endpoint(1), sp, analytic=False)[0] == 0.0
    assert horizontal_derivative(running_max(), sp, analytic=False)[0] == 0.0
    F = integral_functional(lambda s, xs, y: xs[:, 0] * y[0])
    assert horizontal_derivative(F, sp, h=1e-4, analytic=False)[0] == pytest.approx(0.25, abs=1e-10)
    assert horizontal_derivative(F, sp)[0] == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(HorizonError):
        horizontal_derivative(F, StoppedPath.from_path(path, 1.0))


def test_smax_branches_and_quintic_boundary():
    eps = 0.25
    t = np.linspace(0, 1, 5)
    low = DiscretePath(t, [0, 1.0, 0.9, 0.4, 0.1])
    F = smoothed_running_max(eps)
    sp = StoppedPath.from_path(low, 1.0)
    assert F.at(sp)[0] == pytest.approx(1.0 - eps)
    assert vertical_derivative(F, sp)[0, 0] == 0.0
    assert second_vertical_derivative(F, sp)[0, 0, 0] == 0.0
    h, dh, d2h, a = smoothing_polynomial(eps)
    assert np.all(a[:3] == 0)
    z = 2 * eps
    for got, want in [(h(0), 0), (dh(0), 0), (d2h(0), 0), (h(z), eps), (dh(z), 1), (d2h(z), 0)]:
        assert abs(got - want) <= 1e-12
    q = smoothing_polynomial(eps, "quadratic")[0]
    assert q(0.3) == pytest.approx(0.09 / (4 * eps))


def test_smax_continuity_across_branches():
    eps = 0.25
    F = smoothed_running_max(eps)
    t = np.array([0.0, 0.5, 1.0])
    for edge in (1.0 - 2 * eps, 1.0):
        vals = []
        for z in (edge - 1e-12, edge + 1e-12):
            sp = StoppedPath.from_path(DiscretePath(t, [0.0, 1.0, z]), 1.0)
            vals.append((F.at(sp)[0], vertical_derivative(F, sp)[0, 0],
                         second_vertical_derivative(F, sp)[0, 0, 0]))
        assert np.max(np.abs(np.subtract(*vals))) < 1e-9


def test_discrete_time_examples():
    t = np.linspace(0, 1, 21)
    path = DiscretePath(t, np.sin(3 * t))
    F = discrete_time_functional([1.0], lambda s, xs: xs[0], lambda s, xs: np.ones((1, 1, 1)))
    sp = StoppedPath.from_path(path, 0.4)
    assert F.at(sp)[0] == path.flat[8, 0]
    assert vertical_derivative(F, sp)[0, 0] == 1.0
    G = discrete_time_functional([0.2, 0.5], lambda s, xs: np.array([xs[0, 0] * xs[1, 0]]),
                                 lambda s, xs: np.array([[[xs[1, 0]], [xs[0, 0]]]]))
    assert vertical_derivative(G, StoppedPath.from_path(path, 0.8))[0, 0] == 0.0
    for tt in (0.15, 0.35, 0.5):
        sp = StoppedPath.from_path(path, tt)
        fd = vertical_fd(G, sp, h=1e-6)["central"]
        assert np.max(np.abs(fd - vertical_derivative(G, sp))) <= 1e-7


def test_integral_examples():
    path = _line(65)
    sp = StoppedPath.from_path(path, 0.5)
    F = integral_functional(lambda s, xs, y: np.full(s.size, y[0]),
                            lambda s, xs, y: np.ones((s.size, 1, 1)))
    assert F.at(sp)[0] == pytest.approx(0.25, abs=1e-15)
    assert vertical_derivative(F, sp)[0, 0] == pytest.approx(0.5, abs=1e-15)
    G = integral_functional(lambda s, xs, y: np.full(s.size, y[0] ** 2),
                            lambda s, xs, y: np.full((s.size, 1, 1), 2 * y[0]))
    assert G.at(sp)[0] == pytest.approx(0.125, abs=1e-15)
    assert vertical_derivative(G, sp)[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert vertical_fd(G, sp, h=1e-6)["central"][0, 0] == pytest.approx(0.5, abs=1e-8)


def test_functional_remainder_examples():
    path = _line(17)
    assert functional_remainder(endpoint(1), path, 0.25, 0.75)[0] == 0.0
    F = integral_functional(lambda s, xs, y: xs[:, 0], lambda s, xs, y: np.zeros((s.size, 1, 1)))
    r = functional_remainder(F, path, 0.25, 0.75)[0]
    assert r == pytest.approx((0.75 ** 2 - 0.25 ** 2) / 2, abs=1e-15)
    with pytest.raises(CapabilityError):
        functional_remainder(running_max(), path, 0.25, 0.75)


def test_fd_richardson_on_smooth_branch():
    path = brownian_lift(2, 64, p=2.1).base
    probes = [StoppedPath.from_path(path, path.times[i]) for i in (10, 30, 50)]
    G = integral_functional(lambda s, xs, y: np.sin(s) * np.exp(y[0]),
                            lambda s, xs, y: (np.sin(s) * np.exp(y[0]))[:, None, None])
    rep = fd_derivative_check(G, probes, h=1e-2)
    assert abs(rep["vertical_slope"] - 2.0) <= 0.3
    assert rep["vertical_error"] <= 1e-3
    rep = fd_derivative_check(endpoint(1), probes, h=1e-5)
    assert rep["vertical_error"] <= 1e-10
    rep = fd_derivative_check(running_max(), [StoppedPath.from_path(path, path.times[0])])
    assert rep["unstable"] == [0]


def test_running_max_unstable_at_argmax():
    t = np.linspace(0, 1, 5)
    sp = StoppedPath.from_path(DiscretePath(t, [0, 0.2, 0.5, 0.3, 0.6]), 1.0)
    assert vertical_fd(running_max(), sp)["unstable"]
    sp2 = StoppedPath.from_path(DiscretePath(t, [0, 0.2, 0.5, 0.3, 0.1]), 1.0)
    assert not vertical_fd(running_max(), sp2)["unstable"]


def test_regularity_reports():
    probes = [brownian_lift(s, 129, p=2.1).base for s in range(3)]
    rep = regularity_report(endpoint(1), probes)
    assert rep["constants"]["F"] == pytest.approx(1.0, abs=1e-9)
    rep = regularity_report(smoothed_running_max(0.25), probes)
    assert all(rep["flags"].values()), rep["flags"]
    rep = regularity_report(running_max(), [DiscretePath(np.linspace(0, 1, 6), [0, 1, 2, 3, 4, 5])])
    assert rep["flags"]["vertical_differentiable"] is False


def test_remainder_scaling_smax():
    p = 2.1
    path = brownian_lift(0, 512, p=p).base
    res = remainder_scaling(smoothed_running_max(0.25), path, p)
    assert res["slope"] >= (1 + 1 / p) / p - 0.15
