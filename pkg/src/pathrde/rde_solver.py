"""Path-dependent rough differential equations

    dY(s) = b(s, Y_s) ds + sigma(s, Y_s) dX(s),   Y = xi on [0, t0],

solved by iterating the fixed-point map

    M(Y, Y') = (Y(t0) + int b(s, Y) ds + int sigma(s, Y) dX, sigma(., Y))

inside successive windows whose rho_X-size is at most delta.  The rough
integral uses the controlled integrand (sigma(., Y), nabla_x sigma(., Y) Y').
Existence of a fixed point is only guaranteed abstractly, so the iteration
checks empirical contraction and shrinks delta when it fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controlled import (ControlledPath, controlled_norm, holder_seminorm, kappa_beta,
                         q_p, rho_control)
from .errors import (CapabilityError, DomainError, GridAlignmentError, NonConvergenceError)
from .functionals import PathFunctional, StoppedPath
from .path_core import DiscretePath, GRID_RTOL, IntervalControl
from .rough_integral import check_functional_p, compose_controlled, rough_integrate
from .rough_lift import RoughPath

MIN_WINDOW_STEPS = 4


@dataclass(frozen=True, eq=False)
class RdeProblem:
    """Coefficients, driver and initial history of a path-dependent RDE.

    ``b`` returns shape ``(k,)`` and ``sigma`` shape ``(k, d)`` for a
    k-dimensional solution driven by a d-dimensional rough path; ``sigma``
    must have an analytic vertical derivative.  ``initial`` is the history
    on ``[0, t0]`` and its grid must be a prefix of the driver grid.
    """

    b: PathFunctional
    sigma: PathFunctional
    driver: RoughPath
    initial: DiscretePath
    p: float | None = None

    def __post_init__(self):
        if self.p is None:
            object.__setattr__(self, "p", float(self.driver.p_exponent))
        check_functional_p(self.p)
        if abs(self.p - self.driver.p_exponent) > 1e-15:
            raise DomainError("problem exponent differs from the driver's")
        k, d = self.initial.dimension, self.driver.dim
        if self.sigma.vertical is None and self.sigma.vertical_trace is None:
            raise CapabilityError("sigma needs a vertical derivative")
        if math.prod(self.sigma.out_shape) != k * d:
            raise DomainError(f"sigma must return {k}x{d} values, has shape {self.sigma.out_shape}")
        if math.prod(self.b.out_shape) != k:
            raise DomainError(f"b must return {k} values, has shape {self.b.out_shape}")
        if tuple(self.sigma.out_shape) != (k, d):
            object.__setattr__(self, "sigma", self.sigma.reshaped((k, d)))
        if tuple(self.b.out_shape) != (k,):
            object.__setattr__(self, "b", self.b.reshaped((k,)))
        m = len(self.initial)
        if m > len(self.driver) or not np.allclose(self.initial.times, self.driver.times[:m],
                                                   rtol=GRID_RTOL, atol=GRID_RTOL):
            raise GridAlignmentError("initial history grid must be a prefix of the driver grid")
        if self.initial.values.ndim != 2:
            object.__setattr__(self, "initial",
                               DiscretePath(self.initial.times, self.initial.flat))

    @property
    def k(self) -> int:
        return self.initial.dimension

    @property
    def start_index(self) -> int:
        return len(self.initial) - 1


@dataclass(frozen=True, eq=False)
class RdeSolution:
    solution: ControlledPath
    residual: float
    windows: list = field(default_factory=list)
    remainder_q_variation: float = math.nan

    @property
    def path(self) -> DiscretePath:
        return self.solution.y

    def to_csv(self, header_comment: str | None = None) -> str:
        y = self.solution.y.flat
        yp = self.solution.y_prime.flat
        k, kd = y.shape[1], yp.shape[1]
        d = kd // k
        head = ["t"] + [f"Y_{i + 1}" for i in range(k)] + [
            f"Yprime_{i + 1}_{j + 1}" for i in range(k) for j in range(d)]
        lines = [] if header_comment is None else [f"# {header_comment}"]
        lines.append(",".join(head))
        for t, a, b in zip(self.solution.times, y, yp):
            lines.append(",".join(repr(float(v)) for v in (t, *a, *b)))
        return "\n".join(lines) + "\n"


def _controlled(rp: RoughPath, y: np.ndarray, yp: np.ndarray, p: float) -> ControlledPath:
    t = rp.times
    return ControlledPath(DiscretePath._trusted(t, y), DiscretePath._trusted(t, yp), rp, p, q_p(p))


def _prefix_driver(problem: RdeProblem, end: int) -> RoughPath:
    rp = problem.driver
    return rp if end == len(rp) - 1 else rp.restrict(0, end)


def solution_map(problem: RdeProblem, candidate: ControlledPath, window) -> ControlledPath:
    """One application of the fixed-point map on ``window = (t_a, t_b)``.

    ``candidate`` lives on the driver grid from 0 up to at least ``t_b``.
    The result lives on the grid from 0 to ``t_b``: it keeps the candidate's
    values up to ``t_a`` and replaces them on the window by
    ``Y(t_a) + int_a b(s, Y) ds + int_a sigma(s, Y) dX``; its Gubinelli
    derivative is ``sigma(., Y)`` on the whole grid.
    """
    p = problem.p
    a, b = problem.driver.base.interval_indices(window)
    rp = _prefix_driver(problem, b)
    y = candidate.y.flat[:b + 1]
    yp = candidate.y_prime.values[:b + 1].reshape(b + 1, problem.k, problem.driver.dim)
    cand = _controlled(rp, y, yp, p)
    xi = compose_controlled(problem.sigma, cand)
    integral = rough_integrate(xi, rp, (rp.times[a], rp.times[b]), diagnostics=False)
    drift = problem.b.along(cand.y)[a:b + 1]
    dt = np.diff(rp.times[a:b + 1])[:, None]
    drift_int = np.zeros_like(drift)
    drift_int[1:] = np.cumsum(0.5 * dt * (drift[:-1] + drift[1:]), axis=0)
    new_y = y.copy()
    new_y[a:b + 1] = y[a] + drift_int + integral.value.values
    return _controlled(rp, new_y, xi.y.values.copy(), p)


def trivial_seed(problem: RdeProblem, history: np.ndarray, a: int, b: int) -> ControlledPath:
    """Y(t_a) + b(t_a, Y)(t - t_a) + sigma(t_a, Y) X_{t_a, t} with Y' = sigma(t_a, Y)."""
    rp = _prefix_driver(problem, b)
    hist = DiscretePath._trusted(rp.times[:a + 1], history[:a + 1])
    sp = StoppedPath(float(rp.times[a]), hist, float(problem.driver.times[-1]))
    b0 = problem.b.at(sp)
    s0 = problem.sigma.at(sp)
    y = np.empty((b + 1, problem.k))
    y[:a + 1] = history[:a + 1]
    dx = rp.base.values[a:b + 1] - rp.base.values[a]
    y[a:b + 1] = history[a] + np.outer(rp.times[a:b + 1] - rp.times[a], b0) + dx @ s0.T
    yp = np.empty((b + 1, problem.k, problem.driver.dim))
    yp[:] = s0
    return _controlled(rp, y, yp, problem.p)


def iterate_distance(new: ControlledPath, old: ControlledPath, a: int, b: int) -> float:
    """||(Y1 - Y2, Y1' - Y2')||_{p,q_p,X} over the grid indices [a, b]."""
    rp = new.reference.restrict(a, b)
    diff = _controlled(rp, new.y.flat[a:b + 1] - old.y.flat[a:b + 1],
                       new.y_prime.values[a:b + 1] - old.y_prime.values[a:b + 1], new.p)
    return controlled_norm(diff).total


def set_a_norm(problem: RdeProblem, cp: ControlledPath, a: int, b: int,
               control: IntervalControl, r: float | None = None) -> float:
    """||(Y - b(t_a, Y) (t - t_a), Y')||_{kappa, beta_kappa, rho} on [t_a, t_b]."""
    kappa, beta = kappa_beta(problem.p, r)
    rp = cp.reference.restrict(a, b)
    hist = DiscretePath._trusted(cp.times[:a + 1], cp.y.flat[:a + 1])
    b0 = problem.b.at(StoppedPath(float(cp.times[a]), hist, float(problem.driver.times[-1])))
    y = cp.y.flat[a:b + 1] - np.outer(cp.times[a:b + 1] - cp.times[a], b0)
    shifted = _controlled(rp, y, cp.y_prime.values[a:b + 1], problem.p)
    return holder_seminorm(shifted, control.restrict(a, b), kappa, beta)


def _window_end(control: IntervalControl, a: int, delta: float, n: int) -> int:
    row = control.table[a, a:]
    fits = np.nonzero(row <= delta)[0]
    end = a + int(fits[-1]) if fits.size else a
    return min(n - 1, max(end, a + MIN_WINDOW_STEPS))


def _solve_window(problem, history, a, b, tol, max_iter, control, r):
    seed = trivial_seed(problem, history, a, b)
    current = solution_map(problem, seed, (problem.driver.times[a], problem.driver.times[b]))
    budget = set_a_norm(problem, current, a, b, control, r)
    info = {"set_a_norm": budget, "distances": []}
    if not budget <= 1.0:
        info["failure"] = "set-A budget exceeded"
        return None, info
    prev = seed
    window = (problem.driver.times[a], problem.driver.times[b])
    for it in range(1, max_iter + 1):
        dist = iterate_distance(current, prev, a, b)
        info["distances"].append(dist)
        ds = info["distances"]
        if len(ds) >= 3 and ds[-1] > ds[-2] * (1 + 1e-9) and ds[-2] > 0:
            info["failure"] = "non-contraction"
            return None, info
        if dist < tol / 10.0:
            info["iterations"] = it
            return current, info
        prev, current = current, solution_map(problem, current, window)
    info["failure"] = "max_iter reached"
    return None, info


def solve(problem: RdeProblem, tol: float = 1e-10, max_iter: int = 50,
          r: float | None = None, control: IntervalControl | None = None) -> RdeSolution:
    """Solve window by window from the end of the history to the horizon.

    Windows start with delta = rho([0, T]) / 8 and delta is halved whenever
    the first application of the map leaves the set-A budget, the iterate
    distances grow after the second iterate, or ``max_iter`` is reached.
    A window never shrinks below four grid steps; failing there raises
    :class:`NonConvergenceError` with the window diagnostics.  Within a
    window the iteration stops once successive iterates are closer than
    ``tol / 10`` in the controlled-path norm.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    if max_iter < 1:
        raise DomainError("max_iter must be >= 1")
    rp = problem.driver
    n = len(rp)
    control = rho_control(rp) if control is None else control
    k, d = problem.k, rp.dim
    y = np.zeros((n, k))
    i0 = problem.start_index
    y[:i0 + 1] = problem.initial.flat
    delta = control.at(0, n - 1) / 8.0
    windows = []
    a = i0
    while a < n - 1:
        backoffs = 0
        while True:
            b = _window_end(control, a, delta, n)
            sol, info = _solve_window(problem, y, a, b, tol, max_iter, control, r)
            record = {"t_start": float(rp.times[a]), "t_end": float(rp.times[b]),
                      "i_start": a, "i_end": b, "delta": delta, "rho": control.at(a, b),
                      "backoffs": backoffs, **info}
            if sol is not None:
                break
            if b - a <= MIN_WINDOW_STEPS:
                windows.append(record)
                raise NonConvergenceError(
                    f"window [{rp.times[a]}, {rp.times[b]}] failed at the minimal size: "
                    f"{info.get('failure')}", windows)
            delta /= 2.0
            backoffs += 1
        windows.append(record)
        y[a:b + 1] = sol.y.flat[a:b + 1]
        a = b

    full = _controlled(rp, y, np.zeros((n, k, d)), problem.p)
    sigma = problem.sigma.along(full.y).reshape(n, k, d)
    full = _controlled(rp, y, sigma, problem.p)
    residual = verify_solution(problem, full, tol)["pq_defect"] if i0 < n - 1 else 0.0
    rem = controlled_norm(full).remainder_var
    return RdeSolution(full, residual, windows, rem)


def picard_iterates(problem: RdeProblem, count: int) -> list[ControlledPath]:
    """Iterates over one window covering the whole horizon.

    Iterate 0 is the history extended as a constant, iterate 1 the trivial
    seed, and iterate m >= 2 the map applied m - 1 times to the seed.
    """
    rp = problem.driver
    n = len(rp)
    i0 = problem.start_index
    y0 = np.zeros((n, problem.k))
    y0[:i0 + 1] = problem.initial.flat
    y0[i0 + 1:] = problem.initial.flat[-1]
    seed = trivial_seed(problem, y0, i0, n - 1)
    zero = _controlled(rp, y0, np.zeros_like(seed.y_prime.values), problem.p)
    out = [zero, seed]
    window = (rp.times[i0], rp.times[-1])
    while len(out) <= count:
        out.append(solution_map(problem, out[-1], window))
    return out[:count + 1]


def verify_solution(problem: RdeProblem, candidate: ControlledPath, tol: float) -> dict:
    """Check the integral equation and Y' = sigma(., Y) for a candidate.

    The right-hand side ``Y(t0) + int b ds + int sigma(s, Y) dX`` is rebuilt
    from the candidate over ``[t0, T]`` in one pass.  ``pq_defect`` is the
    controlled-path norm of the difference and ``passed`` requires it to be
    at most ``2 tol``, ``Y'`` to match ``sigma(., Y)`` to 1e-12 and the
    history to be reproduced bit for bit.
    """
    rp = problem.driver
    n = len(rp)
    i0 = problem.start_index
    k, d = problem.k, rp.dim
    y = candidate.y.flat
    yp = candidate.y_prime.values.reshape(n, k, d)
    cand = _controlled(rp, y, yp, problem.p)
    sigma = problem.sigma.along(cand.y).reshape(n, k, d)
    yprime_defect = float(np.max(np.abs(sigma - yp)))
    history_ok = bool(np.array_equal(y[:i0 + 1], problem.initial.flat))
    if i0 < n - 1:
        rhs = solution_map(problem, cand, (rp.times[i0], rp.times[-1]))
        sup_defect = float(np.max(np.abs(rhs.y.flat - y)))
        diff = _controlled(rp.restrict(i0, n - 1), rhs.y.flat[i0:] - y[i0:],
                           np.zeros((n - i0, k, d)), problem.p)
        pq_defect = controlled_norm(diff).total
    else:
        sup_defect = pq_defect = 0.0
    passed = pq_defect <= 2 * tol and yprime_defect <= 1e-12 and history_ok
    return {"sup_defect": sup_defect, "pq_defect": pq_defect,
            "yprime_defect": yprime_defect, "history_ok": history_ok,
            "passed": bool(passed), "tol": tol}
