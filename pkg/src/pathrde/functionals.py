"""Non-anticipative functionals on stopped paths and their Dupire derivatives.

A :class:`StoppedPath` represents the class of (t, x) where x is frozen
after t.  It is a grid path ``history`` known up to ``t0 <= t`` and held
constant on ``[t0, t]``, plus a finite list of jumps ``(tau, e)`` meaning
``x`` gains ``e`` on ``[tau, T]``.  Jumps are how vertical perturbations
``x_t + e 1_{[t,T]}`` are represented without smearing them over a grid
cell.  Between knots (grid times, jump times and ``t``) every stopped path
is linear, so suprema and integrals over it are computed exactly on knots
(with left limits at jump times).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CapabilityError, DomainError, HorizonError
from .path_core import DiscretePath, GRID_RTOL

UNSTABLE_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class StoppedPath:
    time: float
    history: DiscretePath
    horizon: float
    jumps: tuple = ()

    def __post_init__(self):
        t0 = self.history.horizon
        if t0 > self.time * (1 + GRID_RTOL) + GRID_RTOL:
            raise DomainError(f"history ends at {t0} after the stopping time {self.time}")
        if self.time > self.horizon * (1 + GRID_RTOL) + GRID_RTOL:
            raise HorizonError(f"stopping time {self.time} exceeds horizon {self.horizon}")

    @classmethod
    def from_path(cls, path: DiscretePath, t: float, horizon: float | None = None) -> "StoppedPath":
        """Stop a grid path at time t (t need not be a grid time)."""
        horizon = path.horizon if horizon is None else horizon
        times = path.times
        k = int(np.searchsorted(times, t, side="right"))
        if k == 0:
            raise DomainError(f"t = {t} precedes the start of the path")
        if k - 1 >= 0 and abs(times[k - 1] - t) <= GRID_RTOL * max(1.0, abs(t)):
            hist = path.slice(0, k - 1)
        else:
            flat = path.flat
            w = (t - times[k - 1]) / (times[k] - times[k - 1]) if k < times.size else 0.0
            val = flat[k - 1] + w * (flat[k] - flat[k - 1]) if k < times.size else flat[-1]
            hist = DiscretePath._trusted(np.append(times[:k], t),
                                         np.vstack([path.values[:k].reshape(k, -1), val])
                                         .reshape((k + 1,) + path.shape))
        return cls(float(t), hist, float(horizon))

    @property
    def dim(self) -> int:
        return self.history.dimension

    @property
    def start(self) -> float:
        return float(self.history.times[0])

    @property
    def left_limit(self) -> np.ndarray:
        """x(t-) : the value just before any jump placed at t."""
        return self.value_at(np.array([self.time]), left=True)[0]

    @property
    def current(self) -> np.ndarray:
        """x(t), including jumps at t."""
        v = self.history.flat[-1].copy()
        for _, e in self.jumps:
            v = v + e
        return v

    def knots(self) -> np.ndarray:
        pts = [self.history.times, [self.time]] + [[tau] for tau, _ in self.jumps]
        k = np.unique(np.concatenate(pts))
        return k[k <= self.time]

    def value_at(self, us, left: bool = False) -> np.ndarray:
        """x(u ^ t) for an array of times u; ``left`` gives left limits."""
        us = np.minimum(np.asarray(us, dtype=float), self.time)
        hist = self.history
        flat = hist.flat
        clipped = np.minimum(us, hist.horizon)
        out = np.empty((us.size, flat.shape[1]))
        for c in range(flat.shape[1]):
            out[:, c] = np.interp(clipped, hist.times, flat[:, c])
        for tau, e in self.jumps:
            hit = us > tau if left else us >= tau
            out[hit] += e
        return out

    def running_values(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(knots, right values, left limits) of the stopped path."""
        k = self.knots()
        return k, self.value_at(k), self.value_at(k, left=True)

    def bump(self, e) -> "StoppedPath":
        """Vertical perturbation x_t + e 1_{[t, T]}."""
        e = np.asarray(e, dtype=float).reshape(self.dim)
        return StoppedPath(self.time, self.history, self.horizon,
                           self.jumps + ((self.time, e),))

    def advance(self, h: float) -> "StoppedPath":
        """(t + h, x_t): time moves on while the path stays frozen."""
        if h < 0:
            raise DomainError("advance step must be nonnegative")
        if self.time + h > self.horizon * (1 + GRID_RTOL) + GRID_RTOL:
            raise HorizonError(f"cannot advance past the horizon {self.horizon}")
        return StoppedPath(self.time + h, self.history, self.horizon, self.jumps)

    def with_history(self, history: DiscretePath) -> "StoppedPath":
        return StoppedPath(self.time, history, self.horizon, self.jumps)


def d_infty(a: StoppedPath, b: StoppedPath) -> float:
    """sup_u |a(u ^ t) - b(u ^ t')| + |t - t'| over the union of knots."""
    if abs(a.horizon - b.horizon) > GRID_RTOL * max(1.0, a.horizon):
        raise DomainError("stopped paths live on different horizons")
    k = np.union1d(a.knots(), b.knots())
    k = np.append(k, a.horizon)
    start = max(a.start, b.start)
    k = k[k >= start]
    diff_r = a.value_at(k) - b.value_at(k)
    diff_l = a.value_at(k, left=True) - b.value_at(k, left=True)
    sup = max(float(np.max(np.sqrt(np.sum(diff_r ** 2, axis=1)))),
              float(np.max(np.sqrt(np.sum(diff_l ** 2, axis=1)))))
    return sup + abs(a.time - b.time)


def default_step(sp: StoppedPath) -> float:
    sup = float(np.max(np.abs(sp.value_at(sp.knots()))))
    return 1e-5 * (1.0 + sup)


@dataclass(frozen=True, eq=False)
class PathFunctional:
    """F(t, x) with optional analytic derivatives.

    ``evaluate(sp)`` returns an array of shape ``out_shape``; ``vertical``
    returns ``out_shape + (d,)``, ``vertical2`` returns ``out_shape + (d, d)``
    and ``horizontal`` returns ``out_shape``.  ``lipschitz`` holds declared
    d_inf-Lipschitz constants under the keys ``F``, ``DF``, ``gradF`` and
    ``hess``.  ``trace`` optionally computes ``F(t_k, x)`` for every grid
    time of a path in one pass, and ``vertical_trace`` does the same for
    the vertical derivative.
    """

    name: str
    evaluate: Callable
    out_shape: tuple
    vertical: Callable | None = None
    vertical2: Callable | None = None
    horizontal: Callable | None = None
    lipschitz: dict = field(default_factory=dict)
    trace: Callable | None = None
    vertical_trace: Callable | None = None

    def __call__(self, t: float, path: DiscretePath) -> np.ndarray:
        return self.at(StoppedPath.from_path(path, t))

    def at(self, sp: StoppedPath) -> np.ndarray:
        return np.asarray(self.evaluate(sp), dtype=float).reshape(self.out_shape)

    def along(self, path: DiscretePath) -> np.ndarray:
        """F(t_k, x) for every grid time, shape ``(n, *out_shape)``."""
        if self.trace is not None:
            return np.asarray(self.trace(path), dtype=float).reshape(
                (len(path),) + self.out_shape)
        return np.stack([self.at(StoppedPath.from_path(path, t)) for t in path.times])

    def vertical_along(self, path: DiscretePath) -> np.ndarray:
        if self.vertical is None:
            raise CapabilityError(f"{self.name} has no analytic vertical derivative")
        d = path.dimension
        if self.vertical_trace is not None:
            return np.asarray(self.vertical_trace(path), dtype=float).reshape(
                (len(path),) + self.out_shape + (d,))
        return np.stack([np.asarray(self.vertical(StoppedPath.from_path(path, t)), dtype=float)
                         .reshape(self.out_shape + (d,)) for t in path.times])

    def reshaped(self, shape: tuple, name: str | None = None) -> "PathFunctional":
        """Same functional with its output reshaped to ``shape``."""
        shape = tuple(shape)
        if math.prod(shape) != math.prod(self.out_shape):
            raise DomainError(f"cannot reshape {self.out_shape} to {shape}")

        def wrap(fn, extra):
            if fn is None:
                return None

            def inner(sp):
                return np.asarray(fn(sp), dtype=float).reshape(shape + extra(sp))
            return inner

        trace = vtrace = None
        if self.trace is not None:
            def trace(path):
                return np.asarray(self.trace(path), dtype=float).reshape((len(path),) + shape)
        if self.vertical_trace is not None:
            def vtrace(path):
                return np.asarray(self.vertical_trace(path), dtype=float).reshape(
                    (len(path),) + shape + (path.dimension,))
        return PathFunctional(
            name or self.name, wrap(self.evaluate, lambda sp: ()), shape,
            wrap(self.vertical, lambda sp: (sp.dim,)),
            wrap(self.vertical2, lambda sp: (sp.dim, sp.dim)),
            wrap(self.horizontal, lambda sp: ()),
            dict(self.lipschitz), trace, vtrace)


# -- derivatives ------------------------------------------------------------

def _unit(d: int, i: int, h: float) -> np.ndarray:
    e = np.zeros(d)
    e[i] = h
    return e


def vertical_fd(F: PathFunctional, sp: StoppedPath, h: float | None = None,
                tol: float = UNSTABLE_TOL) -> dict:
    """Forward, backward and central vertical difference quotients.

    ``unstable`` is set when forward and backward quotients differ by more
    than ``tol``, which signals a kink of F under vertical bumps.
    """
    h = default_step(sp) if h is None else h
    if h <= 0:
        raise DomainError("bump size must be positive")
    base = F.at(sp)
    d = sp.dim
    fwd, bwd = [], []
    for i in range(d):
        up = F.at(sp.bump(_unit(d, i, h)))
        dn = F.at(sp.bump(_unit(d, i, -h)))
        fwd.append((up - base) / h)
        bwd.append((base - dn) / h)
    fwd = np.stack(fwd, axis=-1)
    bwd = np.stack(bwd, axis=-1)
    gap = float(np.max(np.abs(fwd - bwd))) if fwd.size else 0.0
    return {"forward": fwd, "backward": bwd, "central": 0.5 * (fwd + bwd),
            "gap": gap, "unstable": gap > tol}


def vertical_derivative(F: PathFunctional, sp: StoppedPath, h: float | None = None,
                        analytic: bool = True) -> np.ndarray:
    """nabla_x F(t, x): analytic when available, else a central difference."""
    if analytic and F.vertical is not None:
        return np.asarray(F.vertical(sp), dtype=float).reshape(F.out_shape + (sp.dim,))
    return vertical_fd(F, sp, h)["central"]


def second_vertical_derivative(F: PathFunctional, sp: StoppedPath, h: float | None = None,
                               analytic: bool = True) -> np.ndarray:
    """nabla_x^2 F(t, x): analytic when available, else a central difference."""
    d = sp.dim
    if analytic and F.vertical2 is not None:
        return np.asarray(F.vertical2(sp), dtype=float).reshape(F.out_shape + (d, d))
    h = 10.0 * default_step(sp) if h is None else h
    out = np.zeros(F.out_shape + (d, d))
    for i in range(d):
        for j in range(d):
            ei, ej = _unit(d, i, h), _unit(d, j, h)
            out[..., i, j] = (F.at(sp.bump(ei + ej)) - F.at(sp.bump(ei - ej))
                              - F.at(sp.bump(-ei + ej)) + F.at(sp.bump(-ei - ej))) / (4 * h * h)
    return out


def horizontal_fd(F: PathFunctional, sp: StoppedPath, h: float | None = None) -> np.ndarray:
    """One-sided difference in time with the path frozen.

    Uses the second-order stencil
    ``(4 (F(t+h) - F(t)) - (F(t+2h) - F(t))) / 2h`` when ``t + 2h`` fits before the horizon and the plain forward quotient when
    only ``t + h`` does.
    """
    h = default_step(sp) if h is None else h
    if h <= 0:
        raise DomainError("step must be positive")
    room = sp.horizon - sp.time
    if room < h * (1 - 1e-9):
        raise HorizonError(f"t = {sp.time} leaves no room for a step of {h} before T")
    f0 = F.at(sp)
    f1 = F.at(sp.advance(h))
    if room >= 2 * h:
        f2 = F.at(sp.advance(2 * h))
        return (4.0 * (f1 - f0) - (f2 - f0)) / (2.0 * h)
    return (f1 - f0) / h


def horizontal_derivative(F: PathFunctional, sp: StoppedPath, h: float | None = None,
                          analytic: bool = True) -> np.ndarray:
    """DF(t, x) = lim (F(t+h, x_t) - F(t, x_t)) / h."""
    if sp.time >= sp.horizon * (1 - GRID_RTOL):
        raise HorizonError("the horizontal derivative is one-sided and undefined at T")
    if analytic and F.horizontal is not None:
        return np.asarray(F.horizontal(sp), dtype=float).reshape(F.out_shape)
    return horizontal_fd(F, sp, h)


def functional_remainder(F: PathFunctional, path: DiscretePath, t: float, s: float) -> np.ndarray:
    """R^F_{t,s} = F(s, X_s) - F(t, X_t) - nabla_x F(t, X_t)(X(s) - X(t))."""
    if F.vertical is None:
        raise CapabilityError(f"{F.name} has no vertical derivative")
    i, j = path.interval_indices((t, s))
    spt = StoppedPath.from_path(path, path.times[i])
    sps = StoppedPath.from_path(path, path.times[j])
    grad = vertical_derivative(F, spt)
    return F.at(sps) - F.at(spt) - grad @ (path.flat[j] - path.flat[i])


def remainder_along(F: PathFunctional, path: DiscretePath, pairs) -> np.ndarray:
    """|R^F_{t_i,t_j}| for index pairs, reusing one trace of F and nabla F."""
    vals = F.along(path)
    if F.vertical is None:
        raise CapabilityError(f"{F.name} has no vertical derivative")
    grads = F.vertical_along(path)
    x = path.flat
    out = []
    for i, j in pairs:
        r = vals[j] - vals[i] - grads[i] @ (x[j] - x[i])
        out.append(float(np.linalg.norm(r)))
    return np.asarray(out)


# -- shipped functionals ----------------------------------------------------

def endpoint(d: int = 1) -> PathFunctional:
    """F(t, x) = x(t)."""
    eye = np.eye(d)
    return PathFunctional(
        "identity", lambda sp: sp.current, (d,),
        vertical=lambda sp: eye, vertical2=lambda sp: np.zeros((d, d, d)),
        horizontal=lambda sp: np.zeros(d),
        lipschitz={"F": 1.0, "DF": 0.0, "gradF": 0.0, "hess": 0.0},
        trace=lambda path: path.flat.copy(),
        vertical_trace=lambda path: np.broadcast_to(eye, (len(path), d, d)).copy())


def linear_endpoint(A) -> PathFunctional:
    """F(t, x) = A x(t) for a matrix A of shape ``out + (d,)``."""
    A = np.asarray(A, dtype=float)
    out, d = A.shape[:-1], A.shape[-1]
    return PathFunctional(
        "linear", lambda sp: A @ sp.current, out,
        vertical=lambda sp: A, vertical2=lambda sp: np.zeros(A.shape + (d,)),
        horizontal=lambda sp: np.zeros(out),
        lipschitz={"F": float(np.linalg.norm(A, 2)) if A.ndim == 2 else float(np.linalg.norm(A)),
                   "DF": 0.0, "gradF": 0.0, "hess": 0.0},
        trace=lambda path: path.flat @ A.reshape(-1, d).T,
        vertical_trace=lambda path: np.broadcast_to(A, (len(path),) + A.shape).copy())


def constant(c, d: int = 1) -> PathFunctional:
    """F(t, x) = c."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    out = c.shape
    return PathFunctional(
        "const", lambda sp: c, out,
        vertical=lambda sp: np.zeros(out + (sp.dim,)),
        vertical2=lambda sp: np.zeros(out + (sp.dim, sp.dim)),
        horizontal=lambda sp: np.zeros(out),
        lipschitz={"F": 0.0, "DF": 0.0, "gradF": 0.0, "hess": 0.0},
        trace=lambda path: np.broadcast_to(c, (len(path),) + out).copy(),
        vertical_trace=lambda path: np.zeros((len(path),) + out + (path.dimension,)))


def _scalar(sp: StoppedPath) -> None:
    if sp.dim != 1:
        raise DomainError("running-maximum functionals act on scalar paths")


def _scalar_values(path: DiscretePath) -> np.ndarray:
    if path.dimension != 1:
        raise DomainError("running-maximum functionals act on scalar paths")
    return path.flat[:, 0]


def _running_max(sp: StoppedPath) -> float:
    _, right, left = sp.running_values()
    return float(max(right.max(), left.max()))


def running_max() -> PathFunctional:
    """m(t, z) = max_{s <= t} z(s); vertically non-differentiable at argmax points."""
    def evaluate(sp):
        _scalar(sp)
        return np.array([_running_max(sp)])

    def trace(path):
        return np.maximum.accumulate(_scalar_values(path))

    return PathFunctional("max", evaluate, (1,), horizontal=lambda sp: np.zeros(1),
                          lipschitz={"F": 1.0, "DF": 0.0}, trace=trace)


def _h_polynomial(eps: float, kind: str) -> np.ndarray:
    """Coefficients a_0..a_5 of h, ascending powers."""
    if kind == "quadratic":
        return np.array([0.0, 0.0, 1.0 / (4.0 * eps), 0.0, 0.0, 0.0])
    if kind != "quintic":
        raise DomainError(f"unknown smoothing kind {kind!r}")
    z = 2.0 * eps
    system = np.array([[z ** 3, z ** 4, z ** 5],
                       [3 * z ** 2, 4 * z ** 3, 5 * z ** 4],
                       [6 * z, 12 * z ** 2, 20 * z ** 3]])
    a3, a4, a5 = np.linalg.solve(system, np.array([eps, 1.0, 0.0]))
    return np.array([0.0, 0.0, 0.0, a3, a4, a5])


def smoothing_polynomial(eps: float, kind: str = "quintic"):
    """(h, h', h'', coefficients) of the smoothing polynomial."""
    a = _h_polynomial(eps, kind)
    poly = np.polynomial.Polynomial(a)
    d1, d2 = poly.deriv(1), poly.deriv(2)
    return poly, d1, d2, a


def smoothed_running_max(eps: float, kind: str = "quintic") -> PathFunctional:
    """Three-branch smoothing M_{eps,h} of the running maximum.

    With m the running maximum and z = x(t):
    ``m - eps`` if ``z <= m - 2 eps``, ``m - eps + h(z - m + 2 eps)`` in
    between, and ``z`` once ``z >= m``.  ``h`` is ``z^2 / (4 eps)``
    (``quadratic``) or the degree-5 polynomial with
    ``h(0) = h'(0) = h''(0) = 0``, ``h(2eps) = eps``, ``h'(2eps) = 1`` and
    ``h''(2eps) = 0`` (``quintic``).
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    h, dh, d2h, _ = smoothing_polynomial(eps, kind)
    two = 2.0 * eps

    def parts(m, z):
        return m, z, z - (m - two)

    def value(m, z):
        m, z, u = parts(m, z)
        return np.where(u <= 0, m - eps, np.where(z >= m, z, m - eps + h(np.clip(u, 0, two))))

    def grad(m, z):
        m, z, u = parts(m, z)
        return np.where(u <= 0, 0.0, np.where(z >= m, 1.0, dh(np.clip(u, 0, two))))

    def hess(m, z):
        m, z, u = parts(m, z)
        return np.where(u <= 0, 0.0, np.where(z >= m, 0.0, d2h(np.clip(u, 0, two))))

    def state(sp):
        _scalar(sp)
        return _running_max(sp), float(sp.current[0])

    def trace(path):
        z = _scalar_values(path)
        return value(np.maximum.accumulate(z), z)

    def vertical_trace(path):
        z = _scalar_values(path)
        return grad(np.maximum.accumulate(z), z)

    # h' lies in [0, 1] and |h''|, |h'''| are maximal on [0, 2 eps]; a change
    # of the path by delta moves both m and z by at most delta.
    grid = np.linspace(0.0, two, 2001)
    sup_d2 = float(np.max(np.abs(d2h(grid))))
    sup_d3 = float(np.max(np.abs(d2h.deriv(1)(grid))))
    lip = {"F": 1.0, "DF": 0.0, "gradF": 2.0 * sup_d2,
           "hess": 2.0 * sup_d3 if kind == "quintic" else math.inf}
    return PathFunctional(
        f"smax:eps={eps:g}:{kind}",
        lambda sp: np.array([value(*state(sp))]), (1,),
        vertical=lambda sp: np.array([[grad(*state(sp))]]),
        vertical2=lambda sp: np.array([[[hess(*state(sp))]]]),
        horizontal=lambda sp: np.zeros(1),
        lipschitz=lip, trace=trace, vertical_trace=vertical_trace)


def discrete_time_functional(time_points, phi: Callable, grad_phi: Callable | None = None,
                             hess_phi: Callable | None = None, dphi_dt: Callable | None = None,
                             out_shape: tuple = (1,), name: str = "discrete",
                             lipschitz: dict | None = None) -> PathFunctional:
    """sigma(t, x) = phi(t, x(t ^ t_1), ..., x(t ^ t_m)).

    ``phi(t, xs)`` receives ``xs`` of shape ``(m, d)``.  ``grad_phi`` returns
    ``out + (m, d)`` and ``hess_phi`` returns ``out + (m, d, m, d)``; the
    vertical derivatives sum them over the points with ``t_i >= t``.
    ``dphi_dt`` (same signature as ``phi``) gives the horizontal derivative:
    a frozen path leaves every argument ``x(t ^ t_i)`` unchanged.
    """
    tp = np.asarray(time_points, dtype=float)
    if tp.ndim != 1 or tp.size == 0 or np.any(np.diff(tp) <= 0):
        raise DomainError("time points must be a nonempty increasing sequence")
    out_shape = tuple(out_shape)

    def args(sp):
        return sp.value_at(np.minimum(tp, sp.time))

    def active(sp):
        return tp >= sp.time * (1 - GRID_RTOL) - GRID_RTOL

    def evaluate(sp):
        return phi(sp.time, args(sp))

    vertical = vertical2 = horizontal = None
    if grad_phi is not None:
        def vertical(sp):
            g = np.asarray(grad_phi(sp.time, args(sp)), dtype=float)
            g = g.reshape(out_shape + (tp.size, sp.dim))
            return np.sum(g[..., active(sp), :], axis=-2)
    if hess_phi is not None:
        def vertical2(sp):
            d = sp.dim
            H = np.asarray(hess_phi(sp.time, args(sp)), dtype=float)
            H = H.reshape(out_shape + (tp.size, d, tp.size, d))
            act = active(sp)
            return np.sum(H[..., act, :, :, :][..., act, :], axis=(-4, -2))
    if dphi_dt is not None:
        def horizontal(sp):
            return dphi_dt(sp.time, args(sp))
    return PathFunctional(name, evaluate, out_shape, vertical, vertical2, horizontal,
                          dict(lipschitz or {}))


def integral_functional(psi: Callable, grad_y: Callable | None = None,
                        hess_y: Callable | None = None, out_shape: tuple = (1,),
                        name: str = "integral", lipschitz: dict | None = None) -> PathFunctional:
    """F(t, x) = int_0^t psi(s, x(s), x(t)) ds by the trapezoid rule on knots.

    ``psi(s, xs, y)`` is vectorised: ``s`` has shape ``(m,)``, ``xs`` shape
    ``(m, d)`` (the path value at each ``s``) and ``y`` shape ``(d,)``; it
    returns ``(m, *out_shape)``.  ``grad_y`` and ``hess_y`` return
    ``(m, *out, d)`` and ``(m, *out, d, d)``.  On each knot interval the
    trapezoid uses the right value at the left end and the left limit at the
    right end, so jumps (including a vertical bump at t) are integrated
    exactly and only enter through ``y = x(t)``.  The horizontal derivative
    is ``psi(t, x(t), x(t))``.
    """
    out_shape = tuple(out_shape)

    def quad(fn, sp, extra):
        k, right, left = sp.running_values()
        y = sp.current
        if k.size < 2:
            return np.zeros(out_shape + extra)
        a = np.asarray(fn(k[:-1], right[:-1], y), dtype=float).reshape((k.size - 1,) + out_shape + extra)
        b = np.asarray(fn(k[1:], left[1:], y), dtype=float).reshape((k.size - 1,) + out_shape + extra)
        w = np.diff(k).reshape((-1,) + (1,) * (a.ndim - 1))
        return np.sum(0.5 * w * (a + b), axis=0)

    def evaluate(sp):
        return quad(psi, sp, ())

    def horizontal(sp):
        y = sp.current
        return np.asarray(psi(np.array([sp.time]), y[None, :], y), dtype=float).reshape(out_shape)

    vertical = vertical2 = None
    if grad_y is not None:
        def vertical(sp):
            return quad(grad_y, sp, (sp.dim,))
    if hess_y is not None:
        def vertical2(sp):
            return quad(hess_y, sp, (sp.dim, sp.dim))

    return PathFunctional(name, evaluate, out_shape, vertical, vertical2, horizontal,
                          dict(lipschitz or {}))


# -- regularity diagnostics -------------------------------------------------

def remainder_scaling(F: PathFunctional, path: DiscretePath, p: float,
                      min_block: int = 1, max_fraction: float = 0.25) -> dict:
    """Log-log slope of mean |R^F_{t,s}| against mean omega([t,s]).

    Disjoint blocks of ``L`` grid steps are formed for dyadic ``L``; for each
    level the mean remainder and the mean of
    ``omega = |s - t| + ||X||_{p,[t,s]}^p`` over the blocks are recorded,
    and the slope is fitted by least squares in log-log scale.
    """
    from .path_core import p_variation_exact

    n = len(path)
    levels = []
    L = max(1, min_block)
    while L <= max_fraction * (n - 1):
        starts = np.arange(0, n - 1 - L + 1, L)
        pairs = [(int(a), int(a + L)) for a in starts]
        rem = remainder_along(F, path, pairs)
        om = [path.times[b] - path.times[a]
              + p_variation_exact(path, p, (path.times[a], path.times[b])) ** p for a, b in pairs]
        levels.append((L, float(np.mean(rem)), float(np.mean(om))))
        L *= 2
    rows = [lv for lv in levels if lv[1] > 0]
    if len(rows) < 2:
        return {"slope": math.nan, "levels": levels}
    lx = np.log([r[2] for r in rows])
    ly = np.log([r[1] for r in rows])
    slope = float(np.polyfit(lx, ly, 1)[0])
    return {"slope": slope, "levels": levels}


def _pairwise_lipschitz(values, probes) -> float:
    worst = 0.0
    for a in range(len(probes)):
        for b in range(a + 1, len(probes)):
            dist = d_infty(probes[a], probes[b])
            if dist <= 0:
                continue
            diff = float(np.linalg.norm(values[a] - values[b]))
            worst = max(worst, diff / dist)
    return worst


def regularity_report(F: PathFunctional, probe_paths, times_per_path: int = 4,
                      p: float = 2.1, tol: float = 1e-6) -> dict:
    """Empirical d_inf-Lipschitz constants of F and its derivatives.

    Every probe path is stopped at ``times_per_path`` grid times (the horizon
    excluded, so the horizontal derivative exists).  Constants are the
    maximal difference quotients over all pairs of stopped probes; flags
    compare them with ``F.lipschitz`` using relative slack ``tol``.
    Derivatives fall back to finite differences when no analytic form is
    given; a vertical kink on any probe fails ``vertical_differentiable``.
    """
    probe_paths = list(probe_paths)
    if not probe_paths:
        raise DomainError("regularity_report needs at least one probe path")
    probes = []
    for path in probe_paths:
        idx = np.unique(np.linspace(1, len(path) - 2, times_per_path).round().astype(int))
        probes.extend(StoppedPath.from_path(path, path.times[i]) for i in idx)

    vals = [F.at(sp) for sp in probes]
    constants = {"F": _pairwise_lipschitz(vals, probes)}
    constants["DF"] = _pairwise_lipschitz([horizontal_derivative(F, sp) for sp in probes], probes)
    kinks = [vertical_fd(F, sp) for sp in probes]
    grads = [vertical_derivative(F, sp) if F.vertical is not None else k["central"]
             for sp, k in zip(probes, kinks)]
    constants["gradF"] = _pairwise_lipschitz(grads, probes)
    hess = [second_vertical_derivative(F, sp) for sp in probes]
    constants["hess"] = _pairwise_lipschitz(hess, probes)

    flags = {}
    for key, emp in constants.items():
        declared = F.lipschitz.get(key)
        if declared is not None:
            flags[f"{key}_lipschitz"] = bool(emp <= declared * (1 + tol) + tol)
    flags["vertical_differentiable"] = not any(k["unstable"] for k in kinks)

    slope = math.nan
    if F.vertical is not None:
        slopes = [remainder_scaling(F, path, p)["slope"] for path in probe_paths
                  if len(path) >= 129 and path.dimension == probes[0].dim]
        slopes = [s for s in slopes if np.isfinite(s)]
        if slopes:
            slope = float(min(slopes))
            flags["remainder_scaling"] = bool(slope >= (1 + 1 / p) / p - 0.15)
    return {"functional_id": F.name, "constants": constants, "flags": flags,
            "probe_count": len(probes), "remainder_slope": slope}
