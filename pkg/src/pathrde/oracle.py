"""Independent reference computations used to check the rest of the package.

Nothing here calls the norm, integration or solver code it is meant to
check: partitions are enumerated in pure Python, Riemann-Stieltjes sums and
the one-step RDE scheme are written out directly, and the Levy-area sampler
uses its own generator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, DomainError, GuardError
from .functionals import PathFunctional, StoppedPath
from .path_core import DiscretePath


@dataclass(frozen=True)
class OracleConfig:
    refinement_factor: int = 64
    enumeration_cap: int = 12
    fd_step: float = 1e-5

    def __post_init__(self):
        if self.refinement_factor < 2:
            raise DomainError("refinement_factor must be >= 2")
        if self.enumeration_cap > 16:
            raise GuardError("enumeration_cap is limited to 16 grid points")


DEFAULT = OracleConfig()


def _points(path: DiscretePath, interval) -> list[list[float]]:
    times = path.times
    if interval is None:
        lo, hi = 0, times.size - 1
    else:
        t, s = interval
        lo = int(np.argmin(np.abs(times - t)))
        hi = int(np.argmin(np.abs(times - s)))
        if times[lo] != t or times[hi] != s:
            raise DomainError("interval endpoints must be grid times")
    return [list(map(float, row)) for row in path.flat[lo:hi + 1]]


def pvar_bruteforce(path: DiscretePath, p: float, interval=None,
                    config: OracleConfig = DEFAULT) -> float:
    """max over all sub-partitions of sum |increment|^p (no root taken).

    Every subset of interior grid points is tried; increments are summed
    left to right.
    """
    pts = _points(path, interval)
    m = len(pts)
    if m > config.enumeration_cap:
        raise GuardError(f"{m} grid points exceed the enumeration cap {config.enumeration_cap}")
    if m < 2:
        return 0.0

    def cost(a, b):
        return math.sqrt(sum((u - v) * (u - v) for u, v in zip(pts[b], pts[a]))) ** p

    best = 0.0
    interior = range(1, m - 1)
    for r in range(m - 1):
        for chosen in itertools.combinations(interior, r):
            knots = (0,) + chosen + (m - 1,)
            total = 0.0
            for a, b in zip(knots[:-1], knots[1:]):
                total = total + cost(a, b)
            best = max(best, total)
    return best


def rs_integral(f_values, path: DiscretePath) -> np.ndarray:
    """Midpoint Riemann-Stieltjes sum  sum_k (f_k + f_{k+1}) / 2 . dX_k.

    ``f_values`` has shape ``(m,)`` for scalar paths, ``(m, d)`` (dot
    product with dX) or ``(m, k, d)`` (k-vector result).
    """
    f = np.asarray(f_values, dtype=float)
    x = path.flat
    if f.ndim == 1:
        f = f[:, None] * np.ones((1, x.shape[1]))
    if f.shape[0] != x.shape[0]:
        raise DomainError("integrand and integrator must share the grid")
    mid = 0.5 * (f[:-1] + f[1:])
    dx = np.diff(x, axis=0)
    total = np.zeros(mid.shape[1:-1])
    for k in range(dx.shape[0]):
        total = total + mid[k] @ dx[k]
    return total


def refine_driver(times, values, blocks, factor: int):
    """Split every interval into ``factor`` steps: linear X, area spread evenly.

    Returns (times, values, blocks) of the refined grid; each new block is
    ``dX (x) dX / 2`` plus ``1/factor`` of the coarse block's antisymmetric
    part.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    out_t = [times[0]]
    out_x = [values[0]]
    out_b = []
    for c in range(n - 1):
        anti = 0.5 * (blocks[c] - blocks[c].T) / factor
        for s in range(1, factor + 1):
            w = s / factor
            t = times[c] + w * (times[c + 1] - times[c])
            x = values[c] + w * (values[c + 1] - values[c])
            step = x - out_x[-1]
            out_b.append(0.5 * np.outer(step, step) + anti)
            out_t.append(t)
            out_x.append(x)
    out_t[-1] = times[-1]
    out_x[-1] = values[-1]
    return np.array(out_t), np.array(out_x), np.array(out_b)


def _one_step_scheme(problem, n_fine: int, second_level: bool) -> DiscretePath:
    rp = problem.driver
    n = len(rp)
    if n_fine % n:
        raise DomainError(f"n_fine = {n_fine} is not a multiple of the driver size {n}")
    factor = n_fine // n
    if second_level and problem.sigma.vertical is None:
        raise CapabilityError("the second-level scheme needs an analytic vertical derivative")
    times, xs, blocks = refine_driver(rp.times, rp.base.flat, rp.second_level, factor)
    k, d = problem.k, rp.dim
    i0 = problem.start_index * factor
    T = float(times[-1])
    y = np.zeros((times.size, k))
    hist_t = problem.initial.times
    for c in range(k):
        y[:i0 + 1, c] = np.interp(times[:i0 + 1], hist_t, problem.initial.flat[:, c])
    for m in range(i0, times.size - 1):
        sp = StoppedPath(float(times[m]), DiscretePath._trusted(times[:m + 1], y[:m + 1]), T)
        drift = np.asarray(problem.b.at(sp)).reshape(k)
        sig = np.asarray(problem.sigma.at(sp)).reshape(k, d)
        step = drift * (times[m + 1] - times[m]) + sig @ (xs[m + 1] - xs[m])
        if second_level:
            grad = np.asarray(problem.sigma.vertical(sp)).reshape(k, d, k)
            coef = np.einsum("ljc,ci->lji", grad, sig)
            step = step + np.einsum("lji,ij->l", coef, blocks[m])
        y[m + 1] = y[m] + step
    return DiscretePath(times, y)


def euler_level2(problem, n_fine: int) -> DiscretePath:
    """Y_{m+1} = Y_m + b dt + sigma dX + (nabla sigma . sigma) XX on a refined grid.

    The driver is refined by ``n_fine // len(driver)`` sub-steps per interval
    (``n_fine`` must be a multiple of the driver size) with
    :func:`refine_driver`; the initial history is interpolated linearly.
    """
    return _one_step_scheme(problem, n_fine, True)


def euler_plain(problem, n_fine: int) -> DiscretePath:
    """The same scheme without the second-level term (first order only)."""
    return _one_step_scheme(problem, n_fine, False)


def _vertical_fd(F: PathFunctional, sp: StoppedPath, h: float) -> tuple:
    d = sp.dim
    base = np.asarray(F.at(sp))
    fwd, bwd = [], []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        fwd.append((np.asarray(F.at(sp.bump(e))) - base) / h)
        bwd.append((base - np.asarray(F.at(sp.bump(-e)))) / h)
    fwd = np.stack(fwd, axis=-1)
    bwd = np.stack(bwd, axis=-1)
    return 0.5 * (fwd + bwd), float(np.max(np.abs(fwd - bwd)))


def _horizontal_fd(F: PathFunctional, sp: StoppedPath, h: float) -> np.ndarray:
    f0 = np.asarray(F.at(sp))
    f1 = np.asarray(F.at(sp.advance(h)))
    f2 = np.asarray(F.at(sp.advance(2 * h)))
    return (4.0 * (f1 - f0) - (f2 - f0)) / (2.0 * h)


def _slope(e1: float, e2: float) -> float:
    if e1 > 0 and e2 > 0:
        return math.log2(e1 / e2)
    return math.nan


def fd_derivative_check(F: PathFunctional, probes, h: float | None = None,
                        config: OracleConfig = DEFAULT, unstable_tol: float = 1e-3) -> dict:
    """Compare analytic derivatives with finite differences at h and h/2.

    Vertical derivatives use central differences, horizontal ones the
    one-sided second-order stencil on the frozen path.  Slopes are
    ``log2(err(h) / err(h/2))`` of the largest discrepancy over the probes
    (NaN when a discrepancy vanishes).  ``unstable`` lists probes where the
    forward and backward vertical quotients disagree by more than
    ``unstable_tol``.
    """
    h = config.fd_step if h is None else h
    report = {"h": h, "probe_count": len(probes), "unstable": []}
    if F.vertical is not None:
        errs = [0.0, 0.0]
        for idx, sp in enumerate(probes):
            exact = np.asarray(F.vertical(sp), dtype=float).reshape(F.out_shape + (sp.dim,))
            for lvl, step in enumerate((h, h / 2)):
                approx, gap = _vertical_fd(F, sp, step)
                errs[lvl] = max(errs[lvl], float(np.max(np.abs(approx - exact))))
                if lvl == 0 and gap > unstable_tol:
                    report["unstable"].append(idx)
        report["vertical_error"] = errs[0]
        report["vertical_error_half"] = errs[1]
        report["vertical_slope"] = _slope(*errs)
    else:
        for idx, sp in enumerate(probes):
            if _vertical_fd(F, sp, h)[1] > unstable_tol:
                report["unstable"].append(idx)
    if F.horizontal is not None:
        errs = [0.0, 0.0]
        for sp in probes:
            if sp.time + 2 * h > sp.horizon:
                continue
            exact = np.asarray(F.horizontal(sp), dtype=float).reshape(F.out_shape)
            for lvl, step in enumerate((h, h / 2)):
                errs[lvl] = max(errs[lvl], float(np.max(np.abs(_horizontal_fd(F, sp, step) - exact))))
        report["horizontal_error"] = errs[0]
        report["horizontal_error_half"] = errs[1]
        report["horizontal_slope"] = _slope(*errs)
    return report


def levy_area_samples(seeds, n_steps: int, T: float = 1.0) -> np.ndarray:
    """Levy area of a 2-d Brownian path over [0, T] on a fine grid, one per seed.

    Increments come from ``numpy.random.PCG64`` (standard normal sampler),
    a generator unrelated to the one used by the rough-path constructors.
    """
    out = []
    dt = T / n_steps
    for seed in seeds:
        g = np.random.Generator(np.random.PCG64(seed))
        inc = g.standard_normal((n_steps, 2)) * math.sqrt(dt)
        x = np.vstack([np.zeros(2), np.cumsum(inc, axis=0)])[:-1]
        out.append(0.5 * float(np.sum(x[:, 0] * inc[:, 1] - x[:, 1] * inc[:, 0])))
    return np.array(out)
