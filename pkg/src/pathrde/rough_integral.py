"""Rough integration of controlled paths by compensated Riemann sums.

The integrand ``Y`` takes values in k x d matrices and is integrated against
the d-dimensional driver, giving a k-dimensional path.  Its Gubinelli
derivative has shape ``(k, d, d)`` with ``Y'[l, j, i]`` the sensitivity of
``Y[l, j]`` to ``X^i``, so the second-level correction is

    (Y'_t XX_{t,s})_l = sum_{i,j} Y'_t[l, j, i] XX_{t,s}[i, j].

On a finite grid the compensated sum over the full grid is the value of the
integral; coarser dyadic partitions are compared with it to exhibit the
sewing behaviour.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .controlled import ControlledPath, q_p, reference_id
from .errors import CapabilityError, DomainError, ExponentError, ReferenceMismatchError
from .functionals import PathFunctional
from .path_core import DiscretePath, p_variation_exact, p_variation_from_matrix
from .rough_lift import SQRT2_PLUS_1, RoughPath


@dataclass(frozen=True, eq=False)
class IntegralResult:
    """Partial integrals Z on the grid, defect diagnostics and (Z, Z' = Y)."""

    value: DiscretePath
    local_defects: list
    as_controlled: ControlledPath
    estimate_terms: dict = field(default_factory=dict)

    @property
    def total(self) -> np.ndarray:
        return self.value.values[-1] - self.value.values[0]

    def to_csv(self, header_comment: str | None = None) -> str:
        return self.value.to_csv(header_comment)

    def diagnostics_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "s", "defect", "rho"])
        for row in self.local_defects:
            w.writerow([repr(row["t"]), repr(row["s"]), repr(row["defect"]), repr(row["rho"])])
        return buf.getvalue()


def check_exponents(p: float, q: float) -> None:
    """Level-2 sewing needs 1/p + 1/q > 1."""
    if not 1.0 / p + 1.0 / q > 1.0:
        raise ExponentError(
            f"1/p + 1/q = {1 / p + 1 / q:.6f} <= 1 (p = {p}, q = {q}); level-2 "
            f"integration of functional integrands requires p < sqrt(2)+1 ~ {SQRT2_PLUS_1:.6f}")


def check_functional_p(p: float) -> None:
    if not 2.0 <= p < SQRT2_PLUS_1:
        raise ExponentError(
            f"p = {p} is outside [2, sqrt(2)+1): with q = p^2/(p+1) the sewing "
            f"condition 1/p + 1/q > 1 fails")


def _same_reference(cp: ControlledPath, rp: RoughPath) -> None:
    if cp.reference is rp:
        return
    if len(cp.reference) != len(rp) or reference_id(cp.reference) != reference_id(rp):
        raise ReferenceMismatchError("the integrand is controlled by a different rough path")


def _integrand_arrays(cp: ControlledPath, d: int):
    y = cp.y.values
    yp = cp.y_prime.values
    n = y.shape[0]
    if y.shape[1:] == (d,):
        y = y.reshape(n, 1, d)
        yp = yp.reshape(n, 1, d, d)
    if y.ndim != 3 or y.shape[2] != d:
        raise DomainError(f"integrand values must have shape (k, {d}), got {y.shape[1:]}")
    return y, yp


def compensated_terms(y: np.ndarray, yp: np.ndarray, dx: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Y_t X_{t,s} + Y'_t XX_{t,s} for stacked intervals."""
    return np.einsum("mlj,mj->ml", y, dx) + np.einsum("mlji,mij->ml", yp, xx)


def _block_rho(rp: RoughPath, a: int, b: int) -> float:
    p = rp.p_exponent
    sub = rp.restrict(a, b)
    pv = p_variation_exact(sub.base, p)
    xx = p_variation_from_matrix(sub.second_level_norms(), p / 2.0)
    return float(rp.times[b] - rp.times[a] + pv ** p + xx ** (p / 2.0))


def _defects(y, yp, rp: RoughPath, z: np.ndarray, i: int, j: int, max_fraction: float) -> list:
    rows = []
    vals = rp.base.values
    L = 2
    while L <= max_fraction * (j - i):
        for a in range(i, j - L + 1, L):
            b = a + L
            approx = compensated_terms(y[a:a + 1], yp[a:a + 1], (vals[b] - vals[a])[None],
                                       rp.area(a, b)[None])[0]
            defect = float(np.linalg.norm((z[b] - z[a]) - approx))
            rows.append({"t": float(rp.times[a]), "s": float(rp.times[b]), "level": L,
                         "defect": defect, "rho": _block_rho(rp, a, b)})
        L *= 2
    return rows


def rough_integrate(cp: ControlledPath, rp: RoughPath, interval=None,
                    diagnostics: bool = True, max_fraction: float = 0.25) -> IntegralResult:
    """Compensated Riemann sum of ``cp`` against ``rp`` on the full grid.

    ``local_defects`` holds, for dyadic block lengths ``L = 2, 4, ...`` up to
    ``max_fraction`` of the interval, one row per block [t, s] with
    ``|Z_{t,s} - Y_t X_{t,s} - Y'_t XX_{t,s}|`` and ``rho([t, s])``.
    """
    _same_reference(cp, rp)
    check_exponents(cp.p, cp.q)
    d = rp.dim
    y, yp = _integrand_arrays(cp, d)
    i, j = rp.base.interval_indices(interval)
    vals = rp.base.values
    terms = compensated_terms(y[i:j], yp[i:j], np.diff(vals[i:j + 1], axis=0),
                              rp.second_level[i:j])
    k = y.shape[1]
    z = np.zeros((len(rp), k))
    z[i + 1:j + 1] = np.cumsum(terms, axis=0)
    rows = _defects(y, yp, rp, z, i, j, max_fraction) if diagnostics else []
    times = rp.times[i:j + 1]
    value = DiscretePath(times, z[i:j + 1])
    sub_rp = rp if (i, j) == (0, len(rp) - 1) else rp.restrict(i, j)
    zc = ControlledPath(value, DiscretePath(times, y[i:j + 1]), sub_rp, cp.p, cp.q)
    return IntegralResult(value, rows, zc)


def sewing_slope(result: IntegralResult) -> float:
    """Least-squares slope of log mean defect against log mean rho per level."""
    levels = {}
    for row in result.local_defects:
        levels.setdefault(row["level"], []).append((row["defect"], row["rho"]))
    xs, ys = [], []
    for L in sorted(levels):
        dfs, rhos = zip(*levels[L])
        md, mr = float(np.mean(dfs)), float(np.mean(rhos))
        if md > 0 and mr > 0:
            xs.append(math.log(mr))
            ys.append(math.log(md))
    if len(xs) < 2:
        return math.nan
    return float(np.polyfit(xs, ys, 1)[0])


def functional_integrand(F: PathFunctional, rp: RoughPath) -> ControlledPath:
    """The controlled pair (F(., X), nabla_x F(., X)) along the driver."""
    if F.vertical is None:
        raise CapabilityError(f"{F.name} has no vertical derivative")
    d = rp.dim
    y = F.along(rp.base)
    yp = F.vertical_along(rp.base)
    n = len(rp)
    if y.shape[1:] == (1,) and d == 1:
        y = y.reshape(n, 1, 1)
        yp = yp.reshape(n, 1, 1, 1)
    elif y.shape[1:] == (d,):
        y = y.reshape(n, 1, d)
        yp = yp.reshape(n, 1, d, d)
    if y.ndim != 3 or y.shape[2] != d:
        raise DomainError(f"functional output {F.out_shape} cannot be integrated against "
                          f"a {d}-dimensional driver")
    return ControlledPath(DiscretePath(rp.times, y), DiscretePath(rp.times, yp), rp,
                          rp.p_exponent, q_p(rp.p_exponent))


def integrate_functional(F: PathFunctional, rp: RoughPath, interval=None,
                         diagnostics: bool = True) -> IntegralResult:
    """int F(s, X) dX(s) for a vertically differentiable functional F.

    ``estimate_terms`` records ``||X||_p ||R^F||_{q_p}`` and
    ``||nabla_x F(., X)||_p ||XX||_{p/2}`` over the interval.
    """
    check_functional_p(rp.p_exponent)
    cp = functional_integrand(F, rp)
    res = rough_integrate(cp, rp, interval, diagnostics=diagnostics)
    terms = {}
    if diagnostics:
        p = rp.p_exponent
        sub = res.as_controlled.reference
        i, j = rp.base.interval_indices(interval)
        cps = cp if (i, j) == (0, len(rp) - 1) else cp.restrict(i, j)
        xp = p_variation_exact(sub.base, p)
        rem = p_variation_from_matrix(cps.remainder_table(), q_p(p))
        grad = p_variation_exact(cps.y_prime, p)
        xx = p_variation_from_matrix(sub.second_level_norms(), p / 2.0)
        terms = {"x_p_times_remainder_q": xp * rem, "grad_p_times_xx_p2": grad * xx}
    return IntegralResult(res.value, res.local_defects, res.as_controlled, terms)


def compose_controlled(F: PathFunctional, cp: ControlledPath) -> ControlledPath:
    """(F(., Y), nabla_x F(., Y) Y') on the reference of ``cp``."""
    if F.vertical is None:
        raise CapabilityError(f"{F.name} has no vertical derivative")
    val = F.along(cp.y)
    grad = F.vertical_along(cp.y)
    n = len(cp)
    k = cp.y.dimension
    yp = cp.y_prime.values.reshape(n, k, cp.reference.dim)
    grad = grad.reshape((n,) + F.out_shape + (k,))
    xi_p = np.einsum("n...m,nmc->n...c", grad, yp)
    return ControlledPath(DiscretePath(cp.times, val), DiscretePath(cp.times, xi_p),
                          cp.reference, cp.p, cp.q)
