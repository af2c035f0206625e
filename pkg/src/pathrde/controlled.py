"""Controlled paths (Y, Y') over a rough path and the norms built on them.

Shape convention: if ``Y`` takes values of shape ``S`` then ``Y'`` takes
values of shape ``S + (d,)`` and acts on increments of the d-dimensional
driver by contracting its last axis, ``(Y'_t X_{t,s})[a] = sum_i Y'_t[a, i] X^i_{t,s}``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PathFormatError, ReferenceMismatchError
from .path_core import (DiscretePath, IntervalControl, p_variation_exact,
                        p_variation_from_matrix, pairwise_distances, variation_table)
from .rough_lift import SQRT2_PLUS_1, RoughPath


def q_p(p: float) -> float:
    """Remainder exponent p^2 / (p + 1) certified for functional lifts."""
    return p * p / (p + 1.0)


def kappa_beta(p: float, r: float | None = None) -> tuple[float, float]:
    """Exponents (1/r, 1/q_r) of the seminorm used to size solver windows.

    ``r`` must lie strictly between ``p`` and ``sqrt(2) + 1``; the default is
    the midpoint of that range.
    """
    if r is None:
        r = 0.5 * (p + SQRT2_PLUS_1)
    if not p < r < SQRT2_PLUS_1:
        raise DomainError(f"need p < r < sqrt(2)+1, got p={p}, r={r}")
    return 1.0 / r, 1.0 / q_p(r)


def reference_id(rp: RoughPath) -> str:
    """Stable fingerprint of a rough path (SHA-256 over its raw arrays)."""
    h = hashlib.sha256()
    for arr in (rp.times, rp.base.values, rp.second_level):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    h.update(repr(float(rp.p_exponent)).encode())
    return h.hexdigest()[:16]


def _norms(a: np.ndarray) -> np.ndarray:
    """Frobenius norm of each leading-axis slice."""
    flat = a.reshape(a.shape[0], -1)
    return np.sqrt(np.sum(flat * flat, axis=1))


@dataclass(frozen=True, eq=False)
class ControlledPath:
    """Pair (Y, Y') controlled by ``reference`` with exponents (p, q)."""

    y: DiscretePath
    y_prime: DiscretePath
    reference: RoughPath
    p: float | None = None
    q: float | None = None

    def __post_init__(self):
        if self.p is None:
            object.__setattr__(self, "p", float(self.reference.p_exponent))
        if self.q is None:
            object.__setattr__(self, "q", q_p(self.p))
        times = self.reference.times
        if (len(self.y) != len(times) or len(self.y_prime) != len(times)
                or not np.array_equal(self.y.times, times)
                or not np.array_equal(self.y_prime.times, times)):
            raise ReferenceMismatchError("Y, Y' and the reference must share one grid")
        want = self.y.shape + (self.reference.dim,)
        if self.y_prime.shape != want:
            raise DomainError(f"Y' must have value shape {want}, got {self.y_prime.shape}")
        if self.q <= 0:
            raise DomainError("q must be positive")

    @classmethod
    def from_arrays(cls, y, y_prime, reference: RoughPath, p=None, q=None) -> "ControlledPath":
        times = reference.times
        n = times.size
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y.reshape(n, 1)
        y_prime = np.asarray(y_prime, dtype=float).reshape(y.shape + (reference.dim,))
        return cls(DiscretePath(times, y), DiscretePath(times, y_prime), reference, p, q)

    @property
    def times(self) -> np.ndarray:
        return self.reference.times

    def __len__(self):
        return len(self.y)

    def remainder_at(self, i: int, j: int) -> np.ndarray:
        return self.y.values[j] - self.y.values[i] - self.y_prime.values[i] @ (
            self.reference.base.values[j] - self.reference.base.values[i])

    def remainder_row(self, i: int) -> np.ndarray:
        """R_{t_i, t_j} for every j >= i, shape ``(n - i, *S)``."""
        yv, dv = self.y.values, self.reference.base.values
        dx = dv[i:] - dv[i]
        return (yv[i:] - yv[i]) - np.einsum("...i,ni->n...", self.y_prime.values[i], dx)

    def remainder_table(self) -> np.ndarray:
        """|R_{t_i, t_j}| for all i <= j (zeros below the diagonal)."""
        n = len(self)
        out = np.zeros((n, n))
        for i in range(n - 1):
            out[i, i:] = _norms(self.remainder_row(i))
        return out

    def scaled(self, lam: float) -> "ControlledPath":
        return ControlledPath(self.y.with_values(lam * self.y.values),
                              self.y_prime.with_values(lam * self.y_prime.values),
                              self.reference, self.p, self.q)

    def restrict(self, i: int, j: int) -> "ControlledPath":
        return ControlledPath(self.y.slice(i, j), self.y_prime.slice(i, j),
                              self.reference.restrict(i, j), self.p, self.q)

    def to_json(self) -> dict:
        return {
            "y": self.y.to_json(),
            "y_prime": {"times": self.y_prime.times.tolist(),
                        "values": self.y_prime.values.tolist(),
                        "shape": list(self.y_prime.shape)},
            "p": float(self.p),
            "q": float(self.q),
            "reference_id": reference_id(self.reference),
        }

    @classmethod
    def from_json(cls, data: dict, reference: RoughPath) -> "ControlledPath":
        try:
            if data["reference_id"] != reference_id(reference):
                raise ReferenceMismatchError("JSON was produced against a different rough path")
            y = DiscretePath.from_json(data["y"])
            yp = data["y_prime"]
            yp_vals = np.asarray(yp["values"], dtype=float).reshape(
                [len(yp["times"])] + list(yp["shape"]))
            return cls(y, DiscretePath(yp["times"], yp_vals), reference,
                       float(data["p"]), float(data["q"]))
        except (KeyError, TypeError) as exc:
            raise PathFormatError(f"malformed controlled path JSON: {exc}") from exc


def remainder(cp: ControlledPath, t: float, s: float) -> np.ndarray:
    """R^Y_{t,s} = Y_{t,s} - Y'_t X_{t,s} at grid times t <= s."""
    i, j = cp.y.interval_indices((t, s))
    return cp.remainder_at(i, j)


@dataclass(frozen=True)
class ControlledNorm:
    initial: float
    gubinelli_var: float
    remainder_var: float
    total: float


def controlled_norm(cp: ControlledPath, interval=None) -> ControlledNorm:
    """|Y_0| + |Y'_0| + ||Y'||_p + ||R^Y||_q over ``interval`` (default: all)."""
    i, j = cp.y.interval_indices(interval)
    sub = cp if (i, j) == (0, len(cp) - 1) else cp.restrict(i, j)
    init = float(np.linalg.norm(sub.y.values[0]) + np.linalg.norm(sub.y_prime.values[0]))
    gub = p_variation_exact(sub.y_prime, sub.p)
    rem = p_variation_from_matrix(sub.remainder_table(), sub.q)
    return ControlledNorm(init, gub, rem, init + gub + rem)


def rho_control(rp: RoughPath) -> IntervalControl:
    """rho([t,s]) = |s - t| + ||X||_{p,[t,s]}^p + ||XX||_{p/2,[t,s]}^{p/2}."""
    p = rp.p_exponent
    t = rp.times
    table = t[None, :] - t[:, None]
    table += variation_table(pairwise_distances(rp.base.flat), p)
    table += variation_table(rp.second_level_norms(), p / 2.0)
    table = np.triu(table)
    return IntervalControl(t, table, name="rho")


def rho_seminorm(increments: np.ndarray, control: IntervalControl, gamma: float) -> float:
    """sup over grid pairs i < j of increments[i, j] / rho[i, j]^gamma.

    Pairs where rho vanishes contribute 0 if the increment is zero and
    +inf otherwise.
    """
    n = increments.shape[0]
    iu = np.triu_indices(n, 1)
    w = increments[iu]
    r = control.table[iu]
    pos = r > 0
    if np.any(~pos & (w > 0)):
        return math.inf
    if not np.any(pos):
        return 0.0
    return float(np.max(w[pos] / np.power(r[pos], gamma)))


def path_rho_seminorm(path: DiscretePath, control: IntervalControl, gamma: float) -> float:
    """||W||_{gamma,rho} for a one-parameter path W (increments W_{t,s})."""
    return rho_seminorm(pairwise_distances(path.flat), control, gamma)


def holder_seminorm(cp: ControlledPath, control: IntervalControl, kappa: float,
                    beta: float) -> float:
    """||Y'||_{kappa,rho} + ||R^Y||_{beta,rho} over the whole grid."""
    if not (0 < kappa <= 1 and 0 < beta <= 1):
        raise DomainError("kappa and beta must lie in (0, 1]")
    if control.table.shape[0] != len(cp):
        raise ReferenceMismatchError("control and controlled path grids differ")
    return (path_rho_seminorm(cp.y_prime, control, kappa)
            + rho_seminorm(cp.remainder_table(), control, beta))


def interval_diagnostics(cp: ControlledPath, control: IntervalControl | None = None) -> list[dict]:
    """One row per consecutive grid interval: |Y'_{t,s}|, |R_{t,s}| and rho."""
    control = rho_control(cp.reference) if control is None else control
    t = cp.times
    dyp = _norms(np.diff(cp.y_prime.values, axis=0))
    rows = []
    for k in range(len(cp) - 1):
        rows.append({"t": float(t[k]), "s": float(t[k + 1]),
                     "gubinelli_increment": float(dyp[k]),
                     "remainder": float(np.linalg.norm(cp.remainder_at(k, k + 1))),
                     "rho": control.at(k, k + 1)})
    return rows
