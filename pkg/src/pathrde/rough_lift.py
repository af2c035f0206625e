"""Level-2 rough paths over grid paths.

The second level is stored on consecutive grid intervals only; the value on
any grid interval is rebuilt by Chen chaining

    XX[t, s] = XX[t, u] + XX[u, s] + X[t, u] (x) X[u, s].

Alongside the blocks a rough path carries ``anchored[k] = XX[0, t_k]``,
accumulated once at construction.  It is an independent record against which
:func:`chen_defect` can detect blocks that were edited after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, PathFormatError
from .path_core import DiscretePath, p_variation_from_matrix

SQRT2_PLUS_1 = 1.0 + np.sqrt(2.0)


def _chain_terms(values: np.ndarray, blocks: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Per-interval Chen terms XX_k + X[start, k] (x) dX_k for k in [start, stop)."""
    dx = values[start + 1:stop + 1] - values[start:stop]
    lead = values[start:stop] - values[start]
    return blocks[start:stop] + lead[:, :, None] * dx[:, None, :]


def _accumulate(values: np.ndarray, blocks: np.ndarray, start: int = 0) -> np.ndarray:
    """XX[start, t_k] for every k >= start, by left-to-right chaining."""
    n, d = values.shape
    out = np.zeros((n - start, d, d))
    if n - start > 1:
        out[1:] = np.cumsum(_chain_terms(values, blocks, start, n - 1), axis=0)
    return out


@dataclass(frozen=True, eq=False)
class RoughPath:
    """Pair (X, XX) on a grid with Chen-consistent second level."""

    base: DiscretePath
    second_level: np.ndarray
    p_exponent: float
    anchored: np.ndarray | None = None

    def __post_init__(self):
        if len(self.base.shape) != 1:
            raise DomainError("rough path base must be vector valued")
        if not 2.0 <= self.p_exponent < 3.0:
            raise DomainError(f"p must lie in [2, 3), got {self.p_exponent}")
        n, d = len(self.base), self.base.dimension
        blocks = np.asarray(self.second_level, dtype=float).reshape(max(n - 1, 0), d, d)
        object.__setattr__(self, "second_level", blocks)
        if self.anchored is None:
            anchored = _accumulate(self.base.values, blocks)
        else:
            anchored = np.asarray(self.anchored, dtype=float).reshape(n, d, d)
        object.__setattr__(self, "anchored", anchored)

    @property
    def times(self) -> np.ndarray:
        return self.base.times

    @property
    def dim(self) -> int:
        return self.base.dimension

    def __len__(self):
        return len(self.base)

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.base.values[j] - self.base.values[i]

    def area(self, i: int, j: int) -> np.ndarray:
        """Second level over grid indices [i, j] by Chen chaining of blocks."""
        if j <= i:
            return np.zeros((self.dim, self.dim))
        terms = _chain_terms(self.base.values, self.second_level, i, j)
        return np.cumsum(terms, axis=0)[-1]

    def areas_from(self, i: int) -> np.ndarray:
        """XX[t_i, t_k] for all k >= i (shape ``(n - i, d, d)``)."""
        return _accumulate(self.base.values, self.second_level, i)

    def restrict(self, i: int, j: int) -> "RoughPath":
        return RoughPath(self.base.slice(i, j), self.second_level[i:j], self.p_exponent)

    def second_level_norms(self) -> np.ndarray:
        """|XX[t_i, t_j]| (Frobenius) for every grid pair i <= j.

        All starting points are chained simultaneously, so the cost is
        O(n^2 d^2) time and O(n^2 + n d^2) memory.
        """
        vals = self.base.values
        n, d = vals.shape
        table = np.zeros((n, n))
        state = np.zeros((n, d, d))
        for k in range(n - 1):
            dx = vals[k + 1] - vals[k]
            lead = vals[k] - vals[:k + 1]
            state[:k + 1] += self.second_level[k] + lead[:, :, None] * dx[None, None, :]
            table[:k + 1, k + 1] = np.sqrt(np.sum(state[:k + 1] ** 2, axis=(1, 2)))
        return table

    def second_level_variation(self, interval=None) -> float:
        """||XX||_{p/2} over ``interval`` (two-parameter p/2-variation)."""
        i, j = self.base.interval_indices(interval)
        sub = self.restrict(i, j) if (i, j) != (0, len(self) - 1) else self
        return p_variation_from_matrix(sub.second_level_norms(), self.p_exponent / 2.0)

    def to_json(self) -> dict:
        n, d = len(self), self.dim
        return {
            "base": self.base.to_json(),
            "second_level": self.second_level.reshape(n - 1, d * d).tolist(),
            "p_exponent": float(self.p_exponent),
            "anchored": self.anchored.reshape(n, d * d).tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "RoughPath":
        try:
            base = DiscretePath.from_json(data["base"])
            blocks = np.asarray(data["second_level"], dtype=float)
            anchored = data.get("anchored")
            return cls(base, blocks, float(data["p_exponent"]),
                       None if anchored is None else np.asarray(anchored, dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise PathFormatError(f"malformed rough path JSON: {exc}") from exc


def chen_extend(rp: RoughPath, t: float, s: float) -> np.ndarray:
    """XX[t, s] for grid times t <= s."""
    i, j = rp.base.interval_indices((t, s))
    return rp.area(i, j)


def _sample_indices(n: int, max_points: int) -> np.ndarray:
    if n <= max_points:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_points).round().astype(int))


def chen_defect(rp: RoughPath, max_points: int = 64) -> float:
    """Largest violation of Chen's relation over grid triples t <= u <= s.

    Legs starting at time 0 are read from the stored ``anchored`` channel;
    every other leg is chained from the interval blocks.  All triples are
    checked when the grid has at most ``max_points`` points; otherwise the
    triples use an evenly spaced index sample, and the consecutive triples
    (0, t_k, t_{k+1}) are always checked in full.
    """
    n = len(rp)
    if n < 2:
        return 0.0
    vals = rp.base.values
    anchored = rp.anchored
    worst = 0.0

    # (0, t_k, t_{k+1}) for every k: anchored recursion against the blocks.
    dx = vals[1:] - vals[:-1]
    lead = vals[:-1] - vals[0]
    rec = anchored[:-1] + rp.second_level + lead[:, :, None] * dx[:, None, :] - anchored[1:]
    worst = max(worst, float(np.max(np.sqrt(np.sum(rec ** 2, axis=(1, 2))))))

    idx = _sample_indices(n, max_points)
    chained = {int(a): rp.areas_from(int(a)) for a in idx}

    def leg(a, b, use_anchor):
        if use_anchor and a == 0:
            return anchored[b]
        return chained[a][b - a]

    for ti in idx:
        for ui in idx[idx >= ti]:
            svals = idx[idx >= ui]
            first = leg(ti, ui, True)
            middle = chained[int(ui)][svals - ui]
            whole = np.stack([leg(ti, int(s), True) for s in svals])
            cross = (vals[ui] - vals[ti])[None, :, None] * (vals[svals] - vals[ui])[:, None, :]
            diff = first[None] + middle + cross - whole
            worst = max(worst, float(np.max(np.sqrt(np.sum(diff ** 2, axis=(1, 2))))))
    return worst


def symmetric_defect(rp: RoughPath) -> float:
    """max_k |Sym(XX_k) - dX_k (x) dX_k / 2|: zero for geometric lifts."""
    if len(rp) < 2:
        return 0.0
    dx = np.diff(rp.base.values, axis=0)
    sym = 0.5 * (rp.second_level + np.swapaxes(rp.second_level, 1, 2))
    diff = sym - 0.5 * dx[:, :, None] * dx[:, None, :]
    return float(np.max(np.abs(diff)))


def levy_area(rp: RoughPath, i: int = 0, j: int | None = None) -> np.ndarray:
    """Antisymmetric part of XX over grid indices [i, j]."""
    j = len(rp) - 1 if j is None else j
    a = rp.area(i, j)
    return 0.5 * (a - a.T)


def _check_lift_p(p: float) -> None:
    if not 2.0 <= p < 3.0:
        raise DomainError(f"p must lie in [2, 3), got {p}")


def smooth_lift(path: DiscretePath, p: float) -> RoughPath:
    """Canonical geometric lift of the piecewise-linear interpolant.

    On each grid interval the iterated integral of a straight segment is
    ``dX (x) dX / 2``.
    """
    _check_lift_p(p)
    if len(path.shape) != 1:
        raise DomainError("smooth_lift needs a vector valued path")
    dx = np.diff(path.values, axis=0)
    return RoughPath(path, 0.5 * dx[:, :, None] * dx[:, None, :], p)


def brownian_lift(seed: int, n: int, T: float = 1.0, d: int = 1, p: float = 2.1,
                  refinement: int = 16) -> RoughPath:
    """Brownian rough path with the Stratonovich (geometric) second level.

    Sampling is fully determined by the arguments:

    * uniforms come from ``numpy.random.Philox`` keyed by ``seed``
      (Philox4x64-10, counter based), drawn as ``Generator.random`` doubles
      ``k * 2**-53`` and shifted by ``2**-54`` into the open unit interval;
    * Gaussians are ``ndtri(u)`` (inverse normal CDF);
    * a fine grid with ``(n - 1) * refinement`` steps of size
      ``T / ((n - 1) * refinement)`` carries the Brownian increments, laid
      out row-major as (fine step, coordinate);
    * each coarse block is the second level of the piecewise-linear fine
      path over that interval, chained by Chen, then symmetrised exactly as
      ``dX (x) dX / 2 + A`` with ``A`` its antisymmetric (Levy area) part.
    """
    if n < 2:
        raise DomainError(f"need n >= 2 grid points, got {n}")
    if not 2.0 < p < 3.0:
        raise DomainError(f"Brownian lift needs p in (2, 3), got {p}")
    if refinement < 1 or d < 1 or T <= 0:
        raise DomainError("refinement, d and T must be positive")
    steps = (n - 1) * refinement
    dt = T / steps
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random((steps, d)) + 2.0 ** -54
    inc = ndtri(u) * np.sqrt(dt)

    fine = inc.reshape(n - 1, refinement, d)
    pre = np.cumsum(fine, axis=1) - fine
    m = np.einsum("kri,krj->kij", pre, fine) + 0.5 * np.einsum("kri,krj->kij", fine, fine)
    anti = 0.5 * (m - np.swapaxes(m, 1, 2))

    coarse = np.zeros((n, d))
    coarse[1:] = np.cumsum(inc, axis=0)[refinement - 1::refinement]
    dx = np.diff(coarse, axis=0)
    blocks = 0.5 * dx[:, :, None] * dx[:, None, :] + anti
    times = np.linspace(0.0, T, n)
    return RoughPath(DiscretePath(times, coarse), blocks, p)


def refine(rp: RoughPath, factor: int) -> RoughPath:
    """Subdivide every grid interval into ``factor`` equal steps.

    X is interpolated linearly and the block's antisymmetric part is spread
    evenly over the sub-steps, so chaining the new blocks over an old
    interval returns the old block exactly (up to rounding).
    """
    if factor < 1:
        raise DomainError("refinement factor must be >= 1")
    if factor == 1:
        return rp
    times, vals = rp.times, rp.base.values
    n, d = vals.shape
    frac = np.arange(factor) / factor
    new_t = (times[:-1, None] + frac[None, :] * np.diff(times)[:, None]).ravel()
    new_t = np.append(new_t, times[-1])
    dx = np.diff(vals, axis=0)
    new_x = (vals[:-1, None, :] + frac[None, :, None] * dx[:, None, :]).reshape(-1, d)
    new_x = np.vstack([new_x, vals[-1]])
    anti = 0.5 * (rp.second_level - np.swapaxes(rp.second_level, 1, 2)) / factor
    sub = np.diff(new_x, axis=0)
    blocks = 0.5 * sub[:, :, None] * sub[:, None, :] + np.repeat(anti, factor, axis=0)
    return RoughPath(DiscretePath(new_t, new_x), blocks, rp.p_exponent)
