"""Grid paths, p-variation norms and superadditive interval functions.

A :class:`DiscretePath` is a continuous path known on a finite grid and
linearly interpolated in between.  Every supremum over partitions is taken
over sub-partitions of grid points, which makes all norms here exactly
computable: for a piecewise-linear path and ``p >= 1`` the p-variation is
attained on partitions made of knots.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from itertools import repeat
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridAlignmentError, PathFormatError

GRID_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Path sampled on a strictly increasing grid.

    ``values`` has shape ``(n, *shape)``; vector paths use ``shape = (d,)``
    and matrix-valued paths (Gubinelli derivatives) keep their matrix shape.
    Norms always use the Euclidean (Frobenius) norm of the flattened value.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size < 1:
            raise DomainError("times must be a non-empty 1-D array")
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape[0] != times.size:
            raise DomainError(
                f"{times.size} time stamps but {values.shape[0]} values")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(values)):
            raise DomainError("path contains non-finite entries")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise DomainError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def _trusted(cls, times, values):
        # Skips validation; callers guarantee float arrays on a valid grid.
        obj = object.__new__(cls)
        object.__setattr__(obj, "times", times)
        object.__setattr__(obj, "values", values)
        return obj

    def __len__(self):
        return self.times.size

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def dimension(self) -> int:
        return int(np.prod(self.shape))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(len(self), -1)

    def index_of(self, t: float) -> int:
        """Grid index of ``t``; raises :class:`GridAlignmentError` off-grid."""
        k = int(np.searchsorted(self.times, t))
        scale = GRID_RTOL * max(1.0, abs(float(self.times[-1])))
        for cand in (k - 1, k):
            if 0 <= cand < len(self) and abs(self.times[cand] - t) <= scale:
                return cand
        raise GridAlignmentError(f"t={t!r} is not a grid time")

    def interval_indices(self, interval=None) -> tuple[int, int]:
        if interval is None:
            return 0, len(self) - 1
        t, s = interval
        i, j = self.index_of(t), self.index_of(s)
        if i > j:
            raise DomainError(f"empty interval [{t}, {s}]")
        return i, j

    def __call__(self, t):
        """Linear interpolation; constant extension outside the grid."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        flat = self.flat
        out = np.empty((t_arr.size, flat.shape[1]))
        for c in range(flat.shape[1]):
            out[:, c] = np.interp(t_arr, self.times, flat[:, c])
        out = out.reshape((t_arr.size,) + self.shape)
        return out[0] if np.ndim(t) == 0 else out

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.values[j] - self.values[i]

    def sup_norm(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.flat ** 2, axis=1))))

    def slice(self, i: int, j: int) -> "DiscretePath":
        """Sub-path on grid indices ``i..j`` inclusive."""
        return DiscretePath._trusted(self.times[i:j + 1], self.values[i:j + 1])

    def with_values(self, values) -> "DiscretePath":
        return DiscretePath(self.times, values)

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        return {
            "times": [float(t) for t in self.times],
            "values": self.values.tolist(),
            "dimension": self.dimension,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DiscretePath":
        try:
            path = cls(np.asarray(data["times"], dtype=float),
                       np.asarray(data["values"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise PathFormatError(f"malformed path JSON: {exc}") from exc
        if "dimension" in data and int(data["dimension"]) != path.dimension:
            raise PathFormatError("declared dimension does not match values")
        return path

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        cols = ["t"] + [f"x_{c + 1}" for c in range(self.dimension)]
        buf.write(",".join(cols) + "\n")
        for t, row in zip(self.times, self.flat):
            buf.write(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscretePath":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines:
            raise PathFormatError("empty CSV")
        rows = list(csv.reader(lines))
        header = [h.strip() for h in rows[0]]
        if not header or header[0] != "t" or len(header) < 2:
            raise PathFormatError(f"bad CSV header {rows[0]!r}; expected t,x_1,...")
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        except ValueError as exc:
            raise PathFormatError(f"non-numeric CSV entry: {exc}") from exc
        if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != len(header):
            raise PathFormatError("ragged or empty CSV body")
        try:
            return cls(data[:, 0], data[:, 1:])
        except DomainError as exc:
            raise PathFormatError(str(exc)) from exc


# -- p-variation ---------------------------------------------------------

def _check_p(p: float) -> None:
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")


def _pow(values: np.ndarray, p: float) -> np.ndarray:
    """Elementwise values**p through the C library pow.

    numpy's vectorised power may use SIMD kernels that are not correctly
    rounded, so results would change with the CPU and stop matching plain
    Python arithmetic bit for bit.
    """
    values = np.asarray(values, dtype=float)
    out = np.fromiter(map(math.pow, values.ravel().tolist(), repeat(p, values.size)),
                      dtype=float, count=values.size)
    return out.reshape(values.shape)


def _power_sum_row(flat: np.ndarray, p: float) -> np.ndarray:
    """best[k] = max over partitions of indices 0..k of sum |increment|^p."""
    m = flat.shape[0]
    best = np.zeros(m)
    for k in range(1, m):
        diff = flat[:k] - flat[k]
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        best[k] = np.max(best[:k] + _pow(dist, p))
    return best


def p_variation_exact(path: DiscretePath, p: float, interval=None) -> float:
    """Exact p-variation over the grid points of ``interval`` by O(n^2) DP."""
    _check_p(p)
    i, j = path.interval_indices(interval)
    if i == j:
        return 0.0
    best = _power_sum_row(path.flat[i:j + 1], p)
    return float(best[-1]) ** (1.0 / p)


def p_variation_greedy(path: DiscretePath, p: float, interval=None) -> float:
    """Fast lower bound on the p-variation.

    Starts from the full grid partition and greedily deletes the interior
    point whose removal increases the sum the most, until no deletion helps.
    The result is the power sum of an actual partition, so it never exceeds
    :func:`p_variation_exact`.
    """
    _check_p(p)
    i, j = path.interval_indices(interval)
    pts = path.flat[i:j + 1]
    m = pts.shape[0]
    if m < 2:
        return 0.0

    def cost(a, b):
        diff = pts[b] - pts[a]
        return float(np.sqrt(np.sum(diff * diff))) ** p

    prev = list(range(-1, m - 1))
    nxt = list(range(1, m + 1))
    version = [0] * m
    heap = []

    def gain(k):
        a, b = prev[k], nxt[k]
        return cost(a, b) - cost(a, k) - cost(k, b)

    for k in range(1, m - 1):
        heapq.heappush(heap, (-gain(k), k, 0))
    alive = [True] * m
    while heap:
        neg, k, ver = heapq.heappop(heap)
        if not alive[k] or ver != version[k]:
            continue
        if -neg <= 0:
            break
        alive[k] = False
        a, b = prev[k], nxt[k]
        nxt[a], prev[b] = b, a
        for nb in (a, b):
            if 0 < nb < m - 1:
                version[nb] += 1
                heapq.heappush(heap, (-gain(nb), nb, version[nb]))
    total = 0.0
    k = 0
    while k < m - 1:
        total += cost(k, nxt[k])
        k = nxt[k]
    return total ** (1.0 / p)


def pairwise_distances(flat: np.ndarray) -> np.ndarray:
    """Matrix of Euclidean distances between all pairs of rows."""
    m = flat.shape[0]
    sq = np.zeros((m, m))
    for c in range(flat.shape[1]):
        col = flat[:, c]
        diff = col[None, :] - col[:, None]
        sq += diff * diff
    return np.sqrt(sq)


def p_variation_from_matrix(dist: np.ndarray, p: float) -> float:
    """p-variation of a two-parameter function given |R_{i,j}| for i < j.

    Uses the same DP as :func:`p_variation_exact`, with ``dist[j, k]`` as the
    cost of the partition interval from grid index j to k.
    """
    _check_p(p)
    m = dist.shape[0]
    if m < 2:
        return 0.0
    dp = _pow(dist, p)
    best = np.zeros(m)
    for k in range(1, m):
        best[k] = np.max(best[:k] + dp[:k, k])
    return float(best[-1]) ** (1.0 / p)


def variation_table(dist: np.ndarray, p: float) -> np.ndarray:
    """All-pairs power sums V[i, k] = sup_partitions sum dist^p over [i, k].

    Entries below the diagonal are zero and carry no meaning.
    """
    _check_p(p)
    m = dist.shape[0]
    dp = _pow(dist, p)
    table = np.full((m, m), -np.inf)
    np.fill_diagonal(table, 0.0)
    for k in range(1, m):
        table[:k, k] = np.max(table[:k, :k] + dp[:k, k], axis=1)
    return np.where(np.isfinite(table), table, 0.0)


# -- interval controls ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class IntervalControl:
    """Nonnegative function of grid intervals, tabulated as ``table[i, j]``."""

    times: np.ndarray
    table: np.ndarray
    name: str = "omega"

    def at(self, i: int, j: int) -> float:
        return float(self.table[i, j]) if i <= j else 0.0

    def __call__(self, t: float, s: float) -> float:
        grid = DiscretePath._trusted(self.times, np.zeros((self.times.size, 1)))
        return self.at(grid.index_of(t), grid.index_of(s))

    def restrict(self, i: int, j: int) -> "IntervalControl":
        return IntervalControl(self.times[i:j + 1], self.table[i:j + 1, i:j + 1], self.name)

    def superadditivity_gap(self) -> float:
        """max over grid triples t <= u <= s of w[t,u] + w[u,s] - w[t,s]."""
        table = self.table
        worst = -np.inf
        for u in range(table.shape[0]):
            lhs = table[:u + 1, u][:, None] + table[u, u:][None, :]
            worst = max(worst, float(np.max(lhs - table[:u + 1, u:])))
        return worst

    def is_superadditive(self, tol: float = 1e-12) -> bool:
        return self.superadditivity_gap() <= tol


def vp_control(path: DiscretePath, p: float) -> IntervalControl:
    """The control w([t, s]) = ||X||_{p,[t,s]}^p on every pair of grid points."""
    _check_p(p)
    return IntervalControl(path.times, variation_table(pairwise_distances(path.flat), p),
                           name=f"V_{p:g}")


# -- piecewise-linear approximation -------------------------------------

def piecewise_linear_approx(path: DiscretePath, N: int, interval=None,
                            p: float = 2.0) -> DiscretePath:
    """Approximation X^N: equal to X on [0, t], piecewise linear on [t, s].

    The N segments on ``[t, s]`` have knots at the grid points where
    ``V_p(X; t, .)`` first reaches ``r / N`` of its total, ``r = 1..N-1``.
    When the path is constant on ``[t, s]`` the knots are spaced evenly in
    time instead, and when N is at least the number of grid segments in
    ``[t, s]`` the path is returned unchanged.  Coinciding knots are merged, so at most N segments result.
    The returned path lives on the grid points of ``[0, s]``.
    """
    if int(N) != N or N <= 1:
        raise DomainError(f"N must be an integer > 1, got {N}")
    _check_p(p)
    i, j = path.interval_indices(interval)
    times = path.times[:j + 1]
    values = path.values[:j + 1].copy()
    if j - i < 2 or N >= j - i:
        # The grid path already has at most N linear pieces on [t, s].
        return DiscretePath(times, values)
    omega = _power_sum_row(path.flat[i:j + 1], p)
    total = omega[-1]
    fractions = np.arange(1, N) / N
    if total > 0:
        inner = np.searchsorted(omega, fractions * total, side="left") + i
    else:
        targets = times[i] + fractions * (times[j] - times[i])
        inner = np.searchsorted(times, targets, side="left")
    knots = np.unique(np.concatenate(([i], np.clip(inner, i, j), [j])))
    flat = values.reshape(j + 1, -1)
    seg = times[i:j + 1]
    for c in range(flat.shape[1]):
        flat[i:j + 1, c] = np.interp(seg, times[knots], flat[knots, c])
    return DiscretePath(times, flat.reshape(values.shape))


def approximation_ratios(path: DiscretePath, approx: DiscretePath, N: int,
                         p: float, interval=None) -> dict:
    """Measured quantities behind the four piecewise-linear approximation bounds.

    Ratios ``sup_error_ratio`` and ``variation_ratio`` are the implied constants
    ``C`` in ``||X - X^N||_inf <= C N^{-1/p} ||X||_p`` and
    ``V_1(X^N) <= C N^{1-1/p} ||X||_p``.
    """
    i, j = path.interval_indices(interval)
    nu = 1.0 / p
    x = path.slice(0, j)
    sup_x = x.sup_norm()
    sup_xn = approx.sup_norm()
    var_x = p_variation_exact(path, p, (path.times[i], path.times[j]))
    var_xn = p_variation_exact(approx, p, (path.times[i], path.times[j]))
    err = float(np.max(np.sqrt(np.sum((x.flat - approx.flat) ** 2, axis=1))))
    steps = np.diff(approx.flat[i:j + 1], axis=0)
    v1 = float(np.sum(np.sqrt(np.sum(steps ** 2, axis=1))))
    denom = var_x if var_x > 0 else math.inf
    return {
        "sup_norm_x": sup_x,
        "sup_norm_approx": sup_xn,
        "pvar_x": var_x,
        "pvar_approx": var_xn,
        "sup_error": err,
        "one_variation": v1,
        "sup_error_ratio": err / (N ** -nu * denom),
        "variation_ratio": v1 / (N ** (1 - nu) * denom),
    }
