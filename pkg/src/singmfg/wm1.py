"""Thick graphs, canonical WM1 parametrisations and a WM1 distance bound.

The distance is computed between the canonical parametrisations of two
paths.  Each canonical curve is resampled uniformly in arc length (metric
``max(|dy|_2, |dt|)``) with all of its vertices kept, so the sampled polyline
*is* the curve.  A monotone alignment of the two vertex sequences (discrete
Fréchet recursion) then describes a pair of non-decreasing reparametrisations,
and by convexity of the pointwise cost along linear pieces its bottleneck
value is attained at vertex pairs.  The returned number is therefore a
certified upper bound on ``d_WM1``; it overshoots the continuous optimum over
canonical curves by at most the largest sampled edge length.

A jump moving several components may be traversed along any monotone path
inside its box, and the straight segment of the canonical curve can be far
from the best one.  Refinement passes therefore re-route every such jump
along the points of the other curve matched to it by the optimal coupling,
clipped to the box and made monotone by the minimax isotonic fit.  Each pass
yields another pair of valid parametrisations, so the minimum over passes is
still an upper bound.  The refined value need not satisfy the triangle
inequality, just as the infimum over weak parametrisations need not.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import ParameterError
from .paths import CadlagPath, ParametrisedPath


@dataclass(frozen=True, eq=False)
class ThickGraph:
    """Component-wise interval boxes of a path, one per stamp.

    ``lower[k]`` / ``upper[k]`` bound the box at stamp ``times[k]``; away
    from jump stamps the box degenerates to the point ``y(t)``.
    """

    path: CadlagPath

    @property
    def times(self):
        return self.path.times

    @property
    def lower(self):
        return np.minimum(self.path.left, self.path.values)

    @property
    def upper(self):
        return np.maximum(self.path.left, self.path.values)

    def contains(self, z, s, tol=1e-12) -> bool:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if s < 0 or s > self.path.T:
            return False
        lo = np.minimum(self.path.evaluate(s, left=True), self.path.evaluate(s))
        hi = np.maximum(self.path.evaluate(s, left=True), self.path.evaluate(s))
        return bool(np.all(z >= lo - tol) and np.all(z <= hi + tol))

    def leq(self, a, b) -> bool:
        """Order relation on the graph: earlier time, or same time and no
        component further from the left limit."""
        (z1, s1), (z2, s2) = a, b
        if s1 != s2:
            return s1 < s2
        y_left = self.path.evaluate(s1, left=True)
        return bool(np.all(np.abs(y_left - np.asarray(z1)) <= np.abs(y_left - np.asarray(z2)) + 1e-12))


def thick_graph(x: CadlagPath) -> ThickGraph:
    return ThickGraph(x)


def thick_graph_membership(point, x: CadlagPath, tol=1e-12) -> bool:
    z, s = point
    return ThickGraph(x).contains(z, s, tol)


def canonical_parametrisation(x: CadlagPath) -> ParametrisedPath:
    """WM1 parametrisation at uniform speed in time, jumps traversed linearly.

    Parameter mass is split as ``T + sum_k |jump_k|_1``: continuity stretches
    get ``dt`` and each jump a plateau of length ``|jump|_1`` (both scaled by
    the total).
    """
    t, L, V = x.times, x.left, x.values
    sizes = np.sum(np.abs(V - L), axis=1)
    mass = x.T + float(np.sum(sizes))
    u, ys, rs = [], [], []
    acc = 0.0
    for k in range(len(t)):
        if k > 0:
            acc += t[k] - t[k - 1]
        if sizes[k] > 0 or k == 0:
            u.append(acc)
            ys.append(L[k])
            rs.append(t[k])
        if sizes[k] > 0:
            acc += sizes[k]
        if sizes[k] > 0 or k > 0:
            u.append(acc)
            ys.append(V[k])
            rs.append(t[k])
    u = np.array(u) / mass
    u[-1] = 1.0
    ys = np.array(ys).reshape(len(u), -1)
    rs = np.array(rs)
    rs[-1] = x.T
    if len(u) == 1:  # T = 0 and no jump cannot occur for a valid path, kept for safety
        u = np.array([0.0, 1.0])
        ys = np.vstack([ys, ys])
        rs = np.array([0.0, x.T])
    return ParametrisedPath(u, ys[:, : x.d], ys[:, x.d :], rs, x.T)


def _curve(p: ParametrisedPath):
    return np.hstack([p.xbar, p.xibar]), np.asarray(p.rbar)


def _resample(y, r, tags, resolution):
    """Vertices plus ``resolution + 1`` arc-length-uniform points; jump tag per sample."""
    seg = np.maximum(np.linalg.norm(np.diff(y, axis=0), axis=1), np.abs(np.diff(r)))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    grid = np.union1d(s, np.linspace(0.0, s[-1], resolution + 1))
    ys = np.column_stack([np.interp(grid, s, col) for col in y.T]) if y.shape[1] else np.zeros((len(grid), 0))
    rs = np.interp(grid, s, r)
    if tags is None:
        return ys, rs, None
    # a sample belongs to jump k when it lies on an edge joining two vertices of jump k
    e = np.clip(np.searchsorted(s, grid, side="right") - 1, 0, len(s) - 2)
    on = (tags[e] == tags[e + 1]) & (tags[e] >= 0)
    on |= (grid == s[-1]) & (tags[-1] >= 0) & (tags[-2] == tags[-1])
    return ys, rs, np.where(on, tags[e], -1)


def arclength_samples(p: ParametrisedPath, resolution: int):
    """Vertices of ``p`` plus ``resolution + 1`` arc-length-uniform points."""
    y, r = _curve(p)
    ys, rs, _ = _resample(y, r, None, resolution)
    return ys, rs


def _vertices(x: CadlagPath, routes):
    """Vertex sequence of the canonical curve with jump ``k`` routed through ``routes[k]``."""
    pts, rs, tags = [], [], []
    for k in range(len(x.times)):
        L, V, t = x.left[k], x.values[k], x.times[k]
        if np.any(L != V):
            mid = routes.get(k)
            seq = [L] + ([] if mid is None else list(mid)) + [V]
            pts += seq
            rs += [t] * len(seq)
            tags += [k] * len(seq)
        else:
            pts.append(V)
            rs.append(t)
            tags.append(-1)
    rs = np.array(rs)
    rs[-1] = x.T
    return np.array(pts).reshape(len(rs), -1), rs, np.array(tags)


def _multi_jumps(x: CadlagPath):
    moving = np.count_nonzero(x.values != x.left, axis=1)
    return [int(k) for k in np.flatnonzero(moving >= 2)]


def _monotone_fit(pts, lo, hi, up):
    """Minimax monotone fit per component of ``pts`` clipped to the box ``[lo, hi]``."""
    sgn = np.where(up, 1.0, -1.0)
    c = np.clip(pts, lo, hi) * sgn
    f = 0.5 * (np.maximum.accumulate(c, axis=0) + np.minimum.accumulate(c[::-1], axis=0)[::-1])
    return np.clip(f * sgn, lo, hi)


@numba.njit(cache=True, nogil=True)
def _pair_cost(A, ra, B, rb, i, j):
    acc = 0.0
    for c in range(A.shape[1]):
        dv = A[i, c] - B[j, c]
        acc += dv * dv
    return max(np.sqrt(acc), abs(ra[i] - rb[j]))


@numba.njit(cache=True, nogil=True)
def _discrete_frechet(A, ra, B, rb):
    n, m = A.shape[0], B.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    for i in range(n):
        for j in range(m):
            cost = _pair_cost(A, ra, B, rb, i, j)
            if i == 0 and j == 0:
                best = cost
            elif i == 0:
                best = max(cost, cur[j - 1])
            elif j == 0:
                best = max(cost, prev[0])
            else:
                best = max(cost, min(prev[j], min(cur[j - 1], prev[j - 1])))
            cur[j] = best
        prev, cur = cur, prev
    return prev[m - 1]


@numba.njit(cache=True, nogil=True)
def _frechet_coupling(A, ra, B, rb):
    """Discrete Fréchet value and one optimal coupling ``(I, J)``."""
    n, m = A.shape[0], B.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    move = np.empty((n, m), dtype=np.int8)  # 0 diagonal, 1 from i - 1, 2 from j - 1
    for i in range(n):
        for j in range(m):
            cost = _pair_cost(A, ra, B, rb, i, j)
            if i == 0 and j == 0:
                best, mv = cost, 0
            elif i == 0:
                best, mv = max(cost, cur[j - 1]), 2
            elif j == 0:
                best, mv = max(cost, prev[0]), 1
            else:
                a, b, c = prev[j - 1], prev[j], cur[j - 1]
                if a <= b and a <= c:
                    best, mv = max(cost, a), 0
                elif b <= c:
                    best, mv = max(cost, b), 1
                else:
                    best, mv = max(cost, c), 2
            cur[j] = best
            move[i, j] = mv
        prev, cur = cur, prev
    I = np.empty(n + m, dtype=np.int64)
    J = np.empty(n + m, dtype=np.int64)
    i, j, k = n - 1, m - 1, 0
    while True:
        I[k] = i
        J[k] = j
        k += 1
        if i == 0 and j == 0:
            break
        mv = move[i, j]
        if mv == 0:
            i -= 1
            j -= 1
        elif mv == 1:
            i -= 1
        else:
            j -= 1
    return prev[m - 1], I[:k][::-1], J[:k][::-1]


MAX_COUPLING_CELLS = 50_000_000


def _reroute(x: CadlagPath, tags, own, other):
    """Routes for the multi-component jumps of ``x`` from coupled samples of the other curve."""
    routes = {}
    for k in _multi_jumps(x):
        sel = tags[own] == k
        if not np.any(sel):
            continue
        L, V = x.left[k], x.values[k]
        routes[k] = _monotone_fit(other[sel], np.minimum(L, V), np.maximum(L, V), V >= L)
    return routes


def _ordered(y: CadlagPath, z: CadlagPath):
    ky = (y.times.tobytes(), y.values.tobytes(), y.left.tobytes())
    kz = (z.times.tobytes(), z.values.tobytes(), z.left.tobytes())
    return (y, z) if ky <= kz else (z, y)


def wm1_distance(y: CadlagPath, z: CadlagPath, resolution: int = 1024, refine: int = 2) -> float:
    """Upper bound on the WM1 distance between two paths on the same ``[0, T]``.

    ``refine`` coupling-guided re-routing passes are applied when a jump of
    either path moves two or more components and the coupling table fits
    into ``MAX_COUPLING_CELLS``; ``refine=0`` gives the canonical-curve bound.
    """
    if resolution < 2:
        raise ParameterError("resolution must be at least 2")
    if y.dim != z.dim:
        raise ParameterError("paths must have the same number of components")
    if y.T != z.T:
        raise ParameterError("paths must live on the same horizon")
    if int(refine) < 0:
        raise ParameterError("refine must be non-negative")
    y, z = _ordered(y, z)
    ry, rz = {}, {}
    A, ra, ta = _resample(*_vertices(y, ry), resolution)
    B, rb, tb = _resample(*_vertices(z, rz), resolution)
    passes = int(refine) if (_multi_jumps(y) or _multi_jumps(z)) and len(A) * len(B) <= MAX_COUPLING_CELLS else 0
    if passes == 0:
        return float(_discrete_frechet(np.ascontiguousarray(A), ra, np.ascontiguousarray(B), rb))
    best = np.inf
    for it in range(passes + 1):
        v, I, J = _frechet_coupling(np.ascontiguousarray(A), ra, np.ascontiguousarray(B), rb)
        best = min(best, float(v))
        if it == passes:
            break
        ry, rz = _reroute(y, ta, I, B[J]), _reroute(z, tb, J, A[I])
        A, ra, ta = _resample(*_vertices(y, ry), resolution)
        B, rb, tb = _resample(*_vertices(z, rz), resolution)
        if len(A) * len(B) > MAX_COUPLING_CELLS:
            break
    return best
