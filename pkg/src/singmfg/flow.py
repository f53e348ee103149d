"""Empirical measure flows and Wasserstein-2 distances between point clouds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError, ParameterError
from .paths import CadlagPath

QUANTILE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Marginal:
    """Weighted point cloud in ``R^{d+l}``; the first ``d`` columns are the state."""

    points: np.ndarray
    weights: np.ndarray
    d: int

    @property
    def x(self):
        return self.points[:, : self.d]

    @property
    def xi(self):
        return self.points[:, self.d :]

    def mean(self):
        return self.weights @ self.points

    def mean_x(self):
        return self.weights @ self.x

    def second_moment(self):
        return float(self.weights @ np.sum(self.points**2, axis=1))

    def integrate(self, fn):
        """``sum_i w_i fn(x_i, xi_i)`` for a function vectorised over rows."""
        return self.weights @ np.asarray(fn(self.x, self.xi))


class EmpiricalMeasureFlow:
    """``M`` weighted particle paths on a common time grid.

    ``values`` and ``left`` have shape ``(M, n, d + l)`` with the same
    right-value / left-limit convention as :class:`CadlagPath`.
    """

    def __init__(self, times, values, left=None, weights=None, d=0, info=None):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[1] != len(self.times):
            raise InvariantError("values must have shape (M, n_times, dim)")
        self.left = self.values if left is None else np.asarray(left, dtype=float)
        M = self.values.shape[0]
        w = np.full(M, 1.0 / M) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (M,) or np.any(w < 0) or not np.isclose(w.sum(), 1.0, rtol=0, atol=1e-12):
            raise InvariantError("weights must be non-negative and sum to 1")
        self.weights = w
        self.d = int(d)
        self.info = dict(info or {})
        self._cache: dict[int, Marginal] = {}

    @classmethod
    def from_paths(cls, paths, weights=None):
        paths = list(paths)
        grid = paths[0].times
        for p in paths[1:]:
            if len(p.times) != len(grid) or np.any(p.times != grid):
                grid = np.union1d(grid, p.times)
        vals = np.stack([p.evaluate_many(grid) for p in paths])
        lefts = np.stack([p.evaluate_many(grid, left=True) for p in paths])
        lefts[:, 0] = np.stack([p.initial for p in paths])
        return cls(grid, vals, lefts, weights, d=paths[0].d)

    @classmethod
    def point_mass(cls, point, T, d=None):
        """Deterministic constant flow at ``point`` (length ``d + l``)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        vals = np.broadcast_to(point, (1, 2, len(point))).copy()
        return cls([0.0, T], vals, d=len(point) if d is None else d)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def path(self, i) -> CadlagPath:
        return CadlagPath(self.times, self.values[i], self.left[i], self.d)

    def paths(self):
        return [self.path(i) for i in range(self.M)]

    def marginal(self, t) -> Marginal:
        """Time-``t`` marginal (right values), linear between grid stamps."""
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(max(k, 0), len(self.times) - 1)
        if self.times[k] == t:
            m = self._cache.get(k)
            if m is None:
                m = Marginal(self.values[:, k], self.weights, self.d)
                self._cache[k] = m
            return m
        if t > self.T:
            return self.marginal(self.T)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        pts = (1 - w) * self.values[:, k] + w * self.left[:, k + 1]
        return Marginal(pts, self.weights, self.d)

    def terminal(self) -> Marginal:
        return self.marginal(self.T)


def _as_cloud(a):
    if isinstance(a, Marginal):
        pts, w = np.asarray(a.points, dtype=float), np.asarray(a.weights, dtype=float)
    elif isinstance(a, tuple):
        pts, w = np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float)
    else:
        pts = np.asarray(a, dtype=float)
        w = np.full(len(pts), 1.0 / max(len(pts), 1))
    if len(pts) == 0:
        raise ParameterError("empty point cloud")
    return pts.reshape(len(pts), -1), w


def _w2sq_1d(xa, wa, xb, wb):
    if len(xa) == len(xb) and np.all(wa == wa[0]) and np.all(wb == wb[0]):
        return float(np.mean((np.sort(xa) - np.sort(xb)) ** 2))
    ia, ib = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, wa, xb, wb = xa[ia], wa[ia], xb[ib], wb[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    q = np.union1d(ca, cb)
    q = q[(q > QUANTILE_TOL) & (q < 1 - QUANTILE_TOL)]
    # breakpoints that differ only by cumulative round-off are one breakpoint
    q = q[np.concatenate([[True], np.diff(q) > QUANTILE_TOL])] if len(q) else q
    q = np.concatenate([[0.0], q, [1.0]])
    mid = 0.5 * (q[:-1] + q[1:])
    ja = np.minimum(np.searchsorted(ca, mid), len(xa) - 1)
    jb = np.minimum(np.searchsorted(cb, mid), len(xb) - 1)
    return float(np.sum(np.diff(q) * (xa[ja] - xb[jb]) ** 2))


def wasserstein2_empirical(a, b, n_projections=64, seed=0) -> float:
    """W2 between weighted point clouds.

    One-dimensional clouds are coupled exactly through their quantile
    functions.  In higher dimensions the sliced distance is returned: the
    root-mean-square of exact 1-d distances over ``n_projections`` random
    directions drawn from ``seed``.
    """
    pa, wa = _as_cloud(a)
    pb, wb = _as_cloud(b)
    if pa.shape[1] != pb.shape[1]:
        raise ParameterError("point clouds live in different dimensions")
    if not np.isclose(wa.sum(), wb.sum(), rtol=1e-9, atol=1e-12):
        raise ParameterError("point clouds must carry equal total mass")
    wa, wb = wa / wa.sum(), wb / wb.sum()
    dim = pa.shape[1]
    if dim == 1:
        return float(np.sqrt(_w2sq_1d(pa[:, 0], wa, pb[:, 0], wb)))
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_projections, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    total = 0.0
    for th in dirs:
        total += _w2sq_1d(pa @ th, wa, pb @ th, wb)
    return float(np.sqrt(total / n_projections))


@dataclass
class FlowDistance:
    residual: float
    per_time: np.ndarray = field(repr=False)


def flow_residual(f1: EmpiricalMeasureFlow, f2: EmpiricalMeasureFlow, n_projections=64, seed=0) -> FlowDistance:
    """Max over the grid of ``f1`` of the marginal W2 distances."""
    per = np.array(
        [wasserstein2_empirical(f1.marginal(t), f2.marginal(t), n_projections, seed) for t in f1.times]
    )
    return FlowDistance(float(per.max()), per)
