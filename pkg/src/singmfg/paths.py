"""Càdlàg paths, parametrised paths, time scales and the unparametrisation map.

A :class:`CadlagPath` is stored on a finite grid ``0 = t_0 < ... < t_{n-1} = T``.
Each stamp carries a right value and a left value; the left value at ``t_0``
is the value at the pre-initial instant ``0-``.  Between two stamps the path
moves linearly from the right value at ``t_k`` to the left value at
``t_{k+1}``, so a jump is recorded exactly when the two values at a stamp
differ.

A :class:`ParametrisedPath` is a continuous triple ``(xbar, xibar, rbar)`` on
a parameter grid in ``[0, 1]``, linearly interpolated between stamps.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, InvariantError, RangeError

PRE_INITIAL = "0-"
MONOTONE_TOL = 1e-12


def _frozen(a, ndim):
    arr = np.array(a, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != ndim:
        raise InvariantError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CadlagPath:
    """Piecewise-linear càdlàg path with explicit jump bookkeeping.

    Parameters
    ----------
    times : (n,) array
        Strictly increasing stamps with ``times[0] == 0``.
    values : (n, k) array
        Right values ``y(t_k)``.
    left : (n, k) array
        Left limits ``y(t_k-)``; ``left[0]`` is ``y(0-)``.
    d : int
        Number of leading state components; the remaining ``k - d`` are
        control components.
    """

    times: np.ndarray
    values: np.ndarray
    left: np.ndarray
    d: int = 0

    def __post_init__(self):
        times = _frozen(self.times, 1)
        values = _frozen(self.values, 2)
        left = _frozen(self.left, 2)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "left", left)
        if len(times) < 1 or times[0] != 0.0:
            raise InvariantError("grid must start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise InvariantError("grid stamps must be strictly increasing")
        if values.shape[0] != len(times) or left.shape != values.shape:
            raise InvariantError("values/left must have one row per stamp")
        if not 0 <= self.d <= values.shape[1]:
            raise InvariantError("state dimension d out of range")

    @classmethod
    def from_values(cls, times, values, initial=None, jumps=None, d=0):
        """Build a path from right values, an optional ``0-`` value and jumps.

        ``jumps`` maps a stamp (the time itself) to the left value there.  If
        ``initial`` is omitted the path has no jump at time 0.
        """
        times = np.asarray(times, dtype=float)
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        left = np.empty_like(values)
        left[1:] = values[1:]
        left[0] = values[0] if initial is None else np.broadcast_to(initial, values.shape[1])
        for t, lv in (jumps or {}).items():
            k = int(np.searchsorted(times, t))
            if k >= len(times) or times[k] != t:
                raise InvariantError(f"jump time {t} is not a grid stamp")
            left[k] = np.broadcast_to(lv, values.shape[1])
        return cls(times, values, left, d)

    @classmethod
    def constant(cls, value, T, d=0):
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.from_values([0.0, T], np.vstack([v, v]), d=d)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def l(self) -> int:
        return self.dim - self.d

    @property
    def initial(self) -> np.ndarray:
        return self.left[0]

    @property
    def jump_indices(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.left != self.values, axis=1))

    @property
    def jump_marks(self):
        """List of ``(t, left_value)`` for every stamp carrying a jump."""
        return [(float(self.times[k]), self.left[k].copy()) for k in self.jump_indices]

    @property
    def is_continuous(self) -> bool:
        return len(self.jump_indices) == 0

    def select(self, columns, d=0) -> "CadlagPath":
        cols = list(columns)
        return CadlagPath(self.times, self.values[:, cols], self.left[:, cols], d)

    def state(self) -> "CadlagPath":
        return self.select(range(self.d), d=self.d)

    def control(self) -> "CadlagPath":
        return self.select(range(self.d, self.dim), d=0)

    def evaluate(self, t, left=False) -> np.ndarray:
        """Right value at ``t`` (left limit if ``left``); ``t`` may be ``"0-"``."""
        if isinstance(t, str):
            if t != PRE_INITIAL:
                raise RangeError(f"unknown time label {t!r}")
            return self.left[0].copy()
        return self.evaluate_many(np.array([t], dtype=float), left=left)[0]

    def evaluate_many(self, ts, left=False) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < 0) or np.any(ts > self.T):
            raise RangeError(f"time outside [0-, {self.T}]")
        k = np.searchsorted(self.times, ts, side="right") - 1
        on_stamp = self.times[k] == ts
        out = np.empty((len(ts), self.dim))
        stamp_vals = self.left[k] if left else self.values[k]
        out[on_stamp] = stamp_vals[on_stamp]
        inner = ~on_stamp
        if np.any(inner):
            ki = k[inner]
            t0, t1 = self.times[ki], self.times[ki + 1]
            w = ((ts[inner] - t0) / (t1 - t0))[:, None]
            out[inner] = (1 - w) * self.values[ki] + w * self.left[ki + 1]
        return out

    def increments(self):
        """Per-stamp jump sizes and per-interval continuous increments."""
        jumps = self.values - self.left
        cont = self.left[1:] - self.values[:-1]
        return jumps, cont


def evaluate(path: CadlagPath, t, left=False) -> np.ndarray:
    return path.evaluate(t, left=left)


def check_monotone_control(control: CadlagPath, tol=MONOTONE_TOL):
    """Raise :class:`ContractError` unless the control components never decrease."""
    c = control.control() if control.d else control
    jumps, cont = c.increments()
    bad_j = np.argwhere(jumps < -tol)
    bad_c = np.argwhere(cont < -tol)
    if len(bad_j):
        k, i = bad_j[0]
        raise ContractError(f"control component {i} decreases at jump t={c.times[k]}")
    if len(bad_c):
        k, i = bad_c[0]
        raise ContractError(
            f"control component {i} decreases on [{c.times[k]}, {c.times[k + 1]}]"
        )


def total_variation(control: CadlagPath, t) -> float:
    """l1 variation of a monotone control on ``[0-, t]``, including a jump at 0."""
    check_monotone_control(control)
    c = control.control() if control.d else control
    if isinstance(t, str):
        return 0.0
    return float(np.sum(c.evaluate(t) - c.initial))


def decompose_continuous_part(control: CadlagPath):
    """Split a monotone control into its continuous part and its jumps.

    Returns ``(continuous_part, jumps)`` where ``jumps`` is a time-ordered list
    of ``(t, xi_left, xi_right)``.  The continuous part starts at the
    pre-initial value and has no jump marks.
    """
    check_monotone_control(control)
    c = control.control() if control.d else control
    sizes = c.values - c.left
    cum = np.cumsum(sizes, axis=0)
    cont_values = c.values - cum
    cont_left = cont_values.copy()
    cont_left[0] = c.initial
    cont = CadlagPath(c.times, cont_values, cont_left, 0)
    jumps = [(float(c.times[k]), c.left[k].copy(), c.values[k].copy()) for k in c.jump_indices]
    return cont, jumps


@dataclass(frozen=True, eq=False)
class TimeScalePair:
    """A non-decreasing clock ``rbar: [0,1] -> [0,T]`` and its generalised inverse."""

    u: np.ndarray
    rbar: np.ndarray
    T: float

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u, 1))
        object.__setattr__(self, "rbar", _frozen(self.rbar, 1))

    def rbar_at(self, u):
        return np.interp(u, self.u, self.rbar)

    def r(self, t):
        """``r_t = inf{v : rbar_v > t}``, capped at 1."""
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts < 0):
            raise RangeError("negative time")
        j = np.searchsorted(self.rbar, ts, side="right")
        out = np.ones_like(ts)
        inside = (j < len(self.rbar)) & (ts < self.T)
        jj = j[inside]
        r0, r1 = self.rbar[jj - 1], self.rbar[jj]
        u0, u1 = self.u[jj - 1], self.u[jj]
        out[inside] = u0 + (ts[inside] - r0) / (r1 - r0) * (u1 - u0)
        return float(out[0]) if scalar else out

    def plateaus(self, tol=0.0):
        return _plateaus(self.rbar, tol)


def _plateaus(rbar, tol):
    """Maximal index ranges ``(i0, i1)`` with ``i1 > i0`` on which rbar is flat."""
    flat = np.diff(rbar) <= tol
    out = []
    i = 0
    n = len(flat)
    while i < n:
        if flat[i]:
            j = i
            while j < n and flat[j]:
                j += 1
            out.append((i, j))
            i = j
        else:
            i += 1
    return out


def generalized_inverse(u, rbar, T, tol=MONOTONE_TOL) -> TimeScalePair:
    u = np.asarray(u, dtype=float)
    rbar = np.asarray(rbar, dtype=float)
    if u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) <= 0):
        raise InvariantError("parameter grid must increase strictly from 0 to 1")
    if rbar[0] != 0.0 or rbar[-1] != T:
        raise InvariantError(f"time scale must satisfy rbar(0)=0 and rbar(1)=T={T}")
    if np.any(np.diff(rbar) < -tol):
        raise InvariantError("time scale must be non-decreasing")
    return TimeScalePair(u, np.maximum.accumulate(rbar), float(T))


def _columns(a, n):
    arr = np.array(a, dtype=float)
    if arr.size == 0:
        return np.zeros((n, 0))
    return arr.reshape(n, -1)


@dataclass(frozen=True, eq=False)
class ParametrisedPath:
    """Continuous triple ``(xbar, xibar, rbar)`` on a parameter grid.

    ``xbar`` has shape ``(n, d)`` (``d`` may be 0) and ``xibar`` ``(n, l)``.
    """

    u: np.ndarray
    xbar: np.ndarray
    xibar: np.ndarray
    rbar: np.ndarray
    T: float

    def __post_init__(self):
        u = _frozen(self.u, 1)
        n = len(u)
        xbar = _columns(self.xbar, n)
        xibar = _columns(self.xibar, n)
        xbar.setflags(write=False)
        xibar.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "xbar", xbar)
        object.__setattr__(self, "xibar", xibar)
        object.__setattr__(self, "rbar", _frozen(self.rbar, 1))
        object.__setattr__(self, "T", float(self.T))
        if n < 2 or u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) <= 0):
            raise InvariantError("parameter grid must increase strictly from 0 to 1")
        if len(self.rbar) != n:
            raise InvariantError("rbar must have one entry per parameter stamp")
        if self.rbar[0] != 0.0 or self.rbar[-1] != self.T:
            raise InvariantError("rbar(0) = 0 and rbar(1) = T are required exactly")

    @property
    def d(self) -> int:
        return self.xbar.shape[1]

    @property
    def l(self) -> int:
        return self.xibar.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Stacked ``(xbar, xibar)`` of shape ``(n, d + l)``."""
        return np.hstack([self.xbar, self.xibar])

    def at(self, u):
        """Interpolated ``(xbar, xibar, rbar)`` at parameter values ``u``."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y = np.empty((len(u), self.d + self.l))
        for i, col in enumerate(self.y.T):
            y[:, i] = np.interp(u, self.u, col)
        return y[:, : self.d], y[:, self.d :], np.interp(u, self.u, self.rbar)

    def timescale(self) -> TimeScalePair:
        return generalized_inverse(self.u, self.rbar, self.T)

    def plateaus(self, tol=MONOTONE_TOL):
        return _plateaus(self.rbar, tol)

    def with_values(self, *, u=None, xbar=None, xibar=None, rbar=None) -> "ParametrisedPath":
        return ParametrisedPath(
            self.u if u is None else u,
            self.xbar if xbar is None else xbar,
            self.xibar if xibar is None else xibar,
            self.rbar if rbar is None else rbar,
            self.T,
        )


def sup_distance(p: ParametrisedPath, q: ParametrisedPath) -> float:
    """``sup_u |(xbar, xibar)_p - (xbar, xibar)_q| v sup_u |rbar_p - rbar_q|``.

    The vector part uses the euclidean norm.  Both paths are piecewise linear,
    so the supremum is attained on the union of their parameter grids.
    """
    grid = np.union1d(p.u, q.u)
    xp, sp, rp = p.at(grid)
    xq, sq, rq = q.at(grid)
    dy = np.hstack([xp - xq, sp - sq])
    return float(max(np.max(np.linalg.norm(dy, axis=1), initial=0.0), np.max(np.abs(rp - rq))))


@dataclass
class DomainReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def check_domain_S(p: ParametrisedPath, tol=MONOTONE_TOL) -> DomainReport:
    """Check membership of ``p`` in the domain of the unparametrisation map."""
    violations = []
    if p.rbar[0] != 0.0 or p.rbar[-1] != p.T:
        violations.append({"kind": "endpoints", "rbar0": float(p.rbar[0]), "rbar1": float(p.rbar[-1])})
    if np.any(np.diff(p.rbar) < -tol):
        k = int(np.argmin(np.diff(p.rbar)))
        violations.append({"kind": "rbar_decreasing", "u": float(p.u[k])})
    if p.l and np.any(np.diff(p.xibar, axis=0) < -tol):
        k, i = np.argwhere(np.diff(p.xibar, axis=0) < -tol)[0]
        violations.append({"kind": "xibar_decreasing", "u": float(p.u[k]), "component": int(i)})
    for i0, i1 in p.plateaus(tol):
        seg = p.xbar[i0 : i1 + 1]
        dx = np.diff(seg, axis=0)
        for comp in range(p.d):
            col = dx[:, comp]
            if np.any(col > tol) and np.any(col < -tol):
                violations.append(
                    {
                        "kind": "plateau_not_monotone",
                        "plateau": (float(p.u[i0]), float(p.u[i1])),
                        "level": float(p.rbar[i0]),
                        "component": comp,
                    }
                )
    return DomainReport(not violations, violations)


def apply_S(p: ParametrisedPath, tol=MONOTONE_TOL, check=True) -> CadlagPath:
    """Unparametrise: ``(xbar o r, xibar o r)`` with ``r`` the inverse clock.

    Every r-plateau ``[a, b]`` at level ``s`` becomes a stamp ``s`` with left
    value ``y(a)`` and right value ``y(b)``; the remaining parameter stamps map
    to continuity stamps.
    """
    if check:
        rep = check_domain_S(p, tol)
        if not rep.ok:
            raise DomainError("parametrised path is outside D(S)", rep.violations)
    y = p.y
    n = len(p.u)
    plat = {i0: i1 for i0, i1 in p.plateaus(tol)}
    times, right, left = [], [], []
    i = 0
    while i < n:
        if i in plat:
            i1 = plat[i]
            times.append(p.rbar[i])
            left.append(y[i])
            right.append(y[i1])
            i = i1 + 1
        else:
            times.append(p.rbar[i])
            left.append(y[i])
            right.append(y[i])
            i += 1
    times = np.array(times)
    times[0] = 0.0
    times[-1] = p.T
    return CadlagPath(times, _columns(right, len(times)), _columns(left, len(times)), p.d)


# --------------------------------------------------------------------------
# serialisation

def path_to_record(path) -> dict:
    if isinstance(path, CadlagPath):
        return {
            "kind": "cadlag",
            "d": path.d,
            "grid": path.times.tolist(),
            "pre_initial": path.initial.tolist(),
            "values": path.values.tolist(),
            "jump_marks": [{"t": t, "left": lv.tolist()} for t, lv in path.jump_marks if t > 0],
        }
    if isinstance(path, ParametrisedPath):
        return {
            "kind": "parametrised",
            "T": path.T,
            "u_grid": path.u.tolist(),
            "xbar": path.xbar.tolist(),
            "xibar": path.xibar.tolist(),
            "rbar": path.rbar.tolist(),
        }
    raise TypeError(f"cannot serialise {type(path).__name__}")


def path_from_record(rec: dict):
    if rec["kind"] == "cadlag":
        times = np.array(rec["grid"], dtype=float)
        values = np.array(rec["values"], dtype=float).reshape(len(times), -1)
        jumps = {m["t"]: m["left"] for m in rec["jump_marks"]}
        return CadlagPath.from_values(times, values, initial=rec["pre_initial"], jumps=jumps, d=rec["d"])
    if rec["kind"] == "parametrised":
        u = np.array(rec["u_grid"], dtype=float)
        return ParametrisedPath(u, _columns(rec["xbar"], len(u)), _columns(rec["xibar"], len(u)),
                                rec["rbar"], rec["T"])
    raise ValueError(f"unknown path record kind {rec.get('kind')!r}")


def dumps_path(path) -> str:
    # json writes floats with repr(), which round-trips float64 exactly
    return json.dumps(path_to_record(path))


def loads_path(text: str):
    return path_from_record(json.loads(text))
