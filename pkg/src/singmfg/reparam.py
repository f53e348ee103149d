"""Explicit parametrisation constructions.

Arctan clock, parametrisation along a given time scale, truncation of the
control, the Lipschitz reparametrisation ``beta^{K, eps}``, the perturbed
time scale ``rbar^delta`` and a numerical stability probe for the
parametrised SDE.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ContractError, ParameterError
from .flow import EmpiricalMeasureFlow, wasserstein2_empirical
from .jumpcost import JumpCostProblem, JumpCostResult, min_jump_cost
from .marcus import CoefficientSpec, NoisePath, _flow_segment, simulate_parametrised, simulate_parametrised_ensemble
from .paths import (
    MONOTONE_TOL,
    CadlagPath,
    ParametrisedPath,
    TimeScalePair,
    check_monotone_control,
    generalized_inverse,
)

DEDUP_TOL = 1e-13


# ------------------------------------------------------------ arctan clock


def _variation_on(control: CadlagPath, ts, left=False):
    vals = control.evaluate_many(ts, left=left)
    return np.sum(vals - control.initial, axis=1)


def arctan_time_change(control: CadlagPath, subdivide=8) -> TimeScalePair:
    """Clock ``r_t = (t + arctan Var(xi, [0, t])) / (T + pi/2)`` and its inverse.

    Each continuity segment is sampled at ``subdivide`` interior points; ``rbar``
    is linear between samples, which keeps its Lipschitz constant at most
    ``T + pi/2``.  Jumps (including one at time 0) become plateaus, and the
    remaining parameter mass ``[r_T, 1]`` is a terminal plateau at ``T``.
    """
    ctrl = control.control() if control.d else control
    check_monotone_control(ctrl)
    T = ctrl.T
    norm = T + np.pi / 2
    t = ctrl.times
    if subdivide > 0:
        w = np.arange(1, subdivide + 1) / (subdivide + 1)
        inner = (t[:-1, None] + w[None, :] * np.diff(t)[:, None]).ravel()
        t = np.union1d(t, inner)
    var_r = _variation_on(ctrl, t)
    var_l = _variation_on(ctrl, t, left=True)
    r_right = (t + np.arctan(var_r)) / norm
    r_left = (t + np.arctan(var_l)) / norm
    u, rb = [], []
    for k in range(len(t)):
        if k == 0 or r_left[k] != r_right[k]:
            u.append(r_left[k])
            rb.append(t[k])
        u.append(r_right[k])
        rb.append(t[k])
    u, rb = np.array(u), np.array(rb)
    keep = np.concatenate([[True], np.diff(u) > 0])
    u, rb = u[keep], rb[keep]
    if u[-1] < 1.0:
        u = np.append(u, 1.0)
        rb = np.append(rb, T)
    u[-1] = 1.0
    return generalized_inverse(u, rb, T)


def clock_lipschitz(ts: TimeScalePair) -> float:
    """Largest slope of ``rbar`` on its grid."""
    return float(np.max(np.diff(ts.rbar) / np.diff(ts.u)))


# ---------------------------------------------------- parametrise along rbar


def _linear_fill(path: CadlagPath, k, coeffs, n_points, ode_steps):
    """Nodes ``(zeta, y)`` for a linear control fill at stamp ``k``."""
    d = path.d
    l0, r0 = path.left[k], path.values[k]
    w = np.linspace(0.0, 1.0, n_points + 1)[:, None]
    zeta = (1 - w) * l0[d:] + w * r0[d:]
    if d == 0:
        return zeta, np.zeros((len(w), 0))
    if coeffs is None:
        return zeta, (1 - w) * l0[:d] + w * r0[:d]
    y = [l0[:d][None]]
    steps = max(1, ode_steps // n_points)
    for a, b in zip(zeta[:-1], zeta[1:]):
        y.append(_flow_segment(coeffs, path.times[k], y[-1], a[None], b[None], steps))
    return zeta, np.vstack(y)


def _argmin_fill(path, k, coeffs, reward, lattice_steps):
    d = path.d
    prob = JumpCostProblem(float(path.times[k]), path.left[k][:d], path.left[k][d:], path.values[k][d:],
                           coeffs, reward.c, lattice_steps)
    res = min_jump_cost(prob)
    return res.zeta, res.y


def _fill_from(obj):
    if isinstance(obj, JumpCostResult):
        return obj.zeta, obj.y
    zeta, y = obj
    return np.asarray(zeta, dtype=float), np.asarray(y, dtype=float)


def parametrise_with_timescale(path: CadlagPath, ts: TimeScalePair, jump_interpolations=None,
                               coeffs: CoefficientSpec | None = None, reward=None, fill_points=16,
                               lattice_steps=64, ode_steps=256) -> ParametrisedPath:
    """Compose ``path`` with ``rbar`` and fill every plateau with a jump interpolation.

    Fill precedence: ``jump_interpolations[t]`` (a :class:`JumpCostResult` or a
    ``(zeta, y)`` pair), then the minimal-cost path when both ``coeffs`` and
    ``reward`` are given, then the linear control fill with the state from
    the jump ODE (``coeffs`` given) or linear in the state as well.  Fill
    endpoints are pinned to the recorded left and right values so that the
    unparametrisation map returns ``path`` exactly at its stamps.
    """
    if ts.T != path.T:
        raise AlignmentError("time scale and path horizons differ")
    d = path.d
    plats = [(i0, i1, float(ts.rbar[i0])) for i0, i1 in ts.plateaus()]
    jumps = {float(path.times[k]): k for k in path.jump_indices}
    for i0, i1, s in plats:
        if s not in jumps and not (s == path.T and i1 == len(ts.u) - 1):
            raise AlignmentError(f"time scale has a plateau at t={s} where the path does not jump")
    levels = {s for _, _, s in plats}
    missing = [t for t in jumps if t not in levels]
    if missing:
        raise AlignmentError(f"path jumps at {missing} have no plateau in the time scale")

    us, ys, rs = [], [], []

    def emit(u, y, r):
        if us and u - us[-1] <= DEDUP_TOL:
            return
        us.append(float(u))
        ys.append(np.asarray(y, dtype=float))
        rs.append(float(r))

    def stretch(ia, ib, into_plateau):
        ta, tb = ts.rbar[ia], ts.rbar[ib]
        su, sr = list(ts.u[ia : ib + 1]), list(ts.rbar[ia : ib + 1])
        inner_t = path.times[(path.times > ta) & (path.times < tb)]
        for uu, tt in zip(np.atleast_1d(ts.r(inner_t)), inner_t):
            j = int(np.searchsorted(su, uu))
            if any(0 <= i < len(su) and abs(su[i] - uu) <= DEDUP_TOL for i in (j - 1, j)):
                continue
            su.insert(j, float(uu))
            sr.insert(j, float(tt))
        vals = path.evaluate_many(np.array(sr))
        if into_plateau and tb in jumps:
            vals[-1] = path.left[jumps[tb]]
        for uu, v, rr in zip(su, vals, sr):
            emit(uu, v, rr)

    def plateau(i0, i1, s):
        a, b = ts.u[i0], ts.u[i1]
        if s not in jumps:
            emit(a, path.values[-1], s)
            emit(b, path.values[-1], s)
            return
        k = jumps[s]
        if jump_interpolations and s in jump_interpolations:
            zeta, y = _fill_from(jump_interpolations[s])
        elif coeffs is not None and reward is not None and d > 0:
            zeta, y = _argmin_fill(path, k, coeffs, reward, lattice_steps)
        else:
            zeta, y = _linear_fill(path, k, coeffs, fill_points, ode_steps)
        nodes = np.hstack([np.asarray(y).reshape(len(zeta), d), zeta])
        nodes[0], nodes[-1] = path.left[k], path.values[k]
        cum = np.concatenate([[0.0], np.cumsum(np.sum(np.abs(np.diff(zeta, axis=0)), axis=1))])
        frac = cum / cum[-1] if cum[-1] > 0 else np.linspace(0.0, 1.0, len(cum))
        for f, v in zip(frac[:-1], nodes[:-1]):
            emit(a + f * (b - a), v, s)
        if us and us[-1] >= b:  # fill node collided with the end point
            us.pop(), ys.pop(), rs.pop()
        emit(b, nodes[-1], s)

    pos = 0
    for i0, i1, s in plats:
        if i0 > pos:
            stretch(pos, i0, True)
        plateau(i0, i1, s)
        pos = i1
    if pos < len(ts.u) - 1:
        stretch(pos, len(ts.u) - 1, False)
    u = np.array(us)
    y = np.vstack(ys)
    r = np.array(rs)
    r[0], r[-1], u[-1] = 0.0, path.T, 1.0
    return ParametrisedPath(u, y[:, :d], y[:, d:], r, path.T)


# ------------------------------------------------------------- truncation


def _crossings(p: ParametrisedPath, K):
    """u-values inside grid cells where some control component crosses ``K``."""
    out = []
    xi = p.xibar
    for k in range(len(p.u) - 1):
        a, b = xi[k], xi[k + 1]
        hit = (a < K) & (b > K)
        for j in np.flatnonzero(hit):
            w = (K - a[j]) / (b[j] - a[j])
            out.append(p.u[k] + w * (p.u[k + 1] - p.u[k]))
    return np.array(sorted(set(out)))


def truncation_grid(p: ParametrisedPath, K) -> np.ndarray:
    """u-grid of ``truncate_control(p, K)``; sample matching noise on it."""
    return np.union1d(p.u, _crossings(p, K))


def _resample(p: ParametrisedPath, u):
    xb = np.column_stack([np.interp(u, p.u, c) for c in p.xbar.T]) if p.d else np.zeros((len(u), 0))
    xib = np.column_stack([np.interp(u, p.u, c) for c in p.xibar.T]) if p.l else np.zeros((len(u), 0))
    return xb, xib, np.interp(u, p.u, p.rbar)


def truncate_control(p: ParametrisedPath, K, coeffs: CoefficientSpec | None = None, noise: NoisePath | None = None,
                     flow: EmpiricalMeasureFlow | None = None, x0=None, ode_steps=16) -> ParametrisedPath:
    """Cap the control at ``K`` component-wise.

    Crossing points are added to the grid so the capped path is exact.  With
    ``coeffs`` attached the state is re-simulated against the capped control;
    ``noise`` must then live on :func:`truncation_grid`.
    """
    if not K > 0:
        raise ParameterError("K must be positive")
    u = truncation_grid(p, K)
    xb, xib, rb = _resample(p, u)
    rb[0], rb[-1] = 0.0, p.T
    out = ParametrisedPath(u, xb, np.minimum(xib, K), rb, p.T)
    if coeffs is not None:
        x0 = p.xbar[0] if x0 is None else x0
        out = simulate_parametrised(coeffs, out, noise, flow, x0, ode_steps)
    return out


# ------------------------------------------------ Lipschitz reparametrisation


@dataclass(frozen=True)
class LipschitzBudget:
    K: float
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if not self.K > 0:
            raise ParameterError("K must be positive")

    def normaliser(self, T, l):
        return 1.0 + self.epsilon * (T + l * self.K)

    def constant(self, T, l) -> float:
        """Joint Lipschitz constant ``(1 + eps (T + l K)) / eps`` of the output."""
        return self.normaliser(T, l) / self.epsilon

    def displacement_bound(self, T, l) -> float:
        """Bound ``2 eps (T + l K)`` on ``|betabar_u - u|``."""
        return 2.0 * self.epsilon * (T + l * self.K)


def beta_map(p: ParametrisedPath, budget: LipschitzBudget) -> np.ndarray:
    """``beta_u = (u + eps (rbar_u + Var(xibar, [0, u]))) / (1 + eps (T + l K))`` on the grid."""
    var = np.sum(p.xibar - p.xibar[0], axis=1)
    return (p.u + budget.epsilon * (p.rbar + var)) / budget.normaliser(p.T, p.l)


def lipschitz_reparametrise(p: ParametrisedPath, budget: LipschitzBudget, tol=MONOTONE_TOL) -> ParametrisedPath:
    """Reparametrise ``p`` by the inverse of ``beta^{K, eps}``.

    The output at ``v_k = beta(u_k)`` is ``p(u_k)``; if ``beta(1) < 1`` the
    path is held constant on ``[beta(1), 1]``.
    """
    if np.any(p.xibar > budget.K + tol) or np.any(p.xibar < -tol):
        raise ContractError("control must take values in [0, K] before the Lipschitz step")
    v = beta_map(p, budget)
    xb, xib, rb = p.xbar, p.xibar, p.rbar
    if v[-1] < 1.0:
        v = np.append(v, 1.0)
        xb, xib, rb = np.vstack([xb, xb[-1:]]), np.vstack([xib, xib[-1:]]), np.append(rb, rb[-1])
    else:
        v[-1] = 1.0
    return ParametrisedPath(v, xb, xib, rb, p.T)


def empirical_lipschitz(p: ParametrisedPath, include_state=False) -> float:
    """Largest grid slope of ``(xibar, rbar)`` in the sup-of-euclidean norm."""
    du = np.diff(p.u)
    parts = [np.linalg.norm(np.diff(p.xibar, axis=0), axis=1), np.abs(np.diff(p.rbar))]
    if include_state:
        parts.append(np.linalg.norm(np.diff(p.xbar, axis=0), axis=1))
    return float(np.max(np.max(np.vstack(parts), axis=0) / du))


# ----------------------------------------------------- perturbed time scale


def perturb_timescale(p: ParametrisedPath, delta) -> ParametrisedPath:
    """``rbar^delta = (rbar + delta T u) / (1 + delta)``; strictly increasing."""
    if not delta > 0:
        raise ParameterError("delta must be positive")
    rb = (p.rbar + delta * p.T * p.u) / (1.0 + delta)
    rb[0], rb[-1] = 0.0, p.T
    return p.with_values(rbar=rb)


def inverse_lipschitz_bound(delta, T) -> float:
    """Lipschitz constant ``(1 + delta) / (delta T)`` of the inverse of ``rbar^delta``."""
    return (1.0 + delta) / (delta * T)


# ------------------------------------------------------- stability probe


@dataclass
class StabilityProbe:
    flow_distance: float
    output_distance: float

    @property
    def ratio(self) -> float:
        return self.output_distance / self.flow_distance if self.flow_distance > 0 else 0.0


def gronwall_probe(coeffs: CoefficientSpec, control: ParametrisedPath, flow_a: EmpiricalMeasureFlow,
                   flow_b: EmpiricalMeasureFlow, noise: NoisePath | None, n_paths, x0=None, ode_steps=16,
                   n_projections=64, seed=0) -> StabilityProbe:
    """Simulate one parametrised control against two flows with shared noise.

    Returns the largest W2 distance between the flows over the grid of
    ``flow_a`` and the largest W2 distance between the two output state laws
    over the u-grid.
    """
    xa = simulate_parametrised_ensemble(coeffs, control, noise, n_paths, flow_a, x0, ode_steps)
    xb = simulate_parametrised_ensemble(coeffs, control, noise, n_paths, flow_b, x0, ode_steps)
    out = max(wasserstein2_empirical(xa[:, k], xb[:, k], n_projections, seed) for k in range(xa.shape[1]))
    fd = max(wasserstein2_empirical(flow_a.marginal(t), flow_b.marginal(t), n_projections, seed)
             for t in flow_a.times)
    return StabilityProbe(float(fd), float(out))
