"""Minimal jump costs over monotone interpolation paths.

The cost of executing a control jump ``xi -> xi_next`` along a monotone path
``zeta`` is ``int c(t, y, zeta) . dzeta`` where ``y`` follows the jump ODE
``dy = gamma(t, y, zeta) dzeta``.  The minimum is searched over staircase
paths on a per-component lattice by dynamic programming.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CapabilityError, OrderError, ParameterError
from .marcus import ORDER_TOL, CoefficientSpec

ACTIVE_TOL = 1e-15
MAX_LATTICE_DIM = 3


@dataclass(frozen=True, eq=False)
class JumpCostProblem:
    """``c(t, x, xi) -> (M, l)`` is batched like the coefficient callables."""

    t: float
    x: np.ndarray
    xi: np.ndarray
    xi_next: np.ndarray
    coeffs: CoefficientSpec
    c: Callable
    lattice_steps: int = 64

    def __post_init__(self):
        for name in ("x", "xi", "xi_next"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.xi_next - self.xi < -ORDER_TOL):
            raise OrderError("jump must be component-wise non-decreasing")
        if int(self.lattice_steps) < 1:
            raise ParameterError("lattice_steps must be at least 1")

    @property
    def increment(self):
        return np.maximum(self.xi_next - self.xi, 0.0)


@dataclass
class JumpCostResult:
    cost: float
    zeta: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    mode: str
    gap: float
    linear_cost: float

    def to_record(self) -> dict:
        return {"cost": self.cost, "mode": self.mode, "gap": self.gap, "linear_cost": self.linear_cost,
                "zeta": self.zeta.tolist(), "y": self.y.tolist()}


def _segment(p: JumpCostProblem, y, z0, dz, steps):
    """RK4 for the augmented system ``(y, cost)`` along ``z0 + u dz``, batched."""
    h = 1.0 / steps
    t, coeffs, c = p.t, p.coeffs, p.c

    def F(yy, u):
        z = z0 + u * dz
        dy = np.einsum("mdl,ml->md", coeffs.eval_gamma(t, yy, z), dz)
        dj = np.einsum("ml,ml->m", np.asarray(c(t, yy, z), dtype=float).reshape(len(yy), -1), dz)
        return dy, dj

    J = np.zeros(len(y))
    for s in range(steps):
        u = s * h
        a1, b1 = F(y, u)
        a2, b2 = F(y + 0.5 * h * a1, u + 0.5 * h)
        a3, b3 = F(y + 0.5 * h * a2, u + 0.5 * h)
        a4, b4 = F(y + h * a3, u + h)
        y = y + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        J = J + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
    return J, y


def path_cost(p: JumpCostProblem, nodes, steps_per_segment=8):
    """Cost and state trace along the polyline ``nodes`` (shape ``(L, l)``)."""
    nodes = np.asarray(nodes, dtype=float)
    y = p.x[None].copy()
    ys = [y[0]]
    total = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        J, y = _segment(p, y, a[None], (b - a)[None], steps_per_segment)
        total += float(J[0])
        ys.append(y[0])
    return total, np.array(ys)


def linear_interp_cost(p: JumpCostProblem, steps=256) -> float:
    """Cost along the linear interpolation; an upper bound for the minimum."""
    if np.all(p.increment <= ACTIVE_TOL):
        return 0.0
    J, _ = _segment(p, p.x[None], p.xi[None], p.increment[None], int(steps))
    return float(J[0])


def _lattice_dp(p: JumpCostProblem, active, edge_steps, tie_tol):
    N = int(p.lattice_steps)
    la = len(active)
    shape = (N + 1,) * la
    coords = np.indices(shape).reshape(la, -1).T
    level = coords.sum(axis=1)
    order = np.argsort(level, kind="stable")
    bounds = np.searchsorted(level[order], np.arange(la * N + 2))
    strides = np.array([(N + 1) ** (la - 1 - j) for j in range(la)])
    h = p.increment[active] / N

    n_nodes = len(coords)
    V = np.full(n_nodes, np.inf)
    Y = np.zeros((n_nodes, p.coeffs.d))
    move = np.full(n_nodes, -1, dtype=np.int8)
    V[0], Y[0] = 0.0, p.x

    def zeta_of(idx):
        z = np.broadcast_to(p.xi, (len(idx), len(p.xi))).copy()
        z[:, active] += coords[idx] * h
        return z

    for s in range(1, la * N + 1):
        nodes = order[bounds[s] : bounds[s + 1]]
        cn = coords[nodes]
        best = np.full(len(nodes), np.inf)
        besty = np.zeros((len(nodes), p.coeffs.d))
        bestm = np.full(len(nodes), -1, dtype=np.int8)
        # larger components first so that ties keep "lower components move first"
        for j in reversed(range(la)):
            ok = np.flatnonzero(cn[:, j] > 0)
            if len(ok) == 0:
                continue
            pred = nodes[ok] - strides[j]
            dz = np.zeros((len(ok), len(p.xi)))
            dz[:, active[j]] = h[j]
            J, yn = _segment(p, Y[pred], zeta_of(pred), dz, edge_steps)
            cand = V[pred] + J
            better = cand < best[ok] - tie_tol * np.maximum(1.0, np.abs(cand))
            tgt = ok[better]
            best[tgt] = cand[better]
            besty[tgt] = yn[better]
            bestm[tgt] = j
        V[nodes], Y[nodes], move[nodes] = best, besty, bestm

    # backtrack
    idx = n_nodes - 1
    chain = [idx]
    while idx != 0:
        idx -= strides[move[idx]]
        chain.append(idx)
    chain = np.array(chain[::-1])
    return float(V[-1]), zeta_of(chain), Y[chain]


def _smooth(p, zeta, cost, steps, max_evals):
    """Greedy corner cutting: replace two consecutive orthogonal edges by a diagonal."""
    evals = 0
    improved = True
    while improved and evals < max_evals:
        improved = False
        k = 1
        while k < len(zeta) - 1 and evals < max_evals:
            e1, e2 = zeta[k] - zeta[k - 1], zeta[k + 1] - zeta[k]
            if np.count_nonzero(e1) == 1 and np.count_nonzero(e2) == 1 and np.argmax(e1 > 0) != np.argmax(e2 > 0):
                trial = np.delete(zeta, k, axis=0)
                c, _ = path_cost(p, trial, steps)
                evals += 1
                if c < cost - 1e-14:
                    zeta, cost, improved = trial, c, True
                    continue
            k += 1
    return zeta, cost


def _simplex_projection(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > (css - 1))[0][-1]
    theta = (css[rho] - 1) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _allocation_nodes(p, active, A):
    """Polyline visiting the cumulative allocations of the phase matrix ``A``."""
    inc = p.increment[active]
    cum = np.concatenate([np.zeros((len(active), 1)), np.cumsum(A, axis=1)], axis=1)
    nodes = np.broadcast_to(p.xi, (cum.shape[1], len(p.xi))).copy()
    nodes[:, active] += (cum * inc[:, None]).T
    nodes[-1, active] = p.xi_next[active]
    return nodes


def _projected_gradient(p, active, phases=8, iters=40, steps=8, fd=1e-4, lr=0.5):
    la = len(active)
    A = np.full((la, phases), 1.0 / phases)
    cost, _ = path_cost(p, _allocation_nodes(p, active, A), steps)
    for _ in range(iters):
        grad = np.zeros_like(A)
        for i in range(la):
            for k in range(phases):
                B = A.copy()
                B[i, k] += fd
                grad[i, k] = (path_cost(p, _allocation_nodes(p, active, B), steps)[0] - cost) / fd
        step = lr
        while step > 1e-6:
            trial = np.array([_simplex_projection(row) for row in A - step * grad])
            c, _ = path_cost(p, _allocation_nodes(p, active, trial), steps)
            if c < cost:
                A, cost = trial, c
                break
            step *= 0.5
        else:
            break
    return _allocation_nodes(p, active, A), cost


def min_jump_cost(p: JumpCostProblem, edge_steps=4, linear_steps=256, allow_fallback=False,
                  smoothing_evals=200, tie_tol=1e-12) -> JumpCostResult:
    """Minimal jump cost over monotone staircase paths (plus the linear path).

    Exact lattice DP when the active control dimension is 1 or ``gamma`` does
    not depend on the state; otherwise the DP output is a heuristic candidate
    refined by corner cutting, and ``gap`` bounds how far it may lie above
    the optimum when measured against the linear path.
    """
    active = np.flatnonzero(p.increment > ACTIVE_TOL)
    lin = linear_interp_cost(p, linear_steps)
    if len(active) == 0:
        return JumpCostResult(0.0, p.xi[None].copy(), p.x[None].copy(), "trivial", 0.0, 0.0)
    exact = len(active) == 1 or not p.coeffs.gamma_depends_on_x
    if len(active) > MAX_LATTICE_DIM:
        if not allow_fallback:
            raise CapabilityError(f"lattice method supports at most {MAX_LATTICE_DIM} active components")
        zeta, cost = _projected_gradient(p, active)
        mode = "gradient"
    else:
        cost, zeta, _ = _lattice_dp(p, active, int(edge_steps), tie_tol)
        mode = "exact" if exact else "heuristic"
        if not exact:
            zeta, cost = _smooth(p, zeta, path_cost(p, zeta, edge_steps)[0], edge_steps, smoothing_evals)
    if lin < cost:
        zeta, cost = np.vstack([p.xi, p.xi_next]), lin
    _, y = path_cost(p, zeta, edge_steps if len(zeta) > 2 else linear_steps)
    gap = 0.0 if exact else max(lin - cost, 0.0)
    return JumpCostResult(float(cost), zeta, y, mode, float(gap), lin)
