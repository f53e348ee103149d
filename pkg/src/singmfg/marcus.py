"""Coefficients, the jump map, Marcus-type Euler simulation and assumption checkers.

All coefficient callables are batched over particles:

* ``b(t, marginal, x, xi) -> (M, d)``
* ``sigma(t, marginal, x, xi) -> (M, d, m)``
* ``gamma(t, x, xi) -> (M, d, l)``

with ``x`` of shape ``(M, d)`` and ``xi`` of shape ``(M, l)``.  ``marginal``
is a :class:`~singmfg.flow.Marginal` or ``None`` when no flow is attached.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import AlignmentError, NumericError, OrderError, ParameterError
from .flow import EmpiricalMeasureFlow
from .paths import CadlagPath, ParametrisedPath, check_monotone_control
from .streams import stream

ORDER_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CoefficientSpec:
    b: Callable
    sigma: Callable
    gamma: Callable
    d: int
    l: int
    m: int
    gamma_bound: float = np.inf
    lipschitz: dict = field(default_factory=dict)
    gamma_depends_on_x: bool = True
    measure_dependent: bool = False
    name: str = ""

    def eval_b(self, t, marginal, x, xi):
        return np.asarray(self.b(t, marginal, x, xi), dtype=float).reshape(len(x), self.d)

    def eval_sigma(self, t, marginal, x, xi):
        return np.asarray(self.sigma(t, marginal, x, xi), dtype=float).reshape(len(x), self.d, self.m)

    def eval_gamma(self, t, x, xi):
        return np.asarray(self.gamma(t, x, xi), dtype=float).reshape(len(x), self.d, self.l)


# ---------------------------------------------------------------- registry


class Term(NamedTuple):
    fn: Callable
    measure_dependent: bool = False
    depends_on_x: bool = True
    bound: float = np.inf
    lipschitz: float = np.nan


_REGISTRY: dict[str, dict[str, Callable]] = {"b": {}, "sigma": {}, "gamma": {}}


def register_coefficient(kind: str, name: str):
    """Decorator registering ``factory(d, l, m, **params) -> Term``."""
    if kind not in _REGISTRY:
        raise ParameterError(f"unknown coefficient kind {kind!r}")

    def deco(factory):
        _REGISTRY[kind][name] = factory
        return factory

    return deco


def registered(kind: str) -> list[str]:
    return sorted(_REGISTRY[kind])


def _factory(kind, name):
    try:
        return _REGISTRY[kind][name]
    except KeyError:
        raise ParameterError(f"no {kind} coefficient named {name!r}; known: {registered(kind)}") from None


def build_coefficients(d, l, m, b="zero_b", sigma="zero_sigma", gamma="zero_gamma",
                       b_params=None, sigma_params=None, gamma_params=None) -> CoefficientSpec:
    tb = _factory("b", b)(d, l, m, **(b_params or {}))
    ts = _factory("sigma", sigma)(d, l, m, **(sigma_params or {}))
    tg = _factory("gamma", gamma)(d, l, m, **(gamma_params or {}))
    return CoefficientSpec(
        tb.fn, ts.fn, tg.fn, d, l, m,
        gamma_bound=tg.bound,
        lipschitz={"b": tb.lipschitz, "sigma": ts.lipschitz, "gamma": tg.lipschitz},
        gamma_depends_on_x=tg.depends_on_x,
        measure_dependent=tb.measure_dependent or ts.measure_dependent,
        name=f"{b}/{sigma}/{gamma}",
    )


@register_coefficient("b", "zero_b")
def _zero_b(d, l, m):
    return Term(lambda t, mu, x, xi: np.zeros((len(x), d)), depends_on_x=False, bound=0.0, lipschitz=0.0)


@register_coefficient("b", "constant_b")
def _constant_b(d, l, m, value=0.0):
    v = np.broadcast_to(np.asarray(value, dtype=float), (d,))
    return Term(lambda t, mu, x, xi: np.broadcast_to(v, (len(x), d)).copy(), depends_on_x=False, lipschitz=0.0)


@register_coefficient("b", "linear_b")
def _linear_b(d, l, m, a=0.0, k=0.0):
    a = np.broadcast_to(np.asarray(a, dtype=float), (d,))
    return Term(lambda t, mu, x, xi: a + k * x, lipschitz=abs(k))


@register_coefficient("b", "mean_reverting_b")
def _mean_reverting_b(d, l, m, kappa=1.0):
    """``kappa * (mean of the population state - x)``."""

    def fn(t, mu, x, xi):
        centre = x.mean(axis=0) if mu is None else mu.mean_x()
        return kappa * (centre - x)

    return Term(fn, measure_dependent=True, lipschitz=abs(kappa))


@register_coefficient("sigma", "zero_sigma")
def _zero_sigma(d, l, m):
    return Term(lambda t, mu, x, xi: np.zeros((len(x), d, m)), depends_on_x=False, bound=0.0, lipschitz=0.0)


@register_coefficient("sigma", "constant_sigma")
def _constant_sigma(d, l, m, s=1.0):
    s = np.asarray(s, dtype=float)
    mat = s * np.eye(d, m) if s.ndim == 0 else s.reshape(d, m)
    return Term(lambda t, mu, x, xi: np.broadcast_to(mat, (len(x), d, m)).copy(), depends_on_x=False, lipschitz=0.0)


@register_coefficient("gamma", "zero_gamma")
def _zero_gamma(d, l, m):
    return Term(lambda t, x, xi: np.zeros((len(x), d, l)), depends_on_x=False, bound=0.0, lipschitz=0.0)


@register_coefficient("gamma", "constant_gamma")
def _constant_gamma(d, l, m, value=1.0):
    g = np.broadcast_to(np.asarray(value, dtype=float), (d, l)).copy()
    return Term(lambda t, x, xi: np.broadcast_to(g, (len(x), d, l)).copy(), depends_on_x=False,
                bound=float(np.linalg.norm(g)), lipschitz=0.0)


@register_coefficient("gamma", "geometric_gamma")
def _geometric_gamma(d, l, m, scale=1.0):
    """``gamma_ij = scale * x_i``: multiplicative impact, ``psi = x exp(scale * sum dxi)``."""
    return Term(lambda t, x, xi: scale * np.repeat(x[:, :, None], l, axis=2), lipschitz=abs(scale))


@register_coefficient("gamma", "sine_gamma")
def _sine_gamma(d, l, m, freq=10.0, amp=1.0):
    """``gamma_ij = amp * sin(freq * xi_j)``; violates jump monotonicity."""
    return Term(lambda t, x, xi: amp * np.repeat(np.sin(freq * xi)[:, None, :], d, axis=1),
                depends_on_x=False, bound=abs(amp) * np.sqrt(d * l), lipschitz=abs(amp * freq))


@register_coefficient("gamma", "crossed_gamma")
def _crossed_gamma(d, l, m, scale=1.0):
    """``(scale * xi_2, 0)`` for ``l = 2``; not conservative, so not path independent."""
    if l != 2:
        raise ParameterError("crossed_gamma needs l = 2")

    def fn(t, x, xi):
        out = np.zeros((len(x), d, 2))
        out[:, :, 0] = scale * xi[:, 1:2]
        return out

    return Term(fn, depends_on_x=False, lipschitz=abs(scale))


@register_coefficient("gamma", "conservative_gamma")
def _conservative_gamma(d, l, m, scale=1.0):
    """Gradient of ``scale * xi_1 xi_2``: ``(scale * xi_2, scale * xi_1)`` for ``l = 2``."""
    if l != 2:
        raise ParameterError("conservative_gamma needs l = 2")

    def fn(t, x, xi):
        out = np.empty((len(x), d, 2))
        out[:, :, 0] = scale * xi[:, 1:2]
        out[:, :, 1] = scale * xi[:, 0:1]
        return out

    return Term(fn, depends_on_x=False, lipschitz=abs(scale))


# ------------------------------------------------------------------- noise


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Standard normal draws ``z`` on the steps of ``times``.

    ``z`` has shape ``(n - 1, m)`` or ``(M, n - 1, m)``.  On a time grid the
    Brownian increment is ``sqrt(dt) * z``; the parametrised simulator uses
    ``sqrt(d rbar) * z`` instead.
    """

    times: np.ndarray
    z: np.ndarray
    seed: int | None = None

    @classmethod
    def sample(cls, times, m, seed, n_paths=None, purpose="noise"):
        times = np.asarray(times, dtype=float)
        shape = (len(times) - 1, m) if n_paths is None else (n_paths, len(times) - 1, m)
        return cls(times, stream(seed, purpose).standard_normal(shape), seed)

    @classmethod
    def zeros(cls, times, m, n_paths=None):
        times = np.asarray(times, dtype=float)
        shape = (len(times) - 1, m) if n_paths is None else (n_paths, len(times) - 1, m)
        return cls(times, np.zeros(shape), None)

    @property
    def m(self) -> int:
        return self.z.shape[-1]

    def increments(self, scale=None):
        """Brownian increments ``sqrt(scale) * z`` with ``scale = diff(times)`` by default."""
        dt = np.diff(self.times) if scale is None else np.asarray(scale)
        return np.sqrt(dt)[:, None] * self.z


def simulation_grid(T, n_steps, control: CadlagPath | None = None, all_stamps=False):
    """Uniform grid merged with the jump stamps (or all stamps) of ``control``."""
    grid = np.linspace(0.0, T, n_steps + 1)
    if control is not None:
        extra = control.times if all_stamps else control.times[control.jump_indices]
        grid = np.union1d(grid, extra)
    return grid


# ---------------------------------------------------------------- jump map


def _check_order(xi, xi_next, tol=ORDER_TOL):
    if np.any(np.asarray(xi_next) - np.asarray(xi) < -tol):
        raise OrderError("jump must be component-wise non-decreasing")


def _flow_segment(coeffs, t, y, z0, z1, steps, record=None):
    """RK4 for ``dy = gamma(t, y, zeta) dzeta`` along the segment ``z0 -> z1``."""
    dz = z1 - z0
    h = 1.0 / steps

    def F(yy, u):
        return np.einsum("mdl,ml->md", coeffs.eval_gamma(t, yy, z0 + u * dz), dz)

    for s in range(steps):
        u = s * h
        k1 = F(y, u)
        k2 = F(y + 0.5 * h * k1, u + 0.5 * h)
        k3 = F(y + 0.5 * h * k2, u + 0.5 * h)
        k4 = F(y + h * k3, u + h)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if record is not None:
            record.append(y)
    return y


def flow_along(coeffs, t, x, nodes, steps_per_segment=32, record=False):
    """Jump ODE along the polyline ``nodes`` (shape ``(L, l)``) from state ``x``."""
    y = np.atleast_2d(np.asarray(x, dtype=float))
    nodes = np.asarray(nodes, dtype=float)
    trace = [y] if record else None
    for a, b in zip(nodes[:-1], nodes[1:]):
        y = _flow_segment(coeffs, t, y, a[None, :], b[None, :], steps_per_segment, trace)
    return (y[0], np.vstack(trace)) if record else y[0]


def jump_map_psi(t, x, xi, xi_next, coeffs: CoefficientSpec, ode_steps=256):
    """Post-jump state ``psi(t, x, xi, xi_next)`` along the linear interpolation."""
    if int(ode_steps) < 1:
        raise ParameterError("ode_steps must be at least 1")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xi_next = np.atleast_1d(np.asarray(xi_next, dtype=float))
    _check_order(xi, xi_next)
    y = np.atleast_2d(np.asarray(x, dtype=float))
    return _flow_segment(coeffs, t, y, xi[None], xi_next[None], int(ode_steps))[0]


def _psi_batch(coeffs, t, x, xi, xi_next, ode_steps):
    return _flow_segment(coeffs, t, x, xi, xi_next, ode_steps)


# -------------------------------------------------------------- simulation


def _marginal(flow, t):
    return None if flow is None else flow.marginal(t)


def _finite_or_raise(arr, k, t):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite state at step {k} (t = {t})", location=(k, float(t)))


def _euler_core(coeffs, times, xiR, xiL, dW, flow, x0, jump_rule, ode_steps):
    """Batched Marcus-Euler scheme; arrays carry a leading particle axis."""
    M, n = xiR.shape[0], len(times)
    X = np.empty((M, n, coeffs.d))
    XL = np.empty_like(X)
    jumps = np.any(xiR != xiL, axis=2)
    XL[:, 0] = x0
    X[:, 0] = _apply_jump(coeffs, times[0], XL[:, 0], xiL[:, 0], xiR[:, 0], jumps[:, 0], jump_rule, ode_steps)
    for k in range(n - 1):
        t, dt = times[k], times[k + 1] - times[k]
        mu = _marginal(flow, t)
        x, xi = X[:, k], xiR[:, k]
        step = coeffs.eval_b(t, mu, x, xi) * dt
        if coeffs.m:
            step += np.einsum("mdk,mk->md", coeffs.eval_sigma(t, mu, x, xi), dW[:, k])
        if coeffs.l:
            step += np.einsum("mdl,ml->md", coeffs.eval_gamma(t, x, xi), xiL[:, k + 1] - xi)
        XL[:, k + 1] = x + step
        _finite_or_raise(XL[:, k + 1], k + 1, times[k + 1])
        X[:, k + 1] = _apply_jump(coeffs, times[k + 1], XL[:, k + 1], xiL[:, k + 1], xiR[:, k + 1],
                                  jumps[:, k + 1], jump_rule, ode_steps)
        _finite_or_raise(X[:, k + 1], k + 1, times[k + 1])
    return X, XL


def _apply_jump(coeffs, t, x, xl, xr, mask, jump_rule, ode_steps):
    if not np.any(mask):
        return x.copy()
    out = x.copy()
    if jump_rule == "marcus":
        out[mask] = _psi_batch(coeffs, t, x[mask], xl[mask], xr[mask], ode_steps)
    elif jump_rule == "stieltjes":
        g = coeffs.eval_gamma(t, x[mask], xl[mask])
        out[mask] = x[mask] + np.einsum("mdl,ml->md", g, xr[mask] - xl[mask])
    else:
        raise ParameterError(f"unknown jump_rule {jump_rule!r}")
    return out


def _control_on_grid(control: CadlagPath, grid):
    check_monotone_control(control)
    jt = control.times[control.jump_indices]
    missing = jt[~np.isin(jt, grid)]
    if len(missing):
        raise AlignmentError(f"control jumps at {missing.tolist()} are not simulation grid stamps")
    xiR = control.evaluate_many(grid)
    xiL = control.evaluate_many(grid, left=True)
    xiL[0] = control.initial
    return xiR, xiL


def _noise_increments(noise, grid, m, M=None):
    if noise is None:
        shape = (len(grid) - 1, m) if M is None else (M, len(grid) - 1, m)
        return np.zeros(shape)
    if len(noise.times) != len(grid) or np.any(noise.times != grid):
        raise AlignmentError("noise grid differs from the simulation grid")
    return noise.increments() if noise.z.ndim == 2 else np.sqrt(np.diff(grid))[None, :, None] * noise.z


def marcus_integrate(coeffs: CoefficientSpec, control: CadlagPath, noise: NoisePath | None,
                     flow: EmpiricalMeasureFlow | None = None, x0=None, grid=None,
                     jump_rule="marcus", ode_steps=256) -> CadlagPath:
    """Euler scheme for the Marcus-type SDE driven by a monotone control.

    The simulation grid is ``noise.times`` (or ``grid`` when ``noise`` is
    ``None``); every control jump must be a grid stamp.  The returned path
    has ``d + l`` components ``(X, xi)``.  ``jump_rule="stieltjes"`` replaces
    the jump map by the naive left-point increment, for comparison only.
    """
    if grid is None:
        if noise is None:
            raise ParameterError("either noise or grid is required")
        grid = noise.times
    grid = np.asarray(grid, dtype=float)
    if grid[-1] != control.T:
        raise AlignmentError("simulation grid must end at the control horizon")
    xiR, xiL = _control_on_grid(control, grid)
    dW = _noise_increments(noise, grid, coeffs.m)
    x0 = np.zeros(coeffs.d) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    X, XL = _euler_core(coeffs, grid, xiR[None], xiL[None], dW[None], flow, x0, jump_rule, int(ode_steps))
    return CadlagPath(grid, np.hstack([X[0], xiR]), np.hstack([XL[0], xiL]), d=coeffs.d)


def marcus_integrate_ensemble(coeffs, controls, noise, flow=None, x0=None, grid=None,
                              jump_rule="marcus", ode_steps=256) -> EmpiricalMeasureFlow:
    """Batched version of :func:`marcus_integrate` for ``M`` controls."""
    controls = list(controls)
    if grid is None:
        grid = noise.times
    grid = np.asarray(grid, dtype=float)
    pairs = [_control_on_grid(c, grid) for c in controls]
    xiR = np.stack([p[0] for p in pairs])
    xiL = np.stack([p[1] for p in pairs])
    dW = _noise_increments(noise, grid, coeffs.m, M=len(controls))
    x0 = np.zeros(coeffs.d) if x0 is None else np.asarray(x0, dtype=float)
    X, XL = _euler_core(coeffs, grid, xiR, xiL, dW, flow, x0, jump_rule, int(ode_steps))
    return EmpiricalMeasureFlow(grid, np.concatenate([X, xiR], axis=2), np.concatenate([XL, xiL], axis=2), d=coeffs.d)


def _parametrised_core(coeffs, xib, rb, z, flow, x, ode_steps, plateau_tol):
    n, M = len(rb), len(x)
    out = np.empty((M, n, coeffs.d))
    out[:, 0] = x
    for k in range(n - 1):
        t, dr = rb[k], rb[k + 1] - rb[k]
        xi = np.broadcast_to(xib[k], (M, coeffs.l))
        dxi = xib[k + 1] - xib[k]
        if dr <= plateau_tol:
            if np.any(dxi != 0):
                x = _flow_segment(coeffs, t, x, xi, np.broadcast_to(xib[k + 1], (M, coeffs.l)), int(ode_steps))
        else:
            mu = _marginal(flow, t)
            step = coeffs.eval_b(t, mu, x, xi) * dr
            if coeffs.m:
                step += np.einsum("mdk,mk->md", coeffs.eval_sigma(t, mu, x, xi), np.sqrt(dr) * z[:, k])
            if coeffs.l:
                step += coeffs.eval_gamma(t, x, xi) @ dxi
            x = x + step
        _finite_or_raise(x, k + 1, rb[k + 1])
        out[:, k + 1] = x
    return out


def _parametrised_inputs(coeffs, control, noise, M):
    if np.any(np.diff(control.xibar, axis=0) < -ORDER_TOL):
        raise OrderError("xibar must be non-decreasing")
    n = len(control.u)
    if noise is None:
        return np.zeros((M, n - 1, coeffs.m))
    z = noise.z if noise.z.ndim == 3 else noise.z[None]
    if z.shape[1] != n - 1 or z.shape[0] != M:
        raise AlignmentError("noise must provide one draw per u-step and particle")
    return z


def simulate_parametrised(coeffs: CoefficientSpec, control: ParametrisedPath, noise: NoisePath | None,
                          flow: EmpiricalMeasureFlow | None = None, x0=None, ode_steps=16,
                          plateau_tol=0.0) -> ParametrisedPath:
    """Euler scheme for the time-changed SDE on the u-grid of ``control``.

    Off plateaus the step is ``b d rbar + sigma sqrt(d rbar) z + gamma d xibar``.
    On an ``rbar``-plateau the noise and drift vanish and the state follows
    the jump ODE along the linear ``xibar`` segment, integrated with RK4
    (``ode_steps`` per segment).  ``control.xbar`` is ignored.
    """
    z = _parametrised_inputs(coeffs, control, noise, 1)
    x = (np.zeros(coeffs.d) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float)))[None].copy()
    out = _parametrised_core(coeffs, control.xibar, control.rbar, z, flow, x, ode_steps, plateau_tol)
    return control.with_values(xbar=out[0])


def simulate_parametrised_ensemble(coeffs, control: ParametrisedPath, noise: NoisePath | None, n_paths,
                                   flow=None, x0=None, ode_steps=16, plateau_tol=0.0) -> np.ndarray:
    """State trajectories ``(n_paths, n_u, d)`` of particles sharing one parametrised control."""
    z = _parametrised_inputs(coeffs, control, noise, n_paths)
    x0 = np.zeros(coeffs.d) if x0 is None else np.asarray(x0, dtype=float)
    x = np.broadcast_to(x0, (n_paths, coeffs.d)).copy()
    return _parametrised_core(coeffs, control.xibar, control.rbar, z, flow, x, ode_steps, plateau_tol)


# ---------------------------------------------------------------- checkers


@dataclass(frozen=True)
class SampleBox:
    """Sampling region for the assumption checkers."""

    t: tuple = (0.0, 1.0)
    x: tuple = (-1.0, 1.0)
    xi: tuple = (0.0, 1.0)
    jump: tuple = (0.0, 1.0)


@dataclass
class PathIndependenceReport:
    passed: bool
    max_discrepancy: float
    conservativity_gap: float | None
    lipschitz_estimate: dict
    witness: dict | None
    n_samples: int


@dataclass
class MonotonicityReport:
    passed: bool
    violations: list
    n_samples: int


def _sample_point(rng, box, d, l):
    t = rng.uniform(*box.t)
    x = rng.uniform(*box.x, size=d)
    xi = rng.uniform(*box.xi, size=l)
    lo, hi = box.jump
    dxi = np.full(l, lo) if lo == hi else rng.uniform(lo, hi, size=l)
    return t, x, xi, xi + dxi


def random_staircase(rng, xi, xi_next, n_lattice=4):
    """Nodes of a random monotone lattice walk from ``xi`` to ``xi_next``."""
    l = len(xi)
    moves = rng.permutation(np.repeat(np.arange(l), n_lattice))
    step = (xi_next - xi) / n_lattice
    nodes = [xi.copy()]
    cur = xi.copy()
    for j in moves:
        cur = cur.copy()
        cur[j] += step[j]
        nodes.append(cur)
    nodes[-1] = xi_next.copy()
    return np.array(nodes)


def _lipschitz_probe(coeffs, rng, box, n_pairs=64, h=1e-3):
    d, l = coeffs.d, coeffs.l
    ex, exi = 0.0, 0.0
    for _ in range(n_pairs):
        t, x, xi, _ = _sample_point(rng, box, d, l)
        g0 = coeffs.eval_gamma(t, x[None], xi[None])[0]
        if d:
            dx = rng.standard_normal(d)
            dx *= h / np.linalg.norm(dx)
            ex = max(ex, np.linalg.norm(coeffs.eval_gamma(t, (x + dx)[None], xi[None])[0] - g0) / h)
        if l:
            dz = rng.standard_normal(l)
            dz *= h / np.linalg.norm(dz)
            exi = max(exi, np.linalg.norm(coeffs.eval_gamma(t, x[None], (xi + dz)[None])[0] - g0) / h)
    return {"x": float(ex), "xi": float(exi)}


def _conservativity_gap(coeffs, rng, box, n_samples, h=1e-5):
    """Max asymmetry of the finite-difference Jacobian ``d gamma_{r,i} / d xi_j``."""
    d, l = coeffs.d, coeffs.l
    if l < 2:
        return 0.0
    gap = 0.0
    eye = np.eye(l)
    for _ in range(n_samples):
        t, x, xi, _ = _sample_point(rng, box, d, l)
        jac = np.empty((d, l, l))
        for j in range(l):
            gp = coeffs.eval_gamma(t, x[None], (xi + h * eye[j])[None])[0]
            gm = coeffs.eval_gamma(t, x[None], (xi - h * eye[j])[None])[0]
            jac[:, :, j] = (gp - gm) / (2 * h)
        gap = max(gap, float(np.max(np.abs(jac - np.swapaxes(jac, 1, 2)))))
    return gap


def check_path_independence(coeffs: CoefficientSpec, box: SampleBox | None = None, n_samples=32,
                            tol=1e-6, seed=0, n_staircases=8, n_lattice=4, ode_steps=256,
                            conservativity_tol=1e-4) -> PathIndependenceReport:
    """Compare the linear-path jump map against random staircase paths.

    For state-independent ``gamma`` the symmetry of mixed finite differences
    (conservativity) is checked as well.
    """
    box = box or SampleBox()
    rng = stream(seed, "path-independence")
    d, l = coeffs.d, coeffs.l
    n_seg = l * n_lattice
    seg_steps = max(4, int(ode_steps) // n_seg)
    worst, witness = 0.0, None
    for _ in range(n_samples):
        t, x, xi, xn = _sample_point(rng, box, d, l)
        ref = jump_map_psi(t, x, xi, xn, coeffs, ode_steps)
        for _ in range(n_staircases):
            nodes = random_staircase(rng, xi, xn, n_lattice)
            y = flow_along(coeffs, t, x, nodes, seg_steps)
            err = float(np.max(np.abs(y - ref))) if d else 0.0
            if err > worst:
                worst = err
                witness = {"t": t, "x": x.tolist(), "xi": xi.tolist(), "xi_next": xn.tolist(),
                           "staircase": nodes.tolist(), "linear": ref.tolist(), "staircase_end": y.tolist()}
    gap = None
    passed = worst < tol
    if not coeffs.gamma_depends_on_x:
        gap = _conservativity_gap(coeffs, rng, box, n_samples)
        passed = passed and gap < conservativity_tol
    return PathIndependenceReport(passed, worst, gap, _lipschitz_probe(coeffs, rng, box), witness, n_samples)


def check_jump_monotonicity(coeffs: CoefficientSpec, samples=32, tol=1e-9, seed=0, box: SampleBox | None = None,
                            n_staircases=2, ode_steps=256) -> MonotonicityReport:
    """Verify each state component moves monotonically along sampled jump paths."""
    box = box or SampleBox()
    rng = stream(seed, "jump-monotonicity")
    d, l = coeffs.d, coeffs.l
    violations = []
    for _ in range(samples):
        t, x, xi, xn = _sample_point(rng, box, d, l)
        paths = [np.vstack([xi, xn])] + [random_staircase(rng, xi, xn) for _ in range(n_staircases)]
        for nodes in paths:
            steps = max(4, int(ode_steps) // (len(nodes) - 1))
            _, trace = flow_along(coeffs, t, x, nodes, steps, record=True)
            inc = np.diff(trace, axis=0)
            for r in range(d):
                up, down = inc[:, r] > tol, inc[:, r] < -tol
                if up.any() and down.any():
                    first = np.flatnonzero(up | down)[0]
                    opposite = down if up[first] else up
                    later = np.flatnonzero(opposite[first:])[0] + first
                    violations.append({"t": t, "x": x.tolist(), "xi": xi.tolist(), "xi_next": xn.tolist(),
                                       "component": r, "reversal_step": int(later),
                                       "path": nodes.tolist()})
                    break
    return MonotonicityReport(len(violations) == 0, violations, samples)
