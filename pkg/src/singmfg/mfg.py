"""Bounded-velocity mean-field games on a lattice and damped Picard iteration.

The best response to a flow is computed by backward dynamic programming on a
``(t, x, xi)`` lattice for ``d = l = m = 1``.  The control velocity takes
values in ``K * action_levels``.  Levels must be integer multiples of the
smallest positive level ``h``, and the control lattice step is
``h * K * dt``, so control increments land on nodes exactly.  The diffusion
is a trinomial chain centred at the nearest node to the drifted state.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CoverageError, ParameterError
from .flow import EmpiricalMeasureFlow, wasserstein2_empirical
from .marcus import CoefficientSpec, SampleBox, build_coefficients, check_jump_monotonicity, check_path_independence
from .reparam import arctan_time_change, parametrise_with_timescale
from .reward import RewardSpec, build_reward, reward_continuous, reward_parametrised, reward_singular
from .streams import stream
from .wm1 import wm1_distance

TIE_TOL = 1e-12
COVERAGE_SIGMAS = 6.0


@dataclass(frozen=True, eq=False)
class MFGProblem:
    coeffs: CoefficientSpec
    reward: RewardSpec
    x0: float
    T: float
    name: str = ""

    @property
    def d(self):
        return self.coeffs.d

    @property
    def l(self):
        return self.coeffs.l

    @property
    def m(self):
        return self.coeffs.m

    def assumption_report(self, seed=0) -> dict:
        """Run the structural checkers; ``in_scope`` is False if any fails."""
        box = SampleBox(t=(0.0, self.T))
        pi = check_path_independence(self.coeffs, box, n_samples=8, seed=seed)
        mono = check_jump_monotonicity(self.coeffs, samples=8, seed=seed, box=box)
        growth = self.reward.p > 2
        return {"path_independence": pi.passed, "jump_monotonicity": mono.passed, "growth": growth,
                "in_scope": bool(pi.passed and mono.passed and growth)}


@dataclass(frozen=True)
class LatticeSpec:
    n_t: int
    x_min: float
    x_max: float
    n_x: int
    xi_max: float | None = None
    action_levels: tuple = (0.0, 0.5, 1.0)

    def __post_init__(self):
        levels = np.asarray(self.action_levels, dtype=float)
        if levels[0] != 0 or np.any(np.diff(levels) <= 0) or levels[-1] > 1:
            raise ParameterError("action levels must increase from 0 and stay within [0, 1]")
        if self.n_t < 1 or self.n_x < 3 or not self.x_max > self.x_min:
            raise ParameterError("lattice needs n_t >= 1, n_x >= 3 and x_max > x_min")

    @property
    def unit(self) -> float:
        return float(np.min(np.asarray(self.action_levels)[1:])) if len(self.action_levels) > 1 else 1.0

    def multiples(self) -> np.ndarray:
        q = np.asarray(self.action_levels) / self.unit
        if np.any(np.abs(q - np.rint(q)) > 1e-9):
            raise ParameterError("action levels must be integer multiples of the smallest positive level")
        return np.rint(q).astype(int)

    def grids(self, K, T):
        dt = T / self.n_t
        times = np.linspace(0.0, T, self.n_t + 1)
        x = np.linspace(self.x_min, self.x_max, self.n_x)
        dxi = self.unit * K * dt
        xi_top = K * T if self.xi_max is None else min(self.xi_max, K * T)
        n_xi = int(np.floor(xi_top / dxi + 1e-9)) + 1
        return times, x, dxi * np.arange(n_xi)

    def scaled(self, factor) -> "LatticeSpec":
        return replace(self, n_t=int(round(self.n_t * factor)))


@dataclass(frozen=True, eq=False)
class BoundedVelocityPolicy:
    """Greedy action indices ``actions[i, j, k]`` on the lattice and value tables."""

    times: np.ndarray
    x_grid: np.ndarray
    xi_grid: np.ndarray
    actions: np.ndarray
    values: np.ndarray
    levels: np.ndarray
    K: float
    info: dict = field(default_factory=dict)

    @property
    def velocities(self):
        return self.K * self.levels

    def x_index(self, x):
        dx = self.x_grid[1] - self.x_grid[0]
        j = np.rint((np.asarray(x) - self.x_grid[0]) / dx).astype(int)
        return np.clip(j, 0, len(self.x_grid) - 1), (j < 0) | (j >= len(self.x_grid))

    def xi_index(self, xi):
        if len(self.xi_grid) == 1:
            return np.zeros(np.shape(xi), dtype=int)
        dxi = self.xi_grid[1] - self.xi_grid[0]
        return np.clip(np.rint(np.asarray(xi) / dxi).astype(int), 0, len(self.xi_grid) - 1)

    def value_at(self, x, xi=0.0, i=0) -> float:
        j, _ = self.x_index(np.atleast_1d(x))
        k = self.xi_index(np.atleast_1d(xi))
        return float(self.values[i, j[0], k[0]])

    def velocity(self, i, x, xi):
        j, _ = self.x_index(x)
        return self.velocities[self.actions[i, j, self.xi_index(xi)]]


@dataclass
class EquilibriumResult:
    flow: EmpiricalMeasureFlow
    policy: BoundedVelocityPolicy
    residual_history: list
    reward_at_equilibrium: float
    optimality_gap: float
    K: float
    seed: int
    status: str
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


# ------------------------------------------------------------ best response


def _scalar_coeffs(problem, t, mu, x, xi):
    X, XI = x[:, None], xi[:, None]
    c = problem.coeffs
    b = c.eval_b(t, mu, X, XI)[:, 0]
    s = c.eval_sigma(t, mu, X, XI)[:, 0, 0] if c.m else np.zeros(len(x))
    g = c.eval_gamma(t, X, XI)[:, 0, 0]
    return b, s, g


def required_range(problem: MFGProblem, K, lattice: LatticeSpec):
    """State interval covering ``6`` standard deviations plus the controlled drift."""
    x0 = np.array([[problem.x0]])
    zero = np.zeros((1, 1))
    b, s, g = _scalar_coeffs(problem, 0.0, None, x0[:, 0], zero[:, 0])
    reach = min(K * problem.T, lattice.xi_max if lattice.xi_max is not None else K * problem.T)
    spread = COVERAGE_SIGMAS * abs(s[0]) * np.sqrt(problem.T)
    lo = problem.x0 - spread + min(0.0, b[0] * problem.T) + min(0.0, g[0] * reach)
    hi = problem.x0 + spread + max(0.0, b[0] * problem.T) + max(0.0, g[0] * reach)
    return float(lo), float(hi)


def _check_dims(problem):
    if (problem.d, problem.l) != (1, 1) or problem.m > 1:
        raise ParameterError("the lattice solver handles d = l = 1 and m <= 1")


def best_response_bounded(flow: EmpiricalMeasureFlow | None, problem: MFGProblem, K, lattice: LatticeSpec,
                          check_coverage=True) -> BoundedVelocityPolicy:
    """Backward DP for the ``K``-bounded velocity control problem against ``flow``."""
    _check_dims(problem)
    if not K > 0:
        raise ParameterError("K must be positive")
    if check_coverage:
        lo, hi = required_range(problem, K, lattice)
        if lo < lattice.x_min or hi > lattice.x_max:
            raise CoverageError(f"state lattice [{lattice.x_min}, {lattice.x_max}] does not cover [{lo:.4g}, {hi:.4g}]",
                                suggested_bounds=(lo, hi))
    times, xg, xig = lattice.grids(K, problem.T)
    dt, dx = times[1] - times[0], xg[1] - xg[0]
    mult = lattice.multiples()
    levels = np.asarray(lattice.action_levels, dtype=float)
    nx, nxi, n_t = len(xg), len(xig), lattice.n_t
    XX, ZZ = np.meshgrid(xg, xig, indexing="ij")
    xf, zf = XX.ravel(), ZZ.ravel()
    jj = np.repeat(np.arange(nx), nxi)
    kk = np.tile(np.arange(nxi), nx)

    V = np.empty((n_t + 1, nx, nxi))
    A = np.zeros((n_t, nx, nxi), dtype=np.int8)
    muT = None if flow is None else flow.marginal(problem.T)
    V[-1] = problem.reward.eval_g(muT, xf[:, None], zf[:, None]).reshape(nx, nxi)
    clipped = 0
    for i in range(n_t - 1, -1, -1):
        t = times[i]
        mu = None if flow is None else flow.marginal(t)
        b, s, g = _scalar_coeffs(problem, t, mu, xf, zf)
        f = problem.reward.eval_f(t, mu, xf[:, None], zf[:, None])
        c = problem.reward.eval_c(t, xf[:, None], zf[:, None])[:, 0]
        v = s**2 * dt / dx**2
        Vn = V[i + 1]
        best = np.full(len(xf), -np.inf)
        best_a = np.zeros(len(xf), dtype=np.int8)
        for a, (lev, q) in enumerate(zip(levels, mult)):
            u = K * lev
            k2 = kk + q
            feasible = k2 < nxi
            k2 = np.minimum(k2, nxi - 1)
            sft = (b + g * u) * dt / dx
            shift = np.rint(sft)
            e = sft - shift
            psum = np.maximum(v + e**2, np.abs(e))
            if np.any(psum > 1 + 1e-12):
                raise ParameterError("trinomial probabilities invalid: refine the time step or widen dx")
            pu, pd = 0.5 * (psum + e), 0.5 * (psum - e)
            jc = jj + shift.astype(int)
            ju, jm, jd = jc + 1, jc, jc - 1
            clipped += int(np.sum(feasible & ((jd < 0) | (ju >= nx))))
            ju, jm, jd = (np.clip(z, 0, nx - 1) for z in (ju, jm, jd))
            ev = pu * Vn[ju, k2] + (1 - psum) * Vn[jm, k2] + pd * Vn[jd, k2]
            q_val = np.where(feasible, (f - c * u) * dt + ev, -np.inf)
            if a == 0:
                better = np.ones(len(xf), dtype=bool)
            else:
                slack = TIE_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(best), best, 0.0)))
                better = q_val > best + slack
            best = np.where(better, q_val, best)
            best_a = np.where(better, a, best_a).astype(np.int8)
        V[i] = best.reshape(nx, nxi)
        A[i] = best_a.reshape(nx, nxi)
    return BoundedVelocityPolicy(times, xg, xig, A, V, levels, float(K), {"edge_transitions": clipped})


# ---------------------------------------------------------------- rollout


def rollout_noise(seed, M, n_t):
    return stream(seed, "rollout").standard_normal((M, n_t))


def rollout_policy(policy: BoundedVelocityPolicy, problem: MFGProblem, flow: EmpiricalMeasureFlow | None, M,
                   seed, noise=None) -> EmpiricalMeasureFlow:
    """Euler particles driven by the nearest-node feedback policy.

    The same ``seed`` always yields the same Gaussian draws (common random
    numbers across Picard iterations).  Lattice exits are counted in
    ``info["clipped"]``.
    """
    _check_dims(problem)
    times = policy.times
    n_t = len(times) - 1
    z = rollout_noise(seed, M, n_t) if noise is None else noise
    X = np.full(M, float(problem.x0))
    XI = np.zeros(M)
    out = np.empty((M, n_t + 1, 2))
    out[:, 0, 0], out[:, 0, 1] = X, XI
    clipped = 0
    for i in range(n_t):
        t, dt = times[i], times[i + 1] - times[i]
        mu = None if flow is None else flow.marginal(t)
        j, off = policy.x_index(X)
        clipped += int(off.sum())
        u = policy.velocities[policy.actions[i, j, policy.xi_index(XI)]]
        b, s, g = _scalar_coeffs(problem, t, mu, X, XI)
        X = X + (b + g * u) * dt + s * np.sqrt(dt) * z[:, i]
        XI = XI + u * dt
        out[:, i + 1, 0], out[:, i + 1, 1] = X, XI
    return EmpiricalMeasureFlow(times, out, d=1, info={"clipped": clipped, "clipped_fraction": clipped / (M * n_t)})


def constant_policy_flow(problem, K, lattice, M, seed, level_index=0):
    """Rollout of the constant action ``action_levels[level_index]``."""
    times, xg, xig = lattice.grids(K, problem.T)
    A = np.full((lattice.n_t, len(xg), len(xig)), level_index, dtype=np.int8)
    pol = BoundedVelocityPolicy(times, xg, xig, A, np.zeros((lattice.n_t + 1, len(xg), len(xig))),
                                np.asarray(lattice.action_levels, dtype=float), float(K))
    return rollout_policy(pol, problem, None, M, seed)


def resample_flow(flow: EmpiricalMeasureFlow, times) -> EmpiricalMeasureFlow:
    """Particle paths of ``flow`` evaluated on a new grid (linear in between)."""
    times = np.asarray(times, dtype=float)
    vals = np.stack([flow.marginal(t).points for t in times], axis=1)
    return EmpiricalMeasureFlow(times, vals, weights=flow.weights, d=flow.d)


def mix_flows(old: EmpiricalMeasureFlow, new: EmpiricalMeasureFlow, lam, rng) -> EmpiricalMeasureFlow:
    """Index-aligned resampling of ``(1 - lam) old + lam new``."""
    pick = rng.random(new.M) < lam
    vals = np.where(pick[:, None, None], new.values, old.values)
    return EmpiricalMeasureFlow(new.times, vals, d=new.d, info={"from_new": int(pick.sum())})


def flow_residual(a: EmpiricalMeasureFlow, b: EmpiricalMeasureFlow, n_projections=64, seed=0) -> float:
    return max(wasserstein2_empirical(a.marginal(t), b.marginal(t), n_projections, seed) for t in b.times)


def population_reward(flow: EmpiricalMeasureFlow, particles: EmpiricalMeasureFlow, problem: MFGProblem) -> float:
    """Reward of the particle law ``particles`` against the population flow ``flow``."""
    return reward_continuous(flow, particles.paths(), problem.reward)


# ---------------------------------------------------------------- Picard


def picard_fixed_point(problem: MFGProblem, K, lattice: LatticeSpec, damping=0.5, tol=1e-6, max_iter=50, M=1024,
                       seed=0, init_flow: EmpiricalMeasureFlow | None = None, n_projections=64,
                       schedule="constant") -> EquilibriumResult:
    """Damped Picard iteration ``mu <- (1 - lam) mu + lam Phi(mu)`` with ``Phi = rollout o best response``.

    The first step is undamped so that a measure-independent problem
    reaches its fixed point after one step and is certified by the second.
    The residual is the largest marginal W2 distance between consecutive
    iterates over the lattice times.

    ``schedule="harmonic"`` uses ``lam_k = 1 / (1 / damping + k - 1)``, a
    fictitious-play average.  It converges where a discrete best response
    flips between near-indifferent actions and a constant weight would cycle.
    """
    if not 0 < damping <= 1:
        raise ParameterError("damping must lie in (0, 1]")
    if schedule not in ("constant", "harmonic"):
        raise ParameterError(f"unknown damping schedule {schedule!r}")
    times, _, _ = lattice.grids(K, problem.T)
    if init_flow is None:
        flow = constant_policy_flow(problem, K, lattice, M, seed)
    else:
        flow = resample_flow(init_flow, times) if len(init_flow.times) != len(times) or np.any(init_flow.times != times) \
            else init_flow
    history = []
    status = "max_iter"
    policy = None
    for it in range(max_iter):
        policy = best_response_bounded(flow, problem, K, lattice)
        new = rollout_policy(policy, problem, flow, M, seed)
        if it == 0:
            lam = 1.0
        elif schedule == "harmonic":
            lam = 1.0 / (1.0 / damping + it - 1)
        else:
            lam = damping
        mixed = mix_flows(flow, new, lam, stream(seed, "mix", it)) if lam < 1 else new
        res = flow_residual(flow, mixed, n_projections, seed)
        history.append(float(res))
        flow = mixed
        if not np.isfinite(res):
            status = "diverged"
            break
        if res < tol:
            status = "converged"
            break
    # certificate: best response to the final flow, common random numbers
    br = best_response_bounded(flow, problem, K, lattice)
    br_flow = rollout_policy(br, problem, flow, M, seed)
    j_eq = population_reward(flow, flow, problem)
    j_br = population_reward(flow, br_flow, problem)
    info = {"iterations": len(history), "br_value": br.value_at(problem.x0),
            "clipped_fraction": br_flow.info["clipped_fraction"], "best_response_reward": j_br}
    return EquilibriumResult(flow, br, history, float(j_eq), float(j_br - j_eq), float(K), int(seed), status, info)


# ---------------------------------------------------------------- K-ladder


@dataclass
class LadderResult:
    rungs: list
    K_schedule: list
    moments: list
    wm1_distances: list
    rewards: list
    parametrisations: list = field(repr=False, default_factory=list)
    halted: bool = False
    equality: dict = field(default_factory=dict)


def moment_track(flow: EmpiricalMeasureFlow, p=3.0) -> float:
    """``E[sup_t |X_t|^p + |xi_T|^p]`` over the particles."""
    d = flow.d
    sup_x = np.max(np.linalg.norm(flow.values[:, :, :d], axis=2), axis=1)
    xi_T = np.linalg.norm(flow.values[:, -1, d:], axis=1)
    return float(np.mean(sup_x**p + xi_T**p))


def ensemble_wm1(a: EmpiricalMeasureFlow, b: EmpiricalMeasureFlow, n_paths=32, resolution=256) -> float:
    """Mean WM1 bound between index-matched particle paths of two flows."""
    n = min(n_paths, a.M, b.M)
    return float(np.mean([wm1_distance(a.path(i), b.path(i), resolution) for i in range(n)]))


def arctan_parametrise_flow(flow: EmpiricalMeasureFlow, n_paths=None, coeffs=None) -> list:
    """Arctan-clock parametrisation of the first ``n_paths`` particle paths."""
    n = flow.M if n_paths is None else min(n_paths, flow.M)
    out = []
    for i in range(n):
        path = flow.path(i)
        out.append(parametrise_with_timescale(path, arctan_time_change(path, subdivide=1), coeffs=coeffs))
    return out


def k_ladder(problem: MFGProblem, K_schedule, lattice: LatticeSpec, scale_time=True, damping=0.5, tol=1e-6,
             max_iter=50, M=1024, seed=0, p=3.0, n_wm1=32, n_param=64, wm1_resolution=256,
             schedule="constant") -> LadderResult:
    """Picard equilibria along increasing ``K`` with warm starts.

    With ``scale_time`` the number of time steps grows proportionally to
    ``K`` so the control lattice step stays fixed across rungs.
    """
    K_schedule = list(K_schedule)
    if any(b <= a for a, b in zip(K_schedule[:-1], K_schedule[1:])):
        raise ParameterError("K schedule must be increasing")
    rungs, moments, dists, rewards = [], [], [], []
    flow = None
    halted = False
    for r, K in enumerate(K_schedule):
        lat = lattice.scaled(K / K_schedule[0]) if scale_time else lattice
        res = picard_fixed_point(problem, K, lat, damping, tol, max_iter, M, seed, init_flow=flow, schedule=schedule)
        rungs.append(res)
        moments.append(moment_track(res.flow, p))
        rewards.append(res.reward_at_equilibrium)
        if r > 0:
            dists.append(ensemble_wm1(rungs[-2].flow, res.flow, n_wm1, wm1_resolution))
        flow = res.flow
        if not res.converged:
            halted = True
            break
    final = rungs[-1].flow
    params = arctan_parametrise_flow(final, n_param, problem.coeffs)
    sub = EmpiricalMeasureFlow(final.times, final.values[: len(params)], d=final.d)
    j_sing = reward_singular(final, sub.paths(), problem.reward, problem.coeffs)
    j_par = reward_parametrised(final, params, problem.reward)
    equality = {"reward_singular": float(j_sing), "reward_parametrised": float(j_par),
                "abs_diff": float(abs(j_sing - j_par))}
    return LadderResult(rungs, K_schedule[: len(rungs)], moments, dists, rewards, params, halted, equality)


# ------------------------------------------------------------------- toys


def analytic_toy(cost=0.1, target=1.0, T=1.0) -> MFGProblem:
    """``b = sigma = 0``, ``gamma = 1``, ``f = 0``, ``g = -(x - target)^2``, constant cost."""
    coeffs = build_coefficients(1, 1, 0, gamma="constant_gamma")
    reward = build_reward(1, 1, g="quadratic_g", g_params={"target": target}, c="constant_c",
                          c_params={"value": cost})
    return MFGProblem(coeffs, reward, 0.0, T, "analytic-toy")


def analytic_toy_optimum(cost=0.1, target=1.0):
    """Closed-form maximiser and value of ``-(xi - target)^2 - cost * xi``."""
    xi = target - cost / 2
    return xi, -((xi - target) ** 2) - cost * xi


def crowd_toy(sigma=0.2, cost=0.05, crowd=1.0, target=1.0, T=1.0) -> MFGProblem:
    """Crowd aversion ``f = -crowd (x - mean)^2`` with terminal target ``-(x - target)^2``."""
    coeffs = build_coefficients(1, 1, 1, sigma="constant_sigma", sigma_params={"s": sigma}, gamma="constant_gamma")
    reward = build_reward(1, 1, f="crowd_f", f_params={"scale": crowd}, g="quadratic_g",
                          g_params={"target": target}, c="constant_c", c_params={"value": cost})
    return MFGProblem(coeffs, reward, 0.0, T, "crowd-toy")


def ladder_toy(sigma=0.1, cost=1.0, late=0.1, crowd=0.1, target=1.0, T=1.0) -> MFGProblem:
    """Reward for acting at once: terminal ``-(xi_T - target)^2``, a running
    penalty ``-late (x - target)^2`` for the state lagging behind, and mild
    crowd aversion."""
    coeffs = build_coefficients(1, 1, 1, sigma="constant_sigma", sigma_params={"s": sigma}, gamma="constant_gamma")
    reward = build_reward(1, 1, f="ladder_f", f_params={"late": late, "crowd": crowd, "target": target},
                          g="control_target_g", g_params={"target": target}, c="constant_c",
                          c_params={"value": cost})
    return MFGProblem(coeffs, reward, 0.0, T, "ladder-toy")
