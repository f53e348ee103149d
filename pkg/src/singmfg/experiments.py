"""Named reproduction experiments.

Every experiment takes validated parameters and a master seed, returns an
:class:`ExperimentResult` holding named checks, scalar metrics, CSV tracks
and serialised paths, and can write them to a run directory.  Timings are
kept out of ``summary.json`` so that equal configs give identical summaries.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import ConfigError
from .flow import EmpiricalMeasureFlow
from .jumpcost import JumpCostProblem, linear_interp_cost, min_jump_cost
from .marcus import (NoisePath, SampleBox, build_coefficients, check_path_independence, jump_map_psi, marcus_integrate,
                     registered, simulation_grid)
from .mfg import (LatticeSpec, MFGProblem, analytic_toy, analytic_toy_optimum, crowd_toy, k_ladder, ladder_toy,
                  picard_fixed_point)
from .paths import CadlagPath, ParametrisedPath, apply_S, check_domain_S, dumps_path, sup_distance
from .reparam import (LipschitzBudget, arctan_time_change, clock_lipschitz, empirical_lipschitz, gronwall_probe,
                      lipschitz_reparametrise, parametrise_with_timescale, perturb_timescale)
from .reward import build_reward, registered_rewards, reward_continuous, reward_parametrised, reward_singular
from .streams import stream
from .wm1 import wm1_distance

# ------------------------------------------------------------------ results


@dataclass
class Check:
    name: str
    value: float
    bound: object
    op: str
    passed: bool

    def to_record(self) -> dict:
        return {"name": self.name, "value": _plain(self.value), "bound": _plain(self.bound), "op": self.op,
                "passed": bool(self.passed)}


def _check(name, value, op, bound) -> Check:
    v = float(value) if not isinstance(value, (bool, np.bool_)) else bool(value)
    if op == "<=":
        ok = v <= bound
    elif op == "<":
        ok = v < bound
    elif op == ">":
        ok = v > bound
    elif op == ">=":
        ok = v >= bound
    elif op == "in":
        ok = bound[0] <= v <= bound[1]
    elif op == "is":
        ok = v is bound
    else:
        raise ValueError(f"unknown comparison {op!r}")
    return Check(name, v, bound, op, bool(ok) and (isinstance(v, bool) or math.isfinite(v)))


@dataclass
class ExperimentResult:
    name: str
    seed: int
    params: dict
    checks: list
    metrics: dict = field(default_factory=dict)
    tracks: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> dict:
        return {"experiment": self.name, "seed": self.seed, "params": _plain(self.params),
                "passed": self.passed, "checks": [c.to_record() for c in self.checks],
                "metrics": _plain(self.metrics)}

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        (out / "tracks").mkdir(parents=True, exist_ok=True)
        (out / "paths").mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        for name, (header, rows) in self.tracks.items():
            with open(out / "tracks" / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows([[_plain(v) for v in row] for row in rows])
        for name, items in self.paths.items():
            (out / "paths" / f"{name}.txt").write_text("".join(dumps_path(p) + "\n" for p in items))
        (out / "timing.json").write_text(json.dumps({"elapsed_seconds": self.elapsed}) + "\n")
        return out


def _plain(v):
    """JSON-ready copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if hasattr(v, "to_json"):
        return v.to_json()
    return v


# --------------------------------------------------------------- parameters


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TermConfig(_Params):
    name: str
    params: dict = Field(default_factory=dict)


class LatticeConfig(_Params):
    n_t: int = Field(gt=0)
    x_min: float
    x_max: float
    n_x: int = Field(ge=3)
    xi_max: float | None = None
    action_levels: list[float] = [0.0, 0.5, 1.0]

    def build(self) -> LatticeSpec:
        return LatticeSpec(self.n_t, self.x_min, self.x_max, self.n_x, self.xi_max, tuple(self.action_levels))


class ProblemConfig(_Params):
    """A one-dimensional MFG assembled from registry entries."""

    T: float = Field(1.0, gt=0)
    x0: float = 0.0
    b: TermConfig = TermConfig(name="zero_b")
    sigma: TermConfig = TermConfig(name="zero_sigma")
    gamma: TermConfig = TermConfig(name="constant_gamma")
    f: TermConfig = TermConfig(name="zero_f")
    g: TermConfig = TermConfig(name="zero_g")
    c: TermConfig = TermConfig(name="zero_c")
    p: float = 3.0

    def registry_errors(self) -> list[str]:
        errs = []
        for kind in ("b", "sigma", "gamma"):
            if getattr(self, kind).name not in registered(kind):
                errs.append(f"unknown {kind} coefficient {getattr(self, kind).name!r}")
        for kind in ("f", "g", "c"):
            if getattr(self, kind).name not in registered_rewards(kind):
                errs.append(f"unknown {kind} reward term {getattr(self, kind).name!r}")
        return errs

    def build(self, name="configured") -> MFGProblem:
        errs = self.registry_errors()
        if errs:
            raise ConfigError("; ".join(errs))
        coeffs = build_coefficients(1, 1, 1, b=self.b.name, sigma=self.sigma.name, gamma=self.gamma.name,
                                    b_params=self.b.params, sigma_params=self.sigma.params,
                                    gamma_params=self.gamma.params)
        reward = build_reward(1, 1, f=self.f.name, g=self.g.name, c=self.c.name, f_params=self.f.params,
                              g_params=self.g.params, c_params=self.c.params, p=self.p)
        return MFGProblem(coeffs, reward, self.x0, self.T, name)


class ChatteringParams(_Params):
    ns: list[int] = [10, 100, 1000]
    lattice_steps: int = Field(64, gt=0)
    window: list[float] = [0.49, 0.51]
    charge_tol: float = 1e-3
    approx_tol: float = 0.02


class MarcusGeometricParams(_Params):
    x: float = 2.0
    ode_steps: int = Field(256, gt=0)
    psi_tol: float = 1e-6
    n_ramp: int = Field(100, gt=0)
    n_steps: int = Field(10_000, gt=0)
    ramp_rel_tol: float = 0.01
    discrepancy_min: float = 0.5


class PathIndependenceParams(_Params):
    n_samples: int = Field(32, gt=0)
    n_staircases: int = Field(8, gt=0)
    tol: float = 1e-6
    fail_threshold: float = 0.1


class JumpCostParams(_Params):
    lattice_steps: list[int] = [16, 32, 64, 128]
    zero_tol: float = 1e-9
    linear_target: float = 0.5
    linear_tol: float = 1e-3


class RewardEqualityParams(_Params):
    n_controls: int = Field(20, gt=0)
    max_jumps: int = Field(2, ge=1)
    n_steps: int = Field(200, gt=0)
    rel_tol: float = 0.02
    lattice_steps: int = Field(64, gt=0)


class LipschitzLadderParams(_Params):
    n_pairs: int = Field(500, gt=0)
    resolution: int = Field(2048, gt=1)
    slack: float = 0.01
    grid_points: int = Field(41, ge=8)
    n_reparam: int = Field(50, gt=0)
    epsilons: list[float] = [0.1, 0.5, 2.0]
    deltas: list[float] = [0.01, 0.1, 0.5]
    n_clock: int = Field(50, gt=0)
    clock_slack: float = 1e-9
    gronwall_paths: int = Field(256, gt=0)


class MFGToyParams(_Params):
    cost: float = 0.1
    K: float = 1.0
    M: int = Field(256, gt=0)
    tol: float = 1e-6
    max_iter: int = Field(10, gt=0)
    value_tol: float = 5e-3
    lattice: LatticeConfig = LatticeConfig(n_t=100, x_min=-0.5, x_max=1.5, n_x=401)
    variant_lattice: LatticeConfig = LatticeConfig(n_t=50, x_min=-1.5, x_max=3.5, n_x=126, xi_max=2.0)
    variant_max_iterations: int = 2


class MFGCrowdParams(_Params):
    K: float = 2.0
    M: int = Field(4096, gt=0)
    damping: float = Field(0.5, gt=0, le=1)
    schedule: Literal["constant", "harmonic"] = "harmonic"
    tol: float = 2e-4
    max_iter: int = Field(400, gt=0)
    residual_target: float = 1e-3
    gap_target: float = 2e-3
    start: int = 3
    n_blocks: int = Field(6, ge=2)
    lattice: LatticeConfig = LatticeConfig(n_t=50, x_min=-1.5, x_max=3.5, n_x=126, xi_max=2.0)
    problem: ProblemConfig | None = None


class KLadderParams(_Params):
    K_schedule: list[float] = [1.0, 2.0, 4.0, 8.0, 16.0]
    M: int = Field(2048, gt=0)
    damping: float = Field(0.5, gt=0, le=1)
    schedule: Literal["constant", "harmonic"] = "harmonic"
    tol: float = 1e-3
    max_iter: int = Field(300, gt=0)
    p: float = 3.0
    moment_ratio: float = 1.1
    cauchy_tol: float = 0.02
    equality_tol: float = 1e-3
    n_param: int = Field(64, gt=0)
    lattice: LatticeConfig = LatticeConfig(n_t=10, x_min=-1.0, x_max=2.5, n_x=71, xi_max=1.5)
    problem: ProblemConfig | None = None


# -------------------------------------------------------------- experiments


def _step_control(T, t_jump, size, l=1, initial=0.0):
    """Control with one jump of ``size`` at ``t_jump`` (an arbitrary stamp is added if needed)."""
    size = np.broadcast_to(np.asarray(size, dtype=float), (l,))
    init = np.full(l, float(initial))
    if t_jump == 0.0:
        return CadlagPath.from_values([0.0, T], [init + size, init + size], initial=init,
                                      jumps={0.0: init})
    return CadlagPath.from_values([0.0, t_jump, T], [init, init + size, init + size], initial=init,
                                  jumps={t_jump: init})


def _ramp_control(n, t_end=1.0, T=2.0, cells=None):
    """``0 v n (t - t_end + 1/n) ^ 1`` sampled at its kinks and ``cells`` interior points."""
    cells = n if cells is None else cells
    ramp = t_end - 1.0 / n + np.arange(cells + 1) / (n * cells)
    times = np.concatenate([[0.0], ramp, [T]])
    vals = np.clip(n * (times - t_end + 1.0 / n), 0.0, 1.0)
    return CadlagPath.from_values(times, vals[:, None])


def _with_state(control: CadlagPath, d=1, x=0.0):
    """Prepend a constant state column so that ``control`` becomes an ``(X, xi)`` path."""
    col = np.full((len(control.times), d), float(x))
    return CadlagPath(control.times, np.hstack([col, control.values]), np.hstack([col, control.left]), d)


def exp_chattering(prm: ChatteringParams, seed, pool) -> ExperimentResult:
    """Ramp family against its limit jump with ``c = xi`` and ``f = g = 0``."""
    spec = build_reward(0, 1, c="control_c")
    coeffs = build_coefficients(0, 1, 0)
    T = 2.0
    rows, values = [], []
    for n in prm.ns:
        v = -reward_continuous(None, [_ramp_control(n, T=T)], spec)
        values.append(v)
        rows.append([n, v, abs(v - 0.5)])
    limit = _step_control(T, 1.0, 1.0)
    naive = float(np.sum(limit.left[:, 0] * (limit.values[:, 0] - limit.left[:, 0])))
    charge = -reward_singular(None, [limit], spec, coeffs, lattice_steps=prm.lattice_steps)
    errs = [abs(v - 0.5) for v in values]
    checks = []
    if 100 in prm.ns:
        checks.append(_check("ramp_n100_in_window", values[prm.ns.index(100)], "in", tuple(prm.window)))
    checks += [
        _check("refinement_monotone", all(b < a for a, b in zip(errs[:-1], errs[1:])), "is", True),
        _check("naive_jump_charge", abs(naive), "<=", 1e-15),
        _check("min_jump_cost_charge", abs(charge - 0.5), "<=", prm.charge_tol),
    ]
    if 100 in prm.ns:
        checks.append(_check("approximation_consistency", abs(values[prm.ns.index(100)] - charge), "<=",
                             prm.approx_tol))
    metrics = {"ramp_integrals": dict(zip(map(str, prm.ns), values)), "naive_jump_charge": naive,
               "min_jump_cost_charge": charge}
    return ExperimentResult("chattering", seed, prm.model_dump(), checks, metrics,
                            {"chattering": (["n", "integral", "error"], rows)},
                            {"limit_control": [limit], "ramp_n10": [_ramp_control(10, T=T)]})


def exp_marcus_geometric(prm: MarcusGeometricParams, seed, pool) -> ExperimentResult:
    """Geometric jump response ``gamma = x`` against its continuous ramp approximation."""
    coeffs = build_coefficients(1, 1, 0, gamma="geometric_gamma")
    psi = float(jump_map_psi(0.0, [prm.x], [0.0], [1.0], coeffs, prm.ode_steps)[0])
    exact = prm.x * math.e
    T = 2.0
    ramp = _ramp_control(prm.n_ramp, T=T, cells=1)
    grid = simulation_grid(T, prm.n_steps, ramp, all_stamps=True)
    sol_ramp = marcus_integrate(coeffs, ramp, None, x0=[1.0], grid=grid)
    x_ramp = float(sol_ramp.values[-1, 0])
    step = _step_control(T, 1.0, 1.0)
    grid_s = simulation_grid(T, 200, step)
    sol_step = marcus_integrate(coeffs, step, None, x0=[1.0], grid=grid_s)
    x_marcus = float(sol_step.values[-1, 0])
    x_naive = float(marcus_integrate(coeffs, step, None, x0=[1.0], grid=grid_s, jump_rule="stieltjes").values[-1, 0])
    checks = [
        _check("psi_equals_2e", abs(psi - exact), "<=", prm.psi_tol),
        _check("ramp_terminal_rel_error", abs(x_ramp - math.e) / math.e, "<=", prm.ramp_rel_tol),
        _check("marcus_step_equals_e", abs(x_marcus - math.e), "<=", prm.psi_tol),
        _check("stieltjes_step_equals_2", abs(x_naive - 2.0), "<=", 1e-12),
        _check("discrepancy_detected", abs(x_marcus - x_naive), ">", prm.discrepancy_min),
    ]
    metrics = {"psi": psi, "psi_exact": exact, "ramp_terminal": x_ramp, "marcus_step_terminal": x_marcus,
               "stieltjes_step_terminal": x_naive}
    rows = [["psi", psi, exact], ["ramp", x_ramp, math.e], ["marcus_step", x_marcus, math.e],
            ["stieltjes_step", x_naive, 2.0]]
    return ExperimentResult("marcus-geometric", seed, prm.model_dump(), checks, metrics,
                            {"terminal_states": (["case", "value", "reference"], rows)},
                            {"marcus_step": [sol_step], "ramp": [sol_ramp]})


def exp_path_independence(prm: PathIndependenceParams, seed, pool) -> ExperimentResult:
    """Checker audit on path-independent fields and on the crossed counterexample."""
    unit = SampleBox(jump=(1.0, 1.0))
    cases = [
        ("l1_geometric", build_coefficients(1, 1, 0, gamma="geometric_gamma"), SampleBox(), True),
        ("l1_constant", build_coefficients(1, 1, 0, gamma="constant_gamma"), SampleBox(), True),
        ("l2_constant", build_coefficients(1, 2, 0, gamma="constant_gamma"), SampleBox(), True),
        ("l2_conservative", build_coefficients(1, 2, 0, gamma="conservative_gamma"), SampleBox(), True),
        ("l2_crossed_unit_jumps", build_coefficients(1, 2, 0, gamma="crossed_gamma"), unit, False),
    ]

    def run(case):
        name, co, box, _ = case
        return check_path_independence(co, box, prm.n_samples, prm.tol, int(stream(seed, f"audit-{name}").integers(2**31)),
                                       prm.n_staircases)

    reports = list(pool.map(run, cases))
    checks, rows, metrics = [], [], {}
    for (name, _, _, expect), rep in zip(cases, reports):
        if expect:
            checks.append(_check(f"{name}_discrepancy", rep.max_discrepancy, "<", prm.tol))
            checks.append(_check(f"{name}_passes", rep.passed, "is", True))
        else:
            checks.append(_check(f"{name}_discrepancy", rep.max_discrepancy, ">", prm.fail_threshold))
            checks.append(_check(f"{name}_fails", rep.passed, "is", False))
        rows.append([name, rep.max_discrepancy, rep.conservativity_gap, rep.passed])
        metrics[name] = {"max_discrepancy": rep.max_discrepancy, "conservativity_gap": rep.conservativity_gap,
                         "passed": rep.passed, "lipschitz": rep.lipschitz_estimate}
    return ExperimentResult("path-independence-audit", seed, prm.model_dump(), checks, metrics,
                            {"audit": (["field", "max_discrepancy", "conservativity_gap", "passed"], rows)})


def exp_jumpcost_staircase(prm: JumpCostParams, seed, pool) -> ExperimentResult:
    """``l = 2``, ``gamma = 0``, ``c = (zeta_2, 0)`` and the jump ``(0, 0) -> (1, 1)``."""
    coeffs = build_coefficients(0, 2, 0)
    spec = build_reward(0, 2, c="crossed_c")
    rows, costs = [], []
    lin = None
    res = None
    for N in prm.lattice_steps:
        p = JumpCostProblem(0.0, np.zeros(0), np.zeros(2), np.ones(2), coeffs, spec.c, N)
        res = min_jump_cost(p)
        lin = linear_interp_cost(p)
        costs.append(res.cost)
        rows.append([N, res.cost, lin, res.mode])
    checks = [
        _check("min_jump_cost_zero", max(abs(c) for c in costs), "<=", prm.zero_tol),
        _check("linear_cost", abs(lin - prm.linear_target), "<=", prm.linear_tol),
        _check("refinement_monotone", all(b <= a + 1e-15 for a, b in zip(costs[:-1], costs[1:])), "is", True),
        _check("below_linear", all(c <= lin + 1e-12 for c in costs), "is", True),
    ]
    first_move = int(np.argmax(res.zeta[1] - res.zeta[0] > 0))
    metrics = {"costs": dict(zip(map(str, prm.lattice_steps), costs)), "linear_cost": lin,
               "first_moving_component": first_move}
    return ExperimentResult("jumpcost-staircase", seed, prm.model_dump(), checks, metrics,
                            {"refinement": (["lattice_steps", "min_cost", "linear_cost", "mode"], rows),
                             "argmin_staircase": (["node", "zeta_1", "zeta_2"],
                                                  [[k, z[0], z[1]] for k, z in enumerate(res.zeta)])})


def _random_jump_control(rng, l, max_jumps, T=1.0):
    nj = int(rng.integers(1, max_jumps + 1))
    ts = np.sort(rng.uniform(0.05 * T, 0.95 * T, nj))
    inc = rng.uniform(0.2, 1.0, (nj, l))
    times = np.concatenate([[0.0], ts, [T]])
    vals = np.vstack([np.zeros(l), np.cumsum(inc, axis=0), np.sum(inc, axis=0)])
    jumps = {float(t): vals[k] for k, t in enumerate(ts)}
    return CadlagPath.from_values(times, vals, initial=np.zeros(l), jumps=jumps)


def exp_reward_equality(prm: RewardEqualityParams, seed, pool) -> ExperimentResult:
    """Singular reward against the parametrised reward with minimal-cost plateau fills."""
    rng = stream(seed, "controls")
    tasks = []
    for i in range(prm.n_controls):
        l = 1 + i % 2
        tasks.append((i, l, _random_jump_control(rng, l, prm.max_jumps), float(rng.uniform(-0.5, 0.5))))

    def run(task):
        i, l, ctrl, x0 = task
        coeffs = build_coefficients(1, l, 1, b="linear_b", b_params={"a": 0.2, "k": -0.5},
                                    gamma="constant_gamma" if l == 1 else "conservative_gamma",
                                    gamma_params={} if l == 1 else {"scale": 0.5})
        spec = build_reward(1, l, f="quadratic_f", f_params={"target": 0.5}, g="quadratic_g",
                            c="affine_c", c_params={"base": 0.3, "state": 0.5, "control": 0.2})
        path = marcus_integrate(coeffs, ctrl, None, x0=[x0], grid=simulation_grid(1.0, prm.n_steps, ctrl))
        js = reward_singular(None, [path], spec, coeffs, lattice_steps=prm.lattice_steps)
        param = parametrise_with_timescale(path, arctan_time_change(path), coeffs=coeffs, reward=spec,
                                           lattice_steps=prm.lattice_steps)
        jp = reward_parametrised(None, [param], spec)
        return i, l, len(ctrl.jump_indices), js, jp, param

    out = list(pool.map(run, tasks))
    rel = [abs(js - jp) / max(abs(js), 1e-12) for _, _, _, js, jp, _ in out]
    rows = [[i, l, nj, js, jp, r] for (i, l, nj, js, jp, _), r in zip(out, rel)]
    checks = [_check("max_relative_error", max(rel), "<=", prm.rel_tol),
              _check("controls_tested", len(out), ">=", prm.n_controls)]
    metrics = {"max_relative_error": max(rel), "mean_relative_error": float(np.mean(rel))}
    return ExperimentResult("theorem37-equality", seed, prm.model_dump(), checks, metrics,
                            {"equality": (["control", "l", "jumps", "reward_singular", "reward_parametrised",
                                           "relative_error"], rows)},
                            {"parametrisations": [o[5] for o in out[:4]]})


def random_domain_path(rng, n=41, d=1, l=1, T=1.0, n_plateaus=2) -> ParametrisedPath:
    """Random member of the domain of the unparametrisation map on a uniform u-grid.

    ``rbar`` has up to ``n_plateaus`` flat blocks; on each block every state
    component moves in one direction, elsewhere the state is a random walk.
    """
    u = np.linspace(0.0, 1.0, n)
    dr = rng.exponential(size=n - 1)
    signs = rng.choice([-1.0, 1.0], size=(n - 1, d))
    flat = np.zeros(n - 1, dtype=bool)
    for _ in range(int(rng.integers(0, n_plateaus + 1))):
        a = int(rng.integers(0, n - 4))
        b = min(n - 1, a + int(rng.integers(2, 8)))
        flat[a:b] = True
    if flat.all():
        flat[-1] = False
    # one direction per component on every maximal flat run
    edges = np.flatnonzero(np.diff(np.concatenate([[0], flat.astype(int), [0]])))
    for a, b in zip(edges[::2], edges[1::2]):
        signs[a:b] = rng.choice([-1.0, 1.0], size=d)
    dr[flat] = 0.0
    rbar = np.concatenate([[0.0], np.cumsum(dr)])
    rbar *= T / rbar[-1]
    rbar[-1] = T
    dx = signs * np.abs(rng.normal(scale=0.2, size=(n - 1, d)))
    xbar = np.concatenate([rng.normal(scale=0.5, size=(1, d)), dx]).cumsum(axis=0)
    dxi = rng.exponential(scale=0.1, size=(n - 1, l)) * rng.integers(0, 2, size=(n - 1, l))
    xibar = np.concatenate([np.zeros((1, l)), dxi]).cumsum(axis=0)
    return ParametrisedPath(u, xbar, xibar, rbar, T)


def perturb_domain_path(rng, p: ParametrisedPath, scale) -> ParametrisedPath:
    """Nearby member of the domain sharing ``p``'s u-grid.

    The clock is a convex combination with an independent clock, which only
    shrinks plateaus; state perturbations on ``p``'s plateaus follow the sign
    of the original increments so monotonicity there is preserved.
    """
    other = random_domain_path(rng, len(p.u), p.d, p.l, p.T)
    theta = float(rng.uniform(0.0, scale))
    rbar = (1 - theta) * p.rbar + theta * other.rbar
    rbar[0], rbar[-1] = 0.0, p.T
    dx = np.diff(p.xbar, axis=0)
    noise = rng.normal(scale=scale, size=dx.shape)
    flat = np.zeros(len(dx), dtype=bool)
    for i0, i1 in p.plateaus():
        flat[i0:i1] = True
    sgn = np.where(dx >= 0, 1.0, -1.0)
    noise[flat] = sgn[flat] * np.abs(noise[flat])
    xbar = np.concatenate([p.xbar[:1] + rng.normal(scale=scale, size=(1, p.d)), dx + noise]).cumsum(axis=0)
    dxi = np.diff(p.xibar, axis=0) + rng.exponential(scale=scale, size=(len(dx), p.l))
    xibar = np.concatenate([p.xibar[:1], dxi]).cumsum(axis=0)
    return ParametrisedPath(p.u, xbar, xibar, rbar, p.T)


def _random_control(rng, T=1.0, n=21, max_jumps=3):
    times = np.linspace(0.0, T, n)
    inc = rng.exponential(scale=0.05, size=n - 1)
    vals = np.concatenate([[0.0], np.cumsum(inc)])
    jumps = {}
    for k in np.sort(rng.choice(np.arange(1, n), size=int(rng.integers(0, max_jumps + 1)), replace=False)):
        size = float(rng.uniform(0.1, 2.0))
        jumps[float(times[k])] = vals[k]
        vals[k:] += size
    return CadlagPath.from_values(times, vals[:, None], initial=[0.0], jumps={t: [v] for t, v in jumps.items()})


def exp_lipschitz_ladder(prm: LipschitzLadderParams, seed, pool) -> ExperimentResult:
    """Audit of the unparametrisation, reparametrisation and clock bounds."""
    checks, metrics, tracks = [], {}, {}

    # 1-Lipschitz property of the unparametrisation map
    rng = stream(seed, "pairs")
    pairs = []
    for i in range(prm.n_pairs):
        p = random_domain_path(rng, prm.grid_points)
        q = perturb_domain_path(rng, p, 0.05) if i % 2 == 0 else random_domain_path(rng, prm.grid_points)
        pairs.append((p, q))

    def lip_one(pair):
        p, q = pair
        ok = bool(check_domain_S(p)) and bool(check_domain_S(q))
        return ok, wm1_distance(apply_S(p), apply_S(q), prm.resolution), sup_distance(p, q)

    res = list(pool.map(lip_one, pairs))
    excess = [w - s for _, w, s in res]
    violations = sum(e > prm.slack for e in excess)
    checks.append(_check("pairs_in_domain", all(ok for ok, _, _ in res), "is", True))
    checks.append(_check("lipschitz_S_violations", violations, "<=", 0))
    metrics["lipschitz_S"] = {"pairs": len(res), "max_excess": max(excess), "violations": violations}
    tracks["lipschitz_S"] = (["pair", "wm1", "sup_distance"], [[i, w, s] for i, (_, w, s) in enumerate(res)])

    # Lipschitz reparametrisation
    rng = stream(seed, "reparam")
    worst = 0.0
    rows = []
    for i in range(prm.n_reparam):
        p = random_domain_path(rng, prm.grid_points, l=int(rng.integers(1, 3)))
        K = float(np.ceil(np.max(p.xibar) + 1e-9))
        eps = prm.epsilons[i % len(prm.epsilons)]
        budget = LipschitzBudget(K, eps)
        out = lipschitz_reparametrise(p, budget)
        emp, bound = empirical_lipschitz(out), budget.constant(p.T, p.l)
        worst = max(worst, emp / bound)
        rows.append([i, p.l, K, eps, emp, bound])
    checks.append(_check("reparam_lipschitz_ratio", worst, "<=", 1.0 + 1e-6))
    tracks["reparam"] = (["case", "l", "K", "epsilon", "empirical", "bound"], rows)
    metrics["reparam_worst_ratio"] = worst

    # perturbed time scale
    rng = stream(seed, "delta")
    worst_delta = 0.0
    for i in range(prm.n_reparam):
        p = random_domain_path(rng, prm.grid_points)
        for delta in prm.deltas:
            pd = perturb_timescale(p, delta)
            worst_delta = max(worst_delta, float(np.max(np.abs(pd.rbar - p.rbar))) / (delta * p.T))
    checks.append(_check("perturbed_clock_ratio", worst_delta, "<=", 1.0))
    metrics["perturbed_clock_worst_ratio"] = worst_delta

    # arctan clock
    rng = stream(seed, "clock")
    T = 1.0
    lips = [clock_lipschitz(arctan_time_change(_random_control(rng, T))) for _ in range(prm.n_clock)]
    checks.append(_check("arctan_clock_lipschitz", max(lips), "<=", T + math.pi / 2 + prm.clock_slack))
    jump = _step_control(1.0, 0.5, 1.0)
    r_half = float(arctan_time_change(jump).r(0.5))
    r_quiet = float(arctan_time_change(CadlagPath.constant([0.0], 1.0)).r(0.5))
    checks.append(_check("unit_jump_r_half", abs(r_half - 0.5), "<=", 1e-12))
    metrics.update({"arctan_max_lipschitz": max(lips), "unit_jump_r_half": r_half, "no_action_r_half": r_quiet})

    # stability of the simulated state in the measure flow
    coeffs = build_coefficients(1, 1, 1, b="mean_reverting_b", b_params={"kappa": 1.0},
                                sigma="constant_sigma", sigma_params={"s": 0.3}, gamma="constant_gamma")
    ctrl = parametrise_with_timescale(jump, arctan_time_change(jump))
    times = np.linspace(0.0, 1.0, 11)
    base = np.zeros((prm.gronwall_paths, len(times), 2))
    base[:, :, 0] = stream(seed, "gronwall").normal(scale=0.2, size=(prm.gronwall_paths, 1))
    flow_a = EmpiricalMeasureFlow(times, base, d=1)
    shifted = base.copy()
    shifted[:, :, 0] += 0.1
    flow_b = EmpiricalMeasureFlow(times, shifted, d=1)
    noise = NoisePath.sample(ctrl.u, 1, seed, prm.gronwall_paths, purpose="gronwall-noise")
    probe = gronwall_probe(coeffs, ctrl, flow_a, flow_b, noise, prm.gronwall_paths, x0=[0.0], seed=seed)
    checks.append(_check("gronwall_ratio", probe.ratio, "<=", 1.0 + 1e-6))
    metrics["gronwall"] = {"flow_distance": probe.flow_distance, "output_distance": probe.output_distance,
                           "ratio": probe.ratio}
    return ExperimentResult("lipschitz-ladder", seed, prm.model_dump(), checks, metrics, tracks,
                            {"sample_pairs": [pairs[0][0], pairs[0][1]]})


def exp_mfg_toy(prm: MFGToyParams, seed, pool) -> ExperimentResult:
    """Analytic deterministic toy and a measure-independent stochastic variant."""
    problem = analytic_toy(prm.cost)
    lat = prm.lattice.build()
    res = picard_fixed_point(problem, prm.K, lat, tol=prm.tol, max_iter=prm.max_iter, M=prm.M, seed=seed)
    xi_star, v_star = analytic_toy_optimum(prm.cost)
    _, _, xi_grid = lat.grids(prm.K, problem.T)
    step = float(xi_grid[1] - xi_grid[0])
    xi_T = float(np.mean(res.flow.values[:, -1, 1]))
    variant = crowd_toy(crowd=0.0)
    var = picard_fixed_point(variant, prm.K, prm.variant_lattice.build(), tol=prm.tol, max_iter=prm.max_iter,
                             M=prm.M, seed=seed)
    checks = [
        _check("xi_T_within_lattice_step", abs(xi_T - xi_star), "<=", step + 1e-12),
        _check("value_error", abs(res.reward_at_equilibrium - v_star), "<=", prm.value_tol),
        _check("final_residual", res.residual_history[-1], "<", prm.tol),
        _check("variant_iterations", len(var.residual_history), "<=", prm.variant_max_iterations),
        _check("variant_converged", var.converged, "is", True),
    ]
    metrics = {"xi_T": xi_T, "xi_T_exact": xi_star, "value": res.reward_at_equilibrium, "value_exact": v_star,
               "lattice_step": step, "residuals": res.residual_history, "status": res.status,
               "variant_residuals": var.residual_history, "optimality_gap": res.optimality_gap}
    rows = [[k + 1, r] for k, r in enumerate(res.residual_history)]
    return ExperimentResult("mfg-toy", seed, prm.model_dump(), checks, metrics,
                            {"residuals": (["iteration", "residual"], rows)},
                            {"equilibrium_paths": res.flow.paths()[:4]})


def block_medians(history, start=3, n_blocks=6):
    tail = np.asarray(history[start:], dtype=float)
    n_blocks = max(1, min(n_blocks, len(tail)))
    return [float(np.median(b)) for b in np.array_split(tail, n_blocks)]


def exp_mfg_crowd(prm: MFGCrowdParams, seed, pool) -> ExperimentResult:
    """Crowd-aversion game with the fixed-point certificate."""
    problem = prm.problem.build("mfg-crowd") if prm.problem else crowd_toy()
    res = picard_fixed_point(problem, prm.K, prm.lattice.build(), damping=prm.damping, tol=prm.tol,
                             max_iter=prm.max_iter, M=prm.M, seed=seed, schedule=prm.schedule)
    h = res.residual_history
    med = block_medians(h, prm.start, prm.n_blocks)
    checks = [
        _check("block_medians_decreasing", all(b < a for a, b in zip(med[:-1], med[1:])), "is", True),
        _check("final_residual", h[-1], "<", prm.residual_target),
        _check("best_response_improvement", res.optimality_gap, "<", prm.gap_target),
    ]
    metrics = {"iterations": len(h), "status": res.status, "final_residual": h[-1], "block_medians": med,
               "reward_at_equilibrium": res.reward_at_equilibrium, "optimality_gap": res.optimality_gap,
               "best_response_reward": res.info["best_response_reward"],
               "mean_terminal_state": float(np.mean(res.flow.values[:, -1, 0]))}
    rows = [[k + 1, r] for k, r in enumerate(h)]
    return ExperimentResult("mfg-crowd", seed, prm.model_dump(), checks, metrics,
                            {"residuals": (["iteration", "residual"], rows)},
                            {"equilibrium_paths": res.flow.paths()[:8]})


def exp_k_ladder(prm: KLadderParams, seed, pool) -> ExperimentResult:
    """Velocity-bound ladder on the jump-rewarding toy."""
    problem = prm.problem.build("k-ladder") if prm.problem else ladder_toy()
    lad = k_ladder(problem, prm.K_schedule, prm.lattice.build(), damping=prm.damping, tol=prm.tol,
                   max_iter=prm.max_iter, M=prm.M, seed=seed, p=prm.p, n_param=prm.n_param,
                   schedule=prm.schedule)
    m = lad.moments
    ratio = m[-1] / float(np.median(m))
    rel = [abs(a - b) / max(abs(b), 1e-12) for a, b in zip(lad.rewards[:-1], lad.rewards[1:])]
    eq = lad.equality
    checks = [
        _check("ladder_complete", not lad.halted, "is", True),
        _check("moment_ratio_last_over_median", ratio, "<=", prm.moment_ratio),
        _check("rewards_cauchy", max(rel) if rel else 0.0, "<=", prm.cauchy_tol),
        _check("singular_equals_parametrised", eq["abs_diff"], "<=",
               prm.equality_tol * max(1.0, abs(eq["reward_singular"]))),
    ]
    rows = []
    for k, r in enumerate(lad.rungs):
        rows.append([r.K, r.reward_at_equilibrium, m[k], lad.wm1_distances[k - 1] if k else "",
                     len(r.residual_history), r.status, float(np.mean(r.flow.values[:, -1, 1]))])
    metrics = {"moments": m, "moment_ratio": ratio, "rewards": lad.rewards, "relative_steps": rel,
               "wm1_distances": lad.wm1_distances, "equality": eq}
    return ExperimentResult("k-ladder", seed, prm.model_dump(), checks, metrics,
                            {"ladder": (["K", "reward", "moment", "wm1_to_previous", "iterations", "status",
                                         "mean_terminal_control"], rows)},
                            {"final_rung_paths": lad.rungs[-1].flow.paths()[:8],
                             "arctan_parametrisations": lad.parametrisations[:4]})


# ---------------------------------------------------------------- catalogue


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    params: type
    fn: Callable


CATALOGUE = [
    Experiment("chattering", "ramp integrals against the minimal jump charge of their limit",
               ChatteringParams, exp_chattering),
    Experiment("marcus-geometric", "geometric jump map 2e and the ramp limit versus the Stieltjes rule",
               MarcusGeometricParams, exp_marcus_geometric),
    Experiment("path-independence-audit", "jump-map path independence on good fields and a crossed counterexample",
               PathIndependenceParams, exp_path_independence),
    Experiment("jumpcost-staircase", "zero-cost staircase against the linear path for c = (zeta_2, 0)",
               JumpCostParams, exp_jumpcost_staircase),
    Experiment("theorem37-equality", "singular reward equals parametrised reward with minimal-cost fills",
               RewardEqualityParams, exp_reward_equality),
    Experiment("lipschitz-ladder", "Lipschitz bounds of unparametrisation, reparametrisation and clocks",
               LipschitzLadderParams, exp_lipschitz_ladder),
    Experiment("mfg-toy", "analytic toy equilibrium and a measure-independent variant",
               MFGToyParams, exp_mfg_toy),
    Experiment("mfg-crowd", "crowd-aversion equilibrium with a best-response certificate",
               MFGCrowdParams, exp_mfg_crowd),
    Experiment("k-ladder", "velocity-bound ladder: moments, Cauchy rewards and the reward equality",
               KLadderParams, exp_k_ladder),
]
_BY_NAME = {e.name: e for e in CATALOGUE}


def list_experiments() -> list[tuple[str, str]]:
    return [(e.name, e.description) for e in CATALOGUE]


def get_experiment(name) -> Experiment:
    if name not in _BY_NAME:
        raise ConfigError(f"unknown experiment {name!r}; known: {', '.join(_BY_NAME)}")
    return _BY_NAME[name]


def parse_params(name, params: dict | None):
    """Validate ``params`` against the experiment's parameter model."""
    exp = get_experiment(name)
    try:
        prm = exp.params.model_validate(params or {})
    except ValueError as e:
        raise ConfigError(f"invalid parameters for {name!r}: {e}") from e
    problem = getattr(prm, "problem", None)
    if problem is not None and problem.registry_errors():
        raise ConfigError("; ".join(problem.registry_errors()))
    return prm


def run_experiment(name, params: dict | None = None, seed=0, out_dir=None, threads=1) -> ExperimentResult:
    """Run one named experiment; write its run directory when ``out_dir`` is given."""
    exp = get_experiment(name)
    prm = parse_params(name, params)
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        result = exp.fn(prm, int(seed), pool)
    result.elapsed = time.perf_counter() - t0
    if out_dir is not None:
        result.write(out_dir)
    return result
