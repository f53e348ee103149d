"""Reward functionals for continuous, parametrised and singular controls.

Reward callables are batched over points sharing one time stamp:

* ``f(t, marginal, x, xi) -> (M,)``
* ``g(marginal, x, xi) -> (M,)``
* ``c(t, x, xi) -> (M, l)``
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import total_ordering
from typing import Callable, NamedTuple

import numpy as np

from .errors import ContractError, DomainError, ParameterError
from .flow import EmpiricalMeasureFlow
from .jumpcost import JumpCostProblem, min_jump_cost
from .marcus import CoefficientSpec
from .paths import check_domain_S


@total_ordering
class _NegInf:
    """Reward of a law outside the admissible moment class.

    Compares strictly below every finite number and equal only to itself.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return other is not self

    def __hash__(self):
        return hash("NEG_INF")

    def __repr__(self):
        return "NEG_INF"

    def to_json(self):
        return "-inf"


NEG_INF = _NegInf()


def is_neg_inf(v) -> bool:
    return v is NEG_INF


@dataclass(frozen=True, eq=False)
class RewardSpec:
    f: Callable
    g: Callable
    c: Callable
    p: float = 3.0
    moment_cap: float = np.inf
    name: str = ""

    def __post_init__(self):
        if not self.p > 2:
            raise ParameterError("growth exponent p must exceed 2")

    def eval_f(self, t, mu, x, xi):
        return np.asarray(self.f(t, mu, x, xi), dtype=float).reshape(len(x))

    def eval_g(self, mu, x, xi):
        return np.asarray(self.g(mu, x, xi), dtype=float).reshape(len(x))

    def eval_c(self, t, x, xi):
        return np.asarray(self.c(t, x, xi), dtype=float).reshape(len(x), xi.shape[1])


@dataclass
class RewardBreakdown:
    """Population averages of each term; ``total = g + f - cost - jump``."""

    total: object
    g_term: float
    f_term: float
    continuous_cost: float
    jump_cost: float
    per_path: np.ndarray = field(repr=False)
    jumps: list = field(default_factory=list, repr=False)
    moment: float = 0.0

    def to_record(self) -> dict:
        total = self.total.to_json() if is_neg_inf(self.total) else self.total
        return {"total": total, "g_term": self.g_term, "f_term": self.f_term,
                "continuous_cost": self.continuous_cost, "jump_cost": self.jump_cost,
                "moment": self.moment, "jumps": self.jumps}


# ---------------------------------------------------------------- registry


_REWARDS: dict[str, dict[str, Callable]] = {"f": {}, "g": {}, "c": {}}


def register_reward(kind: str, name: str):
    if kind not in _REWARDS:
        raise ParameterError(f"unknown reward kind {kind!r}")

    def deco(factory):
        _REWARDS[kind][name] = factory
        return factory

    return deco


def registered_rewards(kind: str) -> list[str]:
    return sorted(_REWARDS[kind])


def _reward_factory(kind, name):
    try:
        return _REWARDS[kind][name]
    except KeyError:
        raise ParameterError(f"no {kind} reward named {name!r}; known: {registered_rewards(kind)}") from None


def build_reward(d, l, f="zero_f", g="zero_g", c="zero_c", f_params=None, g_params=None, c_params=None,
                 p=3.0, moment_cap=np.inf) -> RewardSpec:
    return RewardSpec(
        _reward_factory("f", f)(d, l, **(f_params or {})),
        _reward_factory("g", g)(d, l, **(g_params or {})),
        _reward_factory("c", c)(d, l, **(c_params or {})),
        p=p, moment_cap=moment_cap, name=f"{f}/{g}/{c}",
    )


@register_reward("f", "zero_f")
def _zero_f(d, l):
    return lambda t, mu, x, xi: np.zeros(len(x))


@register_reward("f", "time_f")
def _time_f(d, l, scale=1.0):
    return lambda t, mu, x, xi: np.full(len(x), scale * t)


@register_reward("f", "quadratic_f")
def _quadratic_f(d, l, target=0.0, scale=1.0):
    return lambda t, mu, x, xi: -scale * np.sum((x - target) ** 2, axis=1)


@register_reward("f", "crowd_f")
def _crowd_f(d, l, scale=1.0):
    """``-scale * |x - mean state of the population|^2``."""

    def fn(t, mu, x, xi):
        centre = x.mean(axis=0) if mu is None else mu.mean_x()
        return -scale * np.sum((x - centre) ** 2, axis=1)

    return fn


@register_reward("f", "late_action_f")
def _late_action_f(d, l, target=1.0, scale=1.0):
    """Running penalty ``-scale * |x - target|^2``: the earlier the state arrives, the better."""
    return _quadratic_f(d, l, target=target, scale=scale)


@register_reward("f", "ladder_f")
def _ladder_f(d, l, late=1.0, crowd=0.0, target=1.0):
    """``-late |x - target|^2 - crowd |x - mean state|^2``."""

    def fn(t, mu, x, xi):
        centre = x.mean(axis=0) if mu is None else mu.mean_x()
        return -late * np.sum((x - target) ** 2, axis=1) - crowd * np.sum((x - centre) ** 2, axis=1)

    return fn


@register_reward("g", "zero_g")
def _zero_g(d, l):
    return lambda mu, x, xi: np.zeros(len(x))


@register_reward("g", "constant_g")
def _constant_g(d, l, value=1.0):
    return lambda mu, x, xi: np.full(len(x), float(value))


@register_reward("g", "quadratic_g")
def _quadratic_g(d, l, target=1.0, scale=1.0):
    return lambda mu, x, xi: -scale * np.sum((x - target) ** 2, axis=1)


@register_reward("g", "control_target_g")
def _control_target_g(d, l, target=1.0, scale=1.0, cubic=0.0):
    """``-scale |xi - target|^2 - cubic |xi|^3`` on the terminal control."""

    def fn(mu, x, xi):
        return -scale * np.sum((xi - target) ** 2, axis=1) - cubic * np.sum(np.abs(xi) ** 3, axis=1)

    return fn


@register_reward("c", "zero_c")
def _zero_c(d, l):
    return lambda t, x, xi: np.zeros((len(x), l))


@register_reward("c", "constant_c")
def _constant_c(d, l, value=1.0):
    v = np.broadcast_to(np.asarray(value, dtype=float), (l,))
    return lambda t, x, xi: np.broadcast_to(v, (len(x), l)).copy()


@register_reward("c", "control_c")
def _control_c(d, l, scale=1.0):
    """``c = scale * xi``: marginal cost rising with the amount already spent."""
    return lambda t, x, xi: scale * xi


@register_reward("c", "state_c")
def _state_c(d, l, scale=1.0):
    """``c_j = scale * x_1`` for every control component."""
    return lambda t, x, xi: scale * np.repeat(x[:, :1], l, axis=1)


@register_reward("c", "crossed_c")
def _crossed_c(d, l, scale=1.0):
    """``(scale * xi_2, 0)`` for ``l = 2``."""
    if l != 2:
        raise ParameterError("crossed_c needs l = 2")

    def fn(t, x, xi):
        out = np.zeros((len(x), 2))
        out[:, 0] = scale * xi[:, 1]
        return out

    return fn


@register_reward("c", "affine_c")
def _affine_c(d, l, base=1.0, state=0.0, control=0.0):
    """``base + state * x_1 + control * xi`` per component."""
    b = np.broadcast_to(np.asarray(base, dtype=float), (l,))

    def fn(t, x, xi):
        return b + state * x[:, :1] + control * xi

    return fn


# ----------------------------------------------------------------- helpers


def _marginal(flow, t):
    return None if flow is None else flow.marginal(t)


def _terminal(flow):
    return None if flow is None else flow.terminal()


def _grouped(t_all, fn):
    """Evaluate ``fn(t, idx)`` once per distinct time; returns values in input order."""
    out = None
    uniq, inv = np.unique(t_all, return_inverse=True)
    for j, t in enumerate(uniq):
        idx = np.flatnonzero(inv == j)
        v = fn(float(t), idx)
        if out is None:
            out = np.empty((len(t_all),) + v.shape[1:])
        out[idx] = v
    return out


def _moment_guard(spec, xi_T):
    moment = float(np.mean(np.sum(np.abs(xi_T), axis=1) ** spec.p)) if len(xi_T) else 0.0
    return moment, moment > spec.moment_cap


class _Stack(NamedTuple):
    times: np.ndarray
    X: np.ndarray
    XI: np.ndarray
    XL: np.ndarray
    XIL: np.ndarray


def _stack(ensemble):
    fl = EmpiricalMeasureFlow.from_paths(ensemble)
    d = ensemble[0].d
    return _Stack(fl.times, fl.values[:, :, :d], fl.values[:, :, d:], fl.left[:, :, :d], fl.left[:, :, d:])


def _f_term(flow, spec, S: _Stack):
    """Trapezoid in time with right values at ``t_k`` and left limits at ``t_{k+1}``."""
    M, n, _ = S.X.shape
    fr = np.empty((M, n))
    fl = np.empty((M, n))
    for k, t in enumerate(S.times):
        mu = _marginal(flow, t)
        fr[:, k] = spec.eval_f(t, mu, S.X[:, k], S.XI[:, k])
        fl[:, k] = fr[:, k] if np.array_equal(S.X[:, k], S.XL[:, k]) and np.array_equal(S.XI[:, k], S.XIL[:, k]) \
            else spec.eval_f(t, mu, S.XL[:, k], S.XIL[:, k])
    dt = np.diff(S.times)
    return 0.5 * ((fr[:, :-1] + fl[:, 1:]) @ dt)


def _left_point_cost(spec, S: _Stack):
    """``sum_k c(t_k, X_k, xi_k) . (xi_{k+1}- - xi_k)`` per path."""
    M, n, _ = S.XI.shape
    total = np.zeros(M)
    for k in range(n - 1):
        dxi = S.XIL[:, k + 1] - S.XI[:, k]
        if np.any(dxi):
            total += np.einsum("ml,ml->m", spec.eval_c(S.times[k], S.X[:, k], S.XI[:, k]), dxi)
    return total


def _finish(per_path_parts, moment, over, return_breakdown, jumps=None):
    g, f, cc, jc = per_path_parts
    per = g + f - cc - jc
    total = NEG_INF if over else float(np.mean(per))
    if not return_breakdown:
        return total
    return RewardBreakdown(total, float(np.mean(g)), float(np.mean(f)), float(np.mean(cc)),
                           float(np.mean(jc)), per, jumps or [], moment)


# ------------------------------------------------------------- functionals


def reward_continuous(flow: EmpiricalMeasureFlow | None, ensemble, spec: RewardSpec, return_breakdown=False):
    """Monte-Carlo reward of continuous controls against the flow ``flow``.

    ``ensemble`` is a list of ``(X, xi)`` :class:`CadlagPath` objects; terminal
    reward, trapezoid quadrature of ``f`` and a left-point Stieltjes sum for
    ``c dxi`` are averaged with equal weights.
    """
    ensemble = list(ensemble)
    for i, path in enumerate(ensemble):
        if not path.is_continuous:
            raise ContractError(f"path {i} has jumps; use reward_singular for singular controls")
    S = _stack(ensemble)
    g = spec.eval_g(_terminal(flow), S.X[:, -1], S.XI[:, -1])
    f = _f_term(flow, spec, S)
    cc = _left_point_cost(spec, S)
    moment, over = _moment_guard(spec, S.XI[:, -1])
    return _finish((g, f, cc, np.zeros_like(g)), moment, over, return_breakdown)


def reward_singular(flow: EmpiricalMeasureFlow | None, ensemble, spec: RewardSpec, coeffs: CoefficientSpec,
                    lattice_steps=64, return_breakdown=False, jump_kwargs=None):
    """Reward with continuous part charged by ``c dxi^c`` and each jump by its minimal cost.

    A jump at time 0 is charged from ``(x_{0-}, xi_{0-})``.
    """
    ensemble = list(ensemble)
    S = _stack(ensemble)
    M, n, _ = S.X.shape
    g = spec.eval_g(_terminal(flow), S.X[:, -1], S.XI[:, -1])
    f = _f_term(flow, spec, S)
    cc = _left_point_cost(spec, S)
    jc = np.zeros(M)
    records = []
    for i in range(M):
        for k in np.flatnonzero(np.any(S.XI[i] != S.XIL[i], axis=1)):
            prob = JumpCostProblem(float(S.times[k]), S.XL[i, k], S.XIL[i, k], S.XI[i, k], coeffs, spec.c,
                                   lattice_steps)
            res = min_jump_cost(prob, **(jump_kwargs or {}))
            jc[i] += res.cost
            records.append({"path": i, "t": float(S.times[k]), "cost": res.cost, "mode": res.mode})
    moment, over = _moment_guard(spec, S.XI[:, -1])
    return _finish((g, f, cc, jc), moment, over, return_breakdown, records)


def reward_parametrised(flow: EmpiricalMeasureFlow | None, ensemble, spec: RewardSpec, check_domain=True,
                        return_breakdown=False):
    """Reward of parametrised paths on their u-grids.

    ``f`` is integrated against ``d rbar`` (so plateaus contribute nothing)
    and ``c`` against ``d xibar``, both with the trapezoid rule.
    """
    ensemble = list(ensemble)
    if check_domain:
        for i, p in enumerate(ensemble):
            rep = check_domain_S(p)
            if not rep:
                raise DomainError(f"path {i} is outside D(S)", rep.violations)
    M = len(ensemble)
    lens = np.array([len(p.u) for p in ensemble])
    offs = np.concatenate([[0], np.cumsum(lens)])
    T_all = np.concatenate([p.rbar for p in ensemble])
    X_all = np.vstack([p.xbar for p in ensemble])
    XI_all = np.vstack([p.xibar for p in ensemble])

    f_all = _grouped(T_all, lambda t, idx: spec.eval_f(t, _marginal(flow, t), X_all[idx], XI_all[idx]))
    c_all = _grouped(T_all, lambda t, idx: spec.eval_c(t, X_all[idx], XI_all[idx]))
    f = np.empty(M)
    cc = np.empty(M)
    for i in range(M):
        sl = slice(offs[i], offs[i + 1])
        fi, ci, ri, xi = f_all[sl], c_all[sl], T_all[sl], XI_all[sl]
        f[i] = 0.5 * np.sum((fi[:-1] + fi[1:]) * np.diff(ri))
        cc[i] = 0.5 * np.sum((ci[:-1] + ci[1:]) * np.diff(xi, axis=0))
    XT = np.vstack([p.xbar[-1] for p in ensemble])
    XIT = np.vstack([p.xibar[-1] for p in ensemble])
    g = spec.eval_g(_terminal(flow), XT, XIT)
    moment, over = _moment_guard(spec, XIT)
    return _finish((g, f, cc, np.zeros(M)), moment, over, return_breakdown)
