"""Minimal jump cost over monotone interpolation paths."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from singmfg.errors import CapabilityError, OrderError, ParameterError
from singmfg.jumpcost import JumpCostProblem, linear_interp_cost, min_jump_cost, path_cost
from singmfg.marcus import build_coefficients, jump_map_psi
from singmfg.reward import build_reward

ZERO1 = build_coefficients(1, 1, 0)
ZERO2 = build_coefficients(1, 2, 0)


def _c(l, name, **params):
    return build_reward(1, l, c=name, c_params=params).eval_c


def test_constant_unit_price():
    p = JumpCostProblem(0.0, [0.0], [0.0, 0.0], [0.5, 1.5], ZERO2, _c(2, "constant_c", value=1.0))
    r = min_jump_cost(p)
    assert r.cost == pytest.approx(2.0, abs=1e-12)
    assert r.linear_cost == pytest.approx(2.0, abs=1e-12)


def test_one_dimensional_control_price():
    # int_0^1 z dz = 1/2, and every monotone path in one dimension is the same
    p = JumpCostProblem(0.0, [0.0], [0.0], [1.0], ZERO1, _c(1, "control_c"))
    r = min_jump_cost(p)
    assert r.cost == pytest.approx(0.5, abs=1e-12)
    assert r.mode == "exact" and r.gap == 0.0


def test_crossed_price_prefers_first_component():
    # c = (xi_2, 0): linear path pays int_0^1 s ds, moving xi_1 before xi_2 pays nothing
    p = JumpCostProblem(0.0, [0.0], [0.0, 0.0], [1.0, 1.0], ZERO2, _c(2, "crossed_c"))
    assert linear_interp_cost(p) == pytest.approx(0.5, abs=1e-12)
    r = min_jump_cost(p)
    assert r.cost == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(r.zeta[0], [0.0, 0.0])
    np.testing.assert_allclose(r.zeta[-1], [1.0, 1.0])
    assert r.mode == "exact"


def test_state_dependent_price_along_geometric_jump():
    # [DERIVED] gamma = x, c = x from x = 1: int_0^1 e^z dz = e - 1
    co = build_coefficients(1, 1, 0, gamma="geometric_gamma")
    p = JumpCostProblem(0.0, [1.0], [0.0], [1.0], co, _c(1, "state_c"))
    r = min_jump_cost(p)
    assert abs(r.cost - oracles.exp_cost(1.0)) <= 1e-3
    assert r.y[-1, 0] == pytest.approx(oracles.geometric_psi(1.0, 1.0), abs=1e-6)


def test_zero_jump_costs_nothing():
    p = JumpCostProblem(0.0, [0.3], [0.2, 0.4], [0.2, 0.4], ZERO2, _c(2, "constant_c", value=5.0))
    r = min_jump_cost(p)
    assert r.cost == 0.0 and r.mode == "trivial"


def test_problem_validation():
    with pytest.raises(OrderError):
        JumpCostProblem(0.0, [0.0], [1.0], [0.5], ZERO1, _c(1, "control_c"))
    with pytest.raises(ParameterError):
        JumpCostProblem(0.0, [0.0], [0.0], [0.5], ZERO1, _c(1, "control_c"), lattice_steps=0)


def test_capability_guard_and_fallback():
    co = build_coefficients(1, 4, 0)
    c = _c(4, "constant_c", value=1.0)
    p = JumpCostProblem(0.0, [0.0], np.zeros(4), np.ones(4), co, c, lattice_steps=4)
    with pytest.raises(CapabilityError):
        min_jump_cost(p)
    r = min_jump_cost(p, allow_fallback=True)
    assert r.mode in ("gradient",)
    assert r.cost == pytest.approx(4.0, abs=1e-9)


def _poly_c(t, x, xi):
    # classical cubic cost field; RK4 integrates it exactly along axis edges
    return np.stack([xi[:, 1] ** 2 - 0.5 * xi[:, 0] * xi[:, 1], xi[:, 0] ** 3 - xi[:, 1]], axis=1)


def _edge_cost(z, j, h):
    g, w = np.polynomial.legendre.leggauss(6)
    s = 0.5 * h * (g + 1.0)
    pts = np.repeat(np.asarray(z, dtype=float)[None], len(s), axis=0)
    pts[:, j] += s
    return 0.5 * h * float(np.sum(w * _poly_c(0, None, pts)[:, j]))


def _bruteforce_staircase(xi, h, N):
    """Minimum over every monotone lattice walk with N steps per component."""
    best = np.inf
    for order in set(itertools.permutations([0] * N + [1] * N)):
        z, total = np.array(xi, dtype=float), 0.0
        for j in order:
            total += _edge_cost(z, j, h[j] / N)
            z[j] += h[j] / N
        best = min(best, total)
    return best


def _linear(xi, h):
    g, w = np.polynomial.legendre.leggauss(8)
    s = 0.5 * (g + 1.0)
    pts = np.asarray(xi)[None] + s[:, None] * np.asarray(h)[None]
    return 0.5 * float(np.sum(w * (_poly_c(0, None, pts) @ np.asarray(h))))


@settings(max_examples=15)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.lists(st.floats(0.05, 1), min_size=2, max_size=2),
       st.integers(1, 4))
def test_lattice_minimum_matches_bruteforce(xi, h, N):
    xi, h = np.array(xi), np.array(h)
    p = JumpCostProblem(0.0, [0.0], xi, xi + h, ZERO2, _poly_c, lattice_steps=N)
    ref = min(_bruteforce_staircase(xi, h, N), _linear(xi, h))
    assert min_jump_cost(p).cost == pytest.approx(ref, abs=1e-10)


@settings(max_examples=25)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.lists(st.floats(0, 1), min_size=2, max_size=2),
       st.floats(-1, 1))
def test_minimum_never_above_linear(xi, h, x):
    xi, h = np.array(xi), np.array(h)
    co = build_coefficients(1, 2, 0, gamma="sine_gamma")
    p = JumpCostProblem(0.0, [x], xi, xi + h, co, _c(2, "affine_c", base=0.1, state=0.5, control=-0.3),
                        lattice_steps=8)
    r = min_jump_cost(p)
    assert r.cost <= r.linear_cost + 1e-12
    assert r.gap >= 0.0


@settings(max_examples=15)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.lists(st.floats(0.05, 1), min_size=2, max_size=2))
def test_lattice_refinement_is_monotone(xi, h):
    xi, h = np.array(xi), np.array(h)
    costs = [min_jump_cost(JumpCostProblem(0.0, [0.0], xi, xi + h, ZERO2, _poly_c, lattice_steps=N)).cost
             for N in (2, 4, 8, 16)]
    assert all(b <= a + 1e-12 for a, b in zip(costs[:-1], costs[1:]))


@settings(max_examples=25)
@given(st.floats(-1, 1), st.lists(st.floats(0, 1), min_size=2, max_size=2),
       st.lists(st.floats(0.01, 1), min_size=2, max_size=2), st.integers(1, 5))
def test_path_cost_is_invariant_under_node_insertion(x, a, b, k):
    co = build_coefficients(1, 2, 0, gamma="conservative_gamma")
    p = JumpCostProblem(0.0, [x], a, np.add(a, b), co, _c(2, "state_c"))
    nodes = np.array([a, [a[0] + b[0], a[1]], np.add(a, b)])
    fine = np.vstack([nodes[0] + s * (nodes[1] - nodes[0]) for s in np.linspace(0, 1, k + 1)[:-1]]
                     + [nodes[1:]])
    c1, y1 = path_cost(p, nodes, 64 * k)
    c2, y2 = path_cost(p, fine, 64)
    assert c2 == pytest.approx(c1, abs=1e-9)
    np.testing.assert_allclose(y2[-1], y1[-1], atol=1e-9)


@settings(max_examples=20)
@given(st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1))
def test_terminal_state_matches_jump_map(x, a, h):
    co = build_coefficients(1, 1, 0, gamma="sine_gamma")
    p = JumpCostProblem(0.0, [x], [a], [a + h], co, _c(1, "state_c"), lattice_steps=16)
    r = min_jump_cost(p, edge_steps=16)
    assert r.y[-1, 0] == pytest.approx(jump_map_psi(0.0, [x], [a], [a + h], co)[0], abs=1e-7)


def test_result_record_is_serialisable():
    import json
    p = JumpCostProblem(0.0, [0.0], [0.0, 0.0], [1.0, 1.0], ZERO2, _c(2, "crossed_c"), lattice_steps=4)
    rec = min_jump_cost(p).to_record()
    assert json.loads(json.dumps(rec))["mode"] == "exact"
