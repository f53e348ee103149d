"""Càdlàg paths, time scales, the domain check and the unparametrisation map."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import cadlag_paths, controls, ramp, step
from singmfg.errors import ContractError, DomainError, InvariantError, RangeError
from singmfg.paths import (CadlagPath, ParametrisedPath, apply_S, check_domain_S, decompose_continuous_part,
                           dumps_path, evaluate, generalized_inverse, loads_path, total_variation)
from singmfg.reparam import arctan_time_change, parametrise_with_timescale


# ------------------------------------------------------------ evaluation

def test_step_right_and_left_values():
    x = step()
    assert evaluate(x, 1.0)[0] == 1.0
    assert evaluate(x, 1.0, left=True)[0] == 0.0
    assert evaluate(x, 0.999)[0] == 0.0


def test_constant_path_everywhere():
    x = CadlagPath.constant([0.3, -2.0], 5.0)
    for t in (0.0, 1.7, 5.0):
        np.testing.assert_array_equal(evaluate(x, t), [0.3, -2.0])
    np.testing.assert_array_equal(evaluate(x, "0-"), [0.3, -2.0])


def test_ramp_midpoint():
    # [DERIVED] direct formula evaluation of the ramp
    x = ramp(100)
    assert oracles.ramp(100, 0.995) == pytest.approx(0.5, abs=1e-12)
    assert evaluate(x, 0.995)[0] == pytest.approx(oracles.ramp(100, 0.995), abs=1e-12)


def test_evaluate_out_of_range():
    with pytest.raises(RangeError):
        evaluate(step(), 2.5)
    with pytest.raises(RangeError):
        evaluate(step(), -0.1)
    with pytest.raises(RangeError):
        evaluate(step(), "0+")


def test_pre_initial_slot_carries_jump_at_zero():
    x = CadlagPath.from_values([0.0, 1.0], [[1.0], [1.0]], initial=[0.0])
    assert list(x.jump_indices) == [0]
    assert evaluate(x, "0-")[0] == 0.0 and evaluate(x, 0.0)[0] == 1.0


def test_grid_invariants():
    with pytest.raises(InvariantError):
        CadlagPath.from_values([0.0, 0.5, 0.5], [[0], [1], [2]])
    with pytest.raises(InvariantError):
        CadlagPath.from_values([0.1, 1.0], [[0], [1]])
    with pytest.raises(InvariantError):
        CadlagPath.from_values([0.0, 1.0], [[0], [1]], jumps={0.5: [0.0]})


# ------------------------------------------------------- total variation

def test_total_variation_zero_path():
    x = CadlagPath.constant([0.0], 2.0)
    assert total_variation(x, 0.0) == 0.0 and total_variation(x, 2.0) == 0.0


def test_total_variation_unit_jump():
    assert total_variation(step(), 1.5) == 1.0


def test_total_variation_l1_sum():
    x = CadlagPath.from_values([0.0, 1.0], [[0.0, 0.0], [1.0, 2.0]])
    assert total_variation(x, 1.0) == pytest.approx(3.0)


def test_total_variation_counts_jump_at_zero():
    x = CadlagPath.from_values([0.0, 1.0], [[0.5], [0.5]], initial=[0.0])
    assert total_variation(x, 0.0) == 0.5


def test_total_variation_rejects_decreasing_control():
    x = CadlagPath.from_values([0.0, 1.0], [[1.0], [0.5]])
    with pytest.raises(ContractError):
        total_variation(x, 1.0)


@given(controls(l=2), st.floats(0, 1), st.floats(0, 1))
def test_total_variation_monotone_and_additive(c, s, t):
    s, t = min(s, t), max(s, t)
    vs, vt = total_variation(c, s), total_variation(c, t)
    assert vt >= vs - 1e-12
    # additivity over [0-, s] and (s, t]
    inc = float(np.sum(c.evaluate(t) - c.evaluate(s)))
    assert vt == pytest.approx(vs + inc, abs=1e-12)


# ---------------------------------------------- continuous part and jumps

def test_decompose_pure_ramp():
    x = ramp(10)
    cont, jumps = decompose_continuous_part(x)
    assert jumps == []
    np.testing.assert_array_equal(cont.values, x.values)
    assert cont.is_continuous


def test_decompose_step():
    cont, jumps = decompose_continuous_part(step())
    np.testing.assert_array_equal(cont.values, 0.0)
    assert len(jumps) == 1
    t, a, b = jumps[0]
    assert (t, a[0], b[0]) == (1.0, 0.0, 1.0)


def test_decompose_ramp_plus_jump():
    # [DERIVED] xi_t = t + 1_{[0.5,1]}(t): continuous part t, one jump 0.5 -> 1.5 at 0.5
    x = CadlagPath.from_values([0.0, 0.5, 1.0], [[0.0], [1.5], [2.0]], jumps={0.5: [0.5]})
    cont, jumps = decompose_continuous_part(x)
    np.testing.assert_allclose(cont.evaluate_many([0.0, 0.25, 0.5, 0.75, 1.0])[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    assert cont.is_continuous
    assert len(jumps) == 1
    assert (jumps[0][0], jumps[0][1][0], jumps[0][2][0]) == (0.5, 0.5, 1.5)


@given(controls(l=2, max_stamps=10))
def test_decompose_closure(c):
    cont, jumps = decompose_continuous_part(c)
    assert cont.is_continuous
    ts = [j[0] for j in jumps]
    assert ts == sorted(ts)
    recon = cont.values.copy()
    for t, a, b in jumps:
        recon[c.times >= t] += b - a
    np.testing.assert_allclose(recon, c.values, rtol=0, atol=1e-12)


# --------------------------------------------------------------- time scales

def test_inverse_of_linear_scale():
    ts = generalized_inverse([0.0, 1.0], [0.0, 2.0], 2.0)
    np.testing.assert_allclose(ts.r(np.array([0.0, 0.5, 1.0, 1.5])), [0.0, 0.25, 0.5, 0.75])


def test_inverse_jumps_across_plateau():
    # [DERIVED] plateau on u in [0.25, 0.75] at level 1: r jumps from 0.25 to 0.75 at t = 1
    ts = generalized_inverse([0.0, 0.25, 0.75, 1.0], [0.0, 1.0, 1.0, 2.0], 2.0)
    assert ts.r(1.0 - 1e-9) == pytest.approx(0.25, abs=1e-8)
    assert ts.r(1.0) == pytest.approx(0.75, abs=1e-15)
    assert ts.r(1.5) == pytest.approx(0.875)


def test_inverse_of_square_is_root():
    # [DERIVED] numeric inverse vs the closed form sqrt(t) on a 2001-point grid
    u = np.linspace(0.0, 1.0, 2001)
    ts = generalized_inverse(u, u**2, 1.0)
    t = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(ts.r(t), np.sqrt(t), atol=2e-4)


def test_inverse_endpoint_invariant():
    with pytest.raises(InvariantError):
        generalized_inverse([0.0, 1.0], [0.0, 0.9], 1.0)
    with pytest.raises(InvariantError):
        generalized_inverse([0.0, 0.5, 1.0], [0.0, 0.6, 0.5], 0.5)


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 1)), min_size=1, max_size=8),
       st.lists(st.floats(0, 2), min_size=1, max_size=8))
def test_inverse_is_non_decreasing_and_right_continuous(dr_raw, t_raw):
    n = len(dr_raw) + 1
    dr = np.array(dr_raw)
    dr[-1] += 0.1
    rbar = np.concatenate([[0.0], np.cumsum(dr)])
    T = float(rbar[-1])
    ts = generalized_inverse(np.linspace(0, 1, n), rbar, T)
    t = np.sort(np.clip(np.array(t_raw), 0, T))
    r = ts.r(t)
    assert np.all(np.diff(r) >= -1e-12)
    assert np.all((r >= 0) & (r <= 1))
    # right continuity: r(t + h) - r(t) <= h * (steepest slope of r)
    du, d_r = np.diff(ts.u), np.diff(ts.rbar)
    slope = np.max(du[d_r > 0] / d_r[d_r > 0])
    h = 1e-11
    gap = ts.r(np.minimum(t + h, T)) - r
    assert np.all(gap <= h * slope * (1 + 1e-6) + 1e-15)


# ------------------------------------------------------------ apply_S / D(S)

def _pp(u, x, xi, r, T):
    return ParametrisedPath(np.array(u, float), np.array(x, float), np.array(xi, float), np.array(r, float), T)


def test_apply_S_linear_clock_rescales():
    u = np.linspace(0, 1, 5)
    p = _pp(u, np.sin(u), u**2, 3.0 * u, 3.0)
    x = apply_S(p)
    assert x.is_continuous
    np.testing.assert_allclose(x.times, 3.0 * u)
    np.testing.assert_allclose(x.values[:, 0], np.sin(u))
    np.testing.assert_allclose(x.values[:, 1], u**2)


def test_apply_S_plateau_becomes_jump():
    # [DERIVED] plateau at level 1 on u in [0.25, 0.75] carrying xibar 0 -> 1
    p = _pp([0, 0.25, 0.5, 0.75, 1], np.zeros((5, 0)), [0, 0, 0.5, 1, 1], [0, 1, 1, 1, 2], 2.0)
    x = apply_S(p)
    assert x.jump_marks[0][0] == 1.0
    assert x.evaluate(1.0, left=True)[0] == 0.0 and x.evaluate(1.0)[0] == 1.0
    assert len(x.jump_indices) == 1


def test_apply_S_rejects_outside_domain():
    p = _pp([0, 0.25, 0.5, 0.75, 1], [0, 0, 1, 0, 0], [0, 0, 0, 0, 0], [0, 1, 1, 1, 2], 2.0)
    with pytest.raises(DomainError) as err:
        apply_S(p)
    assert err.value.violations[0]["kind"] == "plateau_not_monotone"
    assert err.value.violations[0]["level"] == 1.0


def test_domain_linear_clock_any_state():
    u = np.linspace(0, 1, 30)
    assert check_domain_S(_pp(u, np.sin(20 * u), u, u, 1.0))


def test_domain_plateau_up_then_down():
    p = _pp([0, 0.25, 0.5, 0.75, 1], [0, 0, 1e-6, 0, 0], [0, 0, 0, 0, 0], [0, 1, 1, 1, 2], 2.0)
    rep = check_domain_S(p)
    assert not rep and rep.violations


def test_domain_plateau_constant_state():
    p = _pp([0, 0.25, 0.5, 0.75, 1], [0, 0.3, 0.3, 0.3, 0], [0, 0, 0.2, 1, 1], [0, 1, 1, 1, 2], 2.0)
    assert check_domain_S(p)


def test_parametrised_endpoint_invariant():
    with pytest.raises(InvariantError):
        _pp([0, 1], [0, 0], [0, 0], [0, 0.9], 1.0)


@given(cadlag_paths(d=1, l=2, max_stamps=8))
def test_round_trip_through_arctan_clock(x):
    p = parametrise_with_timescale(x, arctan_time_change(x))
    assert check_domain_S(p)
    back = apply_S(p)
    for t in x.times:
        np.testing.assert_allclose(back.evaluate(t), x.evaluate(t), atol=1e-9)
        np.testing.assert_allclose(back.evaluate(t, left=True), x.evaluate(t, left=True), atol=1e-9)
    np.testing.assert_allclose(back.initial, x.initial, atol=1e-12)
    mid = 0.5 * (x.times[:-1] + x.times[1:])
    np.testing.assert_allclose(back.evaluate_many(mid), x.evaluate_many(mid), atol=1e-9)


# ----------------------------------------------------------- serialisation

@given(cadlag_paths(d=1, l=2))
def test_cadlag_serialisation_is_lossless(x):
    y = loads_path(dumps_path(x))
    np.testing.assert_array_equal(y.times, x.times)
    np.testing.assert_array_equal(y.values, x.values)
    np.testing.assert_array_equal(y.left, x.left)
    assert y.d == x.d


@given(cadlag_paths(d=1, l=1))
def test_parametrised_serialisation_is_lossless(x):
    p = parametrise_with_timescale(x, arctan_time_change(x))
    q = loads_path(dumps_path(p))
    for a in ("u", "xbar", "xibar", "rbar"):
        np.testing.assert_array_equal(getattr(q, a), getattr(p, a))
    assert q.T == p.T


def test_record_has_grid_values_and_jump_marks():
    import json
    rec = json.loads(dumps_path(step()))
    assert rec["grid"] == [0.0, 1.0, 2.0]
    assert rec["jump_marks"] == [{"t": 1.0, "left": [0.0]}]
    assert rec["pre_initial"] == [0.0]
