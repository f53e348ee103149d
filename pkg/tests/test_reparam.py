"""Arctan clock, truncation, Lipschitz reparametrisation and perturbed clocks."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import cadlag_paths, controls, seeds, step
from singmfg.errors import AlignmentError, ContractError, ParameterError
from singmfg.experiments import random_domain_path
from singmfg.flow import EmpiricalMeasureFlow
from singmfg.marcus import NoisePath, build_coefficients
from singmfg.paths import CadlagPath, ParametrisedPath, apply_S, check_domain_S, generalized_inverse
from singmfg.reparam import (LipschitzBudget, arctan_time_change, beta_map, clock_lipschitz, empirical_lipschitz,
                             gronwall_probe, inverse_lipschitz_bound, lipschitz_reparametrise,
                             parametrise_with_timescale, perturb_timescale, truncate_control, truncation_grid)

# [DERIVED] (0.5 + arctan 0) / (1 + pi/2), oracles.arctan_clock
R_HALF_NO_ACTION = 0.19449226482417137


# ----------------------------------------------------------------- arctan clock

def test_no_action_clock():
    assert oracles.arctan_clock(0.5, 0.0, 1.0) == R_HALF_NO_ACTION
    ts = arctan_time_change(CadlagPath.constant([0.0], 1.0))
    assert ts.r(0.5) == pytest.approx(R_HALF_NO_ACTION, abs=1e-15)
    assert ts.plateaus() == [(len(ts.u) - 2, len(ts.u) - 1)]


def test_unit_jump_at_half_lands_at_half():
    # (1/2 + arctan 1) / (1 + pi/2) = 1/2
    ts = arctan_time_change(step(t_jump=0.5, T=1.0))
    assert abs(ts.r(0.5) - 0.5) <= 1e-12
    assert ts.r(0.5 - 1e-9) == pytest.approx(oracles.arctan_clock(0.5, 0.0, 1.0), abs=1e-8)


@given(controls(l=2, T=1.5))
def test_clock_matches_formula_at_stamps(c):
    ts = arctan_time_change(c)
    for t in c.times[:-1]:
        var = float(np.sum(c.evaluate(t) - c.initial))
        assert ts.r(t) == pytest.approx(oracles.arctan_clock(t, var, c.T), abs=1e-12)


@given(controls(l=2, T=1.5))
def test_clock_lipschitz_and_monotone(c):
    ts = arctan_time_change(c)
    assert clock_lipschitz(ts) <= c.T + math.pi / 2 + 1e-9
    t = np.linspace(0, c.T, 97)[:-1]
    assert np.all(np.diff(ts.r(t)) > 0)
    assert ts.u[0] == 0.0 and ts.u[-1] == 1.0 and ts.rbar[-1] == c.T


@given(cadlag_paths(d=1, l=2))
def test_parametrisation_along_arctan_clock_round_trips(x):
    p = parametrise_with_timescale(x, arctan_time_change(x))
    assert check_domain_S(p)
    back = apply_S(p)
    for t in x.times:
        np.testing.assert_allclose(back.evaluate(t), x.evaluate(t), atol=1e-12)


def test_parametrisation_rejects_mismatched_clock():
    with pytest.raises(AlignmentError):
        parametrise_with_timescale(step(), arctan_time_change(CadlagPath.constant([0.0], 2.0)))
    ts = generalized_inverse([0.0, 0.5, 0.75, 1.0], [0.0, 0.5, 0.5, 2.0], 2.0)
    with pytest.raises(AlignmentError):
        parametrise_with_timescale(step(), ts)


# ------------------------------------------------------------------- truncation

def test_truncation_is_identity_below_cap():
    rng = np.random.default_rng(0)
    p = random_domain_path(rng)
    K = float(p.xibar.max()) + 0.1
    q = truncate_control(p, K)
    np.testing.assert_array_equal(q.u, p.u)
    np.testing.assert_array_equal(q.xibar, p.xibar)


@settings(max_examples=30)
@given(seeds, st.floats(0.05, 1.0))
def test_truncation_caps_and_stays_monotone(seed, frac):
    p = random_domain_path(np.random.default_rng(seed))
    K = frac * max(float(p.xibar.max()), 1e-3)
    q = truncate_control(p, K)
    assert q.xibar.max() <= K
    assert check_domain_S(q)
    np.testing.assert_allclose(q.xibar, np.minimum(np.column_stack(
        [np.interp(q.u, p.u, c) for c in p.xibar.T]), K), atol=1e-12)


def test_truncation_resimulates_state():
    co = build_coefficients(1, 1, 0, gamma="geometric_gamma")
    u = np.linspace(0, 1, 5)
    p = ParametrisedPath(u, np.ones(5), [0, 0.5, 1.0, 1.5, 2.0], u, 1.0)
    grid = truncation_grid(p, 1.2)
    assert 0.6 in np.round(grid, 12)
    q = truncate_control(p, 1.2, coeffs=co, noise=NoisePath.zeros(grid, 0), x0=[1.0], ode_steps=64)
    # rbar moves with xibar, so the state follows the Euler product over the capped increments
    assert q.xbar[-1, 0] == pytest.approx(1.5 * 1.5 * 1.2, abs=1e-12)
    with pytest.raises(ParameterError):
        truncate_control(p, 0.0)


# ---------------------------------------------------------- Lipschitz budget

def test_budget_formula():
    b = LipschitzBudget(K=2.0, epsilon=0.25)
    assert b.constant(1.0, 2) == pytest.approx((1 + 0.25 * 5) / 0.25)
    assert b.displacement_bound(1.0, 2) == pytest.approx(2 * 0.25 * 5)
    for bad in ({"K": 1.0, "epsilon": 0.0}, {"K": 0.0, "epsilon": 0.1}):
        with pytest.raises(ParameterError):
            LipschitzBudget(**bad)


@settings(max_examples=40)
@given(seeds, st.floats(0.01, 2.0))
def test_reparametrised_path_obeys_budget(seed, eps):
    p = random_domain_path(np.random.default_rng(seed))
    K = max(float(p.xibar.max()), 1e-3)
    b = LipschitzBudget(K, eps)
    q = lipschitz_reparametrise(p, b)
    assert check_domain_S(q)
    assert empirical_lipschitz(q) <= b.constant(p.T, p.l) * (1 + 1e-9)
    v = beta_map(p, b)
    assert np.max(np.abs(v - p.u)) <= b.displacement_bound(p.T, p.l) + 1e-12
    # same image under S
    a, c = apply_S(p), apply_S(q)
    for t in a.times:
        np.testing.assert_allclose(c.evaluate(t), a.evaluate(t), atol=1e-12)


def test_reparametrisation_needs_capped_control():
    p = random_domain_path(np.random.default_rng(3))
    with pytest.raises(ContractError):
        lipschitz_reparametrise(p, LipschitzBudget(float(p.xibar.max()) / 2, 0.1))


# ---------------------------------------------------------- perturbed clock

@settings(max_examples=40)
@given(seeds, st.floats(1e-3, 2.0))
def test_perturbed_clock_properties(seed, delta):
    p = random_domain_path(np.random.default_rng(seed))
    q = perturb_timescale(p, delta)
    assert np.max(np.abs(q.rbar - p.rbar)) <= delta * p.T + 1e-12
    assert np.all(np.diff(q.rbar) > 0)
    slope = np.diff(q.rbar) / np.diff(q.u)
    assert np.min(slope) >= 1.0 / inverse_lipschitz_bound(delta, p.T) * (1 - 1e-9)


def test_perturbed_affine_clock_is_unchanged():
    u = np.linspace(0, 1, 9)
    p = ParametrisedPath(u, u, u, 2.0 * u, 2.0)
    np.testing.assert_allclose(perturb_timescale(p, 0.3).rbar, 2.0 * u, atol=1e-15)


def test_perturbed_plateau_slope():
    u = np.array([0.0, 0.25, 0.75, 1.0])
    p = ParametrisedPath(u, np.zeros(4), [0, 0, 1, 1], [0, 0.5, 0.5, 1.0], 1.0)
    q = perturb_timescale(p, 0.5)
    assert (q.rbar[2] - q.rbar[1]) / 0.5 == pytest.approx(0.5 * 1.0 / 1.5)
    with pytest.raises(ParameterError):
        perturb_timescale(p, 0.0)


# ----------------------------------------------------------- stability probe

def test_gronwall_probe_zero_for_identical_flows():
    co = build_coefficients(1, 1, 1, b="mean_reverting_b", sigma="constant_sigma", gamma="geometric_gamma")
    u = np.linspace(0, 1, 11)
    p = ParametrisedPath(u, np.zeros(11), u, u, 1.0)
    fl = EmpiricalMeasureFlow(u, np.zeros((4, 11, 2)), d=1)
    noise = NoisePath.sample(u, 1, seed=0, n_paths=8)
    pr = gronwall_probe(co, p, fl, fl, noise, 8, x0=[0.0])
    assert pr.flow_distance == 0.0 and pr.output_distance == 0.0 and pr.ratio == 0.0


def test_gronwall_probe_flow_independent_drift():
    co = build_coefficients(1, 1, 1, b="linear_b", sigma="constant_sigma")
    u = np.linspace(0, 1, 11)
    p = ParametrisedPath(u, np.zeros(11), np.zeros(11), u, 1.0)
    fa = EmpiricalMeasureFlow(u, np.zeros((4, 11, 2)), d=1)
    fb = EmpiricalMeasureFlow(u, np.ones((4, 11, 2)), d=1)
    pr = gronwall_probe(co, p, fa, fb, NoisePath.sample(u, 1, seed=1, n_paths=8), 8, x0=[0.0])
    assert pr.flow_distance > 0 and pr.output_distance == pytest.approx(0.0, abs=1e-14)
