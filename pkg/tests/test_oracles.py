"""The reference computations reproduce the constants frozen in the other test files."""
import math

import pytest

import oracles
from test_marcus import EULER_RAMP_TERMINAL
from test_reparam import R_HALF_NO_ACTION


def test_euler_ramp_constant():
    assert oracles.euler_geometric_ramp(100, 10_000) == pytest.approx(EULER_RAMP_TERMINAL, abs=1e-12)
    # the Euler product approaches e as the ramp cells are refined
    errs = [abs(oracles.euler_geometric_ramp(100, 2000, cells=c) - math.e) for c in (1, 4, 16)]
    assert errs[0] > errs[1] > errs[2]


def test_ramp_integral_constant():
    assert oracles.ramp_left_point_integral(100) == pytest.approx(0.495, abs=1e-12)
    vals = [oracles.ramp_left_point_integral(n) for n in (10, 100, 1000)]
    assert vals[0] < vals[1] < vals[2] < 0.5


def test_toy_optimum_constant():
    assert oracles.analytic_toy_bruteforce() == pytest.approx((0.95, -0.0975), abs=1e-10)


def test_arctan_constants():
    assert oracles.arctan_clock(0.5, 0.0, 1.0) == R_HALF_NO_ACTION
    assert oracles.arctan_clock(0.5, 1.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_frechet_constants():
    assert oracles.step_vs_ramp_frechet(10) == pytest.approx(1 / 11)
    assert oracles.discrete_frechet([[0.0], [1.0]], [0.0, 0.0], [[0.0], [1.0]], [0.0, 0.0]) == 0.0
    assert oracles.discrete_frechet([[0.0]], [0.0], [[3.0], [4.0]], [0.0, 0.5]) == 4.0


def test_jump_constants():
    assert oracles.geometric_psi(2.0, 1.0) == pytest.approx(2 * math.e)
    assert oracles.exp_cost(1.0) == pytest.approx(math.e - 1)
    assert oracles.quantile_w2([0.0, 1.0], [1.0, 0.0]) == 0.0
