"""Shared path builders and hypothesis strategies."""
from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from singmfg.paths import CadlagPath

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def step(t_jump=1.0, size=1.0, T=2.0):
    """``size * 1_{[t_jump, T]}`` as a one-component control."""
    return CadlagPath.from_values([0.0, t_jump, T], [[0.0], [size], [size]], jumps={t_jump: [0.0]})


def ramp(n, t_end=1.0, T=2.0):
    """``0 v n (t - t_end + 1/n) ^ 1`` sampled at its kinks."""
    return CadlagPath.from_values([0.0, t_end - 1.0 / n, t_end, T], [[0.0], [0.0], [1.0], [1.0]])


def build_path(rng, d=1, l=1, T=1.0, n=6, n_jumps=2, jump_at_zero=False, state_jumps=True):
    """Random path with a random-walk state and a non-decreasing control.

    Every jump moves each control component by a positive amount.
    """
    grid = np.sort(rng.choice(np.arange(1, 1000), size=n - 2, replace=False)) * (T / 1000)
    times = np.concatenate([[0.0], grid, [T]])
    n = len(times)
    jumps = np.zeros(n, dtype=bool)
    k_max = min(n_jumps, n - 1)
    if k_max:
        jumps[rng.choice(np.arange(1, n), size=int(rng.integers(0, k_max + 1)), replace=False)] = True
    jumps[0] = jump_at_zero
    left = np.empty((n, d + l))
    right = np.empty((n, d + l))
    left[0, :d] = rng.normal(size=d)
    left[0, d:] = 0.0
    for k in range(n):
        if k > 0:
            left[k, :d] = right[k - 1, :d] + rng.normal(scale=0.3, size=d)
            left[k, d:] = right[k - 1, d:] + rng.exponential(0.2, size=l) * rng.integers(0, 2, size=l)
        right[k] = left[k]
        if jumps[k]:
            right[k, d:] += rng.uniform(0.1, 1.0, size=l)
            if state_jumps:
                right[k, :d] += rng.normal(scale=0.5, size=d)
    return CadlagPath(times, right, left, d)


@st.composite
def cadlag_paths(draw, d=1, l=1, T=1.0, max_stamps=8, max_jumps=3, jump_at_zero=None, state_jumps=True):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(2, max_stamps))
    at_zero = draw(st.booleans()) if jump_at_zero is None else jump_at_zero
    return build_path(np.random.default_rng(seed), d, l, T, n, max_jumps, at_zero, state_jumps)


@st.composite
def controls(draw, l=1, T=1.0, max_stamps=8, max_jumps=3):
    """Pure controls (``d = 0``)."""
    return draw(cadlag_paths(d=0, l=l, T=T, max_stamps=max_stamps, max_jumps=max_jumps))


seeds = st.integers(0, 2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
