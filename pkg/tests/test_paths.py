"""Path marginals, sampling, and entropy rate estimation."""

import math

import numpy as np
import pytest

from kel import (
    InsufficientDataWarning,
    WindowTooLarge,
    block_entropy_estimate,
    marginalize,
    markov_entropy_rate,
    new_kernel,
    new_measure,
    path_marginal,
    sample_path,
    stationary_measure,
    tensor,
    write_marginal_csv,
    write_trajectory,
)


def h2(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def test_window_masses(two_state):
    k, mu = two_state
    pm = path_marginal(k, mu, -1, 0)
    assert pm.window == (-1, 0)
    assert pm.length == 2
    assert abs(pm.mass((0, 0)) - (4 / 7) * 0.7) < 1e-15
    assert abs(pm.mass((0, 1)) - (4 / 7) * 0.3) < 1e-15
    assert abs(pm.mass((1, 0)) - (3 / 7) * 0.4) < 1e-15
    assert abs(float(pm.joint.sum()) - 1.0) < 1e-12


def test_marginal_consistency(two_state):
    k, mu = two_state
    wide = path_marginal(k, mu, -3, 0)
    narrow = marginalize(wide, -1, 0)
    direct = path_marginal(k, mu, -1, 0)
    assert np.abs(narrow.joint - direct.joint).max() < 1e-15


def test_shift_stationarity(two_state):
    # the same window re-anchored anywhere has the same table
    k, mu = two_state
    a = path_marginal(k, mu, -2, 0)
    b = path_marginal(k, mu, 5, 7)
    assert np.abs(a.joint - b.joint).max() < 1e-15


def test_single_point_window_is_mu(two_state):
    k, mu = two_state
    pm = path_marginal(k, mu, 0, 0)
    assert np.abs(pm.joint - mu.weights).max() < 1e-15


def test_window_size_guard():
    n = 10
    rows = np.full((n, n), 1.0 / n)
    k = new_kernel(rows)
    mu = stationary_measure(k)
    with pytest.raises(WindowTooLarge):
        path_marginal(k, mu, -7, 0)


def test_sample_path_is_deterministic(two_state):
    k, mu = two_state
    a = sample_path(k, mu, 1000, seed=5)
    b = sample_path(k, mu, 1000, seed=5)
    c = sample_path(k, mu, 1000, seed=6)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)
    assert a.seed == 5 and a.length == 1000


def test_sample_path_respects_deterministic_kernel():
    mu = new_measure([0.25] * 4)
    k = new_kernel(np.eye(4))
    traj = sample_path(k, mu, 50, seed=1)
    assert np.all(traj.states == traj.states[0])


def test_sample_path_occupation_frequency(two_state):
    k, mu = two_state
    traj = sample_path(k, mu, 100_000, seed=11)
    freq = float(np.mean(traj.states == 0))
    assert abs(freq - 4 / 7) < 0.01


def test_entropy_rate_against_direct_formula(two_state):
    k, mu = two_state
    want = (4 * h2(0.3) + 3 * h2(0.4)) / 7
    got = markov_entropy_rate(k, mu)
    assert abs(got - want) < 1e-12
    assert abs(got - 0.63750) < 1e-5


def test_entropy_rate_uniform_kernel():
    rows = np.full((3, 3), 1.0 / 3.0)
    k = new_kernel(rows)
    mu = stationary_measure(k)
    assert abs(markov_entropy_rate(k, mu) - math.log(3)) < 1e-12


def test_entropy_rate_zero_for_deterministic():
    mu = new_measure([0.25] * 4)
    k = new_kernel(np.eye(4)[[1, 2, 3, 0]])
    assert markov_entropy_rate(k, new_measure([0.25] * 4)) == 0.0


def test_entropy_rate_adds_over_products(two_state):
    k, mu = two_state
    rows = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.5, 0.25]])
    k2 = new_kernel(rows)
    mu2 = stationary_measure(k2)
    pk, pmu = tensor(k, mu, k2, mu2)
    lhs = markov_entropy_rate(pk, pmu)
    rhs = markov_entropy_rate(k, mu) + markov_entropy_rate(k2, mu2)
    assert abs(lhs - rhs) < 1e-10


def test_block_entropy_on_exact_marginal_equals_rate(two_state):
    k, mu = two_state
    rate = markov_entropy_rate(k, mu)
    for block in (2, 3, 4):
        pm = path_marginal(k, mu, -block + 1, 0)
        assert abs(block_entropy_estimate(pm, block) - rate) < 1e-12


def test_block_entropy_on_long_trajectory(two_state):
    k, mu = two_state
    traj = sample_path(k, mu, 1_000_000, seed=21)
    est = block_entropy_estimate(traj, 3)
    assert abs(est - 0.6375) < 0.01


def test_block_entropy_warns_when_data_is_thin(two_state):
    k, mu = two_state
    traj = sample_path(k, mu, 200, seed=3)
    with pytest.warns(InsufficientDataWarning):
        block_entropy_estimate(traj, 4)


def test_trajectory_export(tmp_path, two_state):
    k, mu = two_state
    traj = sample_path(k, mu, 10, seed=9)
    out = tmp_path / "traj.txt"
    write_trajectory(traj, k.labels, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "# seed=9"
    assert len(lines) == 11
    assert set(lines[1:]) <= {"s0", "s1"}


def test_marginal_csv_export(tmp_path, two_state):
    k, mu = two_state
    pm = path_marginal(k, mu, -1, 0)
    out = tmp_path / "pm.csv"
    write_marginal_csv(pm, out, seed=None)
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "x-1,x0,mass"
    assert lines[1].startswith("s0,s0,")
    # 17 significant digits
    assert lines[1].split(",")[2] == f"{(4 / 7) * 0.7:.17g}"
