"""Alternating products, window collapse, and boundary structure."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kel import (
    FINITE_ROTATION,
    TRIVIAL,
    UNKNOWN,
    Measure,
    UnknownBoundary,
    bernoulli_boundary,
    boundary_conditional_limit,
    boundary_report_lines,
    koopman,
    markov_entropy_rate,
    new_kernel,
    new_measure,
    nonrandom_factor_compatibility,
    operator_entropy,
    path_marginal,
    rota_diagnostics,
    rota_product,
    stationary_measure,
    tail_boundary_finite,
    tensor,
    unknown_boundary,
    window_collapse,
    window_function,
)

from test_kernels import mixed_class_kernel, random_kernel


# ---------------------------------------------------------------------------
# alternating products K* K ... f


def test_rota_zero_steps_returns_f(two_state):
    k, mu = two_state
    f = np.array([1.0, 0.0])
    g, var = rota_product(k, mu, f, 0)
    assert np.array_equal(g, f)
    mean = float(mu.weights @ f)
    assert abs(var - float(mu.weights @ (f - mean) ** 2)) < 1e-15


def test_rota_matches_matrix_power_oracle(two_state):
    k, mu = two_state
    f = np.array([1.0, 0.0])
    for n in (1, 3, 10):
        g, var = rota_product(k, mu, f, n)
        dense = np.linalg.matrix_power(k.rows, n) @ f
        assert np.abs(g - dense).max() < 1e-13
        mean = float(mu.weights @ dense)
        assert abs(var - float(mu.weights @ (dense - mean) ** 2)) < 1e-13


def test_rota_identity_kernel_fixes_f():
    mu = new_measure([0.25] * 4)
    k = new_kernel(np.eye(4))
    f = np.array([0.1, 0.9, 0.4, 0.7])
    g, var = rota_product(k, mu, f, 37)
    assert np.array_equal(g, f)
    mean = float(mu.weights @ f)
    assert abs(var - float(mu.weights @ (f - mean) ** 2)) < 1e-15


def test_rota_variance_decay_tracks_second_eigenvalue(two_state):
    # second eigenvalue is 0.3, so variance decays at least like 0.3^(2n)
    k, mu = two_state
    f = np.array([1.0, 0.0])
    _, var0 = rota_product(k, mu, f, 0)
    for n in (5, 10, 20):
        _, var = rota_product(k, mu, f, n)
        assert var <= var0 * 0.3 ** (2 * n) + 1e-15


def test_rota_variance_collapses(two_state):
    k, mu = two_state
    _, var = rota_product(k, mu, np.array([1.0, 0.0]), 200)
    assert var < 1e-8


def test_rota_variance_monotone(two_state):
    k, mu = two_state
    rows = rota_diagnostics(k, mu, np.array([1.0, 0.0]), range(1, 501))
    variances = [v for _, v, _ in rows]
    for a, b in zip(variances, variances[1:]):
        assert b <= a + 1e-15


def test_rota_variance_monotone_random():
    for seed in (1, 2, 3):
        k = random_kernel(np.random.default_rng(seed), 4)
        mu = stationary_measure(k)
        f = np.linspace(0.0, 1.0, 4)
        rows = rota_diagnostics(k, mu, f, range(1, 101))
        variances = [v for _, v, _ in rows]
        for a, b in zip(variances, variances[1:]):
            assert b <= a + 1e-15


def test_rota_rejects_out_of_range_f(two_state):
    k, mu = two_state
    with pytest.raises(ValueError):
        rota_product(k, mu, np.array([2.0, 0.0]), 1)


def test_collapse_to_conditional_mean():
    # spectral gap guarantees the n=200 product is mu(f) everywhere
    for seed in range(5):
        k = random_kernel(np.random.default_rng(seed), 5)
        lam = sorted(abs(np.linalg.eigvals(k.rows)))[-2]
        assert lam <= 0.9  # entries are bounded away from 0
        mu = stationary_measure(k)
        f = np.linspace(0.0, 1.0, 5)
        g, _ = rota_product(k, mu, f, 200)
        mean = float(mu.weights @ f)
        assert np.abs(g - mean).max() < 1e-6


def test_rotation_limit_along_period(block4):
    k, mu = block4
    f = np.array([1.0, 0.0, 0.5, 0.25])
    boundary = tail_boundary_finite(k, mu)
    want = boundary_conditional_limit(k, mu, boundary, f, 600)
    got = np.linalg.matrix_power(k.rows, 600) @ f
    assert np.abs(got - want).max() < 1e-8


# ---------------------------------------------------------------------------
# window collapse


def test_window_collapse_documented_example(two_state):
    k, mu = two_state
    table = np.zeros((2, 2))
    table[0, 0] = 1.0  # indicator of the pair (0,0)
    q = window_collapse(k, mu, window_function(table))
    assert abs(q[0] - 0.49) < 1e-15
    assert abs(q[1] - 0.28) < 1e-15


def test_window_collapse_single_coordinate_is_kf(two_state):
    k, mu = two_state
    f = np.array([0.3, 0.9])
    q = window_collapse(k, mu, window_function(f))
    assert np.abs(q - k.rows @ f).max() < 1e-15


def test_window_collapse_constant(two_state):
    k, mu = two_state
    table = np.full((2, 2, 2), 0.42)
    q = window_collapse(k, mu, window_function(table))
    assert np.abs(q - 0.42).max() < 1e-15


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=5000), st.integers(min_value=1, max_value=3))
def test_window_collapse_matches_path_marginal(seed, m):
    rng = np.random.default_rng(seed)
    k = random_kernel(rng, 3)
    mu = stationary_measure(k)
    table = rng.random((3,) * m)
    q = window_collapse(k, mu, window_function(table))
    pm = path_marginal(k, mu, -m, 0)
    weighted = pm.joint * table[None, ...]
    cond = weighted.reshape(3, -1).sum(axis=1) / mu.weights
    assert np.abs(q - cond).max() < 1e-12


# ---------------------------------------------------------------------------
# boundaries


def test_boundary_two_state_is_trivial(two_state):
    k, mu = two_state
    b = tail_boundary_finite(k, mu)
    assert b.kind == TRIVIAL
    assert b.entropy == 0.0
    assert b.atoms.atoms == ((0, 1),)


def test_boundary_block_rotation(block4):
    k, mu = block4
    b = tail_boundary_finite(k, mu)
    assert b.kind == FINITE_ROTATION
    assert b.atoms.atoms == ((0, 1), (2, 3))
    assert b.masses == (0.5, 0.5)
    assert b.rotation == (1, 0)
    assert b.entropy == 0.0


def test_boundary_two_aperiodic_classes():
    k = new_kernel(
        [
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.1, 0.9],
            [0.0, 0.0, 0.9, 0.1],
        ]
    )
    mu = new_measure([0.3, 0.3, 0.2, 0.2])
    b = tail_boundary_finite(k, mu)
    assert b.kind == FINITE_ROTATION
    assert b.atoms.atoms == ((0, 1), (2, 3))
    assert b.rotation == (0, 1)  # both atoms are fixed
    assert abs(b.masses[0] - 0.6) < 1e-15


def test_boundary_mixed_classes():
    k, mu = mixed_class_kernel()
    b = tail_boundary_finite(k, mu)
    assert b.atoms.atoms == ((0, 1), (2, 3), (4, 5))
    assert b.rotation == (0, 2, 1)
    assert b.masses == (0.5, 0.25, 0.25)


def test_boundary_ignores_transient_states():
    k = new_kernel(
        [
            [0.7, 0.3, 0.0],
            [0.4, 0.6, 0.0],
            [0.5, 0.4, 0.1],
        ]
    )
    mu = stationary_measure(k)
    b = tail_boundary_finite(k, mu)
    assert b.kind == TRIVIAL
    assert b.atoms.atoms == ((0, 1),)


def test_bernoulli_boundary_entropy_is_exact():
    b = bernoulli_boundary((0.5, 0.5))
    assert b.entropy == math.log(2.0)


# ---------------------------------------------------------------------------
# operator entropy


def test_operator_entropy_zero_for_finite_kernels(two_state):
    k, mu = two_state
    assert operator_entropy(k, mu) == 0.0
    assert operator_entropy(k) == 0.0  # stationary measure is implied


def test_operator_entropy_bounded_by_rate():
    for seed in range(10):
        k = random_kernel(np.random.default_rng(seed), 4)
        mu = stationary_measure(k)
        assert operator_entropy(k, mu) <= markov_entropy_rate(k, mu) + 1e-12


def test_operator_entropy_adds_over_family(two_state):
    k, mu = two_state
    b = bernoulli_boundary((0.5, 0.5))
    total = operator_entropy([b, (k, mu), b])
    assert total == 2 * math.log(2.0)


def test_operator_entropy_of_tensor(two_state):
    k, mu = two_state
    c = koopman([1, 2, 0], new_measure([1 / 3] * 3))
    pk, pmu = tensor(k, mu, c, new_measure([1 / 3] * 3))
    assert operator_entropy(pk, pmu) == 0.0


def test_operator_entropy_rejects_unknown():
    with pytest.raises(UnknownBoundary):
        operator_entropy(unknown_boundary("nothing known"))
    with pytest.raises(UnknownBoundary):
        operator_entropy([bernoulli_boundary((0.5, 0.5)), unknown_boundary("n/a")])


# ---------------------------------------------------------------------------
# factor compatibility


def test_compatibility_block(block4):
    k, mu = block4
    rep = nonrandom_factor_compatibility(k, mu)
    assert rep.is_isomorphism
    assert rep.atom_map == (1, 0)
    assert rep.embedding == (0, 1)


def test_compatibility_mixed_classes():
    k, mu = mixed_class_kernel()
    rep = nonrandom_factor_compatibility(k, mu)
    assert rep.is_isomorphism
    assert rep.boundary.rotation == (0, 2, 1)
    assert any("isomorphism" in line for line in rep.lines())


def test_boundary_report_lines(block4):
    k, mu = block4
    lines = boundary_report_lines(tail_boundary_finite(k, mu), k.labels)
    assert lines[0] == "kind: finite-rotation"
    assert any("{s0,s1}" in ln for ln in lines)
