"""Kernel construction, stationary measures, reversal, deterministic sets."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kel import (
    InputError,
    NonUniqueStationary,
    NotInvariant,
    NotMeasurePreserving,
    NotStochastic,
    adjoint,
    canonical_partition,
    class_period,
    closed_classes,
    deterministic_sigma_algebra,
    format_kernel_text,
    invariance_gap,
    koopman,
    maximal_nonrandom_factor,
    new_kernel,
    new_measure,
    read_kernel_file,
    read_kernel_text,
    restrict_to_support,
    stationary_measure,
    strongly_connected_components,
    tensor,
)


def random_kernel(rng, n):
    rows = 0.05 + rng.random((n, n))
    return new_kernel(rows / rows.sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# construction


def test_rejects_bad_row_sum():
    with pytest.raises(NotStochastic):
        new_kernel([[0.7, 0.4], [0.4, 0.6]])


def test_rejects_negative_entry():
    with pytest.raises(NotStochastic):
        new_kernel([[1.1, -0.1], [0.5, 0.5]])


def test_rejects_non_square():
    with pytest.raises(NotStochastic):
        new_kernel([[0.5, 0.5]])


def test_rejects_duplicate_labels():
    with pytest.raises(NotStochastic):
        new_kernel([[1.0, 0.0], [0.0, 1.0]], labels=["a", "a"])


def test_default_labels_and_frozen_rows():
    k = new_kernel([[0.5, 0.5], [0.5, 0.5]])
    assert k.labels == ("s0", "s1")
    with pytest.raises(ValueError):
        k.rows[0, 0] = 1.0


def test_tiny_row_sum_error_is_renormalized():
    k = new_kernel([[0.5 + 1e-10, 0.5], [0.25, 0.75]])
    assert abs(k.rows[0].sum() - 1.0) < 1e-15


def test_measure_rejects_negative_and_bad_total():
    with pytest.raises(NotStochastic):
        new_measure([0.5, -0.5, 1.0])
    with pytest.raises(NotStochastic):
        new_measure([0.9, 0.2])


# ---------------------------------------------------------------------------
# stationary measures


def test_two_state_stationary(two_state):
    k, mu = two_state
    assert abs(mu.weights[0] - 4 / 7) < 1e-12
    assert abs(mu.weights[1] - 3 / 7) < 1e-12
    assert invariance_gap(k, mu) < 1e-10


def test_identity_has_no_unique_stationary():
    k = new_kernel([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(NonUniqueStationary):
        stationary_measure(k)


def test_block_kernel_stationary_is_uniform(block4):
    _, mu = block4
    assert np.allclose(mu.weights, 0.25, atol=1e-12)


def test_stationary_with_transient_state():
    # state 2 drains into the two-state chain and gets zero mass
    k = new_kernel(
        [
            [0.7, 0.3, 0.0],
            [0.4, 0.6, 0.0],
            [0.5, 0.4, 0.1],
        ]
    )
    mu = stationary_measure(k)
    assert abs(mu.weights[0] - 4 / 7) < 1e-10
    assert mu.weights[2] == 0.0
    sub_k, sub_mu, kept = restrict_to_support(k, mu)
    assert kept == (0, 1)
    assert sub_k.n == 2 and sub_mu.n == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=6))
def test_stationary_invariance_random(seed, n):
    k = random_kernel(np.random.default_rng(seed), n)
    mu = stationary_measure(k)
    assert invariance_gap(k, mu) < 1e-10
    assert abs(float(mu.weights.sum()) - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# time reversal


def test_adjoint_detailed_balance(two_state):
    k, mu = two_state
    star = adjoint(k, mu)
    for i in range(2):
        for j in range(2):
            assert abs(mu.weights[i] * star.rows[i, j] - mu.weights[j] * k.rows[j, i]) < 1e-12


def test_reversible_chain_is_self_adjoint(two_state):
    k, mu = two_state
    star = adjoint(k, mu)
    assert np.abs(star.rows - k.rows).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=6))
def test_adjoint_is_an_involution(seed, n):
    k = random_kernel(np.random.default_rng(seed), n)
    mu = stationary_measure(k)
    back = adjoint(adjoint(k, mu), mu)
    assert np.abs(back.rows - k.rows).max() < 1e-12


def test_adjoint_preserves_stationary_measure():
    k = random_kernel(np.random.default_rng(7), 5)
    mu = stationary_measure(k)
    assert invariance_gap(adjoint(k, mu), mu) < 1e-9


def test_adjoint_requires_invariance(two_state):
    k, _ = two_state
    with pytest.raises(NotInvariant):
        adjoint(k, new_measure([0.5, 0.5]))


def test_koopman_adjoint_is_inverse_rotation():
    mu = new_measure([1 / 3] * 3)
    fwd = koopman([1, 2, 0], mu)
    star = adjoint(fwd, mu)
    inv = koopman([2, 0, 1], mu)
    assert np.abs(star.rows - inv.rows).max() < 1e-12


# ---------------------------------------------------------------------------
# products


def test_tensor_entries_and_labels(two_state):
    k, mu = two_state
    c = new_kernel([[0.0, 1.0], [1.0, 0.0]], labels=["u", "v"])
    cmu = new_measure([0.5, 0.5])
    prod, pmu = tensor(k, mu, c, cmu)
    assert prod.n == 4
    assert prod.labels == ("s0.u", "s0.v", "s1.u", "s1.v")
    # entry ((i,a),(j,b)) = K[i,j] * C[a,b]
    assert abs(prod.rows[0, 1] - k.rows[0, 0] * c.rows[0, 1]) < 1e-15
    assert abs(prod.rows[2, 1] - k.rows[1, 0] * c.rows[0, 1]) < 1e-15
    assert invariance_gap(prod, pmu) < 1e-10


def test_koopman_needs_measure_preservation():
    mu = new_measure([0.25, 0.25, 0.5])
    with pytest.raises(NotMeasurePreserving):
        koopman([0, 0, 2], mu)
    swap = koopman([1, 0, 2], mu)  # preserves only because masses match
    assert swap.rows[0, 1] == 1.0


# ---------------------------------------------------------------------------
# class structure


def test_strongly_connected_components():
    # 0 <-> 1, 2 -> everything, 3 alone
    succ = [[1], [0], [0, 1, 3], [3]]
    comps = strongly_connected_components(succ)
    assert comps == [(0, 1), (2,), (3,)]


def test_closed_classes_two_state(two_state):
    k, _ = two_state
    assert closed_classes(k.rows) == [(0, 1)]


def test_closed_classes_block_diagonal():
    k = new_kernel(
        [
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.1, 0.9],
            [0.0, 0.0, 0.9, 0.1],
        ]
    )
    assert closed_classes(k.rows) == [(0, 1), (2, 3)]


def test_class_period_of_block(block4):
    k, _ = block4
    d, phase = class_period(k.rows, (0, 1, 2, 3))
    assert d == 2
    assert phase[0] == phase[1] and phase[2] == phase[3]
    assert phase[0] != phase[2]


def test_class_period_of_cycle():
    k = koopman([1, 2, 3, 4, 0], new_measure([0.2] * 5))
    d, phase = class_period(k.rows, (0, 1, 2, 3, 4))
    assert d == 5
    assert sorted(phase.values()) == [0, 1, 2, 3, 4]


# ---------------------------------------------------------------------------
# deterministic sigma-algebra


def test_sigma_algebra_two_state_is_trivial(two_state):
    k, mu = two_state
    part, mapping = deterministic_sigma_algebra(k, mu)
    assert part.atoms == ((0, 1),)
    assert mapping == (0,)


def test_sigma_algebra_block(block4):
    k, mu = block4
    part, mapping = deterministic_sigma_algebra(k, mu)
    assert part.atoms == ((0, 1), (2, 3))
    assert mapping == (1, 0)


def test_sigma_algebra_of_rotation_keeps_points():
    mu = new_measure([0.25] * 4)
    k = koopman([1, 2, 3, 0], mu)
    part, mapping = deterministic_sigma_algebra(k, mu)
    assert part.atoms == ((0,), (1,), (2,), (3,))
    assert mapping == (1, 2, 3, 0)


def mixed_class_kernel():
    rows = np.zeros((6, 6))
    rows[0, 0] = rows[0, 1] = rows[1, 0] = rows[1, 1] = 0.5
    rows[2, 4] = rows[2, 5] = rows[3, 4] = rows[3, 5] = 0.5
    rows[4, 2] = rows[4, 3] = rows[5, 2] = rows[5, 3] = 0.5
    k = new_kernel(rows)
    mu = new_measure([0.25, 0.25, 0.125, 0.125, 0.125, 0.125])
    return k, mu


def test_sigma_algebra_two_closed_classes():
    k, mu = mixed_class_kernel()
    part, mapping = deterministic_sigma_algebra(k, mu)
    assert part.atoms == ((0, 1), (2, 3), (4, 5))
    assert mapping == (0, 2, 1)


def brute_force_deterministic_sets(k, mu, m_cap):
    """Every subset S with K^m(x,S) in {0,1} for all x, m <= m_cap."""
    n = k.n
    powers = [np.linalg.matrix_power(k.rows, m) for m in range(1, m_cap + 1)]
    found = []
    for mask in range(2 ** n):
        ind = np.array([(mask >> x) & 1 for x in range(n)], dtype=float)
        ok = True
        for pw in powers:
            hit = pw @ ind
            if not np.all((hit < 1e-12) | (np.abs(hit - 1.0) < 1e-12)):
                ok = False
                break
        if ok:
            found.append(mask)
    return set(found)


def atom_unions(part, n):
    masks = set()
    for combo in range(2 ** len(part.atoms)):
        mask = 0
        for a, atom in enumerate(part.atoms):
            if (combo >> a) & 1:
                for x in atom:
                    mask |= 1 << x
        masks.add(mask)
    return masks


@pytest.mark.parametrize("builder", ["two_state", "block", "mixed"])
def test_sigma_algebra_matches_brute_force(builder):
    if builder == "two_state":
        k = new_kernel([[0.7, 0.3], [0.4, 0.6]])
        mu = stationary_measure(k)
    elif builder == "block":
        k = new_kernel(
            [
                [0.0, 0.0, 0.5, 0.5],
                [0.0, 0.0, 0.5, 0.5],
                [0.5, 0.5, 0.0, 0.0],
                [0.5, 0.5, 0.0, 0.0],
            ]
        )
        mu = stationary_measure(k)
    else:
        k, mu = mixed_class_kernel()
    part, _ = deterministic_sigma_algebra(k, mu)
    cap = k.n * k.n + 3 * k.n
    assert brute_force_deterministic_sets(k, mu, cap) == atom_unions(part, k.n)


def test_nonrandom_factor_block(block4):
    k, mu = block4
    sys = maximal_nonrandom_factor(k, mu)
    assert sys.points == ("{s0,s1}", "{s2,s3}")
    assert sys.masses == (0.5, 0.5)
    assert sys.mapping == (1, 0)
    assert math.fsum(sys.masses) == 1.0


def test_nonrandom_factor_of_rotation_is_everything():
    mu = new_measure([1 / 3] * 3)
    k = koopman([1, 2, 0], mu, labels=["x", "y", "z"])
    sys = maximal_nonrandom_factor(k, mu)
    assert sys.points == ("{x}", "{y}", "{z}")
    assert sys.mapping == (1, 2, 0)


def test_canonical_partition_rejects_overlap():
    with pytest.raises(ValueError):
        canonical_partition([(0, 1), (1, 2)])


def test_canonical_partition_sorts_by_min():
    p = canonical_partition([(4, 5), (0, 2), (1, 3)])
    assert p.atoms == ((0, 2), (1, 3), (4, 5))
    assert p.index_of(5) == 2


# ---------------------------------------------------------------------------
# text format


def test_kernel_text_roundtrip(two_state):
    k, _ = two_state
    text = format_kernel_text(k)
    back = read_kernel_text(text)
    assert back.labels == k.labels
    assert np.abs(back.rows - k.rows).max() < 1e-15


def test_kernel_text_with_comments_and_labels():
    text = "# a comment\n2\n0.7 0.3\n0.4 0.6\n#labels: a,b\n"
    k = read_kernel_text(text)
    assert k.labels == ("a", "b")
    assert k.rows[0, 0] == 0.7


def test_kernel_text_errors_name_the_source():
    with pytest.raises(InputError, match="somefile"):
        read_kernel_text("2\n0.7 0.3\n", source="somefile")
    with pytest.raises(InputError, match="somefile"):
        read_kernel_text("2\n0.7 0.3\nx y\n", source="somefile")
    with pytest.raises(InputError):
        read_kernel_text("")


def test_kernel_file_roundtrip(tmp_path, two_state):
    k, _ = two_state
    p = tmp_path / "k.txt"
    p.write_text(format_kernel_text(k))
    back = read_kernel_file(p)
    assert np.abs(back.rows - k.rows).max() < 1e-15


def test_missing_kernel_file_reports_path(tmp_path):
    with pytest.raises(InputError, match="nope.txt"):
        read_kernel_file(tmp_path / "nope.txt")
