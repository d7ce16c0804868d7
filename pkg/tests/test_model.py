import numpy as np
import pytest
from hypothesis import given, strategies as st

from netmpc import presets
from netmpc.model import (decompose, reachability_index, reachability_matrix, stack,
                          stage_cost_sum, validate_model)

from conftest import make_model, random_model


def test_four_state_system_passes_every_check():
    report = validate_model(presets.four_state_model())
    assert report.ok, str(report)
    assert report.failures == []


def test_unstable_scalar_fails_eigenvalue_check():
    report = validate_model(make_model(2.0, 1.0))
    assert not report.ok
    assert not report["eigenvalues_in_unit_disk"].passed


def test_jordan_block_on_unit_circle_fails_semisimplicity():
    report = validate_model(make_model([[1, 1], [0, 1]], [[0], [1]]))
    assert not report["unit_circle_semisimple"].passed


def test_dimension_mismatch_is_a_hard_error():
    with pytest.raises(ValueError):
        make_model(np.eye(2), np.ones((3, 1)))


def test_decomposition_of_four_state_system():
    dec = decompose(presets.four_state_model())
    assert (dec.d_o, dec.d_s, dec.kappa) == (3, 1, 3)
    np.testing.assert_allclose(dec.A_o.T @ dec.A_o, np.eye(3), atol=1e-10)
    assert np.max(np.abs(np.linalg.eigvals(dec.A_s))) < 1


def test_orthogonal_plant_has_empty_stable_part():
    dec = decompose(presets.three_state_model())
    assert dec.d_o == 3 and dec.d_s == 0


def test_strictly_stable_plant_has_no_orthogonal_part():
    dec = decompose(make_model(0.5 * np.eye(2), np.eye(2)))
    assert dec.d_o == 0 and dec.d_s == 2 and dec.kappa == 0


def test_decomposition_without_block_form_recomposes(rng):
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    blk = np.zeros((3, 3))
    blk[:2, :2] = rot
    blk[2, 2] = 0.4
    T = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    A = T @ blk @ np.linalg.inv(T)
    dec = decompose(make_model(A, rng.standard_normal((3, 1))))
    assert (dec.d_o, dec.d_s) == (2, 1)
    np.testing.assert_allclose(dec.recompose(), A, atol=1e-8)
    np.testing.assert_allclose(dec.A_o.T @ dec.A_o, np.eye(2), atol=1e-10)


def test_reachability_matrix_examples():
    dec = decompose(presets.four_state_model())
    np.testing.assert_allclose(reachability_matrix(dec.A_o, dec.B_o, 3),
                               [[1, 1, 1], [0, -1, 0], [-1, 0, 1]], atol=1e-12)
    B = np.array([[0.0], [1.0]])
    np.testing.assert_array_equal(reachability_matrix(np.eye(2), B, 1), B)
    np.testing.assert_allclose(reachability_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]), B, 2), np.eye(2))


def test_reachability_index_examples():
    m3 = presets.three_state_model()
    assert reachability_index(m3.A, m3.B) == 3
    assert reachability_index(np.eye(1), np.ones((1, 1))) == 1
    with pytest.raises(ValueError):
        reachability_index(np.eye(2), np.array([[1.0], [0.0]]))


def test_stacked_scalar_example():
    sm = stack(make_model(1.0, 1.0, N=2))
    np.testing.assert_array_equal(sm.calB, [[0, 0], [1, 0], [1, 1]])
    np.testing.assert_array_equal(sm.alpha, [[3, 1], [1, 2]])
    np.testing.assert_array_equal(sm.calA[:1], np.eye(1))


@given(st.integers(0, 2**32 - 1))
def test_stacked_dynamics_match_step_simulation(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    sm = stack(model)
    d, m, N = model.d, model.m, model.N
    x0 = rng.standard_normal(d)
    u = rng.standard_normal((N, m))
    w = rng.standard_normal((N, d))
    xs = [x0]
    for k in range(N):
        xs.append(model.A @ xs[-1] + model.B @ u[k] + w[k])
    stacked = sm.calA @ x0 + sm.calB @ u.ravel() + sm.calD @ w.ravel()
    np.testing.assert_allclose(stacked, np.concatenate(xs), rtol=0, atol=1e-10)
    # stage cost sum equals the stacked quadratic form
    X = np.concatenate(xs)
    quad = X @ sm.calQ @ X + u.ravel() @ sm.calR @ u.ravel()
    assert abs(stage_cost_sum(model, np.array(xs), u) - quad) <= 1e-10 * max(1.0, abs(quad))
    # block lower-triangular structure and positive definite alpha
    for i in range(N + 1):
        for j in range(N):
            blk = sm.calB[i * d:(i + 1) * d, j * m:(j + 1) * m]
            if i > j:
                np.testing.assert_allclose(blk, np.linalg.matrix_power(model.A, i - j - 1) @ model.B,
                                           atol=1e-12)
            else:
                assert not blk.any()
    assert np.linalg.eigvalsh(sm.alpha)[0] > 0
