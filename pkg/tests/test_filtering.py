import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import linalg

from netmpc import presets
from netmpc.filtering import (KalmanState, build_innovation_stack, initialize, kf_predict_update,
                              steady_state_gain)
from netmpc.model import stack

from conftest import make_model, random_model


def scalar(Sigma_w=1.0, Sigma_v=1.0, Sigma_x0=1.0, A=1.0, B=0.0, C=1.0, N=2):
    return make_model(A, B, C, Sigma_w=Sigma_w, Sigma_v=Sigma_v, Sigma_x0=Sigma_x0, N=N)


def test_uninformative_measurement_keeps_prediction():
    model = make_model(np.diag([0.9, 0.5]), np.eye(2), Sigma_v=1e12 * np.eye(2))
    state = KalmanState(np.array([1.0, -2.0]), np.eye(2))
    u = np.array([0.3, 0.1])
    new, _ = kf_predict_update(state, u, np.array([100.0, 100.0]), model)
    np.testing.assert_allclose(new.x_hat, model.A @ state.x_hat + u, atol=1e-8)
    assert np.abs(new.K).max() < 1e-10


def test_perfect_measurement_is_adopted():
    model = make_model(np.diag([0.9, 0.5]), np.eye(2), Sigma_v=1e-12 * np.eye(2))
    state = KalmanState(np.zeros(2), np.eye(2))
    y = np.array([3.0, -1.0])
    new, innov = kf_predict_update(state, np.zeros(2), y, model)
    np.testing.assert_allclose(new.x_hat, y, atol=1e-9)
    np.testing.assert_allclose(innov, 0.0, atol=1e-9)


def test_hand_riccati_iteration():
    model = scalar()
    st0 = initialize(model, np.array([0.0]))
    assert st0.K[0, 0] == pytest.approx(0.5)
    assert st0.P[0, 0] == pytest.approx(0.5)
    st1, _ = kf_predict_update(st0, np.zeros(1), np.array([0.0]), model)
    assert st1.K[0, 0] == pytest.approx(3 / 5)


def test_initialization_examples():
    assert not initialize(scalar(), np.array([0.0])).x_hat.any()
    known = initialize(scalar(Sigma_x0=0.0), np.array([5.0]))
    assert not known.x_hat.any() and not known.K.any() and not known.P.any()
    assert initialize(scalar(), np.array([2.0])).x_hat[0] == pytest.approx(1.0)


def test_singular_innovation_covariance_is_rejected():
    model = make_model(np.eye(2), np.eye(2), Sigma_v=np.diag([1.0, 1e-20]), Sigma_x0=np.zeros((2, 2)))
    with pytest.raises(np.linalg.LinAlgError):
        initialize(model, np.zeros(2))


def test_steady_state_scalar_closed_form():
    K, P = steady_state_gain(scalar())
    golden = (1 + np.sqrt(5)) / 2
    assert P[0, 0] == pytest.approx(golden, rel=1e-9)
    assert K[0, 0] == pytest.approx(golden / (golden + 1), rel=1e-9)


def test_steady_state_without_process_noise_vanishes():
    K, P = steady_state_gain(make_model(np.diag([0.5, 0.2]), np.eye(2), Sigma_w=np.zeros((2, 2))))
    assert np.abs(P).max() < 1e-8 and np.abs(K).max() < 1e-8


def test_steady_state_matches_scipy_dare_and_is_reproducible():
    model = presets.four_state_model()
    K, P = steady_state_gain(model)
    ref = linalg.solve_discrete_are(model.A.T, model.C.T, model.Sigma_w, model.Sigma_v)
    np.testing.assert_allclose(P, ref, rtol=1e-8, atol=1e-9)
    K2, P2 = steady_state_gain(model)
    assert np.array_equal(K, K2) and np.array_equal(P, P2)
    np.testing.assert_array_equal(P, P.T)
    assert np.linalg.eigvalsh(P)[0] >= 0


def test_kalman_matches_batch_gaussian_conditioning(rng):
    # two measurements of a scalar random walk with a known input
    a, b, sw, sv, sx0 = 0.9, 0.5, 0.7, 1.3, 2.0
    model = scalar(Sigma_w=sw, Sigma_v=sv, Sigma_x0=sx0, A=a, B=b)
    u0 = 0.8
    x0, w0 = rng.normal(0, np.sqrt(sx0)), rng.normal(0, np.sqrt(sw))
    x1 = a * x0 + b * u0 + w0
    y = np.array([x0, x1]) + rng.normal(0, np.sqrt(sv), 2)
    st0 = initialize(model, y[:1])
    st1, _ = kf_predict_update(st0, np.array([u0]), y[1:], model)
    # joint law of (x0, x1, y0, y1)
    L = np.array([[1, 0, 0, 0], [a, 1, 0, 0], [1, 0, 1, 0], [a, 1, 0, 1]], float)
    cov = L @ np.diag([sx0, sw, sv, sv]) @ L.T
    mean = np.array([0, b * u0, 0, b * u0])
    gain = cov[:2, 2:] @ np.linalg.inv(cov[2:, 2:])
    post = mean[:2] + gain @ (y - mean[2:])
    post_cov = cov[:2, :2] - gain @ cov[2:, :2]
    assert abs(st1.x_hat[0] - post[1]) < 1e-10
    assert abs(st1.P[0, 0] - post_cov[1, 1]) < 1e-10
    only0 = cov[0, 2] / cov[2, 2] * y[0]
    assert abs(st0.x_hat[0] - only0) < 1e-10


def test_stack_with_zero_horizon_is_identity_on_error():
    model = scalar(N=1)
    stk = build_innovation_stack([np.zeros((1, 1))] * 2, model)
    np.testing.assert_array_equal(stk.F[:1], np.eye(1))
    assert not stk.H[:1].any() and not stk.O[:1].any()


def test_stack_with_zero_gains_is_open_loop():
    model = random_model(np.random.default_rng(0), d=2, q=2, N=3)
    stk = build_innovation_stack([np.zeros((2, 2))] * 4, model)
    for k in range(4):
        np.testing.assert_allclose(stk.F[2 * k:2 * k + 2], np.linalg.matrix_power(model.A, k))
    assert not stk.H.any()


def test_wrong_gain_count_is_rejected():
    with pytest.raises(ValueError):
        build_innovation_stack([np.zeros((1, 1))], scalar(N=2))


@given(st.integers(0, 2**32 - 1))
def test_stacked_innovations_match_filter_run(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    d, q, m, N = model.d, model.q, model.m, model.N
    # warm the filter up for a few steps so gains are time varying
    x = rng.standard_normal(d)
    kf = initialize(model, model.C @ x + rng.standard_normal(q))
    for _ in range(int(rng.integers(0, 4))):
        u = rng.standard_normal(m)
        x = model.A @ x + model.B @ u + rng.standard_normal(d)
        kf, _ = kf_predict_update(kf, u, model.C @ x + rng.standard_normal(q), model)
    e_t = x - kf.x_hat
    Lw, Lv = np.linalg.cholesky(model.Sigma_w), np.linalg.cholesky(model.Sigma_v)
    w = rng.standard_normal((N, d)) @ Lw.T
    v = rng.standard_normal((N + 1, q)) @ Lv.T
    gains = [kf.K]
    innovs = [model.C @ e_t + v[0]]
    for k in range(N):
        u = rng.standard_normal(m)
        x_prev_hat = kf.x_hat
        x_prev = x
        x = model.A @ x + model.B @ u + w[k]
        y = model.C @ x + v[k + 1]
        kf, innov = kf_predict_update(kf, u, y, model)
        gains.append(kf.K)
        innovs.append(innov)
        # filtered mean moves by the gain times fresh information only
        w_hat = kf.K @ (model.C @ model.A @ (x_prev - x_prev_hat) + model.C @ w[k] + v[k + 1])
        np.testing.assert_allclose(kf.x_hat - model.A @ x_prev_hat - model.B @ u, w_hat,
                                   atol=1e-12 * max(1.0, np.abs(w_hat).max()))
    stk = build_innovation_stack(gains, model)
    calC = stack(model).calC
    pred = stk.innovations(calC, e_t, w.ravel(), v.ravel())
    np.testing.assert_allclose(pred, np.concatenate(innovs), rtol=0, atol=1e-10)


def test_error_covariance_stays_bounded():
    model = presets.four_state_model()
    _, P_inf = steady_state_gain(model)
    kf = initialize(model, np.zeros(4))
    bound = max(np.trace(kf.P), np.trace(P_inf)) + 1e-6
    for _ in range(10_000):
        kf, _ = kf_predict_update(kf, np.zeros(1), np.zeros(4), model)
        assert np.trace(kf.P) <= bound
