"""Sensor-side Kalman filter, steady-state gain and stacked innovations.

The sensor runs a standard Kalman filter on every measurement; only the link
to the controller drops packets.  The innovation handed to the controller is
the filtered residual ``y_t - C xhat_t``.  Filter means may carry leading
batch dimensions (one row per simulated path) because the covariance
recursion does not depend on the data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemModel


@dataclass
class KalmanState:
    x_hat: np.ndarray
    P: np.ndarray
    K: np.ndarray | None = None  # gain used in the most recent update

    def innovation(self, y: np.ndarray, model: SystemModel) -> np.ndarray:
        return y - self.x_hat @ model.C.T


def _gain(P_pred: np.ndarray, model: SystemModel) -> np.ndarray:
    S = model.C @ P_pred @ model.C.T + model.Sigma_v
    S = 0.5 * (S + S.T)
    if np.linalg.cond(S) > 1e14:
        raise np.linalg.LinAlgError("innovation covariance is numerically singular")
    return np.linalg.solve(S, model.C @ P_pred).T


def _update(x_pred, P_pred, y, model):
    K = _gain(P_pred, model)
    x = x_pred + (y - x_pred @ model.C.T) @ K.T
    P = P_pred - K @ model.C @ P_pred
    return KalmanState(x, 0.5 * (P + P.T), K)


def initialize(model: SystemModel, y0: np.ndarray) -> KalmanState:
    """Filter state after the first measurement, from a zero prior mean with covariance Sigma_x0."""
    x_pred = np.zeros(np.shape(y0)[:-1] + (model.d,))
    return _update(x_pred, model.Sigma_x0.copy(), np.asarray(y0, float), model)


def kf_predict_update(state: KalmanState, u_applied: np.ndarray, y_next: np.ndarray,
                      model: SystemModel) -> tuple[KalmanState, np.ndarray]:
    """One predict/update step; returns the new state and ``y_next - C xhat_next``."""
    x_pred = state.x_hat @ model.A.T + np.asarray(u_applied, float) @ model.B.T
    P_pred = model.A @ state.P @ model.A.T + model.Sigma_w
    new = _update(x_pred, 0.5 * (P_pred + P_pred.T), np.asarray(y_next, float), model)
    return new, new.innovation(y_next, model)


def riccati_step(P_pred: np.ndarray, model: SystemModel) -> np.ndarray:
    """Prediction covariance one step ahead."""
    K = _gain(P_pred, model)
    P = P_pred - K @ model.C @ P_pred
    nxt = model.A @ P @ model.A.T + model.Sigma_w
    return 0.5 * (nxt + nxt.T)


def steady_state_gain(model: SystemModel, rtol: float = 1e-10,
                      max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Fixed point of the Riccati iteration: ``(K_inf, P_pred_inf)``.

    Convergence is declared when the change is below ``rtol * (1 + |P|)``.
    """
    P = model.Sigma_w.copy() if np.any(model.Sigma_w) else model.Sigma_x0.copy()
    for _ in range(max_iter):
        nxt = riccati_step(P, model)
        if np.max(np.abs(nxt - P)) <= rtol * (1.0 + np.max(np.abs(nxt))):
            P = nxt
            return _gain(P, model), P
        P = nxt
    raise RuntimeError("Riccati iteration did not converge")


def filtered_covariance(P_pred: np.ndarray, model: SystemModel) -> np.ndarray:
    K = _gain(P_pred, model)
    P = P_pred - K @ model.C @ P_pred
    return 0.5 * (P + P.T)


@dataclass
class InnovationStack:
    """``I[t:N+1] = calC F e_t + calC O w[t:N] + (I - calC H) v[t:N+1]``."""

    F: np.ndarray
    O: np.ndarray
    H: np.ndarray

    def innovations(self, calC, e_t, w, v):
        return calC @ (self.F @ e_t) + calC @ (self.O @ w) + v - calC @ (self.H @ v)


def build_innovation_stack(gains, model: SystemModel) -> InnovationStack:
    """Stack the filter-error propagation over one horizon.

    ``gains[k]`` is the gain used at time ``t+k`` for ``k = 0..N``.  Error
    dynamics are ``e[k+1] = phi_k e[k] + Gamma_k w[k] - K_{k+1} v[k+1]`` with
    ``Gamma_k = I - K_{k+1} C`` and ``phi_k = Gamma_k A``.
    """
    gains = [np.atleast_2d(np.asarray(K, float)) for K in gains]
    N = model.N
    if len(gains) != N + 1:
        raise ValueError(f"expected {N + 1} gains, got {len(gains)}")
    d, q, C, A = model.d, model.q, model.C, model.A
    I = np.eye(d)
    Gam = [I - gains[k + 1] @ C for k in range(N)]
    phi = [G @ A for G in Gam]

    def trans(k, j):
        # phi_{k-1} ... phi_j  (identity when k == j)
        M = I
        for i in range(j, k):
            M = phi[i] @ M
        return M

    F = np.zeros(((N + 1) * d, d))
    O = np.zeros(((N + 1) * d, N * d))
    H = np.zeros(((N + 1) * d, (N + 1) * q))
    for k in range(N + 1):
        F[k * d:(k + 1) * d] = trans(k, 0)
        for j in range(k):
            O[k * d:(k + 1) * d, j * d:(j + 1) * d] = trans(k, j + 1) @ Gam[j]
        for j in range(1, k + 1):
            H[k * d:(k + 1) * d, j * q:(j + 1) * q] = trans(k, j) @ gains[j]
    return InnovationStack(F, O, H)
