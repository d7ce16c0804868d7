"""Controller-side estimator under sensor dropouts.

When a sensor packet ``(xhat_t, y_t)`` arrives the controller adopts the
filtered mean; otherwise it propagates its previous estimate with the
acknowledged applied input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemModel


@dataclass
class EstimatorState:
    x_tilde: np.ndarray
    last_u_applied: np.ndarray
    received_innovation: np.ndarray
    s: int = 0

    @classmethod
    def initial(cls, model: SystemModel) -> "EstimatorState":
        return cls(np.zeros(model.d), np.zeros(model.m), np.zeros(model.q), 0)


def estimator_step(x_tilde_prev, u_prev, s, x_hat, innovation, model: SystemModel):
    """Vectorised update; ``s`` broadcasts over leading path dimensions.

    Returns ``(x_tilde, received_innovation)``.
    """
    s = np.asarray(s, dtype=float)[..., None]
    pred = x_tilde_prev @ model.A.T + u_prev @ model.B.T
    x_tilde = np.where(s > 0, x_hat, pred)
    return x_tilde, s * innovation


def remote_update(state: EstimatorState, s_t: int, packet, u_prev_applied,
                  model: SystemModel) -> EstimatorState:
    """Advance the estimator by one step.

    ``packet`` is ``(xhat_t, y_t)`` when the sensor packet arrived (``s_t = 1``)
    and ``None`` otherwise.
    """
    if s_t not in (0, 1):
        raise ValueError("s_t must be 0 or 1")
    if (packet is None) == bool(s_t):
        raise ValueError("a packet must be present exactly when s_t = 1")
    u_prev = np.asarray(u_prev_applied, float)
    if s_t:
        x_hat, y = (np.asarray(a, float) for a in packet)
        x_tilde = x_hat.copy()
        innov = y - model.C @ x_hat
    else:
        x_tilde = model.A @ state.x_tilde + model.B @ u_prev
        innov = np.zeros(model.q)
    return EstimatorState(x_tilde, u_prev.copy(), innov, int(s_t))


def estimation_error_diag(errors) -> float:
    """Largest over time of the path-mean squared gap ``|xhat_t - xtilde_t|^2``.

    ``errors`` has shape ``(paths, T, d)``.
    """
    e = np.asarray(errors, float)
    if e.ndim != 3:
        raise ValueError("expected an array of shape (paths, T, d)")
    return float(np.max(np.mean(np.sum(e**2, axis=-1), axis=0)))
