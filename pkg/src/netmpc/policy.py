"""Saturated innovation-feedback policy, actuator protocol and fallback policy.

Over a horizon of ``N`` steps the controller commits to

    u[t+l] = eta_l + sum_{i <= l} theta_{l,i} psi(I~[t+i])

where ``I~`` is the received (dropout-gated) innovation and ``psi`` a bounded
odd saturator.  The actuator keeps a buffer of the nominal part ``eta`` so a
dropped command can be replaced by its nominal value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("full", "diagonal", "zero", "fallback")


def sigmoid(xi):
    """``(1 - exp(-xi)) / (1 + exp(-xi))``, evaluated as ``tanh(xi / 2)``."""
    return np.tanh(0.5 * np.asarray(xi, dtype=float))


@dataclass(frozen=True)
class SaturatorSpec:
    kind: str = "sigmoid"
    psi_max: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sigmoid", "clamp"):
            raise ValueError(f"unknown saturator {self.kind!r}")
        if self.psi_max <= 0:
            raise ValueError("psi_max must be positive")
        if self.kind == "sigmoid" and self.psi_max != 1.0:
            raise ValueError("the sigmoid saturator has psi_max = 1")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "sigmoid":
            return sigmoid(v)
        return np.clip(v, -self.psi_max, self.psi_max)


def theta_mask(N: int, m: int, q: int, variant: str = "full") -> np.ndarray:
    """Boolean ``(N m, N q)`` pattern of free feedback entries."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown policy variant {variant!r}")
    blocks = np.zeros((N, N), dtype=bool)
    if variant == "full":
        blocks = np.tril(np.ones((N, N), dtype=bool))
    elif variant == "diagonal":
        blocks = np.eye(N, dtype=bool)
    return np.kron(blocks, np.ones((m, q), dtype=bool))


@dataclass
class PolicyParams:
    eta: np.ndarray
    Theta: np.ndarray
    variant: str = "full"

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float).ravel()
        self.Theta = np.atleast_2d(np.asarray(self.Theta, dtype=float))
        if self.Theta.shape[0] != self.eta.size:
            raise ValueError("Theta must have one row per entry of eta")

    @classmethod
    def zeros(cls, N: int, m: int, q: int, variant: str = "full") -> "PolicyParams":
        return cls(np.zeros(N * m), np.zeros((N * m, N * q)), variant)

    def check_structure(self, N: int, m: int, q: int, atol: float = 0.0) -> None:
        mask = theta_mask(N, m, q, "full" if self.variant == "fallback" else self.variant)
        if self.variant == "fallback":
            mask[:] = False
        if np.any(np.abs(self.Theta[~mask]) > atol):
            raise ValueError(f"Theta has entries outside the {self.variant} pattern")


def feasibility_rows(params: PolicyParams, sat: SaturatorSpec, u_max: float) -> np.ndarray:
    """Per-row margin ``u_max - |eta_i| - |Theta_i|_1 psi_max``."""
    return u_max - np.abs(params.eta) - np.abs(params.Theta).sum(axis=1) * sat.psi_max


def evaluate(params: PolicyParams, received_innovations, sat: SaturatorSpec,
             u_max: float | None = None, tol: float = 1e-7) -> np.ndarray:
    """Control sequence ``eta + Theta psi(I~)``; innovations are ``N`` q-vectors."""
    if u_max is not None and np.any(feasibility_rows(params, sat, u_max) < -tol):
        raise ValueError("policy parameters violate the hard input bound")
    v = np.asarray(received_innovations, dtype=float).ravel()
    return params.eta + params.Theta @ sat(v)


# --------------------------------------------------------------------------
# actuator transmission protocol


@dataclass
class ActuatorBuffer:
    """Nominal inputs kept at the actuator for the rest of a window.

    ``contents`` maps a window step to its stored nominal input.
    """

    contents: dict = field(default_factory=dict)
    g: int = 0

    def empty(self) -> None:
        self.contents = {}
        self.g = 0


def protocol_step(buffer: ActuatorBuffer, nu: int, ell: int, u_transmitted, eta_tail,
                  N_r: int | None = None):
    """Apply one step of the buffer protocol.

    ``eta_tail`` holds the nominal blocks for window steps ``ell+1 .. N_r-1``.
    Returns ``(u_applied, buffer)``; the buffer is updated in place.
    """
    if N_r is not None and ell >= N_r:
        raise ValueError("window overrun: step index reaches the recalculation interval")
    u_transmitted = np.asarray(u_transmitted, dtype=float)
    if nu:
        u = u_transmitted.copy()
        if not buffer.contents and buffer.g == 0:
            buffer.contents = {ell + 1 + i: np.asarray(b, float).copy()
                               for i, b in enumerate(eta_tail)}
        buffer.g = 1
    else:
        stored = buffer.contents.get(ell)
        u = stored.copy() if stored is not None else np.zeros_like(u_transmitted)
    return u, buffer


def delivery_indicators(nu: np.ndarray) -> np.ndarray:
    """Cumulative delivery ``g_l = 1`` once any packet of the window got through."""
    return np.maximum.accumulate(np.asarray(nu), axis=-1)


def build_G_S(nu, kappa: int, N: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal selection matrices with ``u_applied = G eta + S Theta psi``.

    ``nu`` holds the ``kappa`` control-channel bits of the window.
    """
    nu = np.asarray(nu, dtype=float).ravel()
    if nu.size != kappa or kappa > N:
        raise ValueError("need kappa <= N control bits")
    g = delivery_indicators(nu)
    gd = np.concatenate([g, np.ones(N - kappa)])
    sd = np.concatenate([nu, np.ones(N - kappa)])
    return np.diag(np.repeat(gd, m)), np.diag(np.repeat(sd, m))


# --------------------------------------------------------------------------
# fallback saturation policy


class OrthogonalPowers:
    """Cached powers of an orthogonal matrix, re-orthogonalised every 1000 steps."""

    def __init__(self, A_o: np.ndarray, reortho_every: int = 1000):
        self.A_o = np.asarray(A_o, float)
        self.every = reortho_every
        self._pows = [np.eye(self.A_o.shape[0])]

    def __call__(self, n: int) -> np.ndarray:
        while len(self._pows) <= n:
            M = self.A_o @ self._pows[-1]
            if len(self._pows) % self.every == 0 and M.size:
                Q, R = np.linalg.qr(M)
                M = Q * np.sign(np.diag(R))
            self._pows.append(M)
        return self._pows[n]


def sat_inf(z, r: float, zeta: float):
    """Componentwise saturation: ``z zeta / r`` for ``|z| <= r``, else ``zeta sign(z)``."""
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) <= r, z * (zeta / r), zeta * np.sign(z))


def zeta_upper_bound(dec, u_max: float) -> float:
    """Largest admissible drift magnitude ``u_max / (sqrt(d_o) |R_kappa^+|_2)``."""
    Rp = np.linalg.pinv(dec.reachability())
    return u_max / (np.sqrt(dec.d_o) * np.linalg.norm(Rp, 2))


def fallback_saturation_policy(x_o, t: int, dec, r: float, zeta: float,
                               u_max: float | None = None, powers: OrthogonalPowers | None = None):
    """Nominal inputs for one window that push the rotated orthogonal state towards zero.

    Returns the ``kappa m`` stacked inputs ``-R^+ A_o^(t+kappa) sat((A_o')^t x_o)``.
    """
    if zeta <= 0 or r <= 0:
        raise ValueError("r and zeta must be positive")
    if u_max is not None and zeta > zeta_upper_bound(dec, u_max) * (1 + 1e-12):
        raise ValueError("zeta exceeds the admissible range for this input bound")
    powers = powers or OrthogonalPowers(dec.A_o)
    z = powers(t).T @ np.asarray(x_o, float)
    Rp = np.linalg.pinv(dec.reachability())
    return -Rp @ powers(t + dec.kappa) @ sat_inf(z, r, zeta)
