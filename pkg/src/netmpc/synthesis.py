"""Per-instant controller synthesis.

Offline, Monte-Carlo moments of the dropout selection matrices and of the
saturated future innovations are estimated once.  Online, at every
recalculation instant, the expected horizon cost is a convex quadratic in the
policy parameters ``(eta, Theta)``; together with the hard input-bound rows
and, optionally, drift (stability) rows it forms a QP solved by
``qpsolver``.  Solver trouble is absorbed by the fallback saturation policy.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import qpsolver
from .channels import RngStream
from .filtering import filtered_covariance, steady_state_gain
from .model import Decomposition, StackedMatrices, SystemModel, decompose, psd_factor, stack
from .policy import (OrthogonalPowers, PolicyParams, SaturatorSpec, fallback_saturation_policy,
                     feasibility_rows, theta_mask, zeta_upper_bound)

MIN_SAMPLES = 1000
BURN_IN = 50
MAGIC = b"NETMPCM1"

_MOMENT_FIELDS = ("mu_G", "Sigma_G", "mu_S", "Sigma_S", "Sigma_GS",
                  "Sigma_psi", "Sigma_psiw", "Sigma_epsi")

# stream ids reserved for moment estimation (far from per-path ids)
_STREAM_CONTROL = 2**48 + 1
_STREAM_SENSOR = 2**48 + 2
_STREAM_NOISE = 2**48 + 3


def channel_description(ch) -> dict:
    out = {"kind": ch.kind}
    out.update({k: float(v) for k, v in asdict(ch).items() if k != "state"})
    return out


def moments_key(model: SystemModel, sensor, control, sat: SaturatorSpec) -> str:
    """Hash of everything the offline moments depend on (the input bound is excluded)."""
    h = hashlib.sha256()
    h.update(model.replace(u_max=1.0).fingerprint().encode())
    h.update(json.dumps([channel_description(sensor), channel_description(control),
                         [sat.kind, sat.psi_max]], sort_keys=True).encode())
    return h.hexdigest()


@dataclass
class OfflineMoments:
    mu_G: np.ndarray
    Sigma_G: np.ndarray
    mu_S: np.ndarray
    Sigma_S: np.ndarray
    Sigma_GS: np.ndarray
    Sigma_psi: np.ndarray
    Sigma_psiw: np.ndarray
    Sigma_epsi: np.ndarray
    sample_count: int
    seed: int
    model_hash: str = ""
    meta: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        header = {
            "sample_count": int(self.sample_count), "seed": int(self.seed),
            "model_hash": self.model_hash, "meta": self.meta,
            "arrays": [[name, list(getattr(self, name).shape)] for name in _MOMENT_FIELDS],
        }
        hb = json.dumps(header, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(len(hb).to_bytes(8, "little"))
        buf.write(hb)
        for name in _MOMENT_FIELDS:
            buf.write(np.ascontiguousarray(getattr(self, name), dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "OfflineMoments":
        if data[:8] != MAGIC:
            raise ValueError("not a moments file")
        hl = int.from_bytes(data[8:16], "little")
        header = json.loads(data[16:16 + hl])
        off = 16 + hl
        arrays = {}
        for name, shape in header["arrays"]:
            cnt = int(np.prod(shape))
            arrays[name] = np.frombuffer(data, dtype="<f8", count=cnt, offset=off).reshape(shape).copy()
            off += 8 * cnt
        if off != len(data):
            raise ValueError("moments file has trailing or missing data")
        return cls(**arrays, sample_count=header["sample_count"], seed=header["seed"],
                   model_hash=header["model_hash"], meta=header["meta"])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "OfflineMoments":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _psd(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def selection_moments(nu: np.ndarray, N: int, m: int, alpha: np.ndarray):
    """Moments of the diagonal selection matrices from control-bit windows ``nu`` (S, N_r)."""
    S, N_r = nu.shape
    nu = nu.astype(float)
    g = np.maximum.accumulate(nu, axis=1)
    ones = np.ones((S, N - N_r))
    gd = np.hstack([g, ones])
    sd = np.hstack([nu, ones])
    blk = np.ones((m, m))
    Egg = np.kron(gd.T @ gd / S, blk)
    Ess = np.kron(sd.T @ sd / S, blk)
    Egs = np.kron(gd.T @ sd / S, blk)
    mu_G = np.diag(np.repeat(gd.mean(0), m))
    mu_S = np.diag(np.repeat(sd.mean(0), m))
    return mu_G, _psd(alpha * Egg), mu_S, _psd(alpha * Ess), alpha * Egs


def simulate_error_process(model: SystemModel, K: np.ndarray, samples: int, rng,
                           burn_in: int = BURN_IN):
    """Stationary filter errors and future noises with the steady-state gain.

    Returns ``(e_t, w, innov)`` with shapes ``(S, d)``, ``(S, N, d)`` and
    ``(S, N, q)`` where ``innov[:, k]`` is the innovation at ``t + k``.
    """
    d, q, N = model.d, model.q, model.N
    Lw = psd_factor(model.Sigma_w)
    Lv = psd_factor(model.Sigma_v)
    Gam = np.eye(d) - K @ model.C
    phiT = (Gam @ model.A).T
    GamT, KT = Gam.T, K.T
    e = np.zeros((samples, d))
    for _ in range(burn_in):
        w = rng.standard_normal((samples, d)) @ Lw.T
        v = rng.standard_normal((samples, q)) @ Lv.T
        e = e @ phiT + w @ GamT - v @ KT
    e_t = e.copy()
    ws = np.empty((samples, N, d))
    innov = np.empty((samples, N, q))
    innov[:, 0] = e @ model.C.T + rng.standard_normal((samples, q)) @ Lv.T
    for k in range(N):
        w = rng.standard_normal((samples, d)) @ Lw.T
        ws[:, k] = w
        if k + 1 < N:
            v = rng.standard_normal((samples, q)) @ Lv.T
            e = e @ phiT + w @ GamT - v @ KT
            innov[:, k + 1] = e @ model.C.T + v
    return e_t, ws, innov


def estimate_moments(model: SystemModel, sensor, control, sat: SaturatorSpec,
                     samples: int = 100_000, seed: int = 0,
                     stacked: StackedMatrices | None = None) -> OfflineMoments:
    """Monte-Carlo estimates of every expectation entering the horizon cost."""
    if samples < MIN_SAMPLES:
        raise ValueError(f"sample count too small (need at least {MIN_SAMPLES})")
    stacked = stacked or stack(model)
    N, m, q, d, N_r = model.N, model.m, model.q, model.d, model.N_r

    nu = control.sample_windows(RngStream(seed, _STREAM_CONTROL).generator(), samples, N_r)
    mu_G, Sigma_G, mu_S, Sigma_S, Sigma_GS = selection_moments(nu, N, m, stacked.alpha)

    K, _ = steady_state_gain(model)
    e_t, ws, innov = simulate_error_process(model, K, samples, RngStream(seed, _STREAM_NOISE).generator())
    s = sensor.sample_windows(RngStream(seed, _STREAM_SENSOR).generator(), samples, N)
    psi = sat(innov[:, 1:] * s[:, 1:, None]).reshape(samples, (N - 1) * q)
    W = ws.reshape(samples, N * d)
    Sigma_psi = _psd(psi.T @ psi / samples)
    Sigma_psiw = psi.T @ W / samples
    Sigma_epsi = psi.T @ e_t / samples
    return OfflineMoments(
        mu_G=mu_G, Sigma_G=Sigma_G, mu_S=mu_S, Sigma_S=Sigma_S, Sigma_GS=Sigma_GS,
        Sigma_psi=Sigma_psi, Sigma_psiw=Sigma_psiw, Sigma_epsi=Sigma_epsi,
        sample_count=samples, seed=seed, model_hash=moments_key(model, sensor, control, sat),
        meta={"sensor": channel_description(sensor), "control": channel_description(control),
              "saturator": [sat.kind, sat.psi_max], "N": N, "N_r": N_r, "m": m, "q": q, "d": d})


# --------------------------------------------------------------------------
# stability rows


@dataclass(frozen=True)
class StabilityParams:
    r: float
    zeta: float
    enabled: bool = True

    def __post_init__(self):
        if self.r <= 0 or self.zeta <= 0:
            raise ValueError("r and zeta must be positive")

    @classmethod
    def default(cls, model: SystemModel, dec: Decomposition, r: float | None = None,
                zeta: float | None = None, enabled: bool = True) -> "StabilityParams":
        if r is None:
            r = 10.0 * np.sqrt(np.trace(model.Sigma_w))
            if r <= 0:
                r = 1.0
        if zeta is None:
            zeta = zeta_upper_bound(dec, model.u_max) if dec.d_o else 1.0
        return cls(float(r), float(zeta), enabled)


def stability_constraints(x_o, t_abs: int, dec: Decomposition, params: StabilityParams,
                          psi0, m: int, powers: OrthogonalPowers | None = None):
    """Drift rows over ``(eta[:kappa m], Theta0[:kappa m])``.

    Returns ``(M_rows, lower, upper, active)``: row ``j`` reads
    ``lower_j <= M_j (eta + Theta0 psi0)[:kappa m] <= upper_j`` and is active only
    when the rotated state coordinate lies beyond ``+-r``.
    """
    powers = powers or OrthogonalPowers(dec.A_o)
    xi = powers(t_abs).T @ np.asarray(x_o, float)
    M = powers(t_abs + dec.kappa).T @ dec.reachability()
    hi = xi > params.r
    lo = xi < -params.r
    lower = np.where(lo, params.zeta, -np.inf)
    upper = np.where(hi, -params.zeta, np.inf)
    return M, lower, upper, hi | lo


# --------------------------------------------------------------------------
# QP assembly


@dataclass(frozen=True)
class VariableLayout:
    """Decision vector ``[eta; theta (free entries of vec Theta); a; b]``."""

    N: int
    m: int
    q: int
    variant: str
    theta_index: np.ndarray  # positions of free entries in column-major vec(Theta)

    @property
    def n_eta(self) -> int:
        return self.N * self.m

    @property
    def n_theta(self) -> int:
        return self.theta_index.size

    @property
    def n(self) -> int:
        return 2 * (self.n_eta + self.n_theta)

    @classmethod
    def build(cls, N, m, q, variant):
        mask = theta_mask(N, m, q, variant)
        return cls(N, m, q, variant, np.flatnonzero(mask.flatten(order="F")))

    def split(self, x):
        ne, nt = self.n_eta, self.n_theta
        eta = x[..., :ne]
        vt = np.zeros(x.shape[:-1] + (ne * self.N * self.q,))
        vt[..., self.theta_index] = x[..., ne:ne + nt]
        Theta = vt.reshape(x.shape[:-1] + (self.N * self.q, ne)).swapaxes(-1, -2)
        return eta, Theta

    def pack(self, eta, Theta):
        vt = np.asarray(Theta).swapaxes(-1, -2).reshape(np.shape(eta)[:-1] + (-1,))
        th = vt[..., self.theta_index]
        return np.concatenate([eta, th, np.abs(eta), np.abs(th)], axis=-1)


def bound_rows(layout: VariableLayout, sat: SaturatorSpec, u_max: float):
    """Hard input-bound rows (absolute-value splits plus per-row l1 budget)."""
    ne, nt = layout.n_eta, layout.n_theta
    n = layout.n
    rows, lo, hi = [], [], []
    # eta - a <= 0 and eta + a >= 0
    E = np.zeros((2 * ne, n))
    E[:ne, :ne] = np.eye(ne)
    E[:ne, ne + nt:2 * ne + nt] = -np.eye(ne)
    E[ne:, :ne] = np.eye(ne)
    E[ne:, ne + nt:2 * ne + nt] = np.eye(ne)
    rows.append(E)
    lo += [-np.inf] * ne + [0.0] * ne
    hi += [0.0] * ne + [np.inf] * ne
    T = np.zeros((2 * nt, n))
    T[:nt, ne:ne + nt] = np.eye(nt)
    T[:nt, 2 * ne + nt:] = -np.eye(nt)
    T[nt:, ne:ne + nt] = np.eye(nt)
    T[nt:, 2 * ne + nt:] = np.eye(nt)
    rows.append(T)
    lo += [-np.inf] * nt + [0.0] * nt
    hi += [0.0] * nt + [np.inf] * nt
    # a_i + psi_max * sum of b over row i <= u_max
    Bud = np.zeros((ne, n))
    Bud[:, ne + nt:2 * ne + nt] = np.eye(ne)
    row_of = layout.theta_index % ne
    Bud[row_of, 2 * ne + nt + np.arange(nt)] = sat.psi_max
    rows.append(Bud)
    lo += [-np.inf] * ne
    hi += [u_max] * ne
    return np.vstack(rows), np.array(lo), np.array(hi)


def hessian_and_linear(moments: OfflineMoments, stacked: StackedMatrices, layout: VariableLayout,
                       x_tilde, psi0):
    """``H`` and ``f`` of ``V' = z'Hz + 2f'z`` over ``[eta; theta]`` for a batch of instants.

    ``x_tilde`` is ``(B, d)`` and ``psi0`` the saturated current received
    innovation, ``(B, q)``.
    """
    N, m, q = layout.N, layout.m, layout.q
    ne = N * m
    B = x_tilde.shape[0]
    nfull = ne + ne * N * q
    n0 = ne * q  # entries of the first block column
    H = np.zeros((B, nfull, nfull))
    f = np.zeros((B, nfull))
    H[:, :ne, :ne] = moments.Sigma_G
    # eta / first block column coupling and the rank-one first-column curvature
    cross = np.einsum("bc,ij->bicj", psi0, moments.Sigma_GS).reshape(B, ne, n0)
    H[:, :ne, ne:ne + n0] = cross
    H[:, ne:ne + n0, :ne] = cross.transpose(0, 2, 1)
    Pi = np.einsum("bc,be->bce", psi0, psi0)
    H[:, ne:ne + n0, ne:ne + n0] = np.einsum("bce,ij->bciej", Pi, moments.Sigma_S).reshape(B, n0, n0)
    if N > 1:
        H[:, ne + n0:, ne + n0:] = np.kron(moments.Sigma_psi, moments.Sigma_S)
    QAx = x_tilde @ stacked.Q_A  # (B, Nm)  rows are x' Q_A
    f[:, :ne] = QAx @ moments.mu_G
    c = QAx @ moments.mu_S
    f[:, ne:ne + n0] = np.einsum("bj,bc->bcj", c, psi0).reshape(B, n0)
    if N > 1:
        lin = (moments.Sigma_psiw @ stacked.Q_D @ moments.mu_S
               + moments.Sigma_epsi @ stacked.Q_A @ moments.mu_S).T
        f[:, ne + n0:] = lin.flatten(order="F")
    keep = np.concatenate([np.arange(ne), ne + layout.theta_index])
    H = H[:, keep][:, :, keep]
    return 0.5 * (H + H.transpose(0, 2, 1)), f[:, keep]


def project_psd(H: np.ndarray, floor: float = -1e-8) -> np.ndarray:
    """Clip eigenvalues below ``floor`` (batched); no-op otherwise."""
    w = np.linalg.eigvalsh(H)
    bad = w[..., 0] < floor
    if np.any(bad):
        wb, Vb = np.linalg.eigh(H[bad])
        wb = np.maximum(wb, 0.0)
        H = H.copy()
        H[bad] = np.einsum("bij,bj,bkj->bik", Vb, wb, Vb)
    return H


def objective_value(moments: OfflineMoments, stacked: StackedMatrices, x_tilde, psi0,
                    params: PolicyParams, q: int) -> float:
    """The variable part of the expected horizon cost, term by term in trace form."""
    eta, Th = params.eta, params.Theta
    Th0, Thp = Th[:, :q], Th[:, q:]
    mo = moments
    QA = stacked.Q_A
    Pi = np.outer(psi0, psi0)
    v = eta @ mo.Sigma_G @ eta
    v += np.trace(mo.Sigma_S @ Th0 @ Pi @ Th0.T)
    v += np.trace(mo.Sigma_S @ Thp @ mo.Sigma_psi @ Thp.T) if Thp.size else 0.0
    v += 2 * (eta @ mo.Sigma_GS + x_tilde @ QA @ mo.mu_S) @ Th0 @ psi0
    v += 2 * x_tilde @ QA @ mo.mu_G @ eta
    if Thp.size:
        v += 2 * np.trace(stacked.Q_D @ mo.mu_S @ Thp @ mo.Sigma_psiw)
        v += 2 * np.trace(QA @ mo.mu_S @ Thp @ mo.Sigma_epsi)
    return float(v)


def assemble_qp(moments: OfflineMoments, stacked: StackedMatrices, x_tilde, innovation,
                sat: SaturatorSpec, u_max: float, variant: str = "full",
                stability: tuple | None = None, psd_guard: bool = True) -> qpsolver.QpProblem:
    """Single-instant QP; ``stability`` is ``(M, lower, upper, kappa)`` or ``None``."""
    d = stacked.calA.shape[1]
    N = stacked.calA.shape[0] // d - 1
    m = stacked.calB.shape[1] // N
    q = np.size(innovation)
    _check_shapes(moments, stacked, N, m, q)
    layout = VariableLayout.build(N, m, q, variant)
    psi0 = sat(np.asarray(innovation, float))[None]
    H, f = hessian_and_linear(moments, stacked, layout, np.asarray(x_tilde, float)[None], psi0)
    if psd_guard:
        H = project_psd(H)
    return _finish_qp(H[0], f[0], layout, sat, u_max, psi0[0], stability)


def _check_shapes(moments, stacked, N, m, q):
    ne = N * m
    if moments.Sigma_G.shape != (ne, ne) or stacked.alpha.shape != (ne, ne):
        raise ValueError("moments do not match the horizon/input dimensions of the model")
    if moments.Sigma_psi.shape != ((N - 1) * q, (N - 1) * q):
        raise ValueError("moments do not match the output dimension of the model")
    if moments.Sigma_epsi.shape[1] != stacked.calA.shape[1]:
        raise ValueError("moments do not match the state dimension of the model")


def _finish_qp(H, f, layout, sat, u_max, psi0, stability, bounds=None):
    ne, nt = layout.n_eta, layout.n_theta
    n = layout.n
    P = np.zeros((n, n))
    P[:ne + nt, :ne + nt] = 2.0 * H
    qv = np.zeros(n)
    qv[:ne + nt] = 2.0 * f
    A, lo, hi = bounds if bounds is not None else bound_rows(layout, sat, u_max)
    if stability is not None:
        M, slo, shi, kappa = stability
        rows = stability_row_matrix(layout, M, psi0, kappa)
        A = np.vstack([A, rows])
        lo = np.concatenate([lo, slo])
        hi = np.concatenate([hi, shi])
    return qpsolver.QpProblem(P, qv, A, lo, hi)


def stability_row_matrix(layout: VariableLayout, M, psi0, kappa: int) -> np.ndarray:
    """Coefficients of ``M (eta + Theta0 psi0)[:kappa m]`` over the decision vector."""
    ne, m = layout.n_eta, layout.m
    km = kappa * m
    rows = np.zeros((M.shape[0], layout.n))
    rows[:, :km] = M
    # theta entries in the first block column, restricted to the first kappa m rows
    idx = layout.theta_index
    col = idx // ne
    row = idx % ne
    sel = (col < layout.q) & (row < km)
    pos = ne + np.flatnonzero(sel)
    rows[:, pos] = M[:, row[sel]] * psi0[col[sel]]
    return rows


# --------------------------------------------------------------------------
# controller


@dataclass
class StepResult:
    params: list
    fallback: np.ndarray
    solve_time: float
    statuses: list


class Controller:
    """Everything needed to compute policy parameters at recalculation instants."""

    def __init__(self, model: SystemModel, moments: OfflineMoments, variant: str = "full",
                 sat: SaturatorSpec | None = None, stability: StabilityParams | None = None,
                 dec: Decomposition | None = None, qp_options: qpsolver.QpOptions | None = None,
                 stacked: StackedMatrices | None = None, psd_guard: bool = True):
        if variant not in ("full", "diagonal", "zero", "fallback"):
            raise ValueError(f"unknown policy variant {variant!r}")
        self.model = model
        self.moments = moments
        self.variant = variant
        self.sat = sat or SaturatorSpec()
        self.dec = dec or decompose(model)
        self.stacked = stacked or stack(model)
        self.qp_options = qp_options or qpsolver.QpOptions()
        self.psd_guard = psd_guard
        _check_shapes(moments, self.stacked, model.N, model.m, model.q)
        if stability is None:
            stability = StabilityParams.default(model, self.dec, enabled=False)
        self.stability = stability
        if stability.enabled:
            if self.dec.d_o == 0:
                self.stability = StabilityParams(stability.r, stability.zeta, False)
            elif model.N_r != self.dec.kappa:
                raise ValueError("stability rows need the recalculation interval equal to the reachability index")
            if self.dec.d_o:
                zmax = zeta_upper_bound(self.dec, model.u_max)
                if stability.zeta > zmax * (1 + 1e-12):
                    raise ValueError(f"zeta {stability.zeta:g} exceeds the admissible {zmax:g}")
        self.powers = OrthogonalPowers(self.dec.A_o)
        qp_variant = "zero" if variant == "fallback" else variant
        self.layout = VariableLayout.build(model.N, model.m, model.q, qp_variant)
        self.bounds = bound_rows(self.layout, self.sat, model.u_max)
        self._basis_inv = np.linalg.inv(self.dec.basis)

    # -- helpers
    def orthogonal_part(self, x_tilde):
        return (np.asarray(x_tilde, float) @ self._basis_inv.T)[..., :self.dec.d_o]

    def fallback(self, x_tilde, t: int) -> PolicyParams:
        N, m, q = self.model.N, self.model.m, self.model.q
        eta = np.zeros(N * m)
        if self.dec.d_o:
            km = self.dec.kappa * m
            eta[:km] = fallback_saturation_policy(
                self.orthogonal_part(x_tilde), t, self.dec, self.stability.r,
                self.stability.zeta, powers=self.powers)
        return PolicyParams(eta, np.zeros((N * m, N * q)), "fallback")

    def _stability(self, x_tilde, t, psi0):
        if not self.stability.enabled or t % self.dec.kappa:
            return None
        M, lo, hi, _ = stability_constraints(self.orthogonal_part(x_tilde), t, self.dec,
                                             self.stability, psi0, self.model.m, self.powers)
        return M, lo, hi, self.dec.kappa

    def assemble(self, x_tilde, innovation, t: int = 0) -> list[qpsolver.QpProblem]:
        x_tilde = np.atleast_2d(np.asarray(x_tilde, float))
        innovation = np.atleast_2d(np.asarray(innovation, float))
        psi0 = self.sat(innovation)
        H, f = hessian_and_linear(self.moments, self.stacked, self.layout, x_tilde, psi0)
        if self.psd_guard:
            H = project_psd(H)
        return [
            _finish_qp(H[b], f[b], self.layout, self.sat, self.model.u_max, psi0[b],
                       self._stability(x_tilde[b], t, psi0[b]), self.bounds)
            for b in range(x_tilde.shape[0])]

    def reference(self, t: int = 0) -> qpsolver.QpProblem:
        """Problem at the origin with a mid-range innovation, used to share scaling and factors.

        Problems of one instant differ from it only on the nominal inputs and
        the first feedback column.
        """
        psi0 = np.full(self.model.q, 0.5 * self.sat.psi_max)
        H, f = hessian_and_linear(self.moments, self.stacked, self.layout,
                                  np.zeros((1, self.model.d)), psi0[None])
        if self.psd_guard:
            H = project_psd(H)
        return _finish_qp(H[0], f[0], self.layout, self.sat, self.model.u_max, psi0,
                          self._stability(np.zeros(self.model.d), t, psi0), self.bounds)

    def step(self, x_tilde, innovation, t: int = 0) -> StepResult:
        """Policy parameters for a batch of paths at absolute time ``t``."""
        x_tilde = np.atleast_2d(np.asarray(x_tilde, float))
        innovation = np.atleast_2d(np.asarray(innovation, float))
        B = x_tilde.shape[0]
        if self.variant == "fallback":
            return StepResult([self.fallback(x_tilde[b], t) for b in range(B)],
                              np.zeros(B, bool), 0.0, ["fallback"] * B)
        probs = self.assemble(x_tilde, innovation, t)
        sols = qpsolver.solve_batch(probs, self.qp_options, self.reference(t))
        out, fb = [], np.zeros(B, bool)
        for b, (prob, sol) in enumerate(zip(probs, sols)):
            params = self._accept(prob, sol)
            if params is None:
                params = self.fallback(x_tilde[b], t)
                fb[b] = True
            out.append(params)
        return StepResult(out, fb, sum(s.solve_time for s in sols), [s.status for s in sols])

    def _accept(self, prob, sol) -> PolicyParams | None:
        if sol.status != qpsolver.OPTIMAL or not np.all(np.isfinite(sol.x)):
            return None
        eta, Theta = self.layout.split(sol.x)
        params = PolicyParams(eta.copy(), Theta.copy(), self.variant)
        u_max = self.model.u_max
        margin = feasibility_rows(params, self.sat, u_max)
        if np.min(margin) < 0:
            if np.min(margin) < -1e-4 * max(1.0, u_max):
                return None
            used = u_max - margin
            scale = np.divide(u_max, used, out=np.ones_like(used), where=margin < 0)
            params.eta *= scale
            params.Theta *= scale[:, None]
        # drift rows must still hold after any rescaling
        nb = self.bounds[0].shape[0]
        if prob.k > nb:
            z = self.layout.pack(params.eta, params.Theta)
            Ax = prob.A[nb:] @ z
            tol = 1e-6 * max(1.0, self.stability.zeta)
            if np.any(Ax > prob.u[nb:] + tol) or np.any(Ax < prob.l[nb:] - tol):
                return None
        return params


def solve_step(qp: qpsolver.QpProblem, layout: VariableLayout, fallback: PolicyParams,
               opts: qpsolver.QpOptions | None = None) -> tuple[PolicyParams, bool]:
    """Solve one assembled QP; on solver failure return ``fallback``.

    The flag is ``True`` when the fallback was used.
    """
    sol = qpsolver.solve(qp, opts)
    if sol.status != qpsolver.OPTIMAL:
        return fallback, True
    eta, Theta = layout.split(sol.x)
    return PolicyParams(eta, Theta, layout.variant), False
