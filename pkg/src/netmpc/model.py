"""Plant description, structural checks and stacked (horizon) matrices.

The plant is

    x[t+1] = A x[t] + B u_applied[t] + w[t],     y[t] = C x[t] + v[t]

with Gaussian noises, a box bound ``|u| <= u_max`` on every input and a
finite-horizon quadratic cost with weights ``Q`` (stages), ``Q_N``
(terminal) and ``R`` (inputs).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

RANK_RTOL = 1e-9
UNIT_TOL = 1e-10
BORDERLINE_TOL = 1e-8


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {a.shape}")
    return a


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank from singular values above ``rtol`` times the largest one."""
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def psd_factor(M: np.ndarray) -> np.ndarray:
    """``L`` with ``L L' = M`` for a symmetric PSD ``M`` (singular allowed)."""
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def is_positive_definite(M: np.ndarray, rtol: float = RANK_RTOL) -> bool:
    M = 0.5 * (M + M.T)
    ev = np.linalg.eigvalsh(M)
    return bool(ev[0] > rtol * max(abs(ev[-1]), 1e-300))


def is_positive_semidefinite(M: np.ndarray, rtol: float = RANK_RTOL) -> bool:
    M = 0.5 * (M + M.T)
    ev = np.linalg.eigvalsh(M)
    return bool(ev[0] >= -rtol * max(abs(ev[-1]), 1.0))


@dataclass(frozen=True)
class SystemModel:
    """Plant, noise, cost and horizon data.

    ``orthogonal_dim`` is optional: when given, ``A`` is taken to be in block
    form ``blkdiag(A_o, A_s)`` with the first ``orthogonal_dim`` states forming
    the orthogonal part.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Sigma_w: np.ndarray
    Sigma_v: np.ndarray
    Sigma_x0: np.ndarray
    Q: np.ndarray
    Q_N: np.ndarray
    R: np.ndarray
    u_max: float
    N: int
    N_r: int
    orthogonal_dim: int | None = None

    def __post_init__(self):
        for name in ("A", "B", "C", "Sigma_w", "Sigma_v", "Sigma_x0", "Q", "Q_N", "R"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        object.__setattr__(self, "u_max", float(self.u_max))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "N_r", int(self.N_r))
        d, m, q = self.d, self.m, self.q
        shapes = {
            "A": (d, d), "B": (d, m), "C": (q, d), "Sigma_w": (d, d),
            "Sigma_v": (q, q), "Sigma_x0": (d, d), "Q": (d, d), "Q_N": (d, d),
            "R": (m, m),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")
        if self.N < 1 or not 1 <= self.N_r <= self.N:
            raise ValueError(f"need N >= 1 and 1 <= N_r <= N (got N={self.N}, N_r={self.N_r})")
        if self.orthogonal_dim is not None and not 0 <= self.orthogonal_dim <= d:
            raise ValueError("orthogonal_dim out of range")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    def replace(self, **changes) -> "SystemModel":
        from dataclasses import replace
        return replace(self, **changes)

    def fingerprint(self) -> str:
        """Stable hash over every field (used to pair moment files with models)."""
        h = hashlib.sha256()
        for name in ("A", "B", "C", "Sigma_w", "Sigma_v", "Sigma_x0", "Q", "Q_N", "R"):
            a = np.ascontiguousarray(getattr(self, name), dtype="<f8")
            h.update(name.encode())
            h.update(repr(a.shape).encode())
            h.update(a.tobytes())
        h.update(repr((self.u_max, self.N, self.N_r, self.orthogonal_dim)).encode())
        return h.hexdigest()


# --------------------------------------------------------------------------
# validation


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self) -> str:
        return "\n".join(
            f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f": {c.detail}" if c.detail else "")
            for c in self.checks)


def _eigen_groups(A: np.ndarray, tol: float = 1e-7):
    """Distinct eigenvalues of A with their algebraic multiplicities."""
    ev = np.linalg.eigvals(A)
    groups: list[list[complex]] = []
    for lam in ev:
        for g in groups:
            if abs(g[0] - lam) < tol:
                g.append(lam)
                break
        else:
            groups.append([lam])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def validate_model(model: SystemModel) -> ValidationReport:
    """Run the standing-assumption checks on ``model``.

    Dimension problems raise ``ValueError`` at construction time; assumption
    violations are reported as failed entries and left to the caller.
    """
    A, B, C = model.A, model.B, model.C
    d = model.d
    report = ValidationReport()
    groups = _eigen_groups(A)

    bad = []
    for lam, _ in groups:
        if abs(lam) >= 1 - UNIT_TOL:
            if numerical_rank(np.hstack([A - lam * np.eye(d), B])) < d:
                bad.append(lam)
    report.checks.append(CheckResult(
        "stabilizable", not bad,
        "" if not bad else f"uncontrollable modes at {np.round(bad, 6).tolist()}"))

    bad = [lam for lam, _ in groups
           if numerical_rank(np.vstack([A - lam * np.eye(d), C])) < d]
    report.checks.append(CheckResult(
        "observable", not bad,
        "" if not bad else f"unobservable modes at {np.round(bad, 6).tolist()}"))

    # (A, Sigma_w^{1/2}) controllable
    ew, Vw = np.linalg.eigh(0.5 * (model.Sigma_w + model.Sigma_w.T))
    root = Vw @ np.diag(np.sqrt(np.clip(ew, 0, None))) @ Vw.T
    bad = [lam for lam, _ in groups
           if numerical_rank(np.hstack([A - lam * np.eye(d), root])) < d]
    report.checks.append(CheckResult(
        "noise_controllable", not bad,
        "" if not bad else f"modes not excited by process noise at {np.round(bad, 6).tolist()}"))

    report.checks.append(CheckResult(
        "measurement_noise_pd", is_positive_definite(model.Sigma_v)))
    report.checks.append(CheckResult("input_weight_pd", is_positive_definite(model.R)))
    report.checks.append(CheckResult(
        "cost_weights_psd",
        is_positive_semidefinite(model.Q) and is_positive_semidefinite(model.Q_N)))

    radius = max(abs(lam) for lam, _ in groups)
    report.checks.append(CheckResult(
        "eigenvalues_in_unit_disk", radius <= 1 + UNIT_TOL, f"spectral radius {radius:.6g}"))

    defective = []
    for lam, alg in groups:
        if abs(abs(lam) - 1) <= BORDERLINE_TOL:
            geo = d - numerical_rank(A - lam * np.eye(d), rtol=1e-7)
            if geo != alg:
                defective.append(lam)
    report.checks.append(CheckResult(
        "unit_circle_semisimple", not defective,
        "" if not defective else f"Jordan blocks at {np.round(defective, 6).tolist()}"))
    return report


# --------------------------------------------------------------------------
# orthogonal / Schur-stable split and reachability


def reachability_matrix(A: np.ndarray, B: np.ndarray, h: int) -> np.ndarray:
    """``[A^{h-1} B, ..., A B, B]``."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if h < 1:
        raise ValueError("h must be a positive integer")
    if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise ValueError("dimension mismatch between A and B")
    blocks = [B]
    for _ in range(h - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks[::-1])


def reachability_index(A_o: np.ndarray, B_o: np.ndarray) -> int:
    """Smallest h for which the reachability matrix of (A_o, B_o) has full row rank."""
    d_o = A_o.shape[0]
    if d_o == 0:
        return 0
    for h in range(1, d_o + 1):
        if numerical_rank(reachability_matrix(A_o, B_o, h)) == d_o:
            return h
    raise ValueError("orthogonal part unreachable: reachability matrix never attains full row rank")


@dataclass(frozen=True)
class Decomposition:
    """``A = basis @ blkdiag(A_o, A_s) @ inv(basis)``, orthogonal block first."""

    A_o: np.ndarray
    A_s: np.ndarray
    B_o: np.ndarray
    B_s: np.ndarray
    basis: np.ndarray
    kappa: int

    @property
    def d_o(self) -> int:
        return self.A_o.shape[0]

    @property
    def d_s(self) -> int:
        return self.A_s.shape[0]

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of ``x`` in the (orthogonal, stable) basis."""
        z = np.linalg.solve(self.basis, x)
        return z[: self.d_o], z[self.d_o:]

    def recompose(self) -> np.ndarray:
        return self.basis @ linalg.block_diag(self.A_o, self.A_s) @ np.linalg.inv(self.basis)

    def reachability(self) -> np.ndarray:
        return reachability_matrix(self.A_o, self.B_o, self.kappa)


def _check_orthogonal(A_o: np.ndarray) -> None:
    if A_o.size and np.max(np.abs(A_o.T @ A_o - np.eye(A_o.shape[0]))) > UNIT_TOL:
        raise ValueError("orthogonal block is not orthogonal to 1e-10")


def _check_schur(A_s: np.ndarray) -> None:
    if A_s.size and np.max(np.abs(np.linalg.eigvals(A_s))) >= 1.0:
        raise ValueError("stable block is not Schur stable")


def decompose(model: SystemModel, orthogonal_dim: int | None = None) -> Decomposition:
    """Split the dynamics into an orthogonal part and a Schur-stable part.

    If ``orthogonal_dim`` (or ``model.orthogonal_dim``) is given the matrix is
    trusted to be in block form and the blocks are read off after checking them.
    Otherwise a sorted real Schur form separates the unit-circle eigenvalues,
    a Sylvester solve removes the coupling and the unit-circle block is brought
    to orthogonal form through its invariant quadratic form.
    """
    A, B = model.A, model.B
    d = model.d
    if orthogonal_dim is None:
        orthogonal_dim = model.orthogonal_dim

    if orthogonal_dim is not None:
        k = orthogonal_dim
        if np.max(np.abs(A[:k, k:]), initial=0.0) > 0 or np.max(np.abs(A[k:, :k]), initial=0.0) > 0:
            raise ValueError("A is not block diagonal with the given orthogonal dimension")
        A_o, A_s = A[:k, :k].copy(), A[k:, k:].copy()
        _check_orthogonal(A_o)
        _check_schur(A_s)
        basis = np.eye(d)
        B_o, B_s = B[:k].copy(), B[k:].copy()
        return Decomposition(A_o, A_s, B_o, B_s, basis, reachability_index(A_o, B_o))

    report = validate_model(model)
    for name in ("eigenvalues_in_unit_disk", "unit_circle_semisimple"):
        if not report[name].passed:
            raise ValueError(f"cannot decompose: {name} check failed ({report[name].detail})")
    mags = np.abs(np.linalg.eigvals(A))
    gap = np.abs(mags - 1.0)
    if np.any((gap > UNIT_TOL) & (gap <= BORDERLINE_TOL)):
        raise ValueError(
            "eigenvalue modulus within 1e-8 of 1 but not on the unit circle; "
            "supply A in explicit block form (orthogonal_dim)")

    T, Z, k = linalg.schur(A, output="real", sort=lambda re, im: abs(complex(re, im)) > 1 - BORDERLINE_TOL)
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    if k and d - k:
        X = linalg.solve_sylvester(T11, -T22, -T12)
    else:
        X = np.zeros((k, d - k))
    Y = np.block([[np.eye(k), X], [np.zeros((d - k, k)), np.eye(d - k)]])

    if k:
        w, V = np.linalg.eig(T11)
        W = np.real(np.linalg.inv(V @ V.conj().T))
        W = 0.5 * (W + W.T)
        L = np.linalg.cholesky(W).T  # W = L^T L
        A_o = L @ T11 @ np.linalg.inv(L)
        # polar factor removes round-off left by the similarity
        U, _, Vt = np.linalg.svd(A_o)
        A_o = U @ Vt
        S = linalg.block_diag(np.linalg.inv(L), np.eye(d - k))
    else:
        A_o = np.zeros((0, 0))
        S = np.eye(d)
    basis = Z @ Y @ S
    A_s = T22.copy()
    _check_orthogonal(A_o)
    _check_schur(A_s)
    Bt = np.linalg.solve(basis, B)
    B_o, B_s = Bt[:k], Bt[k:]
    return Decomposition(A_o, A_s, B_o, B_s, basis, reachability_index(A_o, B_o))


# --------------------------------------------------------------------------
# stacked horizon matrices


@dataclass(frozen=True)
class StackedMatrices:
    """Horizon-N lifted dynamics and cost.

    ``x[t:N+1] = calA x[t] + calB u[t:N] + calD w[t:N]`` and
    ``y[t:N+1] = calC x[t:N+1] + v[t:N+1]``.
    """

    calA: np.ndarray
    calB: np.ndarray
    calD: np.ndarray
    calC: np.ndarray
    calQ: np.ndarray
    calR: np.ndarray
    alpha: np.ndarray
    Q_A: np.ndarray
    Q_D: np.ndarray
    alpha_chol: np.ndarray


def _lower_toeplitz(powers: list[np.ndarray], M: np.ndarray, N: int) -> np.ndarray:
    d, k = M.shape
    out = np.zeros(((N + 1) * d, N * k))
    for i in range(1, N + 1):
        for j in range(i):
            out[i * d:(i + 1) * d, j * k:(j + 1) * k] = powers[i - j - 1] @ M
    return out


def stack(model: SystemModel) -> StackedMatrices:
    A, B, N, d = model.A, model.B, model.N, model.d
    powers = [np.eye(d)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    calA = np.vstack(powers)
    calB = _lower_toeplitz(powers, B, N)
    calD = _lower_toeplitz(powers, np.eye(d), N)
    calC = np.kron(np.eye(N + 1), model.C)
    calQ = linalg.block_diag(*([model.Q] * N + [model.Q_N]))
    calR = np.kron(np.eye(N), model.R)
    alpha = calB.T @ calQ @ calB + calR
    alpha = 0.5 * (alpha + alpha.T)
    return StackedMatrices(
        calA=calA, calB=calB, calD=calD, calC=calC, calQ=calQ, calR=calR,
        alpha=alpha, Q_A=calA.T @ calQ @ calB, Q_D=calD.T @ calQ @ calB,
        alpha_chol=np.linalg.cholesky(alpha))


def stage_cost_sum(model: SystemModel, xs: np.ndarray, us: np.ndarray) -> float:
    """Sum of stage costs over one horizon; ``xs`` is (N+1, d), ``us`` is (N, m)."""
    total = 0.0
    for k in range(model.N):
        total += xs[k] @ model.Q @ xs[k] + us[k] @ model.R @ us[k]
    return float(total + xs[-1] @ model.Q_N @ xs[-1])
