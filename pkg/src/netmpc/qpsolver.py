"""Dense convex QP solver: operator splitting (ADMM) with polishing.

Solves

    minimize    0.5 x'Px + q'x
    subject to  l <= Ax <= u

with the splitting used by OSQP: modified Ruiz equilibration, a cached
factorisation of ``P + sigma I + A' diag(rho) A``, over-relaxation, rho
updates restricted to a fixed logarithmic grid and a primal infeasibility
certificate.  Polishing guesses the active set from the iterate and repairs
the guess with a few primal-dual active-set passes; it is tried at the end
and, for nearly converged problems, every ``polish_every`` iterations, which
rescues nearly linear (degenerate) problems where ADMM alone stalls.  The
iteration runs on a stack of problems at once (``solve_batch``) so that many
independent controllers can be stepped together.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
PRIMAL_INFEASIBLE = "primal_infeasible_certificate"

_INF = 1e20  # bounds beyond this are treated as infinite


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.l = np.asarray(self.l, dtype=float).ravel()
        self.u = np.asarray(self.u, dtype=float).ravel()
        if self.P.shape != (n, n):
            raise ValueError(f"P has shape {self.P.shape}, expected {(n, n)}")
        if self.l.size != self.A.shape[0] or self.u.size != self.A.shape[0]:
            raise ValueError("l and u must have one entry per constraint row")
        if np.any(self.l > self.u):
            raise ValueError("lower bound exceeds upper bound")
        self.P = 0.5 * (self.P + self.P.T)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def k(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass
class QpOptions:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_pinf: float = 1e-5
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    scaling_iters: int = 10
    check_every: int = 5
    adapt_rho: bool = True
    adapt_after: int = 50
    adapt_ratio: float = 1.5
    adapt_every: int = 10
    max_rho_updates: int = 50
    polish: bool = True
    polish_delta: float = 1e-7
    polish_refine: int = 5
    polish_active_set_passes: int = 12
    polish_every: int = 100
    polish_gate: float = 0.1


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    solve_time: float
    polished: bool = False

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class KktReport:
    stationarity: float
    primal_infeasibility: float
    complementarity: float
    dual_sign: float

    @property
    def worst(self) -> float:
        return max(self.stationarity, self.primal_infeasibility,
                   self.complementarity, self.dual_sign)


def check_kkt(p: QpProblem, x: np.ndarray, y: np.ndarray) -> KktReport:
    """KKT residuals of a primal/dual pair (y > 0 on upper, y < 0 on lower bounds)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    Ax = p.A @ x
    stat = np.max(np.abs(p.P @ x + p.q + p.A.T @ y), initial=0.0)
    viol = np.maximum(np.maximum(Ax - p.u, p.l - Ax), 0.0)
    prim = np.max(viol, initial=0.0)
    yp, yn = np.maximum(y, 0.0), np.minimum(y, 0.0)
    with np.errstate(invalid="ignore"):
        cu = np.where(yp > 0, yp * np.abs(p.u - Ax), 0.0)
        cl = np.where(yn < 0, -yn * np.abs(Ax - p.l), 0.0)
    cu = np.where(np.isfinite(cu), cu, np.inf)
    cl = np.where(np.isfinite(cl), cl, np.inf)
    comp = np.max(cu + cl, initial=0.0)
    # multipliers on infinite bounds must vanish
    sign = np.max(np.where(p.u >= _INF, yp, 0.0) - np.where(p.l <= -_INF, yn, 0.0), initial=0.0)
    return KktReport(float(stat), float(prim), float(comp), float(sign))


# --------------------------------------------------------------------------
# batched core


def _inf_norm_cols(M: np.ndarray) -> np.ndarray:
    return np.max(np.abs(M), axis=-2, initial=0.0)


def _ruiz(P, A, iters):
    """Modified Ruiz equilibration of the KKT matrix, batched over the leading axis."""
    B, k, n = A.shape
    D = np.ones((B, n))
    E = np.ones((B, k))
    P = P.copy()
    A = A.copy()
    for _ in range(iters):
        cn = np.maximum(_inf_norm_cols(P), _inf_norm_cols(A))
        rn = np.max(np.abs(A), axis=-1, initial=0.0)
        cn = np.where(cn < 1e-4, 1.0, np.minimum(cn, 1e4))
        rn = np.where(rn < 1e-4, 1.0, np.minimum(rn, 1e4))
        dd = 1.0 / np.sqrt(cn)
        de = 1.0 / np.sqrt(rn)
        P = dd[:, :, None] * P * dd[:, None, :]
        A = de[:, :, None] * A * dd[:, None, :]
        D *= dd
        E *= de
    # cost scaling from P alone, so a problem's iterates do not depend on its batch
    c = np.mean(np.max(np.abs(P), axis=-1), axis=-1)
    c = 1.0 / np.where(c < 1e-4, 1.0, np.minimum(c, 1e4))
    return c[:, None, None] * P, A, D, E, c


def _rho_vector(l, u, rho):
    r = np.full(l.shape, rho)
    free = (l <= -_INF) & (u >= _INF)
    eq = np.abs(u - l) < 1e-10
    r = np.where(eq, 1e3 * rho, r)
    return np.where(free, 1e-6, r)


def _factor(P, A, rho_vec, sigma):
    n = P.shape[-1]
    K = P + sigma * np.eye(n) + np.matmul(np.swapaxes(A, -1, -2), rho_vec[..., None] * A)
    return np.linalg.inv(K)


RHO_STEPS = 4  # rho is adapted on a grid of 10**(1/RHO_STEPS)


def _scale(levels):
    return 10.0 ** (np.asarray(levels) / RHO_STEPS)


class _DenseLinear:
    """Per-problem matrices and explicit KKT inverses."""

    def __init__(self, P, A, rho_base, sigma):
        self.P, self.A, self.rho_base, self.sigma = P, A, rho_base, sigma
        self.levels = np.zeros(len(P), int)
        self.Kinv = _factor(P, A, self.rho(), sigma)

    def rho(self):
        return self.rho_base * _scale(self.levels)[:, None]

    def solve(self, rhs):
        return _mv(self.Kinv, rhs)

    def Pv(self, v):
        return _mv(self.P, v)

    def Av(self, v):
        return _mv(self.A, v)

    def Atv(self, v):
        return _mtv(self.A, v)

    def keep(self, mask):
        self.levels, self.rho_base = self.levels[mask], self.rho_base[mask]
        self.P, self.A, self.Kinv = self.P[mask], self.A[mask], self.Kinv[mask]

    def update(self, upd, steps):
        self.levels = self.levels + steps
        if np.any(upd):
            self.Kinv[upd] = _factor(self.P[upd], self.A[upd], self.rho()[upd], self.sigma)


class _LowRankLinear:
    """A reference problem plus per-problem changes on a few coordinates.

    The KKT matrix of problem ``b`` is ``K_ref + E_J D_b E_J'`` where ``J``
    collects the variables touched by differing entries of ``P``, differing
    rows of ``A`` or differing rho.  Solves use the reference inverse (one
    matrix product for the whole batch) and a Woodbury correction of size
    ``|J|``.  Inverses are cached per rho level.
    """

    def __init__(self, Pref, Aref, rho_ref, P, A, rho_base, sigma, J, R):
        self.Pref, self.Aref, self.rho_ref, self.sigma = Pref, Aref, rho_ref, sigma
        self.J, self.R = J, R
        self.rho_base = rho_base
        self.levels = np.zeros(len(P), int)
        self.dA = A[:, R] - Aref[R]
        self.dP = (P - Pref)[:, J][:, :, J]
        AJ = A[:, R][:, :, J]
        ArJ = Aref[R][:, J]
        self.dK_A = (np.matmul(np.swapaxes(AJ, 1, 2), rho_base[:, R, None] * AJ)
                     - ArJ.T @ (rho_ref[R, None] * ArJ))
        self.cache: dict = {}
        self.W = np.empty((len(P), J.size, J.size))
        self._refresh(np.ones(len(P), bool))

    def _ref(self, level):
        if level not in self.cache:
            Kinv = _factor(self.Pref, self.Aref, self.rho_ref * _scale(level), self.sigma)
            self.cache[level] = (Kinv, Kinv[:, self.J].copy(), Kinv[np.ix_(self.J, self.J)])
        return self.cache[level]

    def _refresh(self, sel):
        nJ = self.J.size
        for lev in np.unique(self.levels[sel]):
            grp = sel & (self.levels == lev)
            _, _, G = self._ref(int(lev))
            Dl = self.dP[grp] + _scale(lev) * self.dK_A[grp]
            # W = D (I + G D)^-1, written as a solve of the transposed system
            M = np.eye(nJ) + np.matmul(Dl, G)
            self.W[grp] = np.swapaxes(np.linalg.solve(M, Dl), 1, 2)

    def rho(self):
        return self.rho_base * _scale(self.levels)[:, None]

    def solve(self, rhs):
        out = np.empty_like(rhs)
        for lev in np.unique(self.levels):
            sel = self.levels == lev
            Kinv, KJ, _ = self._ref(int(lev))
            s = rhs[sel] @ Kinv
            t = _mv(self.W[sel], s[:, self.J])
            out[sel] = s - t @ KJ.T
        return out

    def Pv(self, v):
        out = v @ self.Pref
        out[:, self.J] += _mv(self.dP, v[:, self.J])
        return out

    def Av(self, v):
        out = v @ self.Aref.T
        out[:, self.R] += _mv(self.dA, v)
        return out

    def Atv(self, v):
        return v @ self.Aref + _mtv(self.dA, v[:, self.R])

    def keep(self, mask):
        self.levels, self.rho_base = self.levels[mask], self.rho_base[mask]
        self.dA, self.dP, self.dK_A, self.W = (self.dA[mask], self.dP[mask],
                                               self.dK_A[mask], self.W[mask])

    def update(self, upd, steps):
        self.levels = self.levels + steps
        if np.any(upd):
            self._refresh(upd)


def _difference_support(Pref, Aref, rho_ref, P, A, rho_base):
    """Variables ``J`` and rows ``R`` on which the batch departs from the reference."""
    R = np.flatnonzero(np.any(A != Aref, axis=(0, 2)) | np.any(rho_base != rho_ref, axis=0))
    Jp = np.any(P != Pref, axis=(0, 1))
    Ja = np.any(A[:, R] != 0, axis=(0, 1)) | np.any(Aref[R] != 0, axis=0)
    return np.flatnonzero(Jp | Ja), R


def _mv(M, v):
    return np.matmul(M, v[..., None])[..., 0]


def _mtv(M, v):
    return np.matmul(v[..., None, :], M)[..., 0, :]


def _kkt_solve(prob: QpProblem, lower, upper, opts: QpOptions):
    """Regularised equality-constrained KKT solve on the given active rows."""
    n, k = prob.n, prob.k
    act = np.flatnonzero(lower | upper)
    Aa = prob.A[act]
    na = act.size
    Kx = np.zeros((n + na, n + na))
    Kx[:n, :n] = prob.P
    Kx[:n, n:] = Aa.T
    Kx[n:, :n] = Aa
    Kreg = Kx.copy()
    Kreg[:n, :n] += opts.polish_delta * np.eye(n)
    Kreg[n:, n:] -= opts.polish_delta * np.eye(na)
    rhs = np.concatenate([-prob.q, np.where(lower[act], prob.l[act], prob.u[act])])
    try:
        lu = linalg.lu_factor(Kreg, check_finite=False)
        sol = linalg.lu_solve(lu, rhs, check_finite=False)
        for _ in range(opts.polish_refine):
            sol = sol + linalg.lu_solve(lu, rhs - Kx @ sol, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(sol)):
        return None
    yfull = np.zeros(k)
    yfull[act] = sol[n:]
    return sol[:n], yfull


def _polish(prob: QpProblem, z, y, opts: QpOptions):
    """Active-set KKT solve guessed from an ADMM iterate; returns (x, y) or None.

    A wrong guess shows up as multipliers of the wrong sign or violated
    inactive rows; a few primal-dual active-set corrections repair it.
    """
    lower = (z - prob.l < -y) & (prob.l > -_INF)
    upper = (prob.u - z < y) & (prob.u < _INF)
    upper &= ~lower
    for _ in range(opts.polish_active_set_passes + 1):
        res = _kkt_solve(prob, lower, upper, opts)
        if res is None:
            return None
        x, yfull = res
        tol = 1e-7 * max(1.0, np.max(np.abs(yfull), initial=0.0))
        wrong_lo = lower & (yfull > tol)
        wrong_up = upper & (yfull < -tol)
        Ax = prob.A @ x
        ptol = opts.eps_abs + opts.eps_rel * max(1.0, np.max(np.abs(Ax), initial=0.0))
        viol_lo = ~lower & ~upper & (Ax < prob.l - ptol)
        viol_up = ~lower & ~upper & (Ax > prob.u + ptol)
        if not (wrong_lo.any() or wrong_up.any() or viol_lo.any() or viol_up.any()):
            return x, yfull
        lower = (lower & ~wrong_lo) | viol_lo
        upper = (upper & ~wrong_up) | viol_up
    return None


def _residuals(prob: QpProblem, x, y):
    Ax = prob.A @ x
    zc = np.clip(Ax, prob.l, prob.u)
    prim = np.max(np.abs(Ax - zc), initial=0.0)
    Px = prob.P @ x
    Aty = prob.A.T @ y
    dual = np.max(np.abs(Px + prob.q + Aty), initial=0.0)
    ps = max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(zc), initial=0.0))
    ds = max(np.max(np.abs(Px), initial=0.0), np.max(np.abs(Aty), initial=0.0),
             np.max(np.abs(prob.q), initial=0.0))
    return prim, dual, ps, ds


def _kkt_ok(prob: QpProblem, x, y, opts: QpOptions) -> bool:
    prim, dual, ps, ds = _residuals(prob, x, y)
    return prim <= opts.eps_abs + opts.eps_rel * ps and dual <= opts.eps_abs + opts.eps_rel * ds


def solve_batch(problems: list[QpProblem], opts: QpOptions | None = None,
                reference: QpProblem | None = None) -> list[QpSolution]:
    """Solve a list of same-shaped problems together.

    All problems must share ``n`` and ``k``.  Without ``reference`` every
    problem is equilibrated and factorised on its own and follows the iterates
    it would follow alone.  With ``reference`` all problems use the reference's
    equilibration and a shared factorisation corrected by a low-rank update;
    this pays off when the problems differ only on a few variables and rows,
    and makes each problem's iterates depend on the reference rather than on
    the rest of the batch.  Each reported ``solve_time`` is the batch wall
    time divided by the batch size.
    """
    opts = opts or QpOptions()
    t0 = time.perf_counter()
    if not problems:
        return []
    n, k = problems[0].n, problems[0].k
    if any(p.n != n or p.k != k for p in problems):
        raise ValueError("solve_batch needs problems of identical shape")
    Bn = len(problems)
    q0 = np.stack([p.q for p in problems])
    l0 = np.stack([p.l for p in problems]).reshape(Bn, k)
    u0 = np.stack([p.u for p in problems]).reshape(Bn, k)
    l0 = np.where(l0 <= -_INF, -np.inf, l0)
    u0 = np.where(u0 >= _INF, np.inf, u0)

    Ps = np.stack([p.P for p in problems])
    As = np.stack([p.A for p in problems]).reshape(Bn, k, n)
    rho_base = _rho_vector(l0, u0, opts.rho)
    if reference is not None:
        if reference.n != n or reference.k != k:
            raise ValueError("reference problem has a different shape")
        _, _, D, E, c = _ruiz(reference.P[None], reference.A.reshape(1, k, n), opts.scaling_iters)
        # scale reference and batch identically so equal entries stay equal
        Pr = c[0] * D[0][:, None] * reference.P * D[0][None, :]
        Ar = E[0][:, None] * reference.A.reshape(k, n) * D[0][None, :]
        Ps = c[0] * D[0][None, :, None] * Ps * D[0][None, None, :]
        As = E[0][None, :, None] * As * D[0][None, None, :]
        D, E, c = np.repeat(D, Bn, 0), np.repeat(E, Bn, 0), np.repeat(c, Bn)
        rho_ref = _rho_vector(reference.l, reference.u, opts.rho)
        J, R = _difference_support(Pr, Ar, rho_ref, Ps, As, rho_base)
        if J.size <= n // 2:
            lin = _LowRankLinear(Pr, Ar, rho_ref, Ps, As, rho_base, opts.sigma, J, R)
        else:
            lin = _DenseLinear(Ps, As, rho_base, opts.sigma)
    else:
        Ps, As, D, E, c = _ruiz(Ps, As, opts.scaling_iters)
        lin = _DenseLinear(Ps, As, rho_base, opts.sigma)
    q = c[:, None] * D * q0
    l = E * l0
    u = E * u0
    lo_level = int(np.floor(RHO_STEPS * np.log10(1e-6 / opts.rho)))
    hi_level = int(np.ceil(RHO_STEPS * np.log10(1e6 / opts.rho)))
    # Cost scaling comes from P alone so that a shared reference stays valid.
    # A large linear term is handled instead by starting at a larger rho:
    # scaling the cost by 1/|q| is the same as multiplying rho by |q|.
    qn = np.max(np.abs(q), axis=-1, initial=0.0)
    start = np.clip(np.rint(RHO_STEPS * np.log10(np.maximum(qn, 1.0))).astype(int), 0, hi_level)
    if np.any(start):
        lin.update(start > 0, start)

    x = np.zeros((Bn, n))
    z = np.zeros((Bn, k))
    y = np.zeros((Bn, k))
    y_chk = y.copy()
    adapted = np.zeros(Bn, int)

    out_x = np.zeros((Bn, n))
    out_y = np.zeros((Bn, k))
    status = np.full(Bn, MAX_ITER, dtype=object)
    iters = np.full(Bn, opts.max_iter)
    idx = np.arange(Bn)
    early_sol: dict = {}
    tried: dict = {}

    it = 0
    while idx.size and it < opts.max_iter:
        it += 1
        rho_vec = lin.rho()
        rhs = opts.sigma * x - q + lin.Atv(rho_vec * z - y)
        xt = lin.solve(rhs)
        zt = lin.Av(xt)
        x = opts.alpha * xt + (1 - opts.alpha) * x
        zr = opts.alpha * zt + (1 - opts.alpha) * z
        zn = np.clip(zr + y / rho_vec, l, u)
        y = y + rho_vec * (zr - zn)
        z = zn

        if it % opts.check_every and it != opts.max_iter:
            continue
        Ax = lin.Av(x)
        Einv = 1.0 / E
        prim = np.max(np.abs(Einv * (Ax - z)), axis=-1, initial=0.0)
        ps = np.maximum(np.max(np.abs(Einv * Ax), axis=-1, initial=0.0),
                        np.max(np.abs(Einv * z), axis=-1, initial=0.0))
        Px = lin.Pv(x)
        Aty = lin.Atv(y)
        sc = 1.0 / (c[:, None] * D)
        dual = np.max(np.abs(sc * (Px + q + Aty)), axis=-1, initial=0.0)
        ds = np.maximum.reduce([
            np.max(np.abs(sc * Px), axis=-1, initial=0.0),
            np.max(np.abs(sc * Aty), axis=-1, initial=0.0),
            np.max(np.abs(sc * q), axis=-1, initial=0.0)])
        conv = (prim <= opts.eps_abs + opts.eps_rel * ps) & (dual <= opts.eps_abs + opts.eps_rel * ds)

        dy = y - y_chk
        y_chk = y.copy()
        dyn = np.max(np.abs(E * dy), axis=-1, initial=0.0)
        atdy = np.max(np.abs(lin.Atv(dy) / D), axis=-1, initial=0.0)
        with np.errstate(invalid="ignore"):
            support = (np.where(dy > 0, u * dy, 0.0) + np.where(dy < 0, l * dy, 0.0)).sum(-1)
        infeas = (~conv) & (dyn > 0) & (atdy <= opts.eps_pinf * dyn) & (support <= -opts.eps_pinf * dyn)

        early = np.zeros(idx.size, bool)
        if opts.polish and opts.polish_every and it % opts.polish_every == 0:
            near = ((prim <= opts.polish_gate * (1.0 + ps)) & (dual <= opts.polish_gate * (1.0 + ds)))
            for j in np.flatnonzero(~conv & ~infeas & near):
                prob = problems[idx[j]]
                yu = E[j] * y[j] / c[j]
                zu = prob.A @ (D[j] * x[j])
                # retry only when the guessed active set has moved
                guess = np.packbits(np.concatenate([zu - prob.l < -yu, prob.u - zu < yu])).tobytes()
                if tried.get(idx[j]) == guess:
                    continue
                tried[idx[j]] = guess
                pol = _polish(prob, zu, yu, opts)
                if pol is not None and _kkt_ok(prob, pol[0], pol[1], opts):
                    early_sol[idx[j]] = pol
                    early[j] = True

        done = conv | infeas | early
        last = it == opts.max_iter
        fin = np.ones_like(done) if last else done
        if np.any(fin):
            gi = idx[fin]
            out_x[gi] = D[fin] * x[fin]
            out_y[gi] = E[fin] * y[fin] / c[fin, None]
            status[gi] = np.where(conv[fin] | early[fin], OPTIMAL,
                                  np.where(infeas[fin], PRIMAL_INFEASIBLE, MAX_ITER))
            iters[gi] = it
        if last:
            break

        keep = ~done
        if not np.all(keep):
            idx = idx[keep]
            q, D, E, c = q[keep], D[keep], E[keep], c[keep]
            l, u, l0, u0 = l[keep], u[keep], l0[keep], u0[keep]
            lin.keep(keep)
            x, z, y, y_chk = x[keep], z[keep], y[keep], y_chk[keep]
            adapted = adapted[keep]
            prim, ps, dual, ds = prim[keep], ps[keep], dual[keep], ds[keep]

        if (opts.adapt_rho and it >= opts.adapt_after and idx.size
                and (it - opts.adapt_after) % opts.adapt_every == 0):
            with np.errstate(divide="ignore"):
                ratio = np.sqrt((prim / np.maximum(ps, 1e-10))
                                / np.maximum(dual / np.maximum(ds, 1e-10), 1e-10))
            steps = np.rint(RHO_STEPS * np.log10(np.maximum(ratio, 1e-12))).astype(int)
            steps = np.clip(lin.levels + steps, lo_level, hi_level) - lin.levels
            upd = ((adapted < opts.max_rho_updates) & (steps != 0)
                   & ((ratio > opts.adapt_ratio) | (ratio < 1.0 / opts.adapt_ratio)))
            adapted += upd
            lin.update(upd, np.where(upd, steps, 0))

    sols = []
    for b, prob in enumerate(problems):
        xb, yb = out_x[b], out_y[b]
        polished = False
        if b in early_sol:
            xb, yb = early_sol[b]
            polished = True
        elif status[b] == OPTIMAL and opts.polish and prob.k:
            pol = _polish(prob, prob.A @ xb, yb, opts)
            if pol is not None:
                px, py = pol
                r_p, r_d, _, _ = _residuals(prob, px, py)
                r_a, d_a, _, _ = _residuals(prob, xb, yb)
                if r_p <= max(r_a, opts.eps_abs) and r_d <= max(d_a, opts.eps_abs):
                    xb, yb, polished = px, py, True
        pr, dr, _, _ = _residuals(prob, xb, yb)
        sols.append(QpSolution(
            x=xb, y=yb, status=str(status[b]), iterations=int(iters[b]),
            primal_residual=float(pr), dual_residual=float(dr),
            solve_time=0.0, polished=polished))
    elapsed = time.perf_counter() - t0
    for s in sols:
        s.solve_time = elapsed / Bn
    return sols


def solve(p: QpProblem, opts: QpOptions | None = None) -> QpSolution:
    """Solve a single QP."""
    return solve_batch([p], opts)[0]
