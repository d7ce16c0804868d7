"""Independent reference solvers used only by the tests."""

import itertools

import numpy as np


def enumerate_active_sets(P, q, A, l, u, tol=1e-9):
    """Minimiser of a strictly convex QP by trying every active set.

    Rows are split into one-sided inequalities ``G x <= h``.  For a strictly
    convex problem the KKT point is unique, so the first active set whose
    solution is primal feasible with non-negative multipliers is optimal.
    """
    G, h = [], []
    for a, lo, hi in zip(A, l, u):
        if np.isfinite(hi):
            G.append(a)
            h.append(hi)
        if np.isfinite(lo):
            G.append(-a)
            h.append(-lo)
    G, h = np.array(G).reshape(-1, P.shape[0]), np.array(h)
    n = P.shape[0]
    for size in range(min(n, len(h)) + 1):
        for act in itertools.combinations(range(len(h)), size):
            Ga = G[list(act)]
            K = np.block([[P, Ga.T], [Ga, np.zeros((size, size))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-q, h[list(act)]]))
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.all(lam >= -tol) and np.all(G @ x <= h + tol):
                return x, 0.5 * x @ P @ x + q @ x
    raise RuntimeError("no KKT point found")


def random_strictly_convex_qp(rng, n, k):
    L = rng.standard_normal((n, n))
    P = L @ L.T + 0.1 * np.eye(n)
    q = rng.standard_normal(n) * 3
    A = rng.standard_normal((k, n))
    x0 = rng.standard_normal(n) * 0.3  # strictly feasible point
    center = A @ x0
    l = center - rng.uniform(0.1, 2.0, k)
    u = center + rng.uniform(0.1, 2.0, k)
    one_sided = rng.random(k) < 0.6
    l[one_sided & (rng.random(k) < 0.5)] = -np.inf
    u[one_sided & np.isfinite(l)] = np.inf
    return P, q, A, l, u
