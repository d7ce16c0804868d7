import numpy as np
import pytest
from hypothesis import settings

from netmpc.model import SystemModel

settings.register_profile("netmpc", deadline=None, derandomize=True, print_blob=True)
settings.load_profile("netmpc")


def make_model(A, B, C=None, Sigma_w=None, Sigma_v=None, Sigma_x0=None, Q=None, Q_N=None, R=None,
               u_max=1.0, N=2, N_r=1, orthogonal_dim=None) -> SystemModel:
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float).reshape(A.shape[0], -1)
    d, m = B.shape
    C = np.eye(d) if C is None else np.atleast_2d(np.asarray(C, float))
    q = C.shape[0]
    eye = np.eye
    return SystemModel(
        A=A, B=B, C=C,
        Sigma_w=eye(d) if Sigma_w is None else np.atleast_2d(Sigma_w),
        Sigma_v=eye(q) if Sigma_v is None else np.atleast_2d(Sigma_v),
        Sigma_x0=eye(d) if Sigma_x0 is None else np.atleast_2d(Sigma_x0),
        Q=eye(d) if Q is None else np.atleast_2d(Q),
        Q_N=eye(d) if Q_N is None else np.atleast_2d(Q_N),
        R=eye(m) if R is None else np.atleast_2d(R),
        u_max=u_max, N=N, N_r=N_r, orthogonal_dim=orthogonal_dim)


def random_model(rng, d=None, m=None, q=None, N=None, stable=False) -> SystemModel:
    """Random well-posed plant; eigenvalues inside the unit disk."""
    d = d or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 3))
    q = q or int(rng.integers(1, d + 1))
    N = N or int(rng.integers(1, 5))
    A = rng.standard_normal((d, d))
    rad = max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    A *= rng.uniform(0.3, 0.95 if stable else 1.0) / rad
    Lw = rng.standard_normal((d, d))
    Lv = rng.standard_normal((q, q))
    return make_model(A, rng.standard_normal((d, m)), rng.standard_normal((q, d)),
                      Sigma_w=Lw @ Lw.T + 0.1 * np.eye(d), Sigma_v=Lv @ Lv.T + 0.5 * np.eye(q),
                      Sigma_x0=np.eye(d), u_max=1.0, N=N, N_r=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
