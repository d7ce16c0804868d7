"""Closed-loop Monte-Carlo harness.

Plant, sensor-side Kalman filter, both erasure channels, the controller-side
estimator, the per-window QP controller and the actuator buffer protocol are
stepped together.  Paths are simulated in batches: the filter covariance is
data independent, so every batch shares it, and the per-instant QPs of a
batch are solved in one stacked ADMM run.  Every path draws its noise and
dropouts from its own streams, so results do not depend on batching.
"""

from __future__ import annotations

import copy
import csv
import io
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channels import path_rng
from .filtering import initialize, kf_predict_update
from .model import SystemModel, decompose, psd_factor, stack
from .policy import SaturatorSpec
from .synthesis import (Controller, OfflineMoments, StabilityParams, estimate_moments,
                        moments_key)


@dataclass
class SimConfig:
    model: SystemModel
    sensor: object
    control: object
    variant: str = "full"
    stability: bool = True
    r: float | None = None
    zeta: float | None = None
    T: int = 120
    paths: int = 100
    seed: int = 0
    moments: OfflineMoments | None = None
    moment_samples: int = 100_000
    moment_seed: int | None = None
    sat: SaturatorSpec = field(default_factory=SaturatorSpec)
    batch_size: int = 200
    threads: int = 1
    orthogonal_dim: int | None = None

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be at least 1")
        if self.T % self.model.N_r:
            warnings.warn("T is not a multiple of the recalculation interval", stacklevel=2)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass
class PathResult:
    path: int
    x_norm2: np.ndarray        # |x_t|^2 for t = 0..T
    u_norm2: np.ndarray        # |u_applied_t|^2 for t = 0..T-1
    est_err2: np.ndarray       # |xhat_t - xtilde_t|^2 for t = 0..T
    solve_times: np.ndarray    # per recalculation instant
    fallbacks: np.ndarray      # per recalculation instant
    sensor_bits: np.ndarray
    control_bits: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, PathResult):
            return NotImplemented
        return self.path == other.path and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("x_norm2", "u_norm2", "est_err2", "fallbacks", "sensor_bits", "control_bits"))


@dataclass
class AggregateStats:
    """Path aggregates.

    ``empirical_msb`` is the path mean of each path's largest ``|x_t|^2``;
    ``ensemble_msb`` is the largest path mean ``max_t mean_paths |x_t|^2``.
    The first never falls below the second.
    """

    paths: int
    empirical_msb: float
    msb_se: float
    ensemble_msb: float
    ensemble_msb_se: float
    mae_per_stage: float
    mae_se: float
    mean_sq_trace: np.ndarray
    mean_norm_trace: np.ndarray
    solver_time_mean: float
    solver_time_per_instant: np.ndarray
    fallback_rate: float
    estimation_error: float


def ensure_moments(config: SimConfig) -> OfflineMoments:
    key = moments_key(config.model, config.sensor, config.control, config.sat)
    if config.moments is not None:
        if config.moments.model_hash != key:
            raise ValueError("moments were computed for a different model, channel or saturator")
        return config.moments
    seed = config.seed if config.moment_seed is None else config.moment_seed
    return estimate_moments(config.model, config.sensor, config.control, config.sat,
                            config.moment_samples, seed)


def build_controller(config: SimConfig, moments: OfflineMoments | None = None) -> Controller:
    model = config.model
    dec = decompose(model, config.orthogonal_dim)
    moments = moments or ensure_moments(config)
    stab = StabilityParams.default(model, dec, config.r, config.zeta, enabled=config.stability)
    return Controller(model, moments, config.variant, config.sat, stab, dec, stacked=stack(model))


def _draws(config: SimConfig, path: int):
    m = config.model
    T = config.T
    x0 = path_rng(config.seed, path, "initial").standard_normal(m.d) @ psd_factor(m.Sigma_x0).T
    w = path_rng(config.seed, path, "process").standard_normal((T, m.d)) @ psd_factor(m.Sigma_w).T
    v = path_rng(config.seed, path, "measurement").standard_normal((T + 1, m.q)) @ psd_factor(m.Sigma_v).T
    s = copy.deepcopy(config.sensor).sample_sequence(path_rng(config.seed, path, "sensor"), T + 1)
    nu = copy.deepcopy(config.control).sample_sequence(path_rng(config.seed, path, "control"), T)
    return x0, w, v, s, nu


def run_batch(config: SimConfig, paths, controller: Controller | None = None) -> list[PathResult]:
    """Simulate the listed path indices together."""
    controller = controller or build_controller(config)
    model = config.model
    A, B, C = model.A, model.B, model.C
    N, N_r, m, q, T = model.N, model.N_r, model.m, model.q, config.T
    paths = list(paths)
    P = len(paths)
    draws = [_draws(config, p) for p in paths]
    x = np.stack([d[0] for d in draws])
    W = np.stack([d[1] for d in draws])
    V = np.stack([d[2] for d in draws])
    S = np.stack([d[3] for d in draws]).astype(float)
    NU = np.stack([d[4] for d in draws]).astype(float)

    y = x @ C.T + V[:, 0]
    kf = initialize(model, y)
    innov = kf.innovation(y, model)
    x_tilde = S[:, :1] * kf.x_hat
    recv = S[:, :1] * innov
    u_prev = np.zeros((P, m))

    x_norm2 = np.zeros((P, T + 1))
    u_norm2 = np.zeros((P, T))
    est_err2 = np.zeros((P, T + 1))
    x_norm2[:, 0] = np.sum(x**2, axis=1)
    est_err2[:, 0] = np.sum((kf.x_hat - x_tilde) ** 2, axis=1)
    n_solves = -(-T // N_r)
    times = np.zeros((P, n_solves))
    fbs = np.zeros((P, n_solves), dtype=bool)
    sat = config.sat

    for w_idx, t0 in enumerate(range(0, T, N_r)):
        res = controller.step(x_tilde, recv, t0)
        eta = np.stack([p.eta for p in res.params])
        Theta = np.stack([p.Theta for p in res.params])
        times[:, w_idx] = res.solve_time / P
        fbs[:, w_idx] = res.fallback
        psis = []
        g = np.zeros(P)
        for ell in range(min(N_r, T - t0)):
            t = t0 + ell
            psis.append(sat(recv))
            rows = slice(ell * m, (ell + 1) * m)
            u = eta[:, rows].copy()
            for i, ps in enumerate(psis):
                u += np.einsum("bij,bj->bi", Theta[:, rows, i * q:(i + 1) * q], ps)
            nu = NU[:, t][:, None]
            # actuator: fresh command on delivery, buffered nominal after a
            # delivery earlier in the window, zero otherwise
            ua = np.where(nu > 0, u, g[:, None] * eta[:, rows])
            g = np.maximum(g, NU[:, t])
            x = x @ A.T + ua @ B.T + W[:, t]
            y = x @ C.T + V[:, t + 1]
            kf, innov = kf_predict_update(kf, ua, y, model)
            s = S[:, t + 1][:, None]
            pred = x_tilde @ A.T + ua @ B.T
            x_tilde = np.where(s > 0, kf.x_hat, pred)
            recv = s * innov
            u_prev = ua
            x_norm2[:, t + 1] = np.sum(x**2, axis=1)
            u_norm2[:, t] = np.sum(ua**2, axis=1)
            est_err2[:, t + 1] = np.sum((kf.x_hat - x_tilde) ** 2, axis=1)

    return [PathResult(p, x_norm2[i], u_norm2[i], est_err2[i], times[i], fbs[i],
                       S[i].astype(np.int8), NU[i].astype(np.int8))
            for i, p in enumerate(paths)]


def run_path(config: SimConfig, path_index: int, controller: Controller | None = None) -> PathResult:
    return run_batch(config, [path_index], controller)[0]


def _bootstrap_se(values_fn, n: int, reps: int = 200, seed: int = 12345) -> float:
    if n < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    stats = [values_fn(rng.integers(0, n, n)) for _ in range(reps)]
    return float(np.std(stats, ddof=1))


def aggregate(results: list[PathResult]) -> AggregateStats:
    results = sorted(results, key=lambda r: r.path)
    X = np.stack([r.x_norm2 for r in results])
    U = np.stack([r.u_norm2 for r in results])
    n = X.shape[0]
    mean_sq = X.mean(axis=0)
    peaks = X.max(axis=1)
    times = np.stack([r.solve_times for r in results])
    fb = np.stack([r.fallbacks for r in results])
    return AggregateStats(
        paths=n,
        empirical_msb=float(peaks.mean()),
        msb_se=_bootstrap_se(lambda i: peaks[i].mean(), n),
        ensemble_msb=float(mean_sq.max()),
        ensemble_msb_se=_bootstrap_se(lambda i: X[i].mean(axis=0).max(), n),
        mae_per_stage=float(U.mean()),
        mae_se=float(U.mean(axis=1).std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        mean_sq_trace=mean_sq,
        mean_norm_trace=np.sqrt(X).mean(axis=0),
        solver_time_mean=float(times.mean()),
        solver_time_per_instant=times.mean(axis=0),
        fallback_rate=float(fb.mean()),
        estimation_error=float(np.max(np.mean(np.stack([r.est_err2 for r in results]), axis=0))),
    )


def run_paths(config: SimConfig, controller: Controller | None = None) -> list[PathResult]:
    controller = controller or build_controller(config)
    idx = list(range(config.paths))
    chunks = [idx[i:i + config.batch_size] for i in range(0, len(idx), config.batch_size)]
    if config.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(lambda c: run_batch(config, c, controller), chunks))
    else:
        parts = [run_batch(config, c, controller) for c in chunks]
    return [r for part in parts for r in part]


def run_monte_carlo(config: SimConfig, controller: Controller | None = None) -> AggregateStats:
    return aggregate(run_paths(config, controller))


# --------------------------------------------------------------------------
# sweeps

SWEEP_PARAMS = ("u_max", "p_c", "p_s", "p_gc", "p_gs")
# wall-clock columns are kept out of the main table so that it is reproducible byte for byte
CSV_COLUMNS = ("param", "value", "variant", "msb", "msb_se", "ensemble_msb", "mae", "mae_se",
               "fallback_rate")
TIMING_COLUMNS = ("param", "value", "variant", "mean_solver_time")


def apply_param(config: SimConfig, param: str, value: float) -> SimConfig:
    from .channels import BernoulliChannel, GilbertElliottChannel
    if param == "u_max":
        return config.with_(model=config.model.replace(u_max=value), moments=config.moments)
    if param in ("p_c", "p_s"):
        ch = BernoulliChannel(value)
        key = "control" if param == "p_c" else "sensor"
        return config.with_(**{key: ch, "moments": None})
    if param in ("p_gc", "p_gs"):
        key = "control" if param == "p_gc" else "sensor"
        old = getattr(config, key)
        if isinstance(old, GilbertElliottChannel):
            ch = GilbertElliottChannel(old.p_gb, old.p_bg, value, old.p_bad)
        else:
            ch = GilbertElliottChannel(0.2, 0.9, value, 0.0)
        return config.with_(**{key: ch, "moments": None})
    raise ValueError(f"unknown sweep parameter {param!r}")


def variant_config(config: SimConfig, variant: str) -> SimConfig:
    """Curve labels: a policy variant, optionally suffixed ``-nostab``."""
    if variant.endswith("-nostab"):
        return config.with_(variant=variant[:-7], stability=False)
    return config.with_(variant=variant)


def sweep(config: SimConfig, param: str, values, variants, progress=None):
    """One aggregate per ``(value, variant)``; returns ``(rows, stats)``."""
    if not len(values):
        raise ValueError("values must be non-empty")
    cache: dict[str, OfflineMoments] = {}
    rows, stats = [], {}
    for value in values:
        base = apply_param(config, param, float(value))
        key = moments_key(base.model, base.sensor, base.control, base.sat)
        if base.moments is None or base.moments.model_hash != key:
            if key not in cache:
                cache[key] = ensure_moments(base.with_(moments=None))
            base = base.with_(moments=cache[key])
        for variant in variants:
            cfg = variant_config(base, variant)
            agg = run_monte_carlo(cfg)
            stats[(float(value), variant)] = agg
            rows.append({
                "param": param, "value": float(value), "variant": variant,
                "msb": agg.empirical_msb, "msb_se": agg.msb_se, "ensemble_msb": agg.ensemble_msb,
                "mae": agg.mae_per_stage, "mae_se": agg.mae_se,
                "mean_solver_time": agg.solver_time_mean, "fallback_rate": agg.fallback_rate})
            if progress:
                progress(rows[-1])
    return rows, stats


def solver_time_reduction(config: SimConfig, variants, baseline: str = "full") -> dict:
    """Per-instant percentage solver-time saving of each variant against ``baseline``.

    Every variant replays the same paths; the saving
    ``100 (t_base - t_variant) / t_base`` is formed per optimisation instant
    and then averaged over instants.  Wall-clock based, so not reproducible
    bit for bit.
    """
    moments = ensure_moments(config)
    cfg = config.with_(moments=moments)

    def times(label):
        c = variant_config(cfg, label)
        ctrl = build_controller(c, moments)
        run_paths(c.with_(paths=1), ctrl)  # warm-up: first calls pay import and cache costs
        res = run_paths(c, ctrl)
        return np.stack([r.solve_times for r in res]).mean(axis=0)

    base = times(baseline)
    out = {}
    for label in variants:
        if label == baseline:
            continue
        t = times(label)
        out[label] = float(np.mean(100.0 * (base - t) / base))
    return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.6g" % v
    return str(v)


def rows_to_csv(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def trace_rows(results: list[PathResult]):
    """Per-step path-mean traces as CSV rows."""
    agg = aggregate(results)
    X = np.stack([r.x_norm2 for r in results])
    U = np.stack([r.u_norm2 for r in results])
    out = []
    for t in range(X.shape[1]):
        out.append({"t": t, "mean_sq_norm": float(agg.mean_sq_trace[t]),
                    "mean_norm": float(agg.mean_norm_trace[t]),
                    "mean_u_sq": float(U[:, t].mean()) if t < U.shape[1] else float("nan")})
    return out
