"""
Lossy links and the remote estimate
===================================

A sensor runs a Kalman filter next to the plant and ships its estimate over
an erasure link.  The controller keeps its own estimate: it adopts the
sensor's value when a packet arrives and otherwise predicts forward with
the input it knows was applied.  This script shows how often packets get
through and what that costs in estimation accuracy.
"""

import numpy as np

from netmpc import presets
from netmpc.channels import BernoulliChannel, path_rng
from netmpc.estimation import EstimatorState, remote_update
from netmpc.filtering import initialize, kf_predict_update, steady_state_gain

model = presets.four_state_model()
print("plant eigenvalues:", np.round(np.linalg.eigvals(model.A), 3))

# Two link models with the same long-run delivery rate.  The Bernoulli link
# drops packets independently; the Markov link drops them mostly in its bad
# state.  With the benchmark's transition rates the bad state is left after
# about one step, so its outages are no longer than the independent ones.
iid = BernoulliChannel(0.8)
good_share = presets.ge_channel(1.0).stationary_good
bursty = presets.ge_channel(0.8 / good_share)
rng = np.random.default_rng(0)
for name, ch in (("bernoulli", iid), ("gilbert-elliott", bursty)):
    bits = ch.sample_sequence(rng, 100_000)
    runs = np.diff(np.flatnonzero(np.diff(np.r_[1, bits, 1]) != 0))[::2]
    print(f"{name:>16}: delivery {bits.mean():.3f}, mean outage length {runs[runs > 0].mean():.2f}")

# The filter gain settles quickly; this is the gain the offline moments use.
K, P = steady_state_gain(model)
print("steady-state prediction covariance trace:", round(float(np.trace(P)), 3))


def estimation_error(p_s: float, T: int = 200, seed: int = 1) -> float:
    """Mean squared gap between the controller's estimate and the true state."""
    sensor = BernoulliChannel(p_s)
    proc, meas = path_rng(seed, 0, "process"), path_rng(seed, 0, "measurement")
    bits = sensor.sample_sequence(path_rng(seed, 0, "sensor"), T + 1)
    Lw, Lv = np.linalg.cholesky(model.Sigma_w), np.linalg.cholesky(model.Sigma_v)
    x = np.linalg.cholesky(model.Sigma_x0) @ proc.standard_normal(model.d)
    kf = initialize(model, model.C @ x + Lv @ meas.standard_normal(model.q))
    est = remote_update(EstimatorState.initial(model), int(bits[0]),
                        (kf.x_hat, model.C @ x) if bits[0] else None, np.zeros(model.m), model)
    u = np.zeros(model.m)  # open loop keeps the comparison about the link only
    errs = []
    for t in range(T):
        x = model.A @ x + model.B @ u + Lw @ proc.standard_normal(model.d)
        y = model.C @ x + Lv @ meas.standard_normal(model.q)
        kf, _ = kf_predict_update(kf, u, y, model)
        s = int(bits[t + 1])
        est = remote_update(est, s, (kf.x_hat, y) if s else None, u, model)
        errs.append(np.sum((x - est.x_tilde) ** 2))
    return float(np.mean(errs))


for p_s in (1.0, 0.8, 0.5):
    print(f"sensor delivery {p_s:.1f}: mean |x - x_tilde|^2 = {estimation_error(p_s):.2f}")
