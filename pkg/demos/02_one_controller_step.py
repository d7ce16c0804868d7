"""
One controller step, three policy families
==========================================

At each recalculation instant the controller solves a quadratic program for
a nominal input sequence plus a feedback matrix acting on saturated future
innovations.  Restricting that matrix trades cost for solve time.  This
script solves one instant for each family and checks that the resulting
inputs can never exceed the bound, whatever the innovations turn out to be.
"""

import time

import numpy as np

from netmpc import presets
from netmpc.channels import BernoulliChannel
from netmpc.model import decompose
from netmpc.policy import SaturatorSpec, evaluate, feasibility_rows
from netmpc.synthesis import Controller, StabilityParams, estimate_moments

model = presets.four_state_model(u_max=5.0)
sat = SaturatorSpec()
dec = decompose(model)
print(f"orthogonal part: {dec.d_o} states, reachable in {dec.kappa} steps")

# The expectations over dropouts and noise are estimated once, offline.
t0 = time.perf_counter()
moments = estimate_moments(model, BernoulliChannel(0.8), BernoulliChannel(0.8), sat,
                           samples=50_000, seed=0)
print(f"offline moments: {time.perf_counter() - t0:.1f} s")

stab = StabilityParams.default(model, dec)
print(f"drift rows: radius r = {stab.r:.2f}, rate zeta = {stab.zeta:.3f}")

x_tilde = np.array([[40.0, -25.0, 10.0, 3.0]])
innovation = np.array([[1.5, -0.4, 0.2, 2.0]])
rng = np.random.default_rng(3)
for variant in ("full", "diagonal", "zero"):
    ctrl = Controller(model, moments, variant=variant, stability=stab)
    res = ctrl.step(x_tilde, innovation, t=0)
    p = res.params[0]
    margin = feasibility_rows(p, sat, model.u_max).min()
    # adversarial check: many random innovation sequences, far outside the saturation range
    worst = max(np.abs(evaluate(p, rng.standard_normal(p.Theta.shape[1]) * 50, sat)).max()
                for _ in range(2000))
    print(f"{variant:>8}: status {res.statuses[0]}, {np.count_nonzero(p.Theta)} feedback gains, "
          f"first input {np.round(p.eta[:model.m], 3)}, margin {margin:.2e}, "
          f"largest input seen {worst:.3f} <= {model.u_max}, solve {1e3 * res.solve_time:.1f} ms")

# When the solver cannot certify a solution, a saturated drift policy takes over.
ctrl = Controller(model, moments, stability=stab)
fb = ctrl.fallback(x_tilde[0], 0)
print("fallback nominal inputs for the first window:", np.round(fb.eta[:dec.kappa * model.m], 3))
