"""A nearly rigid swimmer in shear tumbles like an ellipse with an effective shape.

Integrates the full body/flagellum system at eps = 0.01 without propulsion
and compares the body angle with the closed-form Jeffery orbit.
"""
import numpy as np

from mmfs.asymptotics import effective_shape_b, jeffery_angle, jeffery_period
from mmfs.core import BackgroundFlow, PhysicalParams, nondimensionalize
from mmfs.dynamics import SolverConfig, initial_state, simulate

d = nondimensionalize(PhysicalParams(K_b=2.0736e-22, F_p=0.0))
b = effective_shape_b(d.beta, d.r, d.k_r, d.alpha).exact
T = jeffery_period(b)
traj = simulate(initial_state(d, 0.0, 0.0, 41), T, d, BackgroundFlow(), SolverConfig(dt=2e-3, n=41), sample_dt=T / 8)
print(f"eps={d.eps:.3g}  effective shape b={b:.5f}  period={T:.2f}")
for t, s in zip(traj.times, traj.states):
    print(f"t={t:7.2f}  simulated={s.theta0:+.5f}  Jeffery={float(jeffery_angle(t, b, 0.0)):+.5f}")
err = max(abs(s.theta0 - float(jeffery_angle(t, b, 0.0))) for t, s in zip(traj.times, traj.states))
print(f"largest difference {err:.2e} rad")
