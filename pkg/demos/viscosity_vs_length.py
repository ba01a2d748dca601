"""How the viscosity change of a dilute suspension depends on flagellum length.

Prints the elastic and propulsion parts of the relative viscosity change
along a sweep of r = ell / L, then the lengths where the change crosses
zero and -10 %.
"""
import numpy as np

from mmfs.asymptotics import effective_viscosity_asymptotic, viscosity_decrease_threshold
from mmfs.core import PhysicalParams, table2_params

p = PhysicalParams(F_p=1.5e-6)
print(f"{'r':>6} {'L [um]':>8} {'elastic':>10} {'propulsion':>11} {'total':>10}")
for r in np.geomspace(0.2, 1.0, 9):
    v = effective_viscosity_asymptotic(p.replace(L=p.ell / r))
    print(f"{r:6.3f} {1e6 * p.ell / r:8.2f} {v.eta_elastic:10.4f} {v.eta_prop:11.4f} {v.total:10.4f}")

print()
for K_b in (3e-23, 9e-23):
    q = table2_params(K_b=K_b, k_r=0.5)
    for target in (0.0, -0.1):
        t = viscosity_decrease_threshold(q, "L", target, convention="table")
        print(f"K_b={K_b:g}: change below {100 * target:+.0f} % for L > {1e6 * t.L:.1f} um "
              f"(r < {t.r:.3f}, eps > {t.eps:.3f})")
