"""A pusher driven head-first into a wall, for a soft, a medium and a stiff flagellum.

Reports the class of the late-time motion, the limiting orientation and
the time of first contact.
"""
from mmfs.wall import simulate_escape

for K_b in (2e-24, 1e-23, 5e-23):
    o = simulate_escape(K_b)
    detach = "-" if o.detach_time is None else f"{o.detach_time:.2f}"
    print(f"K_b={K_b:g}: {o.regime.value:<18} theta*={o.theta_star:.3f}  contact at t={o.contact_time:.3f}  "
          f"detached at t={detach}  final distance={o.final_wall_distance:.2f} L")
