"""
Birth-death moments
===================

A single protein species is duplicated at rate ``c1`` and degraded at rate
``c2``.  Both propensities are linear in the count, so the closed moment
equations are exact and have a closed-form solution we can compare against.
"""
import numpy as np

from momsens import build_moment_system, load_model, simulate

network = load_model("birthdeath")
system = build_moment_system(network)
print("tracked moments:", system.names)

###############################################################################
# The symbolic right-hand side shows the two linear equations.
for name, expr in system.symbolic().items():
    print(f"d{name}/dt = {expr}")

###############################################################################
# Integrate on the default 101-point grid over ten seconds.
traj = simulate(system)
c1, c2 = network.nominal.values
r = c1 - c2
t = traj.times
mu_exact = 50 * np.exp(r * t)
sigma_exact = 50 * (c1 + c2) / r * (np.exp(2 * r * t) - np.exp(r * t))

for i in (0, 10, 50, 100):
    print(f"t={t[i]:5.1f}  mu={traj['mu_X'][i]:12.6g} ({mu_exact[i]:12.6g})"
          f"  sigma={traj['sigma_X_X'][i]:12.6g} ({sigma_exact[i]:12.6g})")

print("negative variance seen:", traj.metadata["negative_variance"])
