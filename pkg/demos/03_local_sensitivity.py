"""
Local sensitivity
=================

One-at-a-time perturbations give a first look at which rate matters; forward
differences with a tiny relative step give the sensitivity curves, scaled by
the nominal parameter values.
"""
import numpy as np

from momsens import load_model, local_sensitivity, perturbation_sweep

for name in ("birthdeath", "dimerization"):
    network = load_model(name)
    print(f"--- {name}")

    sweep = perturbation_sweep(network, factor=0.20)
    base = sweep["nominal"]["mu_X"]
    for p in network.parameter_names:
        shift = np.trapezoid(np.abs(sweep[p]["mu_X"] - base), sweep[p].times)
        print(f"  +20% {p}: integrated |delta mu| = {shift:.4g}")

    report = local_sensitivity(network)
    for p in network.parameter_names:
        curve = report.curve("mu_X", p)
        peak = np.argmax(np.abs(curve))
        print(f"  RSF of mu wrt {p}: peak {curve[peak]:+.4g} at t={report.times[peak]:.1f},"
              f" value at t=10 {curve[-1]:+.4g}")
