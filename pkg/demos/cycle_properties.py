"""Stochastic cycle: transition block, autocovariances and spectrum.

Run with ``python demos/cycle_properties.py``.
"""
import math

import numpy as np

from trendcycle.decomposition import cycle_spectrum, spectrum_variance
from trendcycle.statespace import cycle_stationary_cov, cycle_system, rotation_block, stationary_autocovariance

rho, lam, var = 0.9, 2 * math.pi / 30, 0.5  # damping, a 30-quarter period, shock variance

# the 2x2 damped rotation that drives (psi, psi*)
print(rotation_block(rho, lam).round(4))

# unconditional covariance of (psi, psi*, psi(-1), psi(-2)) in closed form
P = cycle_stationary_cov(rho, lam, var, n_lags=2)
print(P.round(4))

# autocorrelations rho^k cos(lam k)
acov = stationary_autocovariance(cycle_system(rho, lam, var), 8)[:, 0, 0]
print("acf:", (acov / acov[0]).round(3))
print("theory:", (rho ** np.arange(9) * np.cos(lam * np.arange(9))).round(3))

# the spectrum peaks near lam and integrates to the variance
curve = cycle_spectrum(rho, lam, var)
print(f"peak period {curve.peak_period:.1f} quarters")
print(f"spectrum integral {spectrum_variance(rho, lam, var):.4f} vs variance {P[0, 0]:.4f}")

# zeroing the auxiliary shock leaves an ARMA(2,1); zeroing the main one, an AR(2)
for label, sys in [("aux zero", cycle_system(rho, lam, var, aux_var=0.0)),
                   ("main zero", cycle_system(rho, lam, 0.0, aux_var=var))]:
    g = stationary_autocovariance(sys, 4)[:, 0, 0]
    print(label, g.round(4))
