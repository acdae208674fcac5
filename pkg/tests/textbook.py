"""Independent textbook formulas used as oracles."""
import math

import numpy as np
from scipy import stats


def dm_statistic(e1, e2, h):
    """HLN-corrected Diebold-Mariano statistic and two-sided t p-value, loop based."""
    T = len(e1)
    d = [e1[t] ** 2 - e2[t] ** 2 for t in range(T)]
    mean = sum(d) / T
    gam = []
    for k in range(h):
        s = 0.0
        for t in range(k, T):
            s += (d[t] - mean) * (d[t - k] - mean)
        gam.append(s / T)
    v = gam[0] + 2 * sum(gam[1:])
    dm = mean / math.sqrt(v / T)
    stat = math.sqrt((T + 1 - 2 * h + h * (h - 1) / T) / T) * dm
    return stat, 2 * (1 - stats.t.cdf(abs(stat), T - 1))


def arma_autocov(phi, theta, sigma2, lags, n_terms=5000):
    """Autocovariances of an ARMA process from its truncated MA(infinity) weights.

    ``phi`` are AR coefficients of x_t = sum phi_i x_{t-i} + e_t + sum theta_j e_{t-j}.
    """
    psi = np.zeros(n_terms)
    for k in range(n_terms):
        v = 1.0 if k == 0 else (theta[k - 1] if k - 1 < len(theta) else 0.0)
        for i, p in enumerate(phi, start=1):
            if k - i >= 0:
                v += p * psi[k - i]
        psi[k] = v
    return np.array([sigma2 * float(psi[: n_terms - k] @ psi[k:]) for k in range(lags + 1)])
