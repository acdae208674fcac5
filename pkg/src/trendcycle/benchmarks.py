"""Univariate forecast benchmarks: random walk with drift, and the
unobserved-components model with stochastic volatility (UC-SV)."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

# Seven-component normal mixture approximating log chi-square(1)
# (Kim, Shephard and Chib, 1998): weights, means, variances.
KSC_WEIGHTS = np.array([0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750])
KSC_MEANS = np.array([-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819]) - 1.2704
KSC_VARS = np.array([5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261])
LOG_OFFSET = 0.001
MIN_UCSV_OBS = 40


def _clean(series) -> np.ndarray:
    x = np.asarray(series, dtype=float).ravel()
    return x[np.isfinite(x)]


def rw_drift_forecast(series, h) -> float | np.ndarray:
    """Last value plus ``h`` times the mean first difference of the window.

    ``h`` may be an int or an array of horizons. Missing values are dropped.
    """
    x = _clean(series)
    if x.size < 2:
        raise ValueError("random walk with drift needs at least 2 observations")
    drift = float(np.mean(np.diff(x)))
    return x[-1] + np.asarray(h) * drift if np.ndim(h) else float(x[-1] + h * drift)


@dataclass(frozen=True)
class UcsvConfig:
    iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    gamma: float = 0.04
    tau1_var: float = 1000.0
    h1_var: float = 10.0
    freeze_volatility: bool = False
    log_var_eta: float = 0.0
    log_var_eps: float = 0.0

    def __post_init__(self):
        if self.iterations <= self.burn_in:
            raise ValueError("iterations must exceed burn-in")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class UcsvResult:
    forecast: float
    tau: np.ndarray
    h_eta: np.ndarray
    h_eps: np.ndarray
    config: UcsvConfig

    @property
    def tau_last(self) -> np.ndarray:
        return self.tau[:, -1]

    def forecasts(self, horizons) -> dict:
        # the trend is a driftless random walk, so every horizon shares the point forecast
        return {int(h): self.forecast for h in horizons}


def _banded_rw_precision(n: int, step_prec: np.ndarray, first_prec: float) -> np.ndarray:
    """Upper banded form of the precision of a random walk x_1..x_n with
    var(x_1) = 1/first_prec and var(x_t - x_{t-1}) = 1/step_prec[t-2]."""
    diag = np.zeros(n)
    off = np.zeros(n)
    diag[0] = first_prec
    diag[:-1] += step_prec
    diag[1:] += step_prec
    off[1:] = -step_prec
    return np.vstack([off, diag])


def _draw_gmrf(ab: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(Q^{-1} b, Q^{-1}) with Q in upper banded form."""
    U = linalg.cholesky_banded(ab, lower=False)
    mean = linalg.cho_solve_banded((U, False), b)
    z = rng.standard_normal(b.size)
    # solve U x = z
    dev = linalg.solve_banded((0, 1), U, z)
    return mean + dev


def _draw_log_vol(e: np.ndarray, h: np.ndarray, gamma: float, h1_var: float,
                  rng: np.random.Generator) -> np.ndarray:
    ystar = np.log(e * e + LOG_OFFSET)
    # mixture indicators given current h
    resid = ystar[:, None] - h[:, None] - KSC_MEANS[None, :]
    logp = np.log(KSC_WEIGHTS) - 0.5 * np.log(KSC_VARS) - 0.5 * resid * resid / KSC_VARS
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    p /= p.sum(axis=1, keepdims=True)
    u = rng.uniform(size=(e.size, 1))
    s = np.minimum((p.cumsum(axis=1) < u).sum(axis=1), KSC_WEIGHTS.size - 1)
    mv, vv = KSC_MEANS[s], KSC_VARS[s]
    n = e.size
    ab = _banded_rw_precision(n, np.full(n - 1, 1.0 / gamma), 1.0 / h1_var)
    ab[1] += 1.0 / vv
    return _draw_gmrf(ab, (ystar - mv) / vv, rng)


def ucsv_fit_forecast(series, h=1, cfg: UcsvConfig = UcsvConfig(), seed=0) -> UcsvResult:
    """Fit UC-SV by Gibbs sampling and forecast with the posterior mean of the
    final trend value (the same for every horizon).

    With ``freeze_volatility`` the log variances stay at ``log_var_eta`` and
    ``log_var_eps`` and the model is a fixed-parameter local level.
    """
    y = _clean(series)
    if y.size < MIN_UCSV_OBS:
        raise ValueError(f"UC-SV needs at least {MIN_UCSV_OBS} observations, got {y.size}")
    rng = np.random.default_rng(seed)
    n = y.size
    h_eta = np.full(n, cfg.log_var_eta if cfg.freeze_volatility else math.log(max(np.var(np.diff(y)), 1e-6) / 2))
    h_eps = np.full(n - 1, cfg.log_var_eps if cfg.freeze_volatility else h_eta[0])
    tau1_mean = y[0]
    keep = range(cfg.burn_in, cfg.iterations, cfg.thin)
    taus, he, hs = [], [], []
    for it in range(cfg.iterations):
        # trend given volatilities
        obs_prec = np.exp(-h_eta)
        ab = _banded_rw_precision(n, np.exp(-h_eps), 1.0 / cfg.tau1_var)
        ab[1] += obs_prec
        b = obs_prec * y
        b[0] += tau1_mean / cfg.tau1_var
        tau = _draw_gmrf(ab, b, rng)
        if not cfg.freeze_volatility:
            h_eta = _draw_log_vol(y - tau, h_eta, cfg.gamma, cfg.h1_var, rng)
            h_eps = _draw_log_vol(np.diff(tau), h_eps, cfg.gamma, cfg.h1_var, rng)
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(h_eta)) and np.all(np.isfinite(h_eps))):
            raise FloatingPointError(f"UC-SV chain diverged at iteration {it}; try another seed")
        if it in keep:
            taus.append(tau)
            he.append(h_eta.copy())
            hs.append(h_eps.copy())
    tau_arr = np.array(taus)
    return UcsvResult(float(tau_arr[:, -1].mean()), tau_arr, np.array(he), np.array(hs), cfg)


def local_level_forecast(series, level_var: float, noise_var: float, tau1_mean: float | None = None,
                         tau1_var: float = 1000.0) -> float:
    """Filtered final level of a fixed-parameter local-level model."""
    from . import statespace as ss
    y = _clean(series)
    sys = ss.local_level_system(level_var, noise_var, a1=y[0] if tau1_mean is None else tau1_mean,
                                diffuse=False, P1=tau1_var)
    fr = ss.kalman_filter(sys, y[:, None])
    return float(fr.a_filt[-1, 0])
