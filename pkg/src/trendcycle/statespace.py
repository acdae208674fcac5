"""Linear-Gaussian state-space systems for trend-cycle models.

State layout: every common cycle contributes ``(psi, psi*)`` followed by its
lag states ``psi(-1), psi(-2)`` as needed, then each idiosyncratic cycle
``(psi, psi*)``, then the random-walk trends.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

from . import _kalman
from .data import TimeSeriesPanel
from .spec import ModelSpec, ParameterVector, cycle_params, loading_name

DEFAULT_TOL = 1e-9
KAPPA = 1e7


class BoundsError(ValueError):
    """A parameter vector lies outside its admissible region."""


@dataclass(frozen=True)
class StateSpaceSystem:
    Z: np.ndarray
    d: np.ndarray
    T: np.ndarray
    c: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    labels: tuple
    diffuse: np.ndarray
    a1: np.ndarray
    P1: np.ndarray
    observables: tuple = ()
    H: np.ndarray | None = None
    RQR: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        H = np.zeros(self.Z.shape[0]) if self.H is None else np.asarray(self.H, dtype=float)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "RQR", self.R @ self.Q @ self.R.T)
        if not self.observables:
            object.__setattr__(self, "observables", tuple(f"y{i}" for i in range(self.Z.shape[0])))

    @property
    def m(self) -> int:
        return self.T.shape[0]

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def state(self, label: str) -> int:
        return self.labels.index(label)

    @property
    def P1_inf(self) -> np.ndarray:
        return np.diag(self.diffuse.astype(float))

    def with_initial(self, a1=None, P1=None, diffuse=None) -> "StateSpaceSystem":
        kw = dict(self.__dict__)
        kw.pop("RQR")
        if a1 is not None:
            kw["a1"] = np.asarray(a1, dtype=float)
        if P1 is not None:
            kw["P1"] = np.asarray(P1, dtype=float)
        if diffuse is not None:
            kw["diffuse"] = np.asarray(diffuse, dtype=bool)
        return StateSpaceSystem(**kw)

    def permuted(self, order) -> "StateSpaceSystem":
        """Same system with observables reordered."""
        order = list(order)
        kw = dict(self.__dict__)
        kw.pop("RQR")
        kw.update(Z=self.Z[order], d=self.d[order], H=self.H[order],
                  observables=tuple(self.observables[i] for i in order))
        return StateSpaceSystem(**kw)


def rotation_block(rho: float, lam: float) -> np.ndarray:
    c, s = math.cos(lam), math.sin(lam)
    return rho * np.array([[c, s], [-s, c]])


def state_labels(spec: ModelSpec) -> tuple:
    labels = []
    for c in spec.common_cycles:
        labels += [c.name, c.name + "*"] + [f"{c.name}(-{k})" for k in range(1, c.n_lag_states + 1)]
    for c in spec.cycles:
        if c.kind == "idiosyncratic":
            labels += [c.name, c.name + "*"]
    labels += [t.name for t in spec.trends]
    return tuple(labels)


def check_bounds(theta: ParameterVector) -> None:
    if not theta.in_bounds():
        lay = theta.layout
        single = [ParameterVector(lay, np.where(np.arange(len(lay)) == i, theta.values, _interior(lay)))
                  for i in range(len(lay))]
        bad = [n for n, pv in zip(lay.names, single) if not pv.in_bounds()]
        raise BoundsError(f"parameters out of bounds: {bad}")


def _interior(layout) -> np.ndarray:
    lo, hi = layout.lower, layout.upper
    out = np.zeros(len(lo))
    both = np.isfinite(lo) & np.isfinite(hi)
    below = np.isfinite(lo) & ~both
    out[both] = 0.5 * (lo[both] + hi[both])
    out[below] = lo[below] + 1.0
    return out


def assemble(spec: ModelSpec, theta: ParameterVector, jitter: float = 0.0,
             a1: np.ndarray | None = None) -> StateSpaceSystem:
    """Build the state-space matrices for ``spec`` at parameter values ``theta``.

    Trend loadings declared as ``inv_scale`` use the scale factors bound to
    ``spec`` (1.0 when unbound). ``jitter`` adds measurement noise of that
    variance to every observable and is meant for degenerate test systems.
    """
    check_bounds(theta)
    labels = state_labels(spec)
    pos = {lab: i for i, lab in enumerate(labels)}
    n, m = len(spec.observables), len(labels)
    obs = {o: i for i, o in enumerate(spec.observables)}
    n_trends = len(spec.trends)
    q = n_trends + 2 * len(spec.cycles)

    Z = np.zeros((n, m))
    T = np.zeros((m, m))
    c = np.zeros(m)
    R = np.zeros((m, q))
    Qd = np.zeros(q)
    diffuse = np.zeros(m, dtype=bool)
    P1 = np.zeros((m, m))

    col = 0
    for cyc in spec.cycles:
        rho, lam, var = cycle_params(spec, theta, cyc)
        i = pos[cyc.name]
        T[i:i + 2, i:i + 2] = rotation_block(rho, lam)
        for k in range(cyc.n_lag_states):
            T[i + 2 + k, i + k if k == 0 else i + 1 + k] = 1.0
        R[i, col] = R[i + 1, col + 1] = 1.0
        Qd[col:col + 2] = var
        col += 2
        size = 2 + cyc.n_lag_states
        P1[i:i + size, i:i + size] = cycle_stationary_cov(rho, lam, var, cyc.n_lag_states)
        if cyc.kind == "idiosyncratic":
            Z[obs[cyc.observable], i] = 1.0
    for ld in spec.loadings:
        idx = pos[ld.cycle] if ld.lag == 0 else pos[f"{ld.cycle}(-{ld.lag})"]
        val = ld.value if ld.fixed else theta[loading_name(ld.cycle, ld.observable, ld.lag)]
        Z[obs[ld.observable], idx] = val
    for tr in spec.trends:
        i = pos[tr.name]
        T[i, i] = 1.0
        diffuse[i] = True
        if tr.has_drift:
            c[i] = theta[f"drift[{tr.name}]"]
        R[i, col] = 1.0
        Qd[col] = theta[f"sigma2[{tr.name}]"]
        col += 1
        for o in tr.observables:
            Z[obs[o], i] = spec.trend_loading(tr, o)

    a1 = np.zeros(m) if a1 is None else np.asarray(a1, dtype=float)
    H = np.full(n, float(jitter))
    return StateSpaceSystem(Z, np.zeros(n), T, c, R, np.diag(Qd), labels, diffuse, a1, P1,
                            tuple(spec.observables), H)


def cycle_stationary_cov(rho: float, lam: float, var: float, n_lags: int = 0) -> np.ndarray:
    """Unconditional covariance of ``(psi_t, psi*_t, psi_{t-1}, ..., psi_{t-n_lags})``.

    Uses Cov(a_t, a_{t-k}) = rho^k R(k lam) var / (1 - rho^2) for the rotation R.
    """
    s = var / (1.0 - rho * rho)
    size = 2 + n_lags
    P = np.zeros((size, size))
    P[0, 0] = P[1, 1] = s
    # position of psi_{t-k} is 1 + k for k >= 1
    for k in range(1, n_lags + 1):
        rk = rho ** k
        P[0, 1 + k] = P[1 + k, 0] = rk * math.cos(k * lam) * s
        P[1, 1 + k] = P[1 + k, 1] = -rk * math.sin(k * lam) * s
        for j in range(1, n_lags + 1):
            g = abs(j - k)
            P[1 + k, 1 + j] = rho ** g * math.cos(g * lam) * s
    return P


def _stationary_cov(Tb: np.ndarray, Qb: np.ndarray) -> np.ndarray:
    if not np.any(Qb):
        return np.zeros_like(Qb)
    P = linalg.solve_discrete_lyapunov(Tb, Qb)
    return 0.5 * (P + P.T)


def initial_trend_means(spec: ModelSpec, panel: TimeSeriesPanel, sys: StateSpaceSystem) -> np.ndarray:
    """Initial mean vector placing the common inflation trend at the first
    observed headline inflation value (raw units); other states start at zero."""
    a1 = np.zeros(sys.m)
    for tr in spec.trends:
        if tr.is_common and tr.observables:
            anchor = tr.observables[0]
            if anchor in panel.ids:
                col = panel.raw[:, panel.ids.index(anchor)]
                ok = np.flatnonzero(np.isfinite(col))
                if ok.size:
                    a1[sys.state(tr.name)] = col[ok[0]]
    return a1


# ---------------------------------------------------------------------------
# filtering and smoothing

@dataclass(frozen=True)
class FilterResult:
    loglik: float
    n_diffuse: int
    a_pred: np.ndarray
    P_pred: np.ndarray
    Pinf_pred: np.ndarray
    v: np.ndarray
    F: np.ndarray
    Finf: np.ndarray
    flag: np.ndarray
    a_filt: np.ndarray
    P_filt: np.ndarray
    _M: tuple = field(repr=False, default=())


@dataclass(frozen=True)
class SmootherResult:
    mean: np.ndarray
    cov: np.ndarray | None
    draw: np.ndarray | None = None


def _obs_matrix(sys: StateSpaceSystem, data) -> np.ndarray:
    if isinstance(data, TimeSeriesPanel):
        if data.ids != sys.observables:
            data = data.select(sys.observables)
        y = data.values
    else:
        y = np.asarray(data, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
    if y.shape[1] != sys.n:
        raise ValueError(f"data has {y.shape[1]} columns, system has {sys.n} observables")
    return np.ascontiguousarray(y, dtype=float)


def _initial(sys: StateSpaceSystem, diffuse: str):
    P1i = sys.P1_inf
    if diffuse == "exact":
        return sys.P1.copy(), P1i, np.inf
    if diffuse == "approx":
        return sys.P1 + KAPPA * P1i, np.zeros_like(P1i), math.sqrt(KAPPA)
    raise ValueError(f"diffuse must be 'exact' or 'approx', got {diffuse!r}")


def _run_filter(sys, y, store, diffuse="exact", tol=DEFAULT_TOL):
    P1s, P1i, big = _initial(sys, diffuse)
    return _kalman.kalman_filter(
        y, np.ascontiguousarray(sys.Z), np.ascontiguousarray(sys.d), np.ascontiguousarray(sys.H),
        np.ascontiguousarray(sys.T), np.ascontiguousarray(sys.c), np.ascontiguousarray(sys.RQR),
        np.ascontiguousarray(sys.a1, dtype=float), np.ascontiguousarray(P1s),
        np.ascontiguousarray(P1i), tol, big, store,
    )


def loglik(sys: StateSpaceSystem, data, diffuse: str = "exact") -> float:
    """Gaussian log-likelihood of the data (NaN = missing).

    Observations that absorb diffuse initial variance are conditioned on
    rather than scored, so the value is the density of the remaining
    observations given those. Any numerical failure yields ``-inf``.
    """
    y = _obs_matrix(sys, data)
    try:
        out = _run_filter(sys, y, False, diffuse)
    except (FloatingPointError, ValueError, ZeroDivisionError):
        return -np.inf
    ll = out[0]
    return float(ll) if math.isfinite(ll) else -np.inf


def kalman_filter(sys: StateSpaceSystem, data, diffuse: str = "exact") -> FilterResult:
    y = _obs_matrix(sys, data)
    (ll, nd, ok, a_pred, Ps, Pi, v, Fs, Fi, Ms, Mi, flag, a_f, P_f) = _run_filter(sys, y, True, diffuse)
    return FilterResult(float(ll) if ok else -np.inf, int(nd), a_pred, Ps, Pi, v, Fs, Fi, flag,
                        a_f, P_f, (Ms, Mi))


def _smooth_from(sys, fr: FilterResult, want_cov: bool):
    Ms, Mi = fr._M
    return _kalman.kalman_smoother(
        np.ascontiguousarray(sys.Z), np.ascontiguousarray(sys.T), fr.a_pred, fr.P_pred,
        fr.Pinf_pred, fr.v, fr.F, fr.Finf, Ms, Mi, fr.flag, want_cov,
    )


def smooth(sys: StateSpaceSystem, data, cov: bool = True) -> SmootherResult:
    """Fixed-interval smoothed state means and covariances."""
    fr = kalman_filter(sys, data)
    if not math.isfinite(fr.loglik) and fr.n_diffuse == 0 and not np.any(fr.flag):
        raise FloatingPointError("filter failed")
    mean, V = _smooth_from(sys, fr, cov)
    return SmootherResult(mean, V if cov else None)


def _psd_sqrt(P: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    return U * np.sqrt(np.clip(w, 0.0, None))


def _draw_unconditional(sys: StateSpaceSystem, nT: int, rng: np.random.Generator,
                        diffuse_sd: float = 0.0):
    m, n = sys.m, sys.n
    Ls = _psd_sqrt(sys.P1)
    qsd = np.sqrt(np.clip(np.diag(sys.Q), 0.0, None))
    hsd = np.sqrt(np.clip(sys.H, 0.0, None))
    alpha = np.empty((nT, m))
    y = np.empty((nT, n))
    c, d = sys.c, sys.d
    a = sys.a1 + Ls @ rng.standard_normal(m)
    if diffuse_sd:
        a = a + diffuse_sd * sys.diffuse * rng.standard_normal(m)
    for t in range(nT):
        alpha[t] = a
        y[t] = d + sys.Z @ a + hsd * rng.standard_normal(n)
        a = c + sys.T @ a + sys.R @ (qsd * rng.standard_normal(qsd.size))
    return alpha, y


def _zero_constants(sys: StateSpaceSystem) -> StateSpaceSystem:
    kw = dict(sys.__dict__)
    kw.pop("RQR")
    kw.update(c=np.zeros(sys.m), d=np.zeros(sys.n), a1=np.zeros(sys.m))
    return StateSpaceSystem(**kw)


def simulation_smoother(sys: StateSpaceSystem, data, rng_seed) -> np.ndarray:
    """One draw of the state path from its distribution conditional on the data.

    Mean correction: simulate an unconditional path, then add the smoothed
    mean of the data-minus-simulation residual. With no measurement noise
    the draw reproduces the observed data exactly.
    """
    y = _obs_matrix(sys, data)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    alpha_plus, y_plus = _draw_unconditional(sys, y.shape[0], rng)
    zsys = _zero_constants(sys)
    fr = kalman_filter(zsys, y - y_plus)
    mean, _ = _smooth_from(zsys, fr, False)
    return alpha_plus + mean


def simulate(sys: StateSpaceSystem, T: int, rng_seed, diffuse_sd: float = 0.0,
             start="2000Q1", scale_factors=None, return_states: bool = False):
    """Simulate ``T`` periods from ``sys`` and return a synthetic panel.

    Diffuse states start at ``a1`` plus ``diffuse_sd`` times standard normal
    noise, stationary states from their unconditional distribution. The panel
    values equal the simulated (standardised) observations; ``raw`` holds them
    times ``scale_factors`` (default ones).
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    alpha, y = _draw_unconditional(sys, T, rng, diffuse_sd)
    scales = np.ones(sys.n) if scale_factors is None else np.asarray(scale_factors, dtype=float)
    dates = pd.period_range(pd.Period(start, freq="Q"), periods=T, freq="Q")
    panel = TimeSeriesPanel(sys.observables, dates, y * scales, scales, synthetic=True)
    return (panel, alpha) if return_states else panel


def forecast_states(sys: StateSpaceSystem, a: np.ndarray, h: int) -> np.ndarray:
    """Iterate the transition equation ``h`` steps from state mean ``a``.

    Returns an ``(h, m)`` array of predicted state means.
    """
    out = np.empty((h, sys.m))
    for k in range(h):
        a = sys.c + sys.T @ a
        out[k] = a
    return out


def stationary_autocovariance(sys: StateSpaceSystem, lags: int) -> np.ndarray:
    """Autocovariances ``Z T^k P1 Z'`` for ``k = 0..lags`` of a system started
    in its stationary distribution. Shape ``(lags + 1, n, n)``."""
    out = np.empty((lags + 1, sys.n, sys.n))
    TkP = sys.P1.copy()
    for k in range(lags + 1):
        out[k] = sys.Z @ TkP @ sys.Z.T
        TkP = sys.T @ TkP
    return out


def cycle_system(rho: float, lam: float, var: float, aux_var: float | None = None) -> StateSpaceSystem:
    """Single stochastic cycle observed without noise through its first state.

    ``aux_var`` sets the variance of the auxiliary disturbance separately
    (default: equal to ``var``); zero gives the pure AR(2) special case.
    """
    aux = var if aux_var is None else aux_var
    T = rotation_block(rho, lam)
    Q = np.diag([var, aux])
    P1 = _stationary_cov(T, Q)
    return StateSpaceSystem(np.array([[1.0, 0.0]]), np.zeros(1), T, np.zeros(2), np.eye(2), Q,
                            ("psi", "psi*"), np.zeros(2, dtype=bool), np.zeros(2), P1, ("psi",))


def local_level_system(level_var: float, noise_var: float, a1: float = 0.0,
                       diffuse: bool = True, P1: float = 0.0) -> StateSpaceSystem:
    """Random-walk level plus white noise, univariate."""
    return StateSpaceSystem(np.ones((1, 1)), np.zeros(1), np.ones((1, 1)), np.zeros(1), np.ones((1, 1)),
                            np.array([[level_var]]), ("level",), np.array([diffuse]), np.array([a1]),
                            np.array([[P1]]), ("y",), np.array([noise_var]))
