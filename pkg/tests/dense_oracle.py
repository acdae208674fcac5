"""Brute-force joint-Gaussian computations for small state-space systems.

Everything is built from the stacked representation
``alpha = mu_a + A beta + u`` and ``y = mu_y + X beta + e`` where ``beta`` are
the diffuse initial states (flat prior) and ``(u, e)`` are jointly Gaussian.
No recursion is shared with the package's filter.
"""
from __future__ import annotations

import numpy as np
from scipy import stats


def stacked(sys, nT):
    m, n = sys.m, sys.n
    idx_d = np.flatnonzero(sys.diffuse)
    k = idx_d.size
    q = sys.Q.shape[0]
    # random inputs: stationary initial part (m), disturbances per period (q), noise per period (n)
    n_in = m + q * nT + n * nT
    Lp = _sqrt(sys.P1)
    # linear maps of each alpha_t on beta and on the inputs
    mu_a = np.zeros((nT, m))
    A = np.zeros((nT, m, k))
    B = np.zeros((nT, m, n_in))
    a = sys.a1.copy()
    a[idx_d] = 0.0
    S = np.zeros((m, k))
    S[idx_d, np.arange(k)] = 1.0
    Bcur = np.zeros((m, n_in))
    Bcur[:, :m] = Lp
    Acur = S.copy()
    qsd = np.sqrt(np.diag(sys.Q))
    for t in range(nT):
        mu_a[t], A[t], B[t] = a, Acur, Bcur
        a = sys.c + sys.T @ a
        Acur = sys.T @ Acur
        Bcur = sys.T @ Bcur
        Bcur[:, m + q * t:m + q * (t + 1)] += sys.R * qsd
    # diffuse states' a1 values are absorbed in beta
    hsd = np.sqrt(sys.H)
    mu_y = np.einsum("ij,tj->ti", sys.Z, mu_a) + sys.d
    X = np.einsum("ij,tjk->tik", sys.Z, A)
    E = np.einsum("ij,tjk->tik", sys.Z, B)
    for t in range(nT):
        E[t][:, m + q * nT + n * t:m + q * nT + n * (t + 1)] += np.diag(hsd)
    return mu_a, A, B, mu_y, X, E


def _sqrt(P):
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    return U * np.sqrt(np.clip(w, 0, None))


def conditional_loglik(sys, y):
    """log p(y_R | y_D) under a flat prior on the diffuse states, where D are
    the first scalar observations (time-major, NaN skipped) that identify them."""
    nT = y.shape[0]
    _, _, _, mu_y, X, E = stacked(sys, nT)
    obs = [(t, i) for t in range(nT) for i in range(sys.n) if np.isfinite(y[t, i])]
    yv = np.array([y[t, i] for t, i in obs])
    mv = np.array([mu_y[t, i] for t, i in obs])
    Xv = np.array([X[t, i] for t, i in obs]).reshape(len(obs), -1)
    Ev = np.array([E[t, i] for t, i in obs])
    k = Xv.shape[1]
    D, rank = [], 0
    for j in range(len(obs)):
        if rank == k:
            break
        r = np.linalg.matrix_rank(Xv[D + [j]], tol=1e-9) if k else 0
        if r > rank:
            D.append(j)
            rank = r
    R = [j for j in range(len(obs)) if j not in D]
    if k == 0:
        G = np.zeros((len(R), 0))
    else:
        G = Xv[R] @ np.linalg.inv(Xv[D])
    mean = mv[R] + (G @ (yv[D] - mv[D]) if k else 0.0)
    noise = Ev[R] - (G @ Ev[D] if k else 0.0)
    cov = noise @ noise.T
    return stats.multivariate_normal(mean, cov).logpdf(yv[R]) if R else 0.0


def conditional_states(sys, y):
    """Smoothed state means and covariances by universal kriging.

    The weights solve the bordered system [[S, X], [X', 0]] so a singular
    observation covariance (noise-free data) is handled.
    """
    nT = y.shape[0]
    mu_a, A, B, mu_y, X, E = stacked(sys, nT)
    obs = [(t, i) for t in range(nT) for i in range(sys.n) if np.isfinite(y[t, i])]
    yv = np.array([y[t, i] for t, i in obs])
    mv = np.array([mu_y[t, i] for t, i in obs])
    Xv = np.array([X[t, i] for t, i in obs]).reshape(len(obs), -1)
    Ev = np.array([E[t, i] for t, i in obs])
    m = sys.m
    Av = A.reshape(nT * m, -1)
    Bv = B.reshape(nT * m, -1)
    nobs, k = Xv.shape
    K = np.zeros((nobs + k, nobs + k))
    K[:nobs, :nobs] = Ev @ Ev.T
    K[:nobs, nobs:] = Xv
    K[nobs:, :nobs] = Xv.T
    rhs = np.vstack([Ev @ Bv.T, Av.T])
    W = np.linalg.lstsq(K, rhs, rcond=None)[0][:nobs]
    mean = mu_a.reshape(-1) + W.T @ (yv - mv)
    err = Bv - W.T @ Ev
    cov = err @ err.T
    blocks = np.array([cov[t * m:(t + 1) * m, t * m:(t + 1) * m] for t in range(nT)])
    return mean.reshape(nT, m), blocks


def stationary_autocov(T, Q, R, z, lags):
    """Autocovariances of z' alpha_t for a stable VAR(1) state, brute force."""
    from scipy import linalg
    P = linalg.solve_discrete_lyapunov(T, R @ Q @ R.T)
    out, Tk = [], np.eye(T.shape[0])
    for _ in range(lags + 1):
        out.append(z @ Tk @ P @ z)
        Tk = T @ Tk
    return np.array(out)
