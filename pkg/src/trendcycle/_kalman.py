"""Numba kernels for the univariate (observation-by-observation) Kalman filter
and smoother with exact diffuse initialisation.

Conventions: ``y[t] = d + Z a[t] + e[t]`` with ``e ~ N(0, diag(h))`` and
``a[t+1] = c + T a[t] + R eta[t]``. The initial state has mean ``a1`` and
covariance ``P1s + kappa * P1i`` with ``kappa -> inf``. NaN marks a missing
observation. Step flags: 0 skipped, 1 diffuse, 2 regular.
"""
import math

import numpy as np
from numba import njit

LOG2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def csr(A):
    """Row-compressed sparsity pattern of a dense matrix."""
    m, k = A.shape
    indptr = np.zeros(m + 1, dtype=np.int64)
    nnz = 0
    for i in range(m):
        for j in range(k):
            if A[i, j] != 0.0:
                nnz += 1
        indptr[i + 1] = nnz
    idx = np.empty(nnz, dtype=np.int64)
    val = np.empty(nnz)
    p = 0
    for i in range(m):
        for j in range(k):
            if A[i, j] != 0.0:
                idx[p] = j
                val[p] = A[i, j]
                p += 1
    return indptr, idx, val


@njit(cache=True)
def _tpt(Tp, Ti, Tv, P, tmp, out):
    # out = T P T'
    m = P.shape[0]
    for k in range(m):
        for a in range(m):
            tmp[k, a] = 0.0
        for p in range(Tp[k], Tp[k + 1]):
            j = Ti[p]
            v = Tv[p]
            for a in range(m):
                tmp[k, a] += v * P[j, a]
    for a in range(m):
        for k in range(a, m):
            s = 0.0
            for p in range(Tp[k], Tp[k + 1]):
                s += tmp[a, Ti[p]] * Tv[p]
            out[a, k] = s
            out[k, a] = s


@njit(cache=True)
def _ta(Tp, Ti, Tv, a, c, out):
    m = a.shape[0]
    for k in range(m):
        s = c[k]
        for p in range(Tp[k], Tp[k + 1]):
            s += Tv[p] * a[Ti[p]]
        out[k] = s


@njit(cache=True)
def _tta(Tp, Ti, Tv, r, out):
    # out = T' r
    m = r.shape[0]
    for j in range(m):
        out[j] = 0.0
    for k in range(m):
        rk = r[k]
        if rk != 0.0:
            for p in range(Tp[k], Tp[k + 1]):
                out[Ti[p]] += Tv[p] * rk


@njit(cache=True)
def _ttnt(Tp, Ti, Tv, N, tmp, out):
    # out = T' N T
    m = N.shape[0]
    for a in range(m):
        for b in range(m):
            tmp[a, b] = 0.0
    # tmp = T' N  -> tmp[j, b] = sum_k T[k, j] N[k, b]
    for k in range(m):
        for p in range(Tp[k], Tp[k + 1]):
            j = Ti[p]
            v = Tv[p]
            for b in range(m):
                tmp[j, b] += v * N[k, b]
    # out = tmp T -> out[a, j] = sum_k tmp[a, k] T[k, j]
    for a in range(m):
        for b in range(m):
            out[a, b] = 0.0
    for k in range(m):
        for p in range(Tp[k], Tp[k + 1]):
            j = Ti[p]
            v = Tv[p]
            for a in range(m):
                out[a, j] += tmp[a, k] * v
    for a in range(m):
        for b in range(a + 1, m):
            s = 0.5 * (out[a, b] + out[b, a])
            out[a, b] = s
            out[b, a] = s


@njit(cache=True)
def kalman_filter(y, Z, d, h, T, c, RQR, a1, P1s, P1i, tol, big, store):
    """Run the filter.

    Returns ``(loglik, n_diffuse, ok, a_pred, Ps_pred, Pi_pred, v, Fs, Fi, Ms, Mi,
    flag, a_filt, P_filt)``. When ``store`` is False the per-time arrays have a
    leading dimension of one and hold the last step only.
    """
    nT, n = y.shape
    m = T.shape[0]
    Tp, Ti, Tv = csr(T)
    Zp, Zi, Zv = csr(Z)
    S = nT if store else 1

    a_pred = np.zeros((S, m))
    Ps_pred = np.zeros((S, m, m))
    Pi_pred = np.zeros((S, m, m))
    a_filt = np.zeros((S, m))
    P_filt = np.zeros((S, m, m))
    vv = np.zeros((S, n))
    Fs = np.zeros((S, n))
    Fi = np.zeros((S, n))
    Ms = np.zeros((S, n, m))
    Mi = np.zeros((S, n, m))
    flag = np.zeros((S, n), dtype=np.int64)

    a = a1.copy()
    Ps = P1s.copy()
    Pi = P1i.copy()
    diffuse = False
    for i in range(m):
        for j in range(m):
            if Pi[i, j] != 0.0:
                diffuse = True
    ms = np.zeros(m)
    mi = np.zeros(m)
    tmp = np.zeros((m, m))
    anew = np.zeros(m)
    loglik = 0.0
    n_diffuse = 0

    for t in range(nT):
        s = t if store else 0
        a_pred[s] = a
        Ps_pred[s] = Ps
        Pi_pred[s] = Pi
        for i in range(n):
            flag[s, i] = 0
            yi = y[t, i]
            if math.isnan(yi):
                continue
            # innovation and M = P z
            v = yi - d[i]
            for p in range(Zp[i], Zp[i + 1]):
                v -= Zv[p] * a[Zi[p]]
            fs = h[i]
            fi = 0.0
            # P symmetric: M = P z accumulated from rows of P
            for r in range(m):
                ms[r] = 0.0
            for p in range(Zp[i], Zp[i + 1]):
                zj = Zv[p]
                row = Zi[p]
                for r in range(m):
                    ms[r] += zj * Ps[row, r]
            for p in range(Zp[i], Zp[i + 1]):
                fs += Zv[p] * ms[Zi[p]]
            if diffuse:
                for r in range(m):
                    acc = 0.0
                    for p in range(Zp[i], Zp[i + 1]):
                        acc += Pi[r, Zi[p]] * Zv[p]
                    mi[r] = acc
                for p in range(Zp[i], Zp[i + 1]):
                    fi += Zv[p] * mi[Zi[p]]
            if not (math.isfinite(v) and math.isfinite(fs) and math.isfinite(fi)):
                return (-np.inf, n_diffuse, False, a_pred, Ps_pred, Pi_pred, vv, Fs, Fi, Ms, Mi,
                        flag, a_filt, P_filt)
            vv[s, i] = v
            Fs[s, i] = fs
            Fi[s, i] = fi
            if diffuse and fi > tol:
                flag[s, i] = 1
                n_diffuse += 1
                for r in range(m):
                    Ms[s, i, r] = ms[r]
                    Mi[s, i, r] = mi[r]
                # K0 = mi / fi
                for r in range(m):
                    a[r] += mi[r] / fi * v
                for r in range(m):
                    k0r = mi[r] / fi
                    for q in range(r, m):
                        k0q = mi[q] / fi
                        val = Ps[r, q] + k0r * k0q * fs - k0r * ms[q] - ms[r] * k0q
                        Ps[r, q] = val
                        Ps[q, r] = val
                        vi = Pi[r, q] - mi[r] * mi[q] / fi
                        Pi[r, q] = vi
                        Pi[q, r] = vi
            elif fs > tol:
                flag[s, i] = 2
                for r in range(m):
                    Ms[s, i, r] = ms[r]
                if fs > big:
                    n_diffuse += 1
                else:
                    loglik -= 0.5 * (LOG2PI + math.log(fs) + v * v / fs)
                for r in range(m):
                    a[r] += ms[r] / fs * v
                for r in range(m):
                    kr = ms[r] / fs
                    if kr != 0.0:
                        for q in range(m):
                            Ps[r, q] -= kr * ms[q]
        a_filt[s] = a
        P_filt[s] = Ps
        # time update
        _ta(Tp, Ti, Tv, a, c, anew)
        a[:] = anew
        _tpt(Tp, Ti, Tv, Ps, tmp, Ps)
        for r in range(m):
            for q in range(m):
                Ps[r, q] += RQR[r, q]
        if diffuse:
            _tpt(Tp, Ti, Tv, Pi, tmp, Pi)
            mx = 0.0
            for r in range(m):
                for q in range(m):
                    if abs(Pi[r, q]) > mx:
                        mx = abs(Pi[r, q])
            if mx < tol:
                diffuse = False
                Pi[:, :] = 0.0
    if not math.isfinite(loglik):
        return (-np.inf, n_diffuse, False, a_pred, Ps_pred, Pi_pred, vv, Fs, Fi, Ms, Mi,
                flag, a_filt, P_filt)
    return (loglik, n_diffuse, True, a_pred, Ps_pred, Pi_pred, vv, Fs, Fi, Ms, Mi,
            flag, a_filt, P_filt)


@njit(cache=True)
def _sym_update_LNL(N, z, K, scratch):
    # N <- L' N L with L = I - K z'
    m = N.shape[0]
    for r in range(m):
        acc = 0.0
        for q in range(m):
            acc += N[r, q] * K[q]
        scratch[r] = acc
    kw = 0.0
    for r in range(m):
        kw += K[r] * scratch[r]
    for r in range(m):
        for q in range(m):
            N[r, q] += -z[r] * scratch[q] - scratch[r] * z[q] + kw * z[r] * z[q]


@njit(cache=True)
def kalman_smoother(Z, T, a_pred, Ps_pred, Pi_pred, v, Fs, Fi, Ms, Mi, flag, want_cov):
    """Backward pass for smoothed means (and covariances if ``want_cov``)."""
    nT, n = v.shape
    m = T.shape[0]
    Tp, Ti, Tv = csr(T)
    ahat = np.zeros((nT, m))
    V = np.zeros((nT if want_cov else 1, m, m))
    r0 = np.zeros(m)
    r1 = np.zeros(m)
    N0 = np.zeros((m, m))
    N1 = np.zeros((m, m))
    N2 = np.zeros((m, m))
    tmpv = np.zeros(m)
    tmpm = np.zeros((m, m))
    K = np.zeros(m)
    K0 = np.zeros(m)
    K1 = np.zeros(m)
    u0 = np.zeros(m)
    u1 = np.zeros(m)
    w = np.zeros(m)
    z = np.zeros(m)
    for t in range(nT - 1, -1, -1):
        for i in range(n - 1, -1, -1):
            f = flag[t, i]
            if f == 0:
                continue
            for r in range(m):
                z[r] = Z[i, r]
            vi = v[t, i]
            if f == 2:
                fs = Fs[t, i]
                for r in range(m):
                    K[r] = Ms[t, i, r] / fs
                kr0 = 0.0
                kr1 = 0.0
                for r in range(m):
                    kr0 += K[r] * r0[r]
                    kr1 += K[r] * r1[r]
                for r in range(m):
                    r0[r] += z[r] * (vi / fs - kr0)
                    r1[r] -= z[r] * kr1
                if want_cov:
                    _sym_update_LNL(N0, z, K, w)
                    for r in range(m):
                        for q in range(m):
                            N0[r, q] += z[r] * z[q] / fs
                    _sym_update_LNL(N1, z, K, w)
                    _sym_update_LNL(N2, z, K, w)
            else:
                fi = Fi[t, i]
                fs = Fs[t, i]
                for r in range(m):
                    K0[r] = Mi[t, i, r] / fi
                    K1[r] = (Ms[t, i, r] - K0[r] * fs) / fi
                k0r0 = 0.0
                k0r1 = 0.0
                k1r0 = 0.0
                for r in range(m):
                    k0r0 += K0[r] * r0[r]
                    k0r1 += K0[r] * r1[r]
                    k1r0 += K1[r] * r0[r]
                for r in range(m):
                    r1[r] += z[r] * (vi / fi - k0r1 - k1r0)
                    r0[r] -= z[r] * k0r0
                if want_cov:
                    # products with old N0, N1
                    for r in range(m):
                        a0 = 0.0
                        a1 = 0.0
                        for q in range(m):
                            a0 += N0[r, q] * K1[q]
                            a1 += N1[r, q] * K1[q]
                        u0[r] = a0
                        u1[r] = a1
                    k0u0 = 0.0
                    k0u1 = 0.0
                    k1u0 = 0.0
                    for r in range(m):
                        k0u0 += K0[r] * u0[r]
                        k0u1 += K0[r] * u1[r]
                        k1u0 += K1[r] * u0[r]
                    # cross terms need L0-transformed u vectors: L0' N L1 = -(L0' u) z'
                    # L0' u = u - z (K0' u)
                    # N2 <- L0'N2L0 + [L0'N1L1 + L1'N1L0] + L1'N0L1 - zz' fs/fi^2
                    _sym_update_LNL(N2, z, K0, w)
                    for r in range(m):
                        x1 = u1[r] - z[r] * k0u1
                        for q in range(m):
                            x1q = u1[q] - z[q] * k0u1
                            N2[r, q] += -x1 * z[q] - z[r] * x1q + (k1u0 - fs / (fi * fi)) * z[r] * z[q]
                    # N1 <- L0'N1L0 + L0'N0L1 + L1'N0L0 + zz'/fi
                    _sym_update_LNL(N1, z, K0, w)
                    for r in range(m):
                        x0 = u0[r] - z[r] * k0u0
                        for q in range(m):
                            x0q = u0[q] - z[q] * k0u0
                            N1[r, q] += -x0 * z[q] - z[r] * x0q + z[r] * z[q] / fi
                    # N0 <- L0'N0L0
                    _sym_update_LNL(N0, z, K0, w)
        # smoothed state at t
        for r in range(m):
            acc = a_pred[t, r]
            for q in range(m):
                acc += Ps_pred[t, r, q] * r0[q] + Pi_pred[t, r, q] * r1[q]
            ahat[t, r] = acc
        if want_cov:
            Ps = Ps_pred[t]
            Pi = Pi_pred[t]
            A = Ps @ N0 @ Ps
            B = Pi @ N1 @ Ps
            C = Pi @ N2 @ Pi
            for r in range(m):
                for q in range(m):
                    V[t, r, q] = Ps[r, q] - A[r, q] - B[r, q] - B[q, r] - C[r, q]
            for r in range(m):
                for q in range(r + 1, m):
                    s = 0.5 * (V[t, r, q] + V[t, q, r])
                    V[t, r, q] = s
                    V[t, q, r] = s
        if t > 0:
            _tta(Tp, Ti, Tv, r0, tmpv)
            r0[:] = tmpv
            _tta(Tp, Ti, Tv, r1, tmpv)
            r1[:] = tmpv
            if want_cov:
                _ttnt(Tp, Ti, Tv, N0, tmpm, N0)
                _ttnt(Tp, Ti, Tv, N1, tmpm, N1)
                _ttnt(Tp, Ti, Tv, N2, tmpm, N2)
    return ahat, V
