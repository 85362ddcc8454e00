"""Numba twins of the hot chunk kernels in ``_engine_numpy``.

Per-path scalar loops compiled with ``@njit(nogil=True)``; model/observable
callbacks arrive as njit dispatchers with allocation-free signatures

    drift(t, x, out)         diffusion(t, x, out2)
    drift_jac(t, x, out2)    diffusion_jac(t, x, out3)   # out3[i, m, l]
    f(t, x) -> float         c(t, x) -> float
    f_grad(t, x, out)        c_grad(t, x, out)

Specialisations are compiled per model (closures over the parameter values),
so the first call per model pays JIT latency.  Semantics mirror
``_engine_numpy`` exactly: accumulate-before-move, freeze on divergence.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["base_kernel", "diffquot_kernel", "fkgrad_kernel", "zero_scalar_field"]


@njit(cache=True)
def zero_scalar_field(t, x):
    return 0.0


@njit(nogil=True)
def base_kernel(
    X, inc, dts, t0, tamed, qp, thr, use_obs, blow,
    disc, src, alive, died, drift, diffu, f_fn, c_fn,
):
    n, steps, d = inc.shape
    b = np.empty(d)
    S = np.empty((d, d))
    z = np.empty(d)
    blow2 = blow * blow
    for p in range(n):
        t = t0
        dacc = 0.0
        sacc = 0.0
        x = X[p]
        for k in range(steps):
            dt = dts[k]
            if use_obs:
                sacc += f_fn(t, x) * np.exp(-dacc) * dt
                dacc += c_fn(t, x) * dt
            move = True
            if tamed:
                xn = 0.0
                for i in range(d):
                    xn += x[i] * x[i]
                if np.sqrt(xn) > thr:
                    move = False
            if move:
                drift(t, x, b)
                diffu(t, x, S)
                zn = 0.0
                for i in range(d):
                    zi = b[i] * dt
                    for j in range(d):
                        zi += S[i, j] * inc[p, k, j]
                    z[i] = zi
                    zn += zi * zi
                fac = 1.0 / (1.0 + np.sqrt(zn) ** qp) if tamed else 1.0
                ok = True
                nx = 0.0
                for i in range(d):
                    xi = x[i] + fac * z[i]
                    z[i] = xi
                    nx += xi * xi
                    if not np.isfinite(xi):
                        ok = False
                if (not ok) or nx > blow2:
                    alive[p] = False
                    died[p] = k
                    break
                for i in range(d):
                    x[i] = z[i]
            t += dt
        disc[p] = dacc
        src[p] = sacc


@njit(nogil=True)
def diffquot_kernel(
    X, Xs, J_all, inc, dts, t0, r, kap, blow,
    sup, alive, died, drift, diffu, djac, sjac,
):
    n, steps, d = inc.shape
    b = np.empty(d)
    bs = np.empty(d)
    S = np.empty((d, d))
    Ss = np.empty((d, d))
    Jb = np.empty((d, d))
    Js = np.empty((d, d, d))
    A = np.empty((d, d))
    Jn = np.empty((d, d))
    xn = np.empty(d)
    xsn = np.empty(d)
    blow2 = blow * blow
    for p in range(n):
        t = t0
        x = X[p]
        xs = Xs[p]
        J = J_all[p]
        best = 0.0
        for k in range(steps):
            dt = dts[k]
            drift(t, x, b)
            diffu(t, x, S)
            drift(t, xs, bs)
            diffu(t, xs, Ss)
            djac(t, x, Jb)
            sjac(t, x, Js)
            for i in range(d):
                for l in range(d):
                    a = dt * Jb[i, l]
                    if i == l:
                        a += 1.0
                    for m in range(d):
                        a += inc[p, k, m] * Js[i, m, l]
                    A[i, l] = a
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += A[i, l] * J[l, j]
                    Jn[i, j] = acc
            ok = True
            nx = 0.0
            nxs = 0.0
            for i in range(d):
                vi = b[i] * dt
                vs = bs[i] * dt
                for j in range(d):
                    vi += S[i, j] * inc[p, k, j]
                    vs += Ss[i, j] * inc[p, k, j]
                xn[i] = x[i] + vi
                xsn[i] = xs[i] + vs
                nx += xn[i] * xn[i]
                nxs += xsn[i] * xsn[i]
                if not (np.isfinite(xn[i]) and np.isfinite(xsn[i])):
                    ok = False
            qn = 0.0
            for i in range(d):
                jk = 0.0
                for j in range(d):
                    jk += Jn[i, j] * kap[j]
                    if not np.isfinite(Jn[i, j]):
                        ok = False
                qi = (xsn[i] - xn[i]) / r - jk
                qn += qi * qi
            qn = np.sqrt(qn)
            if (not ok) or nx > blow2 or nxs > blow2 or not np.isfinite(qn):
                alive[p] = False
                died[p] = k
                break
            if qn > best:
                best = qn
            for i in range(d):
                x[i] = xn[i]
                xs[i] = xsn[i]
                for j in range(d):
                    J[i, j] = Jn[i, j]
            t += dt
        sup[p] = best


@njit(nogil=True)
def fkgrad_kernel(
    X, J, Dv, Acc, vsrc, gsrc, inc, dts, t0, blow,
    alive, died, drift, diffu, djac, sjac, f_fn, c_fn, fg_fn, cg_fn,
):
    n, steps, d = inc.shape
    b = np.empty(d)
    S = np.empty((d, d))
    Jb = np.empty((d, d))
    Js = np.empty((d, d, d))
    A = np.empty((d, d))
    Jn = np.empty((d, d))
    xn = np.empty(d)
    gf = np.empty(d)
    gc = np.empty(d)
    blow2 = blow * blow
    for p in range(n):
        t = t0
        x = X[p]
        Jp = J[p]
        Ap = Acc[p]
        gp = gsrc[p]
        for k in range(steps):
            dt = dts[k]
            fv = f_fn(t, x)
            cv = c_fn(t, x)
            fg_fn(t, x, gf)
            cg_fn(t, x, gc)
            e = np.exp(-Dv[p])
            vsrc[p] += fv * e * dt
            for j in range(d):
                gfj = 0.0
                gcj = 0.0
                for i in range(d):
                    gfj += gf[i] * Jp[i, j]
                    gcj += gc[i] * Jp[i, j]
                gp[j] += (gfj * e - fv * e * Ap[j]) * dt
                # A update must use the pre-step gradient row, order matters
                Ap[j] += gcj * dt
            Dv[p] += cv * dt
            drift(t, x, b)
            diffu(t, x, S)
            djac(t, x, Jb)
            sjac(t, x, Js)
            for i in range(d):
                for l in range(d):
                    a = dt * Jb[i, l]
                    if i == l:
                        a += 1.0
                    for m in range(d):
                        a += inc[p, k, m] * Js[i, m, l]
                    A[i, l] = a
            ok = True
            nx = 0.0
            for i in range(d):
                for j in range(d):
                    acc = 0.0
                    for l in range(d):
                        acc += A[i, l] * Jp[l, j]
                    Jn[i, j] = acc
                    if not np.isfinite(acc):
                        ok = False
                vi = b[i] * dt
                for j in range(d):
                    vi += S[i, j] * inc[p, k, j]
                xn[i] = x[i] + vi
                nx += xn[i] * xn[i]
                if not np.isfinite(xn[i]):
                    ok = False
            if (not ok) or nx > blow2:
                alive[p] = False
                died[p] = k
                break
            for i in range(d):
                x[i] = xn[i]
                for j in range(d):
                    Jp[i, j] = Jn[i, j]
            t += dt
