"""Pure-numpy chunk kernels: step loop in Python, vectorised over paths.

Semantics are shared with the numba twins in ``_engine_numba``; any change
here must be mirrored there.  All kernels take standard increments already
scaled to N(0, dt) per step, advance left-endpoint accumulators before the
position update, and freeze paths (state and accumulators) once they leave
the divergence radius or turn non-finite.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "base_chunk",
    "var_chunk",
    "diffquot_chunk",
    "fkgrad_chunk",
]


def _norms(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ni,ni->n", v, v))


def base_chunk(model, scheme, X, inc, dts, t0, qp, thr, obs, blow):
    """Tamed or classical explicit scheme over a chunk of paths.

    X is (n, d) and is consumed (copied by caller); returns
    (x, disc, src, alive, died_step).
    """
    n, steps, d = inc.shape
    disc = np.zeros(n)
    src = np.zeros(n)
    alive = np.ones(n, bool)
    died = np.full(n, -1, np.int64)
    tamed = scheme == "tamed"
    t = t0
    for k in range(steps):
        dt = float(dts[k])
        if obs is not None:
            cv = np.asarray(obs.c(t, X), float)
            fv = np.asarray(obs.f(t, X), float)
            src = np.where(alive, src + fv * np.exp(-disc) * dt, src)
            disc = np.where(alive, disc + cv * dt, disc)
        with np.errstate(over="ignore", invalid="ignore"):
            b = np.asarray(model.drift(t, X), float)
            S = np.asarray(model.diffusion(t, X), float)
            z = b * dt + np.einsum("nij,nj->ni", S, inc[:, k, :])
            if tamed:
                zn = _norms(z)
                fac = np.where(_norms(X) <= thr, 1.0 / (1.0 + zn**qp), 0.0)
                z = z * fac[:, None]
            x_new = X + z
            sq = np.einsum("ni,ni->n", x_new, x_new)
            bad = ~np.isfinite(x_new).all(axis=1) | (sq > blow * blow)
        newly = alive & bad
        died[newly] = k
        alive &= ~bad
        X = np.where(alive[:, None], x_new, X)
        t += dt
    return X, disc, src, alive, died


def _one_step_matrix(model, t, X, dW, dt):
    """A = I + dt * Db + sum_m dW_m * Dsigma^(m), the one-step EM Jacobian."""
    n, d = X.shape
    Jb = np.asarray(model.drift_jacobian(t, X), float)
    Js = np.asarray(model.diffusion_jacobian(t, X), float)
    return np.eye(d) + dt * Jb + np.einsum("niml,nm->nil", Js, dW)


def var_chunk(model, X, inc, dts, t0, order, blow, on_step=None):
    """Joint Euler system for (x, J[, H]) with J the first variation.

    J is advanced as J <- A J with the exact one-step Jacobian A, so the
    chain property over the grid holds by construction.  ``on_step`` is an
    optional hook ``(k, t_after, X, J, H, alive)`` used by the sup/window
    trackers.  Returns (X, J, H, alive, died).
    """
    n, steps, d = inc.shape
    J = np.tile(np.eye(d), (n, 1, 1))
    H = np.zeros((n, d, d, d)) if order >= 2 else None
    alive = np.ones(n, bool)
    died = np.full(n, -1, np.int64)
    t = t0
    for k in range(steps):
        dt = float(dts[k])
        dW = inc[:, k, :]
        with np.errstate(over="ignore", invalid="ignore"):
            A = _one_step_matrix(model, t, X, dW, dt)
            J_new = A @ J
            if order >= 2:
                Hb = np.asarray(model.drift_hessian(t, X), float)
                Hs = np.asarray(model.diffusion_hessian(t, X), float)
                sec = dt * np.einsum("napq,npi,nqj->naij", Hb, J, J) + np.einsum(
                    "nampq,nm,npi,nqj->naij", Hs, dW, J, J
                )
                H_new = np.einsum("nab,nbij->naij", A, H) + sec
            b = np.asarray(model.drift(t, X), float)
            S = np.asarray(model.diffusion(t, X), float)
            x_new = X + b * dt + np.einsum("nij,nj->ni", S, dW)
            sq = np.einsum("ni,ni->n", x_new, x_new)
            bad = (
                ~np.isfinite(x_new).all(axis=1)
                | (sq > blow * blow)
                | ~np.isfinite(J_new.reshape(n, -1)).all(axis=1)
            )
            if order >= 2:
                bad |= ~np.isfinite(H_new.reshape(n, -1)).all(axis=1)
        newly = alive & bad
        died[newly] = k
        alive &= ~bad
        X = np.where(alive[:, None], x_new, X)
        J = np.where(alive[:, None, None], J_new, J)
        if order >= 2:
            H = np.where(alive[:, None, None, None], H_new, H)
        t += dt
        if on_step is not None:
            on_step(k, t, X, J, H, alive)
    return X, J, H, alive, died


def diffquot_chunk(model, x0, kappa, r, inc, dts, t0, blow):
    """Running sup of |(X^{x+r k} - X^x)/r - J k| along coupled EM paths."""
    n, steps, d = inc.shape
    X = np.tile(np.asarray(x0, float), (n, 1))
    Xs = X + r * kappa
    J = np.tile(np.eye(d), (n, 1, 1))
    sup = np.zeros(n)
    alive = np.ones(n, bool)
    died = np.full(n, -1, np.int64)
    t = t0
    for k in range(steps):
        dt = float(dts[k])
        dW = inc[:, k, :]
        with np.errstate(over="ignore", invalid="ignore"):
            A = _one_step_matrix(model, t, X, dW, dt)
            J_new = A @ J
            b = np.asarray(model.drift(t, X), float)
            S = np.asarray(model.diffusion(t, X), float)
            x_new = X + b * dt + np.einsum("nij,nj->ni", S, dW)
            bs = np.asarray(model.drift(t, Xs), float)
            Ss = np.asarray(model.diffusion(t, Xs), float)
            xs_new = Xs + bs * dt + np.einsum("nij,nj->ni", Ss, dW)
            q = (xs_new - x_new) / r - np.einsum("nij,j->ni", J_new, kappa)
            qn = _norms(q)
            bad = (
                ~np.isfinite(x_new).all(axis=1)
                | ~np.isfinite(xs_new).all(axis=1)
                | ~np.isfinite(J_new.reshape(n, -1)).all(axis=1)
                | (np.einsum("ni,ni->n", x_new, x_new) > blow * blow)
                | (np.einsum("ni,ni->n", xs_new, xs_new) > blow * blow)
                | ~np.isfinite(qn)
            )
        newly = alive & bad
        died[newly] = k
        alive &= ~bad
        X = np.where(alive[:, None], x_new, X)
        Xs = np.where(alive[:, None], xs_new, Xs)
        J = np.where(alive[:, None, None], J_new, J)
        sup = np.where(alive, np.maximum(sup, qn), sup)
        t += dt
    return sup, alive, died


def fkgrad_chunk(model, obs, x0, inc, dts, t0, blow):
    """Pathwise differentiation state for the Feynman-Kac gradient.

    Advances, per path: position x, first variation J, discount D, the
    discount gradient A = int grad_c^T J, the source value int f e^{-D} and
    its gradient int (grad_f^T J) e^{-D} - f e^{-D} A.  Terminal payoff
    terms are composed by the caller.  Returns
    (X, J, D, A, vsrc, gsrc, alive, died).
    """
    n, steps, d = inc.shape
    X = np.tile(np.asarray(x0, float), (n, 1))
    J = np.tile(np.eye(d), (n, 1, 1))
    D = np.zeros(n)
    Acc = np.zeros((n, d))
    vsrc = np.zeros(n)
    gsrc = np.zeros((n, d))
    alive = np.ones(n, bool)
    died = np.full(n, -1, np.int64)
    t = t0
    for k in range(steps):
        dt = float(dts[k])
        dW = inc[:, k, :]
        fv = np.asarray(obs.f(t, X), float)
        cv = np.asarray(obs.c(t, X), float)
        gf = np.asarray(obs.f_grad(t, X), float)
        gc = np.asarray(obs.c_grad(t, X), float)
        e = np.exp(-D)
        vsrc = np.where(alive, vsrc + fv * e * dt, vsrc)
        dgrad = (np.einsum("ni,nij->nj", gf, J) * e[:, None] - (fv * e)[:, None] * Acc) * dt
        gsrc = np.where(alive[:, None], gsrc + dgrad, gsrc)
        Acc = np.where(alive[:, None], Acc + np.einsum("ni,nij->nj", gc, J) * dt, Acc)
        D = np.where(alive, D + cv * dt, D)
        with np.errstate(over="ignore", invalid="ignore"):
            A = _one_step_matrix(model, t, X, dW, dt)
            J_new = A @ J
            b = np.asarray(model.drift(t, X), float)
            S = np.asarray(model.diffusion(t, X), float)
            x_new = X + b * dt + np.einsum("nij,nj->ni", S, dW)
            bad = (
                ~np.isfinite(x_new).all(axis=1)
                | ~np.isfinite(J_new.reshape(n, -1)).all(axis=1)
                | (np.einsum("ni,ni->n", x_new, x_new) > blow * blow)
            )
        newly = alive & bad
        died[newly] = k
        alive &= ~bad
        X = np.where(alive[:, None], x_new, X)
        J = np.where(alive[:, None, None], J_new, J)
        t += dt
    return X, J, D, Acc, vsrc, gsrc, alive, died
