"""Derivative-in-initial-condition processes and their moment diagnostics.

The first variation J solves the linearisation of the SDE along a path,

    dJ = (Db) J dt + sum_m (Dsigma^(m)) J dW_m,      J_0 = I,

and the second variation H adds coefficient-Hessian terms contracting J x J.
The joint system (x, J[, H]) is integrated with plain Euler-Maruyama, not
the tamed scheme: the derivative processes belong to the exact flow and
taming them has no mathematical sanction.  Moment probes therefore use
moderate horizons and report divergence counts.

J is advanced by multiplying the exact one-step Jacobian of the Euler map,
so the product-of-step-Jacobians chain property holds on the grid by
construction.  All sups over continuous time are approximated by grid sups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _engine_numpy as _np_kern
from . import engine
from .convergence import fit_slope
from .model_core import SdeModel
from .randomness import SeedSpec, standard_normals

__all__ = [
    "VariationalState",
    "variation_step",
    "difference_quotient_error",
    "sup_moment",
    "SupMomentResult",
    "holder_in_time_probe",
    "HolderResult",
    "variational_terminal",
]


@dataclass(frozen=True)
class VariationalState:
    """Path state with first (and optionally second) variation.

    J columns are the flow derivatives along the coordinate directions;
    H[:, i, j] is the second derivative in directions (e_i, e_j).  At t = 0,
    J = I and H = 0.
    """

    t: float
    x: np.ndarray
    J: np.ndarray
    H: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, x0: np.ndarray, order: int = 1, t0: float = 0.0):
        x0 = np.asarray(x0, float)
        d = x0.shape[-1]
        H = np.zeros((d, d, d)) if order >= 2 else None
        return cls(t=t0, x=x0.copy(), J=np.eye(d), H=H)


def variation_step(
    state: VariationalState,
    dW: np.ndarray,
    model: SdeModel,
    dt: float,
    order: int = 1,
) -> VariationalState:
    """One joint Euler step of (x, J[, H]) driven by the same increment."""
    if order >= 2 and model.smoothness < 2:
        raise ValueError("order-2 variation requires model hessian callbacks")
    if order >= 2 and state.H is None:
        raise ValueError("state carries no H but order=2 was requested")
    xb = state.x[None, :]
    t = state.t
    A = _np_kern._one_step_matrix(model, t, xb, dW[None, :], dt)[0]
    J_new = A @ state.J
    H_new = None
    if order >= 2:
        Hb = np.asarray(model.drift_hessian(t, xb), float)[0]
        Hs = np.asarray(model.diffusion_hessian(t, xb), float)[0]
        sec = dt * np.einsum("apq,pi,qj->aij", Hb, state.J, state.J) + np.einsum(
            "ampq,m,pi,qj->aij", Hs, dW, state.J, state.J
        )
        H_new = np.einsum("ab,bij->aij", A, state.H) + sec
    b = np.asarray(model.drift(t, xb), float)[0]
    S = np.asarray(model.diffusion(t, xb), float)[0]
    x_new = state.x + b * dt + S @ dW
    return VariationalState(t=t + dt, x=x_new, J=J_new, H=H_new)


def _ensure_unit(kappa: np.ndarray) -> np.ndarray:
    kappa = np.asarray(kappa, float)
    nrm = np.linalg.norm(kappa)
    if not math.isclose(nrm, 1.0, rel_tol=1e-10):
        raise ValueError(f"direction must be a unit vector, |kappa|={nrm}")
    return kappa


def difference_quotient_error(
    model: SdeModel,
    x: np.ndarray,
    kappa: np.ndarray,
    r_list: Sequence[float],
    T: float,
    delta: float,
    N: int,
    seed: int = 0,
    threads: Optional[int] = None,
    backend: Optional[str] = None,
):
    """Monte Carlo estimate of E sup_t |(X^{x+rk} - X^x)/r - J k| per r.

    All three processes (shifted path, base path, first variation) share the
    same Brownian increments.  Returns rows (r, estimate, ci_half_width,
    diverged) sorted by decreasing r; the estimate decreases toward 0 with r
    for smooth coefficients.
    """
    kappa = _ensure_unit(kappa)
    x = np.asarray(x, float)
    dts = engine.step_sizes(T, delta)
    steps = len(dts)
    dim = model.dim
    be = engine.pick_backend(model, backend, need=("jac",))
    rows = []
    for r in sorted((float(v) for v in r_list), reverse=True):
        def worker(start: int, count: int) -> dict:
            z = engine.chunk_normals(seed, start, count, steps, dim)
            inc = engine.scale_increments(z, dts)
            if be == "numba":
                from . import _engine_numba as nb

                X = np.tile(x, (count, 1))
                Xs = X + r * kappa
                J = np.tile(np.eye(dim), (count, 1, 1))
                sup = np.zeros(count)
                alive = np.ones(count, np.bool_)
                died = np.full(count, -1, np.int64)
                ops = model.numba_ops
                nb.diffquot_kernel(
                    X, Xs, J, inc, dts, 0.0, r, kappa, engine.BLOW_RADIUS,
                    sup, alive, died, ops.drift, ops.diffusion,
                    ops.drift_jac, ops.diffusion_jac,
                )
            else:
                sup, alive, died = _np_kern.diffquot_chunk(
                    model, x, kappa, r, inc, dts, 0.0, engine.BLOW_RADIUS
                )
            return {"sup": sup, "alive": alive}

        out = engine.run_chunked(N, worker, threads=threads)
        good = out["sup"][out["alive"]]
        n_div = int(N - good.size)
        est = float(good.mean()) if good.size else math.nan
        ci = (
            1.96 * float(good.std(ddof=1)) / math.sqrt(good.size)
            if good.size > 1
            else math.nan
        )
        rows.append((r, est, ci, n_div))
    return rows


@dataclass
class SupMomentResult:
    estimate: float
    ci_half_width: float
    tail_share: float       # share of the mean carried by the top 1% of paths
    n_paths: int
    diverged_count: int

    @property
    def unreliable(self) -> bool:
        return self.diverged_count > 1e-3 * max(self.n_paths, 1)


def sup_moment(
    model: SdeModel,
    x: np.ndarray,
    kappa_multi: Sequence[np.ndarray],
    k: float,
    T: float,
    delta: float = 1e-3,
    N: int = 1000,
    seed: int = 0,
    threads: Optional[int] = None,
) -> SupMomentResult:
    """MC estimate of E sup_{t<=T} |d^(kappa) X_t|^k on the time grid.

    ``kappa_multi`` holds one unit vector (first variation J kappa) or two
    (second variation H : kappa1 x kappa2).  The sup includes t = 0.
    """
    if k <= 0:
        raise ValueError("moment order k must be positive")
    order = len(kappa_multi)
    if order not in (1, 2):
        raise ValueError("kappa_multi must contain one or two directions")
    kaps = [_ensure_unit(v) for v in kappa_multi]
    x = np.asarray(x, float)
    dts = engine.step_sizes(T, delta)
    steps = len(dts)
    dim = model.dim

    def contraction(J, H):
        if order == 1:
            return np.linalg.norm(np.einsum("nij,j->ni", J, kaps[0]), axis=-1)
        vec = np.einsum("naij,i,j->na", H, kaps[0], kaps[1])
        return np.linalg.norm(vec, axis=-1)

    def worker(start: int, count: int) -> dict:
        z = engine.chunk_normals(seed, start, count, steps, dim)
        inc = engine.scale_increments(z, dts)
        X = np.tile(x, (count, 1))
        J0 = np.tile(np.eye(dim), (count, 1, 1))
        H0 = np.zeros((count, dim, dim, dim)) if order >= 2 else None
        sup = contraction(J0, H0)

        def on_step(kstep, t, Xc, Jc, Hc, alive):
            np.copyto(sup, np.where(alive, np.maximum(sup, contraction(Jc, Hc)), sup))

        _, _, _, alive, _ = _np_kern.var_chunk(
            model, X, inc, dts, 0.0, order, engine.BLOW_RADIUS, on_step=on_step
        )
        return {"sup": sup, "alive": alive}

    out = engine.run_chunked(N, worker, threads=threads)
    good = out["sup"][out["alive"]] ** k
    n_div = int(N - good.size)
    if good.size == 0:
        return SupMomentResult(math.nan, math.nan, math.nan, N, n_div)
    est = float(good.mean())
    ci = 1.96 * float(good.std(ddof=1)) / math.sqrt(good.size) if good.size > 1 else 0.0
    top = max(1, int(math.ceil(0.01 * good.size)))
    tail = float(np.sort(good)[-top:].sum() / good.sum()) if good.sum() > 0 else 0.0
    return SupMomentResult(est, ci, tail, N, n_div)


@dataclass
class HolderResult:
    rows: list            # (gap, moment_estimate, ci_half_width)
    slope: float
    intercept: float
    r_squared: float


def holder_in_time_probe(
    model: SdeModel,
    x: np.ndarray,
    order: int,
    k: float,
    s_gaps: Sequence[float],
    delta: float = 1e-3,
    N: int = 1000,
    seed: int = 0,
    threads: Optional[int] = None,
) -> HolderResult:
    """Fitted slope of log E sup_{u in [0, g]} |dX_u - dX_0|^k against log g.

    order 0 probes the path itself, order 1 the first variation contracted
    with e_1, order 2 the second variation.  Gap ends are snapped to the
    grid; each gap must cover at least one step.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    gaps = sorted(float(g) for g in s_gaps)
    x = np.asarray(x, float)
    dim = model.dim
    g_max = gaps[-1]
    dts = engine.step_sizes(g_max, delta)
    steps = len(dts)
    tgrid = np.cumsum(dts)
    marks = []
    for g in gaps:
        idx = int(np.searchsorted(tgrid, g - 1e-12))
        marks.append(min(idx, steps - 1))
    marks = np.asarray(marks)
    e1 = np.zeros(dim)
    e1[0] = 1.0

    def deviation(Xc, Jc, Hc, x0_batch):
        if order == 0:
            return np.linalg.norm(Xc - x0_batch, axis=-1)
        if order == 1:
            eye = np.eye(dim)
            return np.linalg.norm(
                np.einsum("nij,j->ni", Jc - eye, e1), axis=-1
            )
        vec = np.einsum("naij,i,j->na", Hc, e1, e1)
        return np.linalg.norm(vec, axis=-1)

    var_order = max(order, 1)

    def worker(start: int, count: int) -> dict:
        z = engine.chunk_normals(seed, start, count, steps, dim)
        inc = engine.scale_increments(z, dts)
        X = np.tile(x, (count, 1))
        x0b = X.copy()
        sups = np.zeros((count, len(gaps)))
        cur = np.zeros(count)

        def on_step(kstep, t, Xc, Jc, Hc, alive):
            np.copyto(cur, np.where(alive, np.maximum(cur, deviation(Xc, Jc, Hc, x0b)), cur))
            hit = marks == kstep
            if hit.any():
                sups[:, hit] = cur[:, None]

        _, _, _, alive, _ = _np_kern.var_chunk(
            model, X, inc, dts, 0.0, var_order, engine.BLOW_RADIUS, on_step=on_step
        )
        return {"sups": sups, "alive": alive}

    out = engine.run_chunked(N, worker, threads=threads)
    rows = []
    good = out["alive"]
    for j, g in enumerate(gaps):
        vals = out["sups"][good, j] ** k
        est = float(vals.mean())
        ci = 1.96 * float(vals.std(ddof=1)) / math.sqrt(vals.size) if vals.size > 1 else 0.0
        rows.append((g, est, ci))
    slope, intercept, r2 = fit_slope([(g, e) for g, e, _ in rows])
    return HolderResult(rows=rows, slope=slope, intercept=intercept, r_squared=r2)


def variational_terminal(
    model: SdeModel,
    x: np.ndarray,
    T: float,
    delta: float,
    N: int,
    seed: int = 0,
    order: int = 1,
    threads: Optional[int] = None,
):
    """Terminal (x, J[, H]) ensemble via the chunked engine (EM scheme)."""
    x = np.asarray(x, float)
    dts = engine.step_sizes(T, delta)
    steps = len(dts)
    dim = model.dim

    def worker(start: int, count: int) -> dict:
        z = engine.chunk_normals(seed, start, count, steps, dim)
        inc = engine.scale_increments(z, dts)
        X = np.tile(x, (count, 1))
        Xo, Jo, Ho, alive, died = _np_kern.var_chunk(
            model, X, inc, dts, 0.0, order, engine.BLOW_RADIUS
        )
        res = {"x": Xo, "J": Jo, "alive": alive}
        if order >= 2:
            res["H"] = Ho
        return res

    return engine.run_chunked(N, worker, threads=threads)


def single_path_variation(
    model: SdeModel,
    x: np.ndarray,
    T: float,
    delta: float,
    seed: SeedSpec | int = 0,
    order: int = 1,
) -> list[VariationalState]:
    """Reference trajectory of (x, J[, H]) for one path (cross-checks)."""
    if isinstance(seed, int):
        seed = SeedSpec(seed, 0)
    dts = engine.step_sizes(T, delta)
    z = standard_normals(seed, len(dts) * model.dim).reshape(len(dts), model.dim)
    st = VariationalState.initial(np.asarray(x, float), order=order)
    out = [st]
    for k, dt in enumerate(dts):
        st = variation_step(st, z[k] * math.sqrt(dt), model, dt, order=order)
        out.append(st)
    return out
