"""Chunked ensemble drivers: noise generation, backend dispatch, threading.

Paths are processed in fixed-size chunks (``CHUNK_PATHS``), each generated
from its own per-path noise stream, so results are independent of both the
thread count and the chunk schedule.  Reductions happen after merging, on
full arrays in path order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

from . import _engine_numpy as _np_kern
from .backend import default_threads, resolve_backend
from .model_core import ObservableTriple, SdeModel
from .randomness import SeedSpec, standard_normals

#: fixed chunk size; must not depend on the thread count (determinism)
CHUNK_PATHS = 1024

#: divergence radius shared with integrators (kept here to avoid a cycle)
BLOW_RADIUS = 1e12


def step_sizes(T: float, delta: float) -> np.ndarray:
    """Uniform grid of steps delta ending exactly at T.

    If T is not a multiple of delta the final partial step covers the
    remainder with a fresh increment of matching variance.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if delta <= 0:
        raise ValueError("delta must be positive")
    n_full = int(math.floor(T / delta + 1e-9))
    rem = T - n_full * delta
    if n_full == 0:
        return np.array([T])
    dts = np.full(n_full, delta)
    if rem > 1e-12 * max(T, 1.0):
        dts = np.append(dts, rem)
    return dts


def chunk_normals(master_seed: int, start: int, count: int, steps: int, dim: int):
    """Standard normals for paths [start, start+count), shape (count, steps, dim)."""
    out = np.empty((count, steps, dim))
    for i in range(count):
        out[i] = standard_normals(
            SeedSpec(master_seed, start + i), steps * dim
        ).reshape(steps, dim)
    return out


def scale_increments(z: np.ndarray, dts: np.ndarray) -> np.ndarray:
    """Turn standard normals (..., steps, dim) into N(0, dt_k) increments."""
    return z * np.sqrt(np.asarray(dts))[:, None]


def run_chunked(
    n_paths: int,
    worker: Callable[[int, int], dict],
    threads: Optional[int] = None,
    chunk: int = CHUNK_PATHS,
) -> dict:
    """Run ``worker(start, count)`` over path chunks and merge in path order."""
    threads = default_threads() if threads is None else max(1, threads)
    starts = list(range(0, n_paths, chunk))
    results: list = [None] * len(starts)
    if threads <= 1 or len(starts) == 1:
        for i, s in enumerate(starts):
            results[i] = worker(s, min(chunk, n_paths - s))
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futures = {
                ex.submit(worker, s, min(chunk, n_paths - s)): i
                for i, s in enumerate(starts)
            }
            for fut, i in futures.items():
                results[i] = fut.result()
    merged = {}
    for key in results[0]:
        merged[key] = np.concatenate([r[key] for r in results], axis=0)
    return merged


def _needs(obs: Optional[ObservableTriple], grads: bool) -> tuple:
    need = []
    if obs is not None:
        need.append("obs")
        if grads:
            need.append("obs_grad")
    return tuple(need)


def pick_backend(
    model: SdeModel,
    requested: Optional[str],
    obs: Optional[ObservableTriple] = None,
    need: tuple = (),
) -> str:
    """Resolve numba vs numpy for one call, falling back when kernels are
    missing for the model or observables."""
    name = resolve_backend(requested)
    if name == "numpy":
        return "numpy"
    ops = model.numba_ops
    if ops is None:
        if requested == "numba":
            raise RuntimeError(f"model {model.name!r} provides no numba kernels")
        return "numpy"
    if "jac" in need and (ops.drift_jac is None or ops.diffusion_jac is None):
        if requested == "numba":
            raise RuntimeError(f"model {model.name!r} lacks numba jacobian kernels")
        return "numpy"
    if obs is not None and ("obs" in need or "obs_grad" in need):
        oops = obs.numba_ops
        if oops is None or ("obs_grad" in need and (oops.f_grad is None or oops.c_grad is None)):
            if requested == "numba":
                raise RuntimeError("observables lack the numba kernels required")
            return "numpy"
    return "numba"


def base_chunk_run(
    model: SdeModel,
    scheme: str,
    x0: np.ndarray,
    inc: np.ndarray,
    dts: np.ndarray,
    t0: float,
    qp: float,
    thr: float,
    obs: Optional[ObservableTriple],
    backend_name: str,
    blow: float = BLOW_RADIUS,
) -> dict:
    """Advance one chunk given prescaled increments (n, steps, dim)."""
    n = inc.shape[0]
    X = np.tile(np.asarray(x0, float), (n, 1))
    if backend_name == "numba":
        from . import _engine_numba as nb

        disc = np.zeros(n)
        src = np.zeros(n)
        alive = np.ones(n, np.bool_)
        died = np.full(n, -1, np.int64)
        ops = model.numba_ops
        if obs is not None:
            oops = obs.numba_ops
            f_fn, c_fn = oops.f, oops.c
            use_obs = True
        else:
            f_fn = c_fn = nb.zero_scalar_field
            use_obs = False
        nb.base_kernel(
            X, inc, np.asarray(dts, float), t0, scheme == "tamed", qp, thr,
            use_obs, blow, disc, src, alive, died, ops.drift,
            ops.diffusion, f_fn, c_fn,
        )
        x_out = X
    else:
        x_out, disc, src, alive, died = _np_kern.base_chunk(
            model, scheme, X, inc, dts, t0, qp, thr, obs, blow
        )
    return {"x": x_out, "disc": disc, "src": src, "alive": alive, "died_step": died}


def run_base_ensemble(
    model: SdeModel,
    scheme: str,
    x0: np.ndarray,
    dts: np.ndarray,
    t0: float,
    cfg,
    obs: Optional[ObservableTriple],
    n_paths: int,
    master_seed: int,
    threads: Optional[int] = None,
    backend: Optional[str] = None,
) -> dict:
    """N-path ensemble of the base scheme with per-path noise streams."""
    qp = cfg.q_prime
    thr = cfg.threshold_value() if scheme == "tamed" else np.inf
    be = pick_backend(model, backend, obs, need=_needs(obs, grads=False))
    steps = len(dts)
    dim = model.dim

    def worker(start: int, count: int) -> dict:
        z = chunk_normals(master_seed, start, count, steps, dim)
        inc = scale_increments(z, dts)
        return base_chunk_run(model, scheme, x0, inc, dts, t0, qp, thr, obs, be)

    return run_chunked(n_paths, worker, threads=threads)
