"""SDE model abstraction, observables and derivative cross-validation.

A model is a drift/diffusion pair with hand-coded derivatives up to the
declared smoothness order.  All callbacks are vectorised over a leading batch
axis: states have shape (..., n) and callbacks return

    drift              (..., n)
    diffusion          (..., n, n)
    drift_jacobian     (..., n, n)        [i, j] = d b_i / d x_j
    diffusion_jacobian (..., n, n, n)     [i, k, j] = d sigma_ik / d x_j
    drift_hessian      (..., n, n, n)     [i, p, q] = d^2 b_i / d x_p d x_q
    diffusion_hessian  (..., n, n, n, n)  [i, k, p, q]

Derivatives are supplied analytically rather than through an AD engine so the
formulas stay auditable; ``validate_derivatives`` guards them against central
finite differences.  Callbacks must be pure, and instances are immutable
after construction, so models can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DomainBox",
    "SdeModel",
    "ObservableTriple",
    "ValidationReport",
    "validate_derivatives",
    "fd_gradient",
    "fd_jacobian",
]

#: central-difference step scale and acceptance tolerance for derivative
#: cross-checks (truncation/rounding balance at 64-bit precision)
FD_STEP_SCALE = 1e-5
FD_TOLERANCE = 1e-5


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box on which sampling-based checks are performed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, float))
        hi = np.atleast_1d(np.asarray(self.upper, float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower/upper must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("DomainBox requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + rng.random((count, self.dim)) * (self.upper - self.lower)

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    @classmethod
    def cube(cls, dim: int, halfwidth: float) -> "DomainBox":
        return cls(np.full(dim, -halfwidth), np.full(dim, halfwidth))


@dataclass(frozen=True)
class SdeModel:
    """dX_t = b(t, X_t) dt + sigma(t, X_t) dW_t with analytic derivatives."""

    name: str
    dim: int
    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    drift_jacobian: Optional[Callable] = None
    diffusion_jacobian: Optional[Callable] = None
    drift_hessian: Optional[Callable] = None
    diffusion_hessian: Optional[Callable] = None
    smoothness: int = 1
    time_homogeneous: bool = True
    domain: Optional[DomainBox] = None
    #: zero-arg factory returning scalar-state numba kernels, or None
    numba_ops_factory: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.smoothness < 1:
            raise ValueError("smoothness must be >= 1")
        if self.smoothness >= 2 and (
            self.drift_hessian is None or self.diffusion_hessian is None
        ):
            raise ValueError("smoothness >= 2 requires hessian callbacks")
        if self.domain is None:
            object.__setattr__(self, "domain", DomainBox.cube(self.dim, 5.0))
        object.__setattr__(self, "_numba_ops_cache", [None])

    @property
    def numba_ops(self):
        """Compiled scalar-state kernels, built on first use (or None)."""
        cache = self._numba_ops_cache
        if cache[0] is None and self.numba_ops_factory is not None:
            cache[0] = self.numba_ops_factory()
        return cache[0]


@dataclass(frozen=True)
class ObservableTriple:
    """Source f, discount rate c >= 0 and terminal payoff g, with gradients.

    f, c are (t, x) fields; g depends on x only.  Gradients are needed by the
    pathwise Feynman-Kac gradient estimator and may be None when only values
    are used.
    """

    f: Callable[[float, np.ndarray], np.ndarray]
    c: Callable[[float, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    f_grad: Optional[Callable] = None
    c_grad: Optional[Callable] = None
    g_grad: Optional[Callable] = None
    growth_note: str = ""
    numba_ops_factory: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_numba_ops_cache", [None])

    @property
    def numba_ops(self):
        cache = self._numba_ops_cache
        if cache[0] is None and self.numba_ops_factory is not None:
            cache[0] = self.numba_ops_factory()
        return cache[0]

    def has_gradients(self) -> bool:
        return None not in (self.f_grad, self.c_grad, self.g_grad)


def fd_gradient(fn: Callable, x: np.ndarray, h_scale: float = FD_STEP_SCALE):
    """Central-difference gradient of a scalar field over (..., n) points."""
    x = np.asarray(x, float)
    n = x.shape[-1]
    out = np.empty(x.shape)
    for j in range(n):
        h = h_scale * (1.0 + np.abs(x[..., j]))
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h
        xm[..., j] -= h
        out[..., j] = (fn(xp) - fn(xm)) / (2.0 * h)
    return out


def fd_jacobian(fn: Callable, x: np.ndarray, h_scale: float = FD_STEP_SCALE):
    """Central-difference derivative, appending the x_j axis last.

    ``fn`` maps (..., n) points to arrays with any trailing component axes;
    the result gains one final axis of length n.
    """
    x = np.asarray(x, float)
    n = x.shape[-1]
    extra_axes = np.asarray(fn(x)).ndim - x.ndim + 1
    cols = []
    for j in range(n):
        h = h_scale * (1.0 + np.abs(x[..., j]))
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h
        xm[..., j] -= h
        hh = h.reshape(h.shape + (1,) * extra_axes)
        cols.append((fn(xp) - fn(xm)) / (2.0 * hh))
    return np.stack(cols, axis=-1)


@dataclass
class ValidationReport:
    """Max relative FD error per derivative callback, plus worst points."""

    errors: dict
    worst_points: dict
    tolerance: float = FD_TOLERANCE

    @property
    def ok(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    def __str__(self) -> str:
        lines = [
            f"  {name}: max rel err {err:.3e} at {self.worst_points[name]}"
            for name, err in self.errors.items()
        ]
        status = "PASS" if self.ok else "FAIL"
        return f"derivative validation [{status}, tol {self.tolerance:g}]\n" + "\n".join(lines)


def _rel_err(analytic: np.ndarray, approx: np.ndarray) -> np.ndarray:
    return np.abs(analytic - approx) / (1.0 + np.abs(analytic))


def validate_derivatives(
    model: SdeModel,
    points: np.ndarray,
    times: np.ndarray | float = 0.0,
    h_scale: float = FD_STEP_SCALE,
    tolerance: float = FD_TOLERANCE,
) -> ValidationReport:
    """Cross-check every supplied derivative callback against central FD.

    Jacobians are differenced from the base callbacks; hessians from the
    analytic jacobians (so each order is validated against the one below).
    Points must lie inside the model's domain box.  Non-finite callback
    output raises with the offending point and callback named.
    """
    points = np.atleast_2d(np.asarray(points, float))
    if h_scale <= 0:
        raise ValueError("h_scale must be positive")
    if model.domain is not None and not np.all(model.domain.contains(points)):
        raise ValueError("validation points must lie inside the model domain box")
    times = np.broadcast_to(np.asarray(times, float), (points.shape[0],))

    errors: dict = {}
    worst: dict = {}

    def record(name, analytic, approx, pts):
        e = _rel_err(analytic, approx)
        flat = e.reshape(e.shape[0], -1).max(axis=1)
        i = int(np.argmax(flat))
        if name not in errors or flat[i] > errors[name]:
            errors[name] = float(flat[i])
            worst[name] = pts[i].copy()

    def checked(fn, name):
        def wrapped(t, x):
            val = np.asarray(fn(t, x), float)
            if not np.all(np.isfinite(val)):
                bad = np.argwhere(~np.isfinite(val.reshape(x.shape[0], -1)).all(axis=1))
                raise FloatingPointError(
                    f"{name} returned non-finite output at point {x[bad[0][0]]}"
                )
            return val
        return wrapped

    b = checked(model.drift, "drift")
    s = checked(model.diffusion, "diffusion")
    b(0.0, points)
    s(0.0, points)

    pairs = []
    if model.drift_jacobian is not None:
        pairs.append(("drift_jacobian", model.drift_jacobian, b))
    if model.diffusion_jacobian is not None:
        pairs.append(("diffusion_jacobian", model.diffusion_jacobian, s))
    if model.drift_hessian is not None:
        pairs.append(("drift_hessian", model.drift_hessian, model.drift_jacobian))
    if model.diffusion_hessian is not None:
        pairs.append(("diffusion_hessian", model.diffusion_hessian, model.diffusion_jacobian))

    for ti in np.unique(times):
        sel = points[times == ti]
        for name, deriv, base in pairs:
            analytic = checked(deriv, name)(ti, sel)
            approx = fd_jacobian(lambda x: base(ti, x), sel, h_scale)
            record(name, analytic, approx, sel)

    return ValidationReport(errors=errors, worst_points=worst, tolerance=tolerance)
