"""Model gallery: concrete SDEs with certificates, envelopes and constants.

Each ``make_model`` entry wires drift/diffusion with hand-coded derivatives
(validated against finite differences by the test suite), and where
available a Lyapunov certificate, a Lipschitz envelope G, and exponential
integrability data.  The Duffing-van der Pol oscillator and the Langevin
equation with variable friction carry the full bundle; the Lorenz and
Ginzburg-Landau models ship deliberately WITHOUT certificates and serve the
integrator/convergence harness only.

Certificate growth constants are calibrated at construction: the drift
functional LV/V is maximised over the model's domain box with the adaptive
sampler and a 10% safety margin is added.  They are box-empirical constants,
not global suprema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .lyapunov import (
    ExpIntegrabilityData,
    LipschitzEnvelope,
    LyapunovCertificate,
    ScalarField,
    exp_field,
    generator_apply,
    quadratic_form_field,
    sampled_max,
    sum_fields,
)
from .model_core import DomainBox, ObservableTriple, SdeModel

__all__ = [
    "ModelBundle",
    "make_model",
    "model_names",
    "DvdpConstants",
    "dvdp_constants",
    "LangevinConstants",
    "langevin_constants",
    "make_observable_triple",
    "observable_field",
    "OBSERVABLE_NAMES",
    "NumbaModelOps",
    "NumbaObsOps",
]

#: seed for construction-time certificate calibration (fixed: certificates
#: must not depend on the experiment seed)
_CAL_SEED = 20250809
_CAL_BUDGET = 40000
_CAL_MARGIN = 1.10


@dataclass
class NumbaModelOps:
    """Scalar-state njit kernels: drift(t,x,out), diffusion(t,x,out2),
    optionally drift_jac(t,x,out2) and diffusion_jac(t,x,out3)."""

    drift: Callable
    diffusion: Callable
    drift_jac: Optional[Callable] = None
    diffusion_jac: Optional[Callable] = None


@dataclass
class NumbaObsOps:
    """njit observables: f(t,x)->float, c(t,x)->float and their gradient
    kernels f_grad(t,x,out), c_grad(t,x,out)."""

    f: Callable
    c: Callable
    f_grad: Optional[Callable] = None
    c_grad: Optional[Callable] = None


@dataclass
class ModelBundle:
    """A gallery model with whatever certification data it supports."""

    model: SdeModel
    certificate: Optional[LyapunovCertificate] = None
    envelope: Optional[LipschitzEnvelope] = None
    exp_data: Optional[ExpIntegrabilityData] = None
    info: dict = field(default_factory=dict)


def _batch_matrix(x: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """Broadcast a constant matrix over the batch axes of x."""
    return np.broadcast_to(mat, np.asarray(x).shape[:-1] + mat.shape)


def _zeros_like_batch(x: np.ndarray, *shape: int) -> np.ndarray:
    return np.zeros(np.asarray(x).shape[:-1] + shape)


def _calibrate_alpha(model: SdeModel, v0: ScalarField) -> float:
    """Box-empirical growth constant: max LV/V times a safety margin."""

    def ratio(pts):
        with np.errstate(over="ignore"):
            return generator_apply(model, v0, 0.0, pts) / np.asarray(
                v0.value(0.0, pts), float
            )

    est = sampled_max(ratio, model.domain, _CAL_BUDGET, seed=_CAL_SEED)
    return max(0.0, est.value) * _CAL_MARGIN


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck
# ---------------------------------------------------------------------------


def _make_ou(dim: int = 1, rate: float = 1.0, noise: float = 1.0) -> ModelBundle:
    dim = int(dim)
    eye = np.eye(dim)

    def drift(t, x):
        return -rate * np.asarray(x, float)

    def diffusion(t, x):
        return _batch_matrix(x, noise * eye)

    def drift_jac(t, x):
        return _batch_matrix(x, -rate * eye)

    def diffusion_jac(t, x):
        return _zeros_like_batch(x, dim, dim, dim)

    def drift_hess(t, x):
        return _zeros_like_batch(x, dim, dim, dim)

    def diffusion_hess(t, x):
        return _zeros_like_batch(x, dim, dim, dim, dim)

    def numba_factory():
        from numba import njit

        @njit(cache=False)
        def nb_drift(t, x, out):
            for i in range(x.shape[0]):
                out[i] = -rate * x[i]

        @njit(cache=False)
        def nb_diff(t, x, out):
            for i in range(x.shape[0]):
                for j in range(x.shape[0]):
                    out[i, j] = noise if i == j else 0.0

        @njit(cache=False)
        def nb_djac(t, x, out):
            for i in range(x.shape[0]):
                for j in range(x.shape[0]):
                    out[i, j] = -rate if i == j else 0.0

        @njit(cache=False)
        def nb_sjac(t, x, out):
            out[:, :, :] = 0.0

        return NumbaModelOps(nb_drift, nb_diff, nb_djac, nb_sjac)

    model = SdeModel(
        name="ou",
        dim=dim,
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=drift_jac,
        diffusion_jacobian=diffusion_jac,
        drift_hessian=drift_hess,
        diffusion_hessian=diffusion_hess,
        smoothness=2,
        domain=DomainBox.cube(dim, 5.0),
        numba_ops_factory=numba_factory,
    )

    certificate = None
    if rate == 1.0 and noise == 1.0:
        # V0 = exp(|x|^2/4): LV0/V0 = dim/4 - 3|x|^2/8 <= dim/4
        v0 = exp_field(quadratic_form_field(eye / 4.0), 1.0)
        certificate = LyapunovCertificate(
            v0=v0, alpha_const=dim / 4.0, beta_const=0.0, p_star=1.0,
            domain=model.domain, label="ou-quadratic-exponent",
        )

    envelope = LipschitzEnvelope(
        value=lambda t, x: np.full(np.asarray(x).shape[:-1], dim * rate),
        label="ou-constant",
    )

    exp_data = None
    if noise**2 <= 4.0 * rate:
        # U = |x|^2/4: LU + 1/2|s^T grad U|^2 = |x|^2(noise^2/8 - rate/2)
        #                                       + noise^2 dim/4
        u_field = quadratic_form_field(eye / 4.0)
        ubar_val = -(noise**2) * dim / 4.0
        exp_data = ExpIntegrabilityData(
            u=u_field,
            ubar=lambda x: np.full(np.asarray(x).shape[:-1], ubar_val),
            rho=0.0,
        )

    info = {
        "mean": lambda x0, t: np.asarray(x0, float) * math.exp(-rate * t),
        "em_mean_factor": lambda delta, steps: (1.0 - rate * delta) ** steps,
    }
    return ModelBundle(model, certificate, envelope, exp_data, info)


# ---------------------------------------------------------------------------
# Geometric Brownian motion
# ---------------------------------------------------------------------------


def _make_gbm(mu: float = 0.1, sigma: float = 0.2) -> ModelBundle:
    def drift(t, x):
        return mu * np.asarray(x, float)

    def diffusion(t, x):
        return sigma * np.asarray(x, float)[..., None]

    def drift_jac(t, x):
        return np.full(np.asarray(x).shape[:-1] + (1, 1), mu)

    def diffusion_jac(t, x):
        return np.full(np.asarray(x).shape[:-1] + (1, 1, 1), sigma)

    def drift_hess(t, x):
        return _zeros_like_batch(x, 1, 1, 1)

    def diffusion_hess(t, x):
        return _zeros_like_batch(x, 1, 1, 1, 1)

    def numba_factory():
        from numba import njit

        @njit(cache=False)
        def nb_drift(t, x, out):
            out[0] = mu * x[0]

        @njit(cache=False)
        def nb_diff(t, x, out):
            out[0, 0] = sigma * x[0]

        @njit(cache=False)
        def nb_djac(t, x, out):
            out[0, 0] = mu

        @njit(cache=False)
        def nb_sjac(t, x, out):
            out[0, 0, 0] = sigma

        return NumbaModelOps(nb_drift, nb_diff, nb_djac, nb_sjac)

    model = SdeModel(
        name="gbm",
        dim=1,
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=drift_jac,
        diffusion_jacobian=diffusion_jac,
        drift_hessian=drift_hess,
        diffusion_hessian=diffusion_hess,
        smoothness=2,
        domain=DomainBox(np.array([0.01]), np.array([10.0])),
        numba_ops_factory=numba_factory,
    )

    envelope = LipschitzEnvelope(
        value=lambda t, x: np.full(np.asarray(x).shape[:-1], abs(mu) + sigma**2),
        label="gbm-constant",
    )

    def exact_terminal(x0, T, w_total):
        return np.asarray(x0, float) * np.exp(
            (mu - 0.5 * sigma**2) * T + sigma * np.asarray(w_total)
        )

    info = {
        "exact_terminal": exact_terminal,
        "mean": lambda x0, t: np.asarray(x0, float) * math.exp(mu * t),
    }
    return ModelBundle(model, None, envelope, None, info)


# ---------------------------------------------------------------------------
# Cubic-drift scalar model (explicit-scheme divergence demonstration)
# ---------------------------------------------------------------------------


def _make_cubic(noise: float = 0.0) -> ModelBundle:
    def drift(t, x):
        x = np.asarray(x, float)
        return -(x**3)

    def diffusion(t, x):
        return np.full(np.asarray(x).shape[:-1] + (1, 1), noise)

    def drift_jac(t, x):
        x = np.asarray(x, float)
        return (-3.0 * x**2)[..., None]

    def diffusion_jac(t, x):
        return _zeros_like_batch(x, 1, 1, 1)

    def drift_hess(t, x):
        x = np.asarray(x, float)
        return (-6.0 * x)[..., None, None]

    def diffusion_hess(t, x):
        return _zeros_like_batch(x, 1, 1, 1, 1)

    def numba_factory():
        from numba import njit

        @njit(cache=False)
        def nb_drift(t, x, out):
            out[0] = -x[0] * x[0] * x[0]

        @njit(cache=False)
        def nb_diff(t, x, out):
            out[0, 0] = noise

        @njit(cache=False)
        def nb_djac(t, x, out):
            out[0, 0] = -3.0 * x[0] * x[0]

        @njit(cache=False)
        def nb_sjac(t, x, out):
            out[0, 0, 0] = 0.0

        return NumbaModelOps(nb_drift, nb_diff, nb_djac, nb_sjac)

    model = SdeModel(
        name="cubic",
        dim=1,
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=drift_jac,
        diffusion_jacobian=diffusion_jac,
        drift_hessian=drift_hess,
        diffusion_hessian=diffusion_hess,
        smoothness=2,
        domain=DomainBox.cube(1, 5.0),
        numba_ops_factory=numba_factory,
    )
    envelope = LipschitzEnvelope(
        value=lambda t, x: 3.0 * (1.0 + np.einsum("...i,...i->...", x, x)),
        label="cubic",
    )
    return ModelBundle(model, None, envelope, None, {})


# ---------------------------------------------------------------------------
# Stochastic Duffing-van der Pol oscillator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DvdpConstants:
    """Certificate constants of the Duffing-van der Pol oscillator.

    a = min(1, 1/a3); b = 2 - a3 for a3 < 1, else 3/2; c = 6|a2|;
    gamma_max = min(a3/(4 b1^2), 1/b1^2, |a2|/(8 b3^2)) with zero
    denominators contributing +inf.  The cutoff plateau radius satisfies
    r0^2 = (1 + |a - 2 a2 b + 2 b3^2 gamma b^2|) / (2 a3 b - 2 b1^2 gamma b^2),
    whose denominator is positive for gamma <= gamma_max.
    """

    a: float
    b: float
    c: float
    gamma_max: float
    gamma: float
    eta_plateau: float  # r0^2

    @property
    def r0(self) -> float:
        return math.sqrt(self.eta_plateau)


def dvdp_constants(
    alpha: tuple[float, float, float],
    beta: tuple[float, float],
    gamma: Optional[float] = None,
) -> DvdpConstants:
    a1, a2, a3 = (float(v) for v in alpha)
    b1, b3 = (float(v) for v in beta)
    if a3 <= 0:
        raise ValueError(
            "certificate constants require alpha3 > 0 (the alpha3 = 0 limit "
            "is unsupported)"
        )
    a = min(1.0, 1.0 / a3)
    b = (2.0 - a3) if a3 < 1.0 else 1.5
    c = 6.0 * abs(a2)
    rules = []
    rules.append(a3 / (4.0 * b1**2) if b1 != 0.0 else math.inf)
    rules.append(1.0 / b1**2 if b1 != 0.0 else math.inf)
    rules.append(abs(a2) / (8.0 * b3**2) if b3 != 0.0 else math.inf)
    gamma_max = min(rules)
    if gamma is None:
        if not math.isfinite(gamma_max) or gamma_max <= 0.0:
            raise ValueError(
                f"gamma_max={gamma_max} is degenerate; pass gamma explicitly"
            )
        gamma = gamma_max
    if not 0.0 < gamma <= gamma_max:
        raise ValueError(f"gamma={gamma} outside (0, gamma_max={gamma_max}]")
    den = 2.0 * a3 * b - 2.0 * b1**2 * gamma * b**2
    if den <= 0.0:
        raise ValueError("cutoff plateau denominator nonpositive")
    num = 1.0 + abs(a - 2.0 * a2 * b + 2.0 * b3**2 * gamma * b**2)
    return DvdpConstants(a=a, b=b, c=c, gamma_max=gamma_max, gamma=gamma,
                         eta_plateau=num / den)


def _bump_profile(s: np.ndarray):
    """C-infinity descent 1 -> 0 on s in [0, 1] via the exp(-1/s) blend.

    Returns (B, B', B'') evaluated elementwise; outside (0, 1) the profile
    is the constant 1 (s <= 0) or 0 (s >= 1) with zero derivatives.
    """
    s = np.asarray(s, float)
    B = np.ones_like(s)
    Bp = np.zeros_like(s)
    Bpp = np.zeros_like(s)
    B[s >= 1.0] = 0.0
    m = (s > 0.0) & (s < 1.0)
    if not np.any(m):
        return B, Bp, Bpp
    sm = s[m]
    with np.errstate(under="ignore"):
        f = np.exp(-1.0 / sm)
        fb = np.exp(-1.0 / (1.0 - sm))
    D = f + fb
    P = f * fb
    W = sm**-2 + (1.0 - sm) ** -2
    V = sm**-2 - (1.0 - sm) ** -2
    Wp = -2.0 * sm**-3 + 2.0 * (1.0 - sm) ** -3
    Dp = f * sm**-2 - fb * (1.0 - sm) ** -2
    B[m] = fb / D
    Bp[m] = -P * W / D**2
    # B'' = -(P' W + P W')/D^2 + 2 P W D'/D^3 with P' = P V
    Bpp[m] = -(P * V * W + P * Wp) / D**2 + 2.0 * P * W * Dp / D**3
    return B, Bp, Bpp


def _dvdp_v_field(k: DvdpConstants) -> ScalarField:
    """V = (1 - eta(x1)) e^{g(x1^4 + a x1 x2 + b x2^2)} + e^{g(-c x1 x2 + x2^2/2)}

    with eta = 1 on |x1| <= r0, descending smoothly to 0 on [r0, r0 + 1].
    """
    a, b, c, g, r0 = k.a, k.b, k.c, k.gamma, k.r0

    def parts(x):
        x = np.asarray(x, float)
        x1, x2 = x[..., 0], x[..., 1]
        sgn = np.sign(x1)
        eta, etap, etapp = _bump_profile(np.abs(x1) - r0)
        etap = etap * sgn
        with np.errstate(over="ignore"):
            e1 = np.exp(g * (x1**4 + a * x1 * x2 + b * x2**2))
            e2 = np.exp(g * (-c * x1 * x2 + 0.5 * x2**2))
        p11 = g * (4.0 * x1**3 + a * x2)
        p12 = g * (a * x1 + 2.0 * b * x2)
        p21 = g * (-c * x2)
        p22 = g * (-c * x1 + x2)
        return x1, x2, eta, etap, etapp, e1, e2, p11, p12, p21, p22

    def value(t, x):
        _, _, eta, _, _, e1, e2, *_ = parts(x)
        return (1.0 - eta) * e1 + e2

    def grad(t, x):
        x1, x2, eta, etap, _, e1, e2, p11, p12, p21, p22 = parts(x)
        w = 1.0 - eta
        g1 = (-etap + w * p11) * e1 + p21 * e2
        g2 = w * p12 * e1 + p22 * e2
        return np.stack([g1, g2], axis=-1)

    def hess(t, x):
        x1, x2, eta, etap, etapp, e1, e2, p11, p12, p21, p22 = parts(x)
        w = 1.0 - eta
        q11 = g * 12.0 * x1**2
        q12 = g * a
        q22 = g * 2.0 * b
        h11 = (-etapp - 2.0 * etap * p11 + w * (q11 + p11**2)) * e1 + p21**2 * e2
        h12 = (-etap * p12 + w * (q12 + p11 * p12)) * e1 + (g * (-c) + p21 * p22) * e2
        h22 = (w * (q22 + p12**2)) * e1 + (g + p22**2) * e2
        row1 = np.stack([h11, h12], axis=-1)
        row2 = np.stack([h12, h22], axis=-1)
        return np.stack([row1, row2], axis=-2)

    def log_value(t, x):
        x = np.asarray(x, float)
        x1, x2 = x[..., 0], x[..., 1]
        eta, _, _ = _bump_profile(np.abs(x1) - r0)
        with np.errstate(divide="ignore"):
            lw = np.log(1.0 - eta)     # -inf on the plateau, harmless below
        l1 = lw + g * (x1**4 + a * x1 * x2 + b * x2**2)
        l2 = g * (-c * x1 * x2 + 0.5 * x2**2)
        return np.logaddexp(l1, l2)

    return ScalarField(value=value, grad=grad, hess=hess, log_value=log_value)


def _make_dvdp(
    alpha: tuple[float, float, float] = (1.0, 1.0, 1.0),
    beta: tuple[float, float] = (1.0, 1.0),
    gamma: Optional[float] = None,
) -> ModelBundle:
    a1, a2, a3 = (float(v) for v in alpha)
    b1, b3 = (float(v) for v in beta)

    def drift(t, x):
        x = np.asarray(x, float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack(
            [x2, a1 * x1 - a2 * x2 - a3 * x2 * x1**2 - x1**3], axis=-1
        )

    def diffusion(t, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 1, 0] = b1 * x[..., 0]
        out[..., 1, 1] = b3
        return out

    def drift_jac(t, x):
        x = np.asarray(x, float)
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = a1 - 2.0 * a3 * x1 * x2 - 3.0 * x1**2
        out[..., 1, 1] = -a2 - a3 * x1**2
        return out

    def diffusion_jac(t, x):
        out = _zeros_like_batch(x, 2, 2, 2)
        out[..., 1, 0, 0] = b1
        return out

    def drift_hess(t, x):
        x = np.asarray(x, float)
        x1, x2 = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 1, 0, 0] = -2.0 * a3 * x2 - 6.0 * x1
        out[..., 1, 0, 1] = -2.0 * a3 * x1
        out[..., 1, 1, 0] = -2.0 * a3 * x1
        return out

    def diffusion_hess(t, x):
        return _zeros_like_batch(x, 2, 2, 2, 2)

    def numba_factory():
        from numba import njit

        @njit(cache=False)
        def nb_drift(t, x, out):
            out[0] = x[1]
            out[1] = a1 * x[0] - a2 * x[1] - a3 * x[1] * x[0] * x[0] - x[0] * x[0] * x[0]

        @njit(cache=False)
        def nb_diff(t, x, out):
            out[0, 0] = 0.0
            out[0, 1] = 0.0
            out[1, 0] = b1 * x[0]
            out[1, 1] = b3

        @njit(cache=False)
        def nb_djac(t, x, out):
            out[0, 0] = 0.0
            out[0, 1] = 1.0
            out[1, 0] = a1 - 2.0 * a3 * x[0] * x[1] - 3.0 * x[0] * x[0]
            out[1, 1] = -a2 - a3 * x[0] * x[0]

        @njit(cache=False)
        def nb_sjac(t, x, out):
            out[:, :, :] = 0.0
            out[1, 0, 0] = b1

        return NumbaModelOps(nb_drift, nb_diff, nb_djac, nb_sjac)

    model = SdeModel(
        name="dvdp",
        dim=2,
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=drift_jac,
        diffusion_jacobian=diffusion_jac,
        drift_hessian=drift_hess,
        diffusion_hessian=diffusion_hess,
        smoothness=2,
        domain=DomainBox.cube(2, 5.0),
        numba_ops_factory=numba_factory,
    )

    certificate = None
    constants = None
    cert_error = None
    try:
        constants = dvdp_constants((a1, a2, a3), (b1, b3), gamma)
    except ValueError as exc:
        cert_error = str(exc)
    if constants is not None:
        v0 = _dvdp_v_field(constants)
        certificate = LyapunovCertificate(
            v0=v0,
            alpha_const=_calibrate_alpha(model, v0),
            beta_const=0.0,
            p_star=1.0,
            domain=model.domain,
            label="dvdp-cutoff-exponential",
        )

    g_coeff = 3.0 + 2.0 * (abs(a1) + abs(a2) + abs(a3)) + b1**2

    def g_value(t, x):
        x = np.asarray(x, float)
        return g_coeff * (
            1.0 + np.abs(x[..., 0]) ** 3 + np.abs(x[..., 1]) ** 1.5
        )

    envelope = LipschitzEnvelope(value=g_value, label="dvdp-polynomial")
    info = {"constants": constants}
    if cert_error is not None:
        info["certificate_error"] = cert_error
    if constants is not None:
        # envelope-dominance probe field: the uncut exponential envelope
        # e^{gamma (x1^4 + 2 x2^2 + 1)}.  The certificate itself has a cutoff
        # plateau on which log V vanishes along thin bands, which would
        # pollute sphere maxima of G / log V at moderate radii.
        quartic = ScalarField(
            value=lambda t, x: x[..., 0] ** 4 + 2.0 * x[..., 1] ** 2 + 1.0,
            grad=lambda t, x: np.stack(
                [4.0 * x[..., 0] ** 3, 4.0 * x[..., 1]], axis=-1
            ),
            hess=lambda t, x: np.stack(
                [
                    np.stack(
                        [12.0 * x[..., 0] ** 2, np.zeros_like(x[..., 0])], axis=-1
                    ),
                    np.stack(
                        [np.zeros_like(x[..., 0]), np.full_like(x[..., 0], 4.0)],
                        axis=-1,
                    ),
                ],
                axis=-2,
            ),
        )
        info["smallo_field"] = exp_field(quartic, constants.gamma)
    return ModelBundle(model, certificate, envelope, None, info)


# ---------------------------------------------------------------------------
# Langevin dynamics with variable friction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LangevinConstants:
    """Certificate constants for the kinetic Langevin system.

    b = min(1/(k_tilde * sup|Gamma|), m_tilde, sqrt(k_tilde));
    a = min(b/k_tilde, m_tilde)/4;
    gamma_star = min(1/(k_tilde b sup|Gamma|), m_tilde/(4 sup|Gamma|))/8.
    """

    b: float
    a: float
    gamma_star: float
    k_tilde: float
    m_tilde: float
    sup_gamma_norm: float


def langevin_constants(
    k_tilde: float, m_tilde: float, sup_gamma_norm: float
) -> LangevinConstants:
    if min(k_tilde, m_tilde, sup_gamma_norm) <= 0:
        raise ValueError("k_tilde, m_tilde and sup_gamma_norm must be positive")
    b = min(1.0 / (k_tilde * sup_gamma_norm), m_tilde, math.sqrt(k_tilde))
    a = 0.25 * min(b / k_tilde, m_tilde)
    gamma_star = 0.125 * min(
        1.0 / (k_tilde * b * sup_gamma_norm), m_tilde / (4.0 * sup_gamma_norm)
    )
    return LangevinConstants(
        b=b, a=a, gamma_star=gamma_star,
        k_tilde=k_tilde, m_tilde=m_tilde, sup_gamma_norm=sup_gamma_norm,
    )


def _make_langevin_vf(
    n: int = 1,
    potential: str = "quadratic",
    friction: str = "variable",
    friction_scale: float = 1.0,
) -> ModelBundle:
    n = int(n)
    dim = 2 * n
    s = float(friction_scale)
    if potential not in ("quadratic", "quartic"):
        raise ValueError(f"unknown potential {potential!r}")
    if friction not in ("variable", "constant"):
        raise ValueError(f"unknown friction {friction!r}")
    quart = potential == "quartic"
    variable = friction == "variable"

    # potential derivatives (q block only)
    def u_val(q):
        return 0.25 * (q**4).sum(axis=-1) if quart else 0.5 * (q**2).sum(axis=-1)

    def u_grad(q):
        return q**3 if quart else q

    def u_hess_diag(q):
        return 3.0 * q**2 if quart else np.ones_like(q)

    # friction g(p) (scalar multiple of the identity)
    def g_val(p):
        if not variable:
            return np.full(p.shape[:-1], s)
        w = 1.0 + (p**2).sum(axis=-1)
        return s * (1.0 + 1.0 / w)

    def g_grad(p):
        if not variable:
            return np.zeros_like(p)
        w = 1.0 + (p**2).sum(axis=-1)
        return -2.0 * s * p / (w**2)[..., None]

    def g_hess(p):
        if not variable:
            return np.zeros(p.shape + (n,))
        w = 1.0 + (p**2).sum(axis=-1)
        eye = np.eye(n)
        return (
            -2.0 * s * eye / (w**2)[..., None, None]
            + 8.0 * s * np.einsum("...i,...j->...ij", p, p) / (w**3)[..., None, None]
        )

    def g_third(p):
        # T[i,j,k] = d^3 g / dp_i dp_j dp_k
        if not variable:
            return np.zeros(p.shape + (n, n))
        w = 1.0 + (p**2).sum(axis=-1)
        eye = np.eye(n)
        sym = (
            np.einsum("ij,...k->...ijk", eye, p)
            + np.einsum("ik,...j->...ijk", eye, p)
            + np.einsum("jk,...i->...ijk", eye, p)
        )
        triple = np.einsum("...i,...j,...k->...ijk", p, p, p)
        return 8.0 * s * sym / (w**3)[..., None, None, None] - 48.0 * s * triple / (
            w**4
        )[..., None, None, None]

    def split(x):
        x = np.asarray(x, float)
        return x[..., :n], x[..., n:]

    def drift(t, x):
        q, p = split(x)
        dp = -u_grad(q) + g_grad(p) - g_val(p)[..., None] * p
        return np.concatenate([p, dp], axis=-1)

    def diffusion(t, x):
        q, p = split(x)
        out = np.zeros(x.shape[:-1] + (dim, dim))
        root = np.sqrt(g_val(p))
        for i in range(n):
            out[..., n + i, n + i] = root
        return out

    def drift_jac(t, x):
        q, p = split(x)
        out = np.zeros(x.shape[:-1] + (dim, dim))
        eye = np.eye(n)
        out[..., :n, n:] = eye
        # d(dp)/dq = -Hess U (diagonal for both potentials)
        hd = u_hess_diag(q)
        for i in range(n):
            out[..., n + i, i] = -hd[..., i]
        # d(dp)/dp = Hess g - (grad g p^T + g I)
        gg = g_grad(p)
        gv = g_val(p)
        out[..., n:, n:] = (
            g_hess(p)
            - np.einsum("...j,...i->...ij", gg, p)
            - gv[..., None, None] * eye
        )
        return out

    def diffusion_jac(t, x):
        q, p = split(x)
        out = np.zeros(x.shape[:-1] + (dim, dim, dim))
        if variable:
            root = np.sqrt(g_val(p))
            dr = g_grad(p) / (2.0 * root[..., None])  # d sqrt(g) / dp_j
            for i in range(n):
                out[..., n + i, n + i, n:] = dr
        return out

    def drift_hess(t, x):
        q, p = split(x)
        out = np.zeros(x.shape[:-1] + (dim, dim, dim))
        # rows n+i: -third(U) on (q,q); friction terms on (p,p)
        if quart:
            for i in range(n):
                out[..., n + i, i, i] = -6.0 * q[..., i]
        if variable:
            T = g_third(p)      # third derivatives of g
            Hg = g_hess(p)
            gg = g_grad(p)
            # d^2/dp_j dp_k of (grad g)_i = T[i,j,k]
            # d^2/dp_j dp_k of (g p_i)   = Hg[j,k] p_i + gg[j] d_ik + gg[k] d_ij
            gp_term = (
                np.einsum("...jk,...i->...ijk", Hg, p)
                + np.einsum("...j,ik->...ijk", gg, np.eye(n))
                + np.einsum("...k,ij->...ijk", gg, np.eye(n))
            )
            out[..., n:, n:, n:] = T - gp_term
        return out

    def diffusion_hess(t, x):
        q, p = split(x)
        out = np.zeros(x.shape[:-1] + (dim, dim, dim, dim))
        if variable:
            gv = g_val(p)
            root = np.sqrt(gv)
            gg = g_grad(p)
            Hg = g_hess(p)
            d2r = Hg / (2.0 * root[..., None, None]) - np.einsum(
                "...i,...j->...ij", gg, gg
            ) / (4.0 * (gv**1.5)[..., None, None])
            for i in range(n):
                out[..., n + i, n + i, n:, n:] = d2r
        return out

    def numba_factory():
        from numba import njit

        nn = n
        sv = s
        is_var = variable
        is_quart = quart

        @njit(cache=False)
        def nb_drift(t, x, out):
            w = 1.0
            for i in range(nn):
                w += x[nn + i] * x[nn + i]
            g = sv * (1.0 + 1.0 / w) if is_var else sv
            for i in range(nn):
                out[i] = x[nn + i]
            for i in range(nn):
                q = x[i]
                du = q * q * q if is_quart else q
                dg = -2.0 * sv * x[nn + i] / (w * w) if is_var else 0.0
                out[nn + i] = -du + dg - g * x[nn + i]

        @njit(cache=False)
        def nb_diff(t, x, out):
            w = 1.0
            for i in range(nn):
                w += x[nn + i] * x[nn + i]
            g = sv * (1.0 + 1.0 / w) if is_var else sv
            root = np.sqrt(g)
            for i in range(2 * nn):
                for j in range(2 * nn):
                    out[i, j] = 0.0
            for i in range(nn):
                out[nn + i, nn + i] = root

        return NumbaModelOps(nb_drift, nb_diff, None, None)

    lo = np.full(dim, -5.0)
    hi = np.full(dim, 5.0)
    model = SdeModel(
        name="langevin_vf",
        dim=dim,
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=drift_jac,
        diffusion_jacobian=diffusion_jac,
        drift_hessian=drift_hess,
        diffusion_hessian=diffusion_hess,
        smoothness=2,
        domain=DomainBox(lo, hi),
        numba_ops_factory=numba_factory,
    )

    # constants: grad U . q >= k_tilde |q|^2 - K_tilde
    k_tilde = 1.0
    sup_gamma = 2.0 * s if variable else s
    m_tilde = s
    consts = langevin_constants(k_tilde, m_tilde, sup_gamma)

    # V_gamma = exp(gamma (U(q) + a|q|^2 + b q.p + |p|^2))
    def exponent_field() -> ScalarField:
        a_, b_ = consts.a, consts.b

        def val(t, x):
            q, p = split(x)
            return (
                u_val(q)
                + a_ * (q**2).sum(axis=-1)
                + b_ * (q * p).sum(axis=-1)
                + (p**2).sum(axis=-1)
            )

        def grad(t, x):
            q, p = split(x)
            gq = u_grad(q) + 2.0 * a_ * q + b_ * p
            gp = b_ * q + 2.0 * p
            return np.concatenate([gq, gp], axis=-1)

        def hess(t, x):
            q, p = split(x)
            out = np.zeros(x.shape[:-1] + (dim, dim))
            hd = u_hess_diag(q)
            eye = np.eye(n)
            for i in range(n):
                out[..., i, i] = hd[..., i] + 2.0 * a_
            out[..., :n, n:] = b_ * eye
            out[..., n:, :n] = b_ * eye
            for i in range(n):
                out[..., n + i, n + i] = 2.0
            return out

        return ScalarField(value=val, grad=grad, hess=hess)

    u_total = exponent_field()
    v0 = exp_field(u_total, consts.gamma_star)
    certificate = LyapunovCertificate(
        v0=v0,
        alpha_const=_calibrate_alpha(model, v0),
        beta_const=0.0,
        p_star=1.0,
        domain=model.domain,
        label="langevin-kinetic-exponential",
    )

    # envelope G = C (1 + U(q) + |p|^2)^{3/4}, C calibrated pointwise
    def g_raw(t, x):
        q, p = split(x)
        return (1.0 + u_val(q) + (p**2).sum(axis=-1)) ** 0.75

    def pointwise_sum(pts):
        Jb = drift_jac(0.0, pts)
        Js = diffusion_jac(0.0, pts)
        per_dir = np.sqrt(np.einsum("...ij,...ij->...j", Jb, Jb)) + np.einsum(
            "...ikj,...ikj->...j", Js, Js
        )
        return per_dir.sum(axis=-1) / g_raw(0.0, pts)

    c_env = sampled_max(pointwise_sum, model.domain, 20000, seed=_CAL_SEED).value * 1.5
    envelope = LipschitzEnvelope(
        value=lambda t, x: c_env * g_raw(t, x), label="langevin-potential-power"
    )

    exp_data = None
    if not variable and not quart:
        exp_data = _langevin_exp_data(u_total, consts, s, n, dim)

    info = {"constants": consts, "n": n, "potential": potential,
            "friction": friction}
    return ModelBundle(model, certificate, envelope, exp_data, info)


def _langevin_exp_data(
    u_total: ScalarField, consts: LangevinConstants, g0: float, n: int, dim: int
) -> Optional[ExpIntegrabilityData]:
    """Exponential-integrability data for constant friction g0*I and
    quadratic potential.  With u = U + a|q|^2 + b q.p + |p|^2,

        L u + 1/2 |s^T grad u|^2
            = (2a-1+g0 b) q.p + b|p|^2 + (g0 b^2/2 - b)|q|^2 + g0 n,

    so rho is chosen to make rho*u dominate the quadratic part exactly
    (2x2 PSD conditions) and Ubar = -g0 n soaks up the constant."""
    a, b = consts.a, consts.b
    cross = 2.0 * a - 1.0 + g0 * b
    for rho in [b + 0.5 * k for k in range(1, 17)]:
        qqq = rho * (0.5 + a) + b - 0.5 * g0 * b**2
        qpp = rho - b
        qqp = 0.5 * (rho * b - cross)
        if qqq >= 0 and qpp >= 0 and qqq * qpp >= qqp**2:
            ubar_val = -g0 * n
            return ExpIntegrabilityData(
                u=u_total,
                ubar=lambda x: np.full(np.asarray(x).shape[:-1], ubar_val),
                rho=rho,
            )
    return None


# ---------------------------------------------------------------------------
# Stochastic Lorenz system (additive noise) and Ginzburg-Landau equation
# ---------------------------------------------------------------------------


def _make_lorenz(
    s: float = 10.0, r: float = 28.0, beta: float = 8.0 / 3.0, noise: float = 1.0
) -> ModelBundle:
    eye = np.eye(3)

    def drift(t, x):
        x = np.asarray(x, float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack(
            [s * (x2 - x1), x1 * (r - x3) - x2, x1 * x2 - beta * x3], axis=-1
        )

    def diffusion(t, x):
        return _batch_matrix(x, noise * eye)

    def drift_jac(t, x):
        x = np.asarray(x, float)
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = -s
        out[..., 0, 1] = s
        out[..., 1, 0] = r - x3
        out[..., 1, 1] = -1.0
        out[..., 1, 2] = -x1
        out[..., 2, 0] = x2
        out[..., 2, 1] = x1
        out[..., 2, 2] = -beta
        return out

    def diffusion_jac(t, x):
        return _zeros_like_batch(x, 3, 3, 3)

    def drift_hess(t, x):
        out = _zeros_like_batch(x, 3, 3, 3)
        out[..., 1, 0, 2] = -1.0
        out[..., 1, 2, 0] = -1.0
        out[..., 2, 0, 1] = 1.0
        out[..., 2, 1, 0] = 1.0
        return out

    def diffusion_hess(t, x):
        return _zeros_like_batch(x, 3, 3, 3, 3)

    def numba_factory():
        from numba import njit

        @njit(cache=False)
        def nb_drift(t, x, out):
            out[0] = s * (x[1] - x[0])
            out[1] = x[0] * (r - x[2]) - x[1]
            out[2] = x[0] * x[1] - beta * x[2]

        @njit(cache=False)
        def nb_diff(t, x, out):
            for i in range(3):
                for j in range(3):
                    out[i, j] = noise if i == j else 0.0

        return NumbaModelOps(nb_drift, nb_diff, None, None)

    model = SdeModel(
        name="lorenz",
        dim=3,
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=drift_jac,
        diffusion_jacobian=diffusion_jac,
        drift_hessian=drift_hess,
        diffusion_hessian=diffusion_hess,
        smoothness=2,
        domain=DomainBox(np.array([-25.0, -25.0, -5.0]), np.array([25.0, 25.0, 55.0])),
        numba_ops_factory=numba_factory,
    )
    # no certificate: this model serves the integrator/convergence harness only
    return ModelBundle(model, None, None, None, {"no_certificate": True})


def _make_ginzburg_landau(
    eta: float = 1.0, lam: float = 1.0, noise: float = 1.0
) -> ModelBundle:
    def drift(t, x):
        x = np.asarray(x, float)
        return eta * x - lam * x**3

    def diffusion(t, x):
        return noise * np.asarray(x, float)[..., None]

    def drift_jac(t, x):
        x = np.asarray(x, float)
        return (eta - 3.0 * lam * x**2)[..., None]

    def diffusion_jac(t, x):
        return np.full(np.asarray(x).shape[:-1] + (1, 1, 1), noise)

    def drift_hess(t, x):
        x = np.asarray(x, float)
        return (-6.0 * lam * x)[..., None, None]

    def diffusion_hess(t, x):
        return _zeros_like_batch(x, 1, 1, 1, 1)

    def numba_factory():
        from numba import njit

        @njit(cache=False)
        def nb_drift(t, x, out):
            out[0] = eta * x[0] - lam * x[0] * x[0] * x[0]

        @njit(cache=False)
        def nb_diff(t, x, out):
            out[0, 0] = noise * x[0]

        return NumbaModelOps(nb_drift, nb_diff, None, None)

    model = SdeModel(
        name="ginzburg_landau",
        dim=1,
        drift=drift,
        diffusion=diffusion,
        drift_jacobian=drift_jac,
        diffusion_jacobian=diffusion_jac,
        drift_hessian=drift_hess,
        diffusion_hessian=diffusion_hess,
        smoothness=2,
        domain=DomainBox.cube(1, 5.0),
        numba_ops_factory=numba_factory,
    )
    c_env = abs(eta) + 3.0 * lam + noise**2
    envelope = LipschitzEnvelope(
        value=lambda t, x: c_env * (1.0 + np.einsum("...i,...i->...", x, x)),
        label="ginzburg-landau",
    )
    # no certificate: integrator/convergence use only
    return ModelBundle(model, None, envelope, None, {"no_certificate": True})


_MAKERS = {
    "ou": _make_ou,
    "gbm": _make_gbm,
    "cubic": _make_cubic,
    "dvdp": _make_dvdp,
    "langevin_vf": _make_langevin_vf,
    "lorenz": _make_lorenz,
    "ginzburg_landau": _make_ginzburg_landau,
}


def model_names() -> list[str]:
    return sorted(_MAKERS)


def make_model(name: str, **params) -> ModelBundle:
    """Build a gallery model bundle by name.

    Unknown names raise with the list of valid ones; parameter validity is
    checked by the individual constructors.
    """
    try:
        maker = _MAKERS[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; available: {', '.join(model_names())}"
        ) from None
    return maker(**params)


# ---------------------------------------------------------------------------
# Named scalar observables (CLI-facing registry)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _ObsSpec:
    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    make_numba: Callable


def _spec_zero():
    def make():
        from numba import njit

        @njit(cache=False)
        def val(t, x):
            return 0.0

        @njit(cache=False)
        def grd(t, x, out):
            out[:] = 0.0

        return val, grd

    return _ObsSpec(
        "zero",
        lambda x: np.zeros(np.asarray(x).shape[:-1]),
        lambda x: np.zeros_like(np.asarray(x, float)),
        make,
    )


def _spec_one():
    def make():
        from numba import njit

        @njit(cache=False)
        def val(t, x):
            return 1.0

        @njit(cache=False)
        def grd(t, x, out):
            out[:] = 0.0

        return val, grd

    return _ObsSpec(
        "one",
        lambda x: np.ones(np.asarray(x).shape[:-1]),
        lambda x: np.zeros_like(np.asarray(x, float)),
        make,
    )


def _spec_x1():
    def make():
        from numba import njit

        @njit(cache=False)
        def val(t, x):
            return x[0]

        @njit(cache=False)
        def grd(t, x, out):
            out[:] = 0.0
            out[0] = 1.0

        return val, grd

    def grad(x):
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        out[..., 0] = 1.0
        return out

    return _ObsSpec("x1", lambda x: np.asarray(x, float)[..., 0], grad, make)


def _spec_sumsq():
    def make():
        from numba import njit

        @njit(cache=False)
        def val(t, x):
            acc = 0.0
            for i in range(x.shape[0]):
                acc += x[i] * x[i]
            return acc

        @njit(cache=False)
        def grd(t, x, out):
            for i in range(x.shape[0]):
                out[i] = 2.0 * x[i]

        return val, grd

    return _ObsSpec(
        "sumsq",
        lambda x: np.einsum("...i,...i->...", x, x),
        lambda x: 2.0 * np.asarray(x, float),
        make,
    )


_OBS_SPECS = {s.name: s for s in (_spec_zero(), _spec_one(), _spec_x1(), _spec_sumsq())}
OBSERVABLE_NAMES = sorted(_OBS_SPECS)


def observable_field(name: str) -> tuple[Callable, Callable]:
    """(value, grad) callbacks of a named observable, both x-only."""
    try:
        spec = _OBS_SPECS[name]
    except KeyError:
        raise ValueError(
            f"unknown observable {name!r}; available: {', '.join(OBSERVABLE_NAMES)}"
        ) from None
    return spec.value, spec.grad


def make_observable_triple(f: str = "zero", c: str = "zero", g: str = "zero"):
    """Observable triple from registry names, with gradients and numba ops."""
    sf, sc, sg = _OBS_SPECS[f], _OBS_SPECS[c], _OBS_SPECS[g]

    def factory():
        f_val, f_grd = sf.make_numba()
        c_val, c_grd = sc.make_numba()
        return NumbaObsOps(f=f_val, c=c_val, f_grad=f_grd, c_grad=c_grd)

    return ObservableTriple(
        f=lambda t, x: sf.value(x),
        c=lambda t, x: sc.value(x),
        g=sg.value,
        f_grad=lambda t, x: sf.grad(x),
        c_grad=lambda t, x: sc.grad(x),
        g_grad=sg.grad,
        growth_note=f"f={f}, c={c}, g={g}",
        numba_ops_factory=factory,
    )
