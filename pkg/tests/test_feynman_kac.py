"""Feynman-Kac estimates, pathwise gradients, Kolmogorov residuals."""

import math

import numpy as np
import pytest

from tamedsde import make_model, make_observable_triple
from tamedsde.feynman_kac import fk_estimate, fk_gradient, pde_residual
from tamedsde.model_core import ObservableTriple


class TestFkEstimate:
    def test_constant_discount(self, ou_bundle):
        # f=0, c=1, g=1 over unit horizon: u = e^{-1}, zero MC variance
        obs = make_observable_triple(f="zero", c="one", g="one")
        est = fk_estimate(ou_bundle.model, obs, 0.0, [1.0], 1.0, 1e-3, N=32,
                          seed=0, backend="numpy")
        assert math.isclose(est.mean, math.exp(-1.0), rel_tol=1e-12)
        assert est.ci_half_width < 1e-14

    def test_pure_source(self, ou_bundle):
        # f=1, c=0, g=0 over horizon 2: u = 2 exactly
        obs = make_observable_triple(f="one", c="zero", g="zero")
        est = fk_estimate(ou_bundle.model, obs, 0.0, [1.0], 2.0, 1e-2, N=16,
                          seed=0, backend="numpy")
        assert math.isclose(est.mean, 2.0, rel_tol=1e-12)

    def test_unit_terminal_payoff_is_exactly_one(self, dvdp_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="one")
        for seed in (0, 99):
            est = fk_estimate(dvdp_bundle.model, obs, 0.0, [1.0, 1.0], 1.0,
                              1e-2, N=64, seed=seed, backend="numpy")
            assert est.mean == 1.0
            assert est.ci_half_width == 0.0

    def test_nonnegative_data_gives_nonnegative_estimate(self, dvdp_bundle):
        obs = make_observable_triple(f="sumsq", c="sumsq", g="sumsq")
        est = fk_estimate(dvdp_bundle.model, obs, 0.0, [1.0, 1.0], 1.0, 1e-2,
                          N=256, seed=1)
        assert est.mean >= 0.0

    def test_ou_linear_payoff_mean(self, ou_bundle):
        # E X_T = e^{-T} x0 for the OU model
        obs = make_observable_triple(f="zero", c="zero", g="x1")
        est = fk_estimate(ou_bundle.model, obs, 0.0, [1.0], 1.0, 1e-3,
                          N=40000, seed=2)
        assert abs(est.mean - math.exp(-1.0)) < 3 * est.ci_half_width

    def test_time_shift_start(self, ou_bundle):
        obs = make_observable_triple(f="one", c="zero", g="zero")
        est = fk_estimate(ou_bundle.model, obs, 0.5, [1.0], 1.0, 1e-2, N=8,
                          seed=0, backend="numpy")
        assert math.isclose(est.mean, 0.5, rel_tol=1e-12)

    def test_flagged_on_divergence(self, cubic_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="one")
        est = fk_estimate(cubic_bundle.model, obs, 0.0, [3.0], 5.0, 0.5,
                          N=32, seed=0, scheme="em", backend="numpy")
        assert est.flagged


class TestFkGradient:
    def test_ou_gradient_matches_flow_decay(self, ou_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="x1")
        gr = fk_gradient(ou_bundle.model, obs, 0.0, [1.0], 1.0, 1e-3, N=16,
                         seed=0, backend="numpy")
        # pathwise gradient is deterministic: (1 - delta)^steps
        assert gr.gradient_ci[0] < 1e-12
        assert abs(gr.gradient[0] - math.exp(-1.0)) < 5e-4

    def test_ou_gradient_matches_crn_fd_to_1e6(self, ou_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="x1")
        N, delta, h = 4000, 1e-3, 1e-3
        gr = fk_gradient(ou_bundle.model, obs, 0.0, [1.0], 1.0, delta, N=N, seed=3)
        up = fk_estimate(ou_bundle.model, obs, 0.0, [1.0 + h], 1.0, delta,
                         N=N, seed=3, scheme="em")
        dn = fk_estimate(ou_bundle.model, obs, 0.0, [1.0 - h], 1.0, delta,
                         N=N, seed=3, scheme="em")
        fd = (up.mean - dn.mean) / (2 * h)
        assert abs(gr.gradient[0] - fd) < 1e-6

    def test_constant_payoff_zero_gradient(self, dvdp_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="one")
        gr = fk_gradient(dvdp_bundle.model, obs, 0.0, [1.0, 1.0], 0.5, 1e-2,
                         N=64, seed=0, backend="numpy")
        assert np.array_equal(gr.gradient, np.zeros(2))

    def test_dvdp_gradient_consistent_with_crn_fd(self, dvdp_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="sumsq")
        N, delta, h = 4000, 1e-3, 1e-3
        gr = fk_gradient(dvdp_bundle.model, obs, 0.0, [1.0, 1.0], 1.0, delta,
                         N=N, seed=5)
        for i in range(2):
            ei = np.zeros(2)
            ei[i] = h
            up = fk_estimate(dvdp_bundle.model, obs, 0.0, np.array([1.0, 1.0]) + ei,
                             1.0, delta, N=N, seed=5, scheme="em")
            dn = fk_estimate(dvdp_bundle.model, obs, 0.0, np.array([1.0, 1.0]) - ei,
                             1.0, delta, N=N, seed=5, scheme="em")
            fd = (up.mean - dn.mean) / (2 * h)
            tol = 3 * (gr.gradient_ci[i] + (up.ci_half_width + dn.ci_half_width) / (2 * h))
            assert abs(gr.gradient[i] - fd) < max(tol, 1e-3 * abs(fd))

    def test_requires_gradients(self, ou_bundle):
        obs = ObservableTriple(
            f=lambda t, x: np.zeros(np.asarray(x).shape[:-1]),
            c=lambda t, x: np.zeros(np.asarray(x).shape[:-1]),
            g=lambda x: np.ones(np.asarray(x).shape[:-1]),
        )
        with pytest.raises(ValueError):
            fk_gradient(ou_bundle.model, obs, 0.0, [1.0], 1.0, 1e-2, N=8)


def _ou_payoff_v(T):
    # v(t, x) = x e^{-(T-t)} solves the OU backward equation for g(x)=x
    def v(t, x):
        return float(np.asarray(x).reshape(-1)[0]) * math.exp(-(T - t))

    return v


class TestPdeResidual:
    def test_ou_analytic_residual_below_1e6(self, ou_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="x1")
        res = pde_residual(
            ou_bundle.model, obs, 0.5, [1.0], T=1.0, fd_steps=(1e-3, 1e-3),
            delta=1e-3, v_fn=_ou_payoff_v(1.0),
        )
        assert abs(res.residual) < 1e-6
        assert res.ci_half_width == 0.0

    def test_constant_payoff_zero_residual(self, ou_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="one")
        res = pde_residual(
            ou_bundle.model, obs, 0.5, [1.0], T=1.0, fd_steps=(0.05, 0.02),
            delta=1e-2, v_fn=lambda t, x: 1.0,
        )
        assert res.residual == 0.0

    def test_dvdp_mc_residual_within_3ci(self, dvdp_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="sumsq")
        res = pde_residual(
            dvdp_bundle.model, obs, 0.5, [1.0, 1.0], T=1.0,
            fd_steps=(0.05, 0.02), delta=1e-3, N=20000, seed=11,
        )
        assert abs(res.residual) <= 3 * res.ci_half_width
        # 11-point stencil minus the 4 cross points: a_{12} = 0 for this model
        assert res.stencil_size == 7

    def test_horizon_divisibility_enforced(self, ou_bundle):
        obs = make_observable_triple(f="zero", c="zero", g="x1")
        with pytest.raises(ValueError, match="multiples of delta"):
            pde_residual(ou_bundle.model, obs, 0.5, [1.0], T=1.0,
                         fd_steps=(0.05, 0.013), delta=1e-2, N=8)


def test_tower_property_on_grid(ou_bundle):
    # u(0, T, x) equals E[ e^{-D_{t*}} u(t*, T - t*, X_{t*}) + source part ]:
    # re-launch estimates from an intermediate grid and compare within 3 CI
    from tamedsde import SeedSpec, TamedSchemeConfig, simulate_ensemble

    obs = make_observable_triple(f="zero", c="one", g="x1")
    m = ou_bundle.model
    T, t_star, delta = 1.0, 0.5, 1e-2
    direct = fk_estimate(m, obs, 0.0, [1.0], T, delta, N=20000, seed=21)
    cfg = TamedSchemeConfig(delta=delta)
    outer = simulate_ensemble(m, "tamed", [1.0], t_star, cfg, observables=obs,
                              N=64, seed=77)
    inner_means = []
    for p in range(outer.n_paths):
        inner = fk_estimate(m, obs, t_star, outer.x[p], T, delta, N=400,
                            seed=1000 + p)
        inner_means.append(
            outer.source_acc[p] + math.exp(-outer.discount_acc[p]) * inner.mean
        )
    inner_means = np.asarray(inner_means)
    relaunched = inner_means.mean()
    ci = 3 * (
        direct.ci_half_width
        + 1.96 * inner_means.std(ddof=1) / math.sqrt(inner_means.size)
    )
    assert abs(relaunched - direct.mean) < ci
