"""Derivative processes: exactness on linear models, quotient convergence,
sup-moment and Hoelder diagnostics."""

import math

import numpy as np
import pytest

from tamedsde import SeedSpec, VariationalState, make_model, variation_step
from tamedsde.model_core import SdeModel
from tamedsde.variational import (
    difference_quotient_error,
    holder_in_time_probe,
    single_path_variation,
    sup_moment,
    variational_terminal,
)


def _const_model(dim=2):
    return SdeModel(
        name="const",
        dim=dim,
        drift=lambda t, x: np.broadcast_to(np.full(dim, 0.3), np.asarray(x).shape).copy(),
        diffusion=lambda t, x: np.broadcast_to(
            0.5 * np.eye(dim), np.asarray(x).shape[:-1] + (dim, dim)
        ).copy(),
        drift_jacobian=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (dim, dim)),
        diffusion_jacobian=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (dim, dim, dim)),
        drift_hessian=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (dim, dim, dim)),
        diffusion_hessian=lambda t, x: np.zeros(
            np.asarray(x).shape[:-1] + (dim, dim, dim, dim)
        ),
        smoothness=2,
    )


class TestVariationStep:
    def test_initial_state_invariants(self):
        st = VariationalState.initial(np.array([1.0, 2.0]), order=2)
        assert np.array_equal(st.J, np.eye(2))
        assert np.array_equal(st.H, np.zeros((2, 2, 2)))

    def test_constant_coefficients_keep_identity(self):
        m = _const_model()
        st = VariationalState.initial(np.array([0.0, 0.0]), order=2)
        for _ in range(10):
            st = variation_step(st, np.array([0.1, -0.2]), m, 0.05, order=2)
        assert np.array_equal(st.J, np.eye(2))
        assert np.array_equal(st.H, np.zeros((2, 2, 2)))

    def test_order2_requires_hessians(self, ou_bundle):
        st = VariationalState.initial(np.array([1.0]), order=1)
        with pytest.raises(ValueError):
            variation_step(st, np.zeros(1), ou_bundle.model, 0.01, order=2)

    def test_ou_jacobian_deterministic_decay(self, ou_bundle):
        # dJ = -J dt exactly: J(T) = (1 - dt)^n, near e^{-T}
        delta, T = 1e-3, 1.0
        traj = single_path_variation(ou_bundle.model, [1.0], T, delta, seed=SeedSpec(0, 0))
        n = len(traj) - 1
        assert np.allclose(traj[-1].J, (1 - delta) ** n, rtol=1e-12)
        assert abs(traj[-1].J[0, 0] - math.exp(-1.0)) < 5e-4

    def test_linear_sde_jacobian_matches_matrix_exponential(self, ou_bundle):
        # discretisation bias below 1e-8 needs a tiny horizon
        T, delta = 0.01, 1e-6
        out = variational_terminal(ou_bundle.model, [0.7], T, delta, N=4, seed=1)
        J = out["J"][:, 0, 0]
        assert np.all(np.abs(J - math.exp(-T)) < 1e-8)
        assert np.all(J == J[0])   # deterministic across paths

    def test_gbm_jacobian_is_state_ratio_pathwise(self, gbm_bundle):
        out = variational_terminal(gbm_bundle.model, [1.0], 1.0, 1e-3, N=64, seed=2)
        ratio = out["x"][:, 0] / 1.0
        assert np.allclose(out["J"][:, 0, 0], ratio, rtol=1e-10)

    def test_chain_property_product_of_one_step_jacobians(self, dvdp_bundle):
        from tamedsde._engine_numpy import _one_step_matrix

        m = dvdp_bundle.model
        delta = 0.02
        rng = np.random.default_rng(8)
        dWs = rng.normal(0, math.sqrt(delta), size=(25, 2))
        st = VariationalState.initial(np.array([1.0, 1.0]))
        prod = np.eye(2)
        for k in range(25):
            A = _one_step_matrix(m, st.t, st.x[None, :], dWs[k][None, :], delta)[0]
            prod = A @ prod
            st = variation_step(st, dWs[k], m, delta)
        assert np.allclose(st.J, prod, rtol=1e-12)


class TestDifferenceQuotient:
    def test_ou_quotient_exact_for_linear(self, ou_bundle):
        rows = difference_quotient_error(
            ou_bundle.model, [1.0], [1.0], [1e-2, 1e-3], T=0.5, delta=0.01,
            N=64, seed=0, backend="numpy",
        )
        for _, est, _, _ in rows:
            assert est < 1e-12

    def test_dvdp_quotient_decreases_with_r(self, dvdp_bundle):
        rows = difference_quotient_error(
            dvdp_bundle.model, [1.0, 1.0], [1.0, 0.0],
            [1e-2, 5e-3, 2.5e-3, 1e-4], T=1.0, delta=2e-3, N=500, seed=1,
        )
        ests = [e for _, e, _, _ in rows]
        cis = [c for _, c, _, _ in rows]
        inversions = sum(
            1 for a, b, cb in zip(ests, ests[1:], cis[1:]) if b > a + cb
        )
        assert inversions == 0
        assert ests[-1] < 1e-2

    def test_ci_shrinks_with_sqrt_n(self, dvdp_bundle):
        r = [1e-2]
        outider = {}
        for n in (1000, 10000):
            rows = difference_quotient_error(
                dvdp_bundle.model, [1.0, 1.0], [1.0, 0.0], r, T=0.25,
                delta=5e-3, N=n, seed=3,
            )
            outider[n] = rows[0][2]
        ratio = outider[1000] / outider[10000]
        assert 2.5 < ratio < 4.0

    def test_non_unit_direction_rejected(self, ou_bundle):
        with pytest.raises(ValueError):
            difference_quotient_error(
                ou_bundle.model, [1.0], [2.0], [1e-2], T=0.1, delta=0.01, N=8
            )


class TestSupMoment:
    def test_ou_first_variation_sup_is_one(self, ou_bundle):
        res = sup_moment(ou_bundle.model, [1.0], [np.array([1.0])], k=2.0,
                         T=0.5, delta=0.01, N=32, seed=0)
        assert math.isclose(res.estimate, 1.0, rel_tol=1e-12)
        assert res.ci_half_width < 1e-12

    def test_ou_second_variation_zero(self, ou_bundle):
        res = sup_moment(ou_bundle.model, [1.0], [np.array([1.0])] * 2, k=2.0,
                         T=0.5, delta=0.01, N=32, seed=0)
        assert res.estimate == 0.0

    def test_dvdp_stable_under_more_paths(self, dvdp_half_bundle):
        kap = [np.array([1.0, 0.0])]
        small = sup_moment(dvdp_half_bundle.model, [1.0, 1.0], kap, k=2.0,
                           T=1.0, delta=2e-3, N=1000, seed=4)
        big = sup_moment(dvdp_half_bundle.model, [1.0, 1.0], kap, k=2.0,
                         T=1.0, delta=2e-3, N=4000, seed=5)
        assert not small.unreliable and not big.unreliable
        assert abs(small.estimate - big.estimate) < 2 * (
            small.ci_half_width + big.ci_half_width
        )
        assert np.isfinite(small.estimate)


class TestHolderProbe:
    def test_deterministic_flow_slope_close_to_k(self):
        # sigma = 0: increments O(g), so the k-th moment scales like g^k
        ode = SdeModel(
            name="flow",
            dim=1,
            drift=lambda t, x: -np.asarray(x, float) + 1.0,
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
            drift_jacobian=lambda t, x: -np.ones(np.asarray(x).shape[:-1] + (1, 1)),
            diffusion_jacobian=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1, 1)),
        )
        res = holder_in_time_probe(ode, [0.5], order=0, k=2.0,
                                   s_gaps=[2**-k for k in range(4, 9)],
                                   delta=2**-12, N=4, seed=0)
        assert 1.6 < res.slope < 2.4

    def test_ou_diffusion_dominated_slope_one(self, ou_bundle):
        res = holder_in_time_probe(ou_bundle.model, [1.0], order=0, k=2.0,
                                   s_gaps=[2**-k for k in range(4, 9)],
                                   delta=2**-12, N=2000, seed=1)
        assert 0.8 < res.slope < 1.2

    def test_brownian_scaling_factor_four(self):
        # pure diffusion: mean squared sup increment scales ~4x when g does
        bm = SdeModel(
            name="bm",
            dim=1,
            drift=lambda t, x: np.zeros_like(np.asarray(x, float)),
            diffusion=lambda t, x: np.ones(np.asarray(x).shape[:-1] + (1, 1)),
            drift_jacobian=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
            diffusion_jacobian=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1, 1)),
        )
        res = holder_in_time_probe(bm, [0.0], order=0, k=2.0,
                                   s_gaps=[0.05, 0.2], delta=1e-4, N=4000, seed=2)
        ratio = res.rows[1][1] / res.rows[0][1]
        assert 3.2 < ratio < 4.8
