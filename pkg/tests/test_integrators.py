"""Scheme mechanics: taming map, thresholds, steps, ensembles, Ito form."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tamedsde import (
    PathState,
    SeedSpec,
    TamedSchemeConfig,
    em_step,
    ito_correction_terms,
    make_model,
    make_observable_triple,
    simulate_ensemble,
    simulate_path,
    stopping_threshold,
    tamed_step,
    taming_map,
    verify_ito_form,
)
from tamedsde.convergence import fit_slope


class TestTamingMap:
    def test_zero(self):
        assert np.array_equal(taming_map(np.zeros(3), 3.0), np.zeros(3))

    def test_unit_vector(self):
        out = taming_map(np.array([1.0, 0.0]), 3.0)
        assert np.allclose(out, [0.5, 0.0])

    def test_large_input(self):
        out = taming_map(np.array([10.0, 0.0]), 3.0)
        assert math.isclose(out[0], 10.0 / 1001.0, rel_tol=1e-15)

    @given(
        z=st.lists(
            st.floats(min_value=-100, max_value=100, allow_nan=False),
            min_size=1,
            max_size=4,
        ),
        qp=st.floats(min_value=1.0, max_value=6.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_norm_bound(self, z, qp):
        z = np.asarray(z)
        out = taming_map(z, qp)
        zn = np.linalg.norm(z)
        on = np.linalg.norm(out)
        bound = min(zn, zn ** (1.0 - qp)) if zn >= 1.0 else zn
        assert on <= bound * (1 + 1e-12) + 1e-300
        if zn >= 1.0 and qp >= 2.0:
            assert on <= 1.0


class TestStoppingThreshold:
    def test_exact_values(self):
        assert math.isclose(stopping_threshold(math.exp(-1.0)), math.e, rel_tol=1e-14)
        assert math.isclose(stopping_threshold(math.exp(-4.0)), math.e**2, rel_tol=1e-14)
        # exp(sqrt(ln 100)) = exp(2.1459660262893476...)
        assert math.isclose(stopping_threshold(0.01), 8.55029706072321, rel_tol=1e-12)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.5, 2.0])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            stopping_threshold(bad)


class TestSchemeConfig:
    def test_qprime_below_three_warns(self):
        with pytest.warns(UserWarning):
            TamedSchemeConfig(delta=0.1, q_prime=2.0)

    def test_qprime_below_one_rejected(self):
        with pytest.raises(ValueError):
            TamedSchemeConfig(delta=0.1, q_prime=0.5)

    def test_delta_domain(self):
        with pytest.raises(ValueError):
            TamedSchemeConfig(delta=1.5)

    def test_threshold_override(self):
        assert TamedSchemeConfig(delta=0.1, threshold=7.0).threshold_value() == 7.0


class TestSingleSteps:
    def test_tamed_step_ou_example(self, ou_bundle):
        cfg = TamedSchemeConfig(delta=0.01)
        st0 = PathState(0.0, np.array([2.0]))
        st1 = tamed_step(st0, np.zeros(1), ou_bundle.model, cfg)
        expected = 2.0 + (-0.02) / (1.0 + 0.02**3)
        assert math.isclose(st1.x[0], expected, rel_tol=1e-15)
        assert math.isclose(st1.x[0], 1.98000016, rel_tol=1e-8)

    def test_tamed_step_stopped_region(self, ou_bundle):
        cfg = TamedSchemeConfig(delta=0.01)   # threshold ~ 8.55
        st0 = PathState(0.0, np.array([10.0]))
        st1 = tamed_step(st0, np.array([0.7]), ou_bundle.model, cfg)
        assert np.array_equal(st1.x, st0.x)

    def test_zero_coefficients_keep_state(self):
        from tamedsde.model_core import SdeModel

        still = SdeModel(
            name="still",
            dim=1,
            drift=lambda t, x: np.zeros_like(np.asarray(x, float)),
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
        )
        cfg = TamedSchemeConfig(delta=0.3)
        st0 = PathState(0.0, np.array([1.7]))
        st1 = tamed_step(st0, np.array([2.2]), still, cfg)
        assert np.array_equal(st1.x, st0.x)

    def test_em_blow_up_recursion(self, cubic_bundle):
        m = cubic_bundle.model
        st0 = PathState(0.0, np.array([3.0]))
        st1 = em_step(st0, np.zeros(1), m, 0.5)
        assert st1.x[0] == -10.5
        st2 = em_step(st1, np.zeros(1), m, 0.5)
        assert st2.x[0] == 568.3125

    def test_em_step_ou(self, ou_bundle):
        st1 = em_step(PathState(0.0, np.array([1.0])), np.zeros(1), ou_bundle.model, 0.1)
        assert math.isclose(st1.x[0], 0.9, rel_tol=1e-15)


class TestEnsembles:
    def test_deterministic_ode_limit(self, ou_bundle):
        # sigma = 0 via em on a drift-only model: terminal within 1e-3 of e^{-1}
        from tamedsde.model_core import SdeModel

        ode = SdeModel(
            name="ou-ode",
            dim=1,
            drift=lambda t, x: -np.asarray(x, float),
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
        )
        cfg = TamedSchemeConfig(delta=1e-4)
        ens = simulate_ensemble(ode, "em", [1.0], 1.0, cfg, N=1, seed=0, backend="numpy")
        assert abs(ens.x[0, 0] - math.exp(-1.0)) < 1e-3

    def test_ou_tamed_mean_within_ci(self, ou_bundle):
        cfg = TamedSchemeConfig(delta=0.01)
        N = 20000
        ens = simulate_ensemble(ou_bundle.model, "tamed", [1.0], 1.0, cfg, N=N, seed=2)
        mean = ens.x[:, 0].mean()
        ci = 3 * ens.x[:, 0].std(ddof=1) / math.sqrt(N)
        assert abs(mean - math.exp(-1.0)) < ci

    def test_source_accumulator_equals_horizon(self, ou_bundle):
        obs = make_observable_triple(f="one", c="zero", g="zero")
        cfg = TamedSchemeConfig(delta=0.01)
        ens = simulate_ensemble(
            ou_bundle.model, "tamed", [1.0], 1.0, cfg, observables=obs, N=4,
            seed=0, backend="numpy",
        )
        assert np.allclose(ens.source_acc, 1.0, rtol=1e-12)

    def test_discount_monotone_when_c_nonnegative(self, ou_bundle):
        obs = make_observable_triple(f="zero", c="sumsq", g="zero")
        cfg = TamedSchemeConfig(delta=0.05)
        traj = simulate_path(
            ou_bundle.model, "tamed", [1.3], 1.0, cfg, obs, seed=SeedSpec(4, 0)
        )
        disc = [s.discount_acc for s in traj]
        assert all(b >= a for a, b in zip(disc, disc[1:]))

    def test_stopped_absorption_exact(self, dvdp_bundle):
        cfg = TamedSchemeConfig(delta=0.01)
        traj = simulate_path(
            dvdp_bundle.model, "tamed", [9.0, 9.0], 0.5, cfg, seed=SeedSpec(1, 0)
        )
        xs = np.array([s.x for s in traj])
        assert np.array_equal(xs[0], xs[-1])
        assert all(np.array_equal(xs[0], row) for row in xs)

    def test_final_partial_step(self, ou_bundle):
        cfg = TamedSchemeConfig(delta=0.3)
        ens = simulate_ensemble(ou_bundle.model, "tamed", [1.0], 1.0, cfg, N=2, seed=0,
                                backend="numpy")
        assert ens.n_steps == 4        # 3 full + remainder 0.1
        assert math.isclose(ens.t_final, 1.0, rel_tol=1e-12)

    def test_engine_matches_reference_stepper(self, dvdp_bundle):
        cfg = TamedSchemeConfig(delta=0.02)
        ens = simulate_ensemble(
            dvdp_bundle.model, "tamed", [1.0, 1.0], 0.5, cfg, N=3, seed=9,
            backend="numpy",
        )
        for p in range(3):
            traj = simulate_path(
                dvdp_bundle.model, "tamed", [1.0, 1.0], 0.5, cfg,
                seed=SeedSpec(9, p),
            )
            assert np.allclose(traj[-1].x, ens.x[p], rtol=1e-12, atol=1e-14)

    def test_diverged_paths_counted_not_dropped(self, cubic_bundle):
        cfg = TamedSchemeConfig(delta=0.5)
        ens = simulate_ensemble(
            cubic_bundle.model, "em", [3.0], 5.0, cfg, N=16, seed=0, backend="numpy"
        )
        assert ens.diverged_count == 16
        assert ens.x.shape == (16, 1)
        assert np.isfinite(ens.x).all()


class TestItoCorrections:
    def test_zero_point(self, ou_bundle):
        b, s = ito_correction_terms(np.array([1.0]), np.zeros(1), ou_bundle.model, 3.0)
        assert np.array_equal(b, np.zeros(1))
        assert np.array_equal(s, np.zeros((1, 1)))

    def test_spec_value_drift_only(self):
        from tamedsde.model_core import SdeModel

        m = SdeModel(
            name="const-drift",
            dim=2,
            drift=lambda t, x: np.broadcast_to(
                np.array([1.0, 0.0]), np.asarray(x).shape
            ),
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (2, 2)),
        )
        b, s = ito_correction_terms(
            np.zeros(2), np.array([1.0, 0.0]), m, 3.0
        )
        assert np.allclose(b, [-1.25, 0.0], atol=1e-15)
        assert np.allclose(s, 0.0)

    def test_zero_coefficients(self):
        from tamedsde.model_core import SdeModel

        m = SdeModel(
            name="null",
            dim=2,
            drift=lambda t, x: np.zeros_like(np.asarray(x, float)),
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (2, 2)),
        )
        b, s = ito_correction_terms(np.zeros(2), np.array([0.3, -0.4]), m, 3.0)
        assert np.allclose(b, 0.0)
        assert np.allclose(s, 0.0)

    def test_taming_hessian_against_fd(self):
        # second central differences of the map itself as the oracle
        from tamedsde.integrators import _taming_hessian

        rng = np.random.default_rng(3)
        h = 1e-4
        for qp in (3.0, 4.0):
            z = rng.normal(size=(5, 3))
            analytic = _taming_hessian(z, qp)
            n = 3
            fd = np.empty_like(analytic)
            for j in range(n):
                for k in range(n):
                    pp = z.copy(); pp[:, j] += h; pp[:, k] += h
                    pm = z.copy(); pm[:, j] += h; pm[:, k] -= h
                    mp = z.copy(); mp[:, j] -= h; mp[:, k] += h
                    mm = z.copy(); mm[:, j] -= h; mm[:, k] -= h
                    fd[..., j, k] = (
                        taming_map(pp, qp)
                        - taming_map(pm, qp)
                        - taming_map(mp, qp)
                        + taming_map(mm, qp)
                    ) / (4 * h * h)
            assert np.allclose(analytic, fd, atol=5e-6)


class TestItoFormVerifier:
    def test_zero_coefficients_identically_zero(self):
        from tamedsde.model_core import SdeModel

        m = SdeModel(
            name="null",
            dim=1,
            drift=lambda t, x: np.zeros_like(np.asarray(x, float)),
            diffusion=lambda t, x: np.zeros(np.asarray(x).shape[:-1] + (1, 1)),
        )
        rows = verify_ito_form(m, np.array([1.0]), 0.05, [1e-3], seed=0, n_paths=64)
        assert rows[0][1] == 0.0
        assert rows[0][2] == 0.0

    def test_ou_first_order_decay(self, ou_bundle):
        rows = verify_ito_form(
            ou_bundle.model, np.array([1.0]), 0.1, [1e-3, 5e-4, 2.5e-4],
            seed=7, n_paths=20000,
        )
        slope, _, _ = fit_slope([(d, m) for d, m, _ in rows])
        assert slope >= 0.9

    def test_ou_small_dt_discrepancy(self, ou_bundle):
        rows = verify_ito_form(
            ou_bundle.model, np.array([1.0]), 0.1, [1e-4], seed=7, n_paths=20000
        )
        assert rows[0][1] < 1e-3

    def test_nested_grids_required(self, ou_bundle):
        with pytest.raises(ValueError):
            verify_ito_form(ou_bundle.model, np.array([1.0]), 0.1, [1e-3, 3e-4],
                            n_paths=8)
