"""Model abstraction: derivative validation, domain boxes, invariants."""

import numpy as np
import pytest

from tamedsde import DomainBox, SdeModel, make_model, model_names, validate_derivatives
from tamedsde.randomness import auxiliary_rng


class TestDomainBox:
    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            DomainBox(np.array([0.0, 1.0]), np.array([1.0, 0.5]))

    def test_sampling_and_containment(self, rng):
        box = DomainBox(np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
        pts = box.sample(500, rng)
        assert bool(box.contains(pts).all())
        assert not bool(box.contains(np.array([3.0, 1.0])))


class TestGalleryDerivatives:
    @pytest.mark.parametrize("name", model_names())
    def test_all_callbacks_match_fd_at_100_points(self, name):
        bundle = make_model(name)
        m = bundle.model
        pts = m.domain.sample(100, auxiliary_rng(99, 0))
        rep = validate_derivatives(m, pts)
        assert rep.ok, str(rep)

    @pytest.mark.parametrize("name", model_names())
    def test_time_homogeneous_models_ignore_t(self, name):
        m = make_model(name).model
        assert m.time_homogeneous
        pts = m.domain.sample(20, auxiliary_rng(98, 0))
        for t in (0.0, 0.5, 1.0):
            assert np.array_equal(m.drift(t, pts), m.drift(0.0, pts))
            assert np.array_equal(m.diffusion(t, pts), m.diffusion(0.0, pts))


def test_ou_jacobian_fd_exact_for_linear_model(ou_bundle):
    # constant jacobian: central differences are exact up to rounding
    pts = np.array([[0.3], [-2.0], [4.0]])
    rep = validate_derivatives(ou_bundle.model, pts)
    assert rep.errors["drift_jacobian"] < 1e-11


def test_dvdp_jacobian_fd_example(dvdp_bundle):
    rep = validate_derivatives(dvdp_bundle.model, np.array([[1.0, 1.0]]))
    assert rep.errors["drift_jacobian"] < 1e-6
    assert rep.errors["drift_hessian"] < 1e-6


def test_injected_jacobian_fault_is_detected(dvdp_bundle):
    m = dvdp_bundle.model

    def bad_jac(t, x):
        out = np.asarray(m.drift_jacobian(t, x)).copy()
        out[..., 1, 0] += 1.0
        return out

    broken = SdeModel(
        name="dvdp-broken",
        dim=2,
        drift=m.drift,
        diffusion=m.diffusion,
        drift_jacobian=bad_jac,
        diffusion_jacobian=m.diffusion_jacobian,
        domain=m.domain,
    )
    rep = validate_derivatives(broken, np.array([[1.0, 1.0], [0.2, -0.4]]))
    assert rep.errors["drift_jacobian"] > 0.1


def test_nonfinite_callback_output_names_point_and_callback():
    model = SdeModel(
        name="bad",
        dim=1,
        drift=lambda t, x: np.where(np.abs(x) > 1.0, np.inf, -x),
        diffusion=lambda t, x: np.ones(np.asarray(x).shape[:-1] + (1, 1)),
        drift_jacobian=lambda t, x: -np.ones(np.asarray(x).shape[:-1] + (1, 1)),
        domain=DomainBox(np.array([-5.0]), np.array([5.0])),
    )
    with pytest.raises(FloatingPointError, match="drift"):
        validate_derivatives(model, np.array([[2.0]]))


def test_points_outside_domain_rejected(ou_bundle):
    with pytest.raises(ValueError):
        validate_derivatives(ou_bundle.model, np.array([[50.0]]))


def test_smoothness_two_requires_hessians():
    with pytest.raises(ValueError):
        SdeModel(
            name="x",
            dim=1,
            drift=lambda t, x: -x,
            diffusion=lambda t, x: np.ones(np.asarray(x).shape[:-1] + (1, 1)),
            smoothness=2,
        )


def test_unknown_model_name_lists_options():
    with pytest.raises(ValueError, match="available"):
        make_model("nope")
