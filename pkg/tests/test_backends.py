"""numba kernels vs the pure-numpy fallback: same semantics, and results
independent of the worker-thread count within a backend."""

import numpy as np
import pytest

from tamedsde import TamedSchemeConfig, make_model, make_observable_triple, simulate_ensemble
from tamedsde.backend import NUMBA_AVAILABLE, resolve_backend
from tamedsde.feynman_kac import fk_gradient
from tamedsde.variational import difference_quotient_error

pytestmark = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def test_env_flag_selects_backend(monkeypatch):
    monkeypatch.setenv("TAMED_SDE_BACKEND", "numpy")
    assert resolve_backend(None) == "numpy"
    monkeypatch.setenv("TAMED_SDE_BACKEND", "numba")
    assert resolve_backend(None) == "numba"
    monkeypatch.setenv("TAMED_SDE_BACKEND", "auto")
    assert resolve_backend(None) in ("numba", "numpy")
    monkeypatch.setenv("TAMED_SDE_BACKEND", "bogus")
    with pytest.raises(ValueError):
        resolve_backend(None)


@pytest.mark.parametrize("scheme", ["tamed", "em"])
@pytest.mark.parametrize("name", ["ou", "dvdp", "gbm", "langevin_vf"])
def test_base_scheme_agreement(name, scheme):
    bundle = make_model(name)
    x0 = np.full(bundle.model.dim, 0.8)
    cfg = TamedSchemeConfig(delta=0.01)
    runs = {}
    for be in ("numpy", "numba"):
        runs[be] = simulate_ensemble(
            bundle.model, scheme, x0, 0.5, cfg, N=256, seed=11, backend=be
        )
    assert np.allclose(runs["numba"].x, runs["numpy"].x, rtol=1e-10, atol=1e-12)
    assert np.array_equal(runs["numba"].diverged, runs["numpy"].diverged)


def test_base_with_observables_agreement():
    bundle = make_model("dvdp")
    obs = make_observable_triple(f="sumsq", c="one", g="x1")
    cfg = TamedSchemeConfig(delta=0.01)
    outs = {}
    for be in ("numpy", "numba"):
        outs[be] = simulate_ensemble(
            bundle.model, "tamed", [1.0, 1.0], 0.5, cfg, observables=obs,
            N=128, seed=3, backend=be,
        )
    for field in ("discount_acc", "source_acc"):
        assert np.allclose(
            getattr(outs["numba"], field), getattr(outs["numpy"], field),
            rtol=1e-10, atol=1e-14,
        )


def test_diffquot_agreement():
    bundle = make_model("dvdp")
    kap = np.array([1.0, 0.0])
    rows = {}
    for be in ("numpy", "numba"):
        rows[be] = difference_quotient_error(
            bundle.model, [1.0, 1.0], kap, [1e-2], T=0.25, delta=0.01,
            N=128, seed=5, backend=be,
        )
    assert np.isclose(rows["numba"][0][1], rows["numpy"][0][1], rtol=1e-9)


def test_fkgrad_agreement():
    bundle = make_model("dvdp")
    obs = make_observable_triple(f="zero", c="zero", g="sumsq")
    grads = {}
    for be in ("numpy", "numba"):
        grads[be] = fk_gradient(
            bundle.model, obs, 0.0, [1.0, 1.0], 0.25, 0.01, N=128, seed=5,
            backend=be,
        )
    assert np.allclose(
        grads["numba"].gradient, grads["numpy"].gradient, rtol=1e-9
    )


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_thread_count_invariance_bitwise(backend):
    bundle = make_model("dvdp")
    cfg = TamedSchemeConfig(delta=0.005)
    outs = []
    for threads in (1, 4):
        outs.append(
            simulate_ensemble(
                bundle.model, "tamed", [1.0, 1.0], 0.5, cfg, N=2500, seed=17,
                threads=threads, backend=backend,
            )
        )
    assert np.array_equal(outs[0].x, outs[1].x)
    assert np.array_equal(outs[0].discount_acc, outs[1].discount_acc)


def test_numba_required_kernels_fallback():
    # lorenz ships no jacobian kernels: diffquot must fall back to numpy
    bundle = make_model("lorenz")
    from tamedsde import engine

    assert engine.pick_backend(bundle.model, None, need=("jac",)) == "numpy"
