import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medeq.dispersion import (
    LorentzPole,
    MediumStack,
    OscillatorModel,
    bath_from_eps_imag,
    bath_spectral,
    chi_time_kernel,
    epsilon_of_omega,
    kramers_kronig_residual,
)
from medeq.errors import GridError, PassivityError
from medeq.lattice import gauss_legendre_grid, graded_panel_edges

LORENTZ = OscillatorModel.lorentz(1.0, 1.0, 0.1)

pole_params = st.tuples(
    st.floats(0.0, 3.0), st.floats(0.2, 5.0), st.floats(0.01, 0.35)
).map(lambda p: (p[0], p[1], p[2] * p[1]))
real_omega = st.floats(-50.0, 50.0, allow_nan=False)


def test_lorentz_at_resonance():
    assert epsilon_of_omega(LORENTZ, 1.0) == pytest.approx(1.0 + 10.0j, abs=1e-14)


def test_static_value_carries_floor():
    eps = epsilon_of_omega(LORENTZ.with_eta(1e-6), 0.0)
    assert eps == pytest.approx(2.0 + 1e-6j, abs=1e-15)


def test_vacuum_is_one():
    assert epsilon_of_omega(OscillatorModel(), np.linspace(-3, 3, 7)) == pytest.approx(np.ones(7))


def test_rejects_nonfinite_frequency():
    with pytest.raises(ValueError):
        epsilon_of_omega(LORENTZ, np.nan)


def test_invalid_poles_rejected():
    with pytest.raises(ValueError):
        LorentzPole(1.0, 1.0, -0.1)
    with pytest.raises(ValueError):
        OscillatorModel((), eta=-1e-3)


def test_kernel_vanishes_at_origin():
    chi, dchi = chi_time_kernel(OscillatorModel.lorentz(2.0, 1.0, 0.1), 0.0)
    assert chi == 0.0
    assert dchi == pytest.approx(4.0, rel=1e-14)


def test_vacuum_kernel_is_zero():
    chi, dchi = chi_time_kernel(OscillatorModel(), np.linspace(0, 5, 11))
    assert not chi.any() and not dchi.any()


def test_kernel_errors():
    with pytest.raises(ValueError):
        chi_time_kernel(LORENTZ, -1.0)
    with pytest.raises(ValueError, match="overdamped"):
        chi_time_kernel(OscillatorModel.lorentz(1.0, 1.0, 2.5), 1.0)


def test_kernel_matches_fourier_transform():
    # chi(t) = (2/pi) int_0^inf Im chi(w) sin(w t) dw, done by brute quadrature
    w = np.linspace(1e-6, 400.0, 800_001)
    t = np.array([0.5, 2.0, 7.0])
    integrand = LORENTZ.susceptibility(w).imag[None, :] * np.sin(np.outer(t, w))
    ref = 2.0 / np.pi * np.trapezoid(integrand, w, axis=1)
    chi, _ = chi_time_kernel(LORENTZ, t)
    np.testing.assert_allclose(chi, ref, atol=2e-4)


def test_bath_direct_values():
    bath = bath_from_eps_imag([[math.pi]], [2.0])
    assert bath.nu[0, 0] == pytest.approx(2.0)
    assert bath.sigma[0, 0] == pytest.approx(2.0)
    zero = bath_from_eps_imag([[0.0]], [1.0])
    assert zero.nu[0, 0] == 0.0 and zero.sigma[0, 0] == 0.0


def test_bath_of_lorentz_at_resonance():
    bath = bath_spectral([LORENTZ], [1.0])
    assert bath.nu[0, 0] == pytest.approx(10.0 / math.pi, rel=1e-13)
    assert bath.sigma[0, 0] == pytest.approx(math.sqrt(20.0 / math.pi), rel=1e-13)


def test_bath_excludes_floor():
    bath = bath_spectral([OscillatorModel((), eta=0.3)], [0.5, 1.0])
    assert not bath.sigma.any()


def test_bath_rejects_gain_and_bad_nodes():
    with pytest.raises(PassivityError, match="cell 1"):
        bath_from_eps_imag([[0.1], [-0.2]], [1.0])
    with pytest.raises(GridError):
        bath_from_eps_imag([[0.1]], [0.0])


def test_kk_lorentz():
    w = np.linspace(0.0, 50.0, 4096)
    assert kramers_kronig_residual(w, epsilon_of_omega(LORENTZ, w)).residual < 1e-3


def test_kk_vacuum_zero():
    w = np.linspace(0.0, 50.0, 512)
    assert kramers_kronig_residual(w, np.ones_like(w, dtype=complex)).residual == 0.0


def test_kk_refuses_nondecaying():
    w = np.linspace(0.0, 50.0, 512)
    with pytest.raises(GridError, match="too narrow"):
        kramers_kronig_residual(w, 1.0 + 0.5j * np.ones_like(w))


def test_kk_converges_with_grid():
    res = []
    for n in (2048, 4096, 8192):
        w = np.linspace(0.0, 50.0, n)
        res.append(kramers_kronig_residual(w, epsilon_of_omega(LORENTZ, w)).residual)
    assert all(b < a for a, b in zip(res, res[1:]))


@given(pole_params, st.floats(0.0, 1e-3), real_omega)
def test_reality_condition(p, eta, w):
    model = OscillatorModel.lorentz(*p, eta=eta)
    if w == 0.0:
        return
    assert epsilon_of_omega(model, -w) == pytest.approx(np.conj(epsilon_of_omega(model, w)), rel=1e-12, abs=1e-14)


@given(st.lists(pole_params, min_size=1, max_size=3), st.floats(0.0, 60.0))
def test_absorption_nonnegative(params, w):
    model = OscillatorModel(tuple(LorentzPole(*p) for p in params))
    assert epsilon_of_omega(model, w).imag >= 0.0


@given(st.lists(pole_params, min_size=1, max_size=2))
@settings(max_examples=25)
def test_sigma_squared_is_twice_nu(params):
    model = OscillatorModel(tuple(LorentzPole(*p) for p in params))
    bath = bath_spectral([model, OscillatorModel()], np.linspace(0.1, 20.0, 37))
    np.testing.assert_allclose(bath.sigma**2, 2.0 * bath.nu, rtol=4e-16, atol=0)


def _line_grid(p, lam_max, k):
    edges = graded_panel_edges(0.0, lam_max, k // 10, [(p[1], p[2])], grading=0.5)
    return gauss_legendre_grid(0.0, lam_max, k, order=10, edges=edges)


def _bath_kernel(model, grid, t):
    # chi(t) = 2 int nu(lambda) sin(lambda t) / lambda dlambda
    nu = bath_spectral([model], grid.nodes).nu[0]
    return 2.0 * np.sin(np.outer(t, grid.nodes)) @ (grid.weights * nu / grid.nodes)


@pytest.mark.parametrize("p", [(1.0, 1.0, 0.1), (2.0, 1.5, 0.5), (0.7, 3.0, 1.0)])
def test_bath_quadrature_reproduces_kernel(p):
    model = OscillatorModel.lorentz(*p)
    grid = _line_grid(p, 200.0, 4000)
    t = np.linspace(0.0, 20.0 / p[2], 201)
    chi, _ = chi_time_kernel(model, t)
    scale = np.max(np.abs(chi))
    np.testing.assert_allclose(_bath_kernel(model, grid, t), chi, atol=2e-3 * scale)


@given(pole_params.filter(lambda p: p[0] > 0.1))
@settings(max_examples=20, deadline=None)
def test_sum_rule_against_bath(p):
    model = OscillatorModel.lorentz(*p)
    grid = _line_grid(p, 2000.0, 8000)
    nu = bath_spectral([model], grid.nodes).nu[0]
    # the bath misses the slowly decaying 1/lambda^2 tail beyond lambda_max
    tail = 2.0 * p[0] ** 2 * p[2] / (math.pi * 2000.0)
    _, dchi = chi_time_kernel(model, 0.0)
    assert 2.0 * grid.integrate(nu) + tail == pytest.approx(float(dchi), rel=1e-5)


def test_stack_slab_layout():
    stack = MediumStack.slab(11.0, 2.0, 11.0, LORENTZ, eta=1e-6)
    np.testing.assert_allclose(stack.edges, [0, 11, 13, 24])
    assert stack.resonances() == [(1.0, 0.1)]
    assert all(m.eta == 1e-6 for m in stack.models)
