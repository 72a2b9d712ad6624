import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medeq.dispersion import Layer, MediumStack, OscillatorModel, chi_time_kernel
from medeq.errors import GridError
from medeq.lattice import (
    SpatialGrid,
    assemble_H0,
    build_grids,
    cell_models,
    gauss_legendre_grid,
)
from medeq.units import Units

LORENTZ = OscillatorModel.lorentz(1.0, 1.0, 0.1)


def test_spatial_grid_arithmetic():
    g = SpatialGrid(10, 10.0)
    assert g.dx == 1.0
    assert g.x[0] == 0.5
    assert g.n * g.dx == g.length


def test_two_point_rule():
    g = gauss_legendre_grid(0.0, 2.0, 2)
    np.testing.assert_allclose(g.nodes, [1 - 1 / math.sqrt(3), 1 + 1 / math.sqrt(3)], rtol=1e-15)
    np.testing.assert_allclose(g.weights, [1.0, 1.0], rtol=1e-15)


@given(st.floats(0.0, 5.0), st.floats(0.1, 100.0), st.integers(1, 200))
def test_spectral_grid_invariants(lo, width, k):
    g = gauss_legendre_grid(lo, lo + width, k)
    assert g.k == k
    assert np.all(np.diff(g.nodes) > 0) and np.all(g.nodes > lo) and np.all(g.weights > 0)
    assert g.weights.sum() == pytest.approx(width, rel=1e-12)


def test_snap_distance():
    stack = MediumStack((Layer(3.14), Layer(6.86, LORENTZ)))
    _, snaps = cell_models(stack, SpatialGrid(10, 10.0))
    assert snaps[0] == pytest.approx(0.14, abs=1e-12)


def test_build_grids_reports():
    stack = MediumStack.slab(11.0, 2.0, 11.0, LORENTZ)
    grids = build_grids(stack, 96, 64, 40.0)
    assert grids.max_snap < 1e-12
    assert sum(not m.is_vacuum for m in grids.cell_models) == 8
    with pytest.warns(RuntimeWarning, match="below the resonance"):
        low = build_grids(stack, 96, 16, 0.5)
    assert low.warnings


def test_grid_errors():
    with pytest.raises(GridError):
        SpatialGrid(4, 1.0)
    with pytest.raises(GridError):
        SpatialGrid(16, 0.0)
    with pytest.raises(GridError):
        build_grids(MediumStack.uniform(1.0, LORENTZ), 16, 4, 10.0)


def test_constant_annihilated_in_interior():
    h0 = assemble_H0(SpatialGrid(32, 8.0))
    out = h0.matrix @ np.ones(32)
    assert np.max(np.abs(out[1:-1])) < 1e-12
    assert np.max(np.abs(out)) > 0


def test_sine_mode_is_eigenvector():
    h0 = assemble_H0(SpatialGrid(40, 5.0))
    v = h0.mode(1)
    lam = (2 - 2 * math.cos(math.pi * h0.grid.dx / h0.grid.length)) / h0.grid.dx**2
    np.testing.assert_allclose(h0.matrix @ v, lam * v, atol=1e-12)


@pytest.mark.parametrize("n", [8, 17, 96, 200])
def test_spectrum_matches_closed_form(n):
    h0 = assemble_H0(SpatialGrid(n, 3.0), Units(c=1.7))
    ev = np.linalg.eigvalsh(h0.matrix)
    ref = h0.analytic_eigenvalues()
    assert np.max(np.abs(ev - ref)) < 1e-12 * ref.max()
    assert ev.min() >= 0


def test_symmetry_and_banded_form():
    h0 = assemble_H0(SpatialGrid(24, 6.0))
    m = h0.laplacian_sparse.toarray()
    assert np.max(np.abs(m - m.T)) == 0.0
    ab = h0.banded()
    dense = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[0, 1:], -1)
    np.testing.assert_allclose(dense, h0.laplacian, rtol=1e-14)


def test_gradient_adjoint():
    h0 = assemble_H0(SpatialGrid(20, 4.0))
    rng = np.random.default_rng(0)
    e, b = rng.normal(size=20), rng.normal(size=21)
    lhs = (h0.d @ e) @ (h0.grid.face_metric * b)
    rhs = (h0.grid.dx * e) @ (h0.grad_adj @ b)
    assert lhs == pytest.approx(rhs, rel=1e-13)


def _chi_quadrature(k, t=1.0):
    g = gauss_legendre_grid(0.0, 40.0, k, order=4)
    im = LORENTZ.susceptibility(g.nodes).imag
    return (2.0 / math.pi) * g.integrate(im * np.sin(g.nodes * t))


def test_spectral_refinement_order():
    # The tail beyond lambda_max is a K-independent offset; remove it with a
    # very fine reference on the same interval.
    ref = _chi_quadrature(4096)
    errs = [abs(_chi_quadrature(k) - ref) for k in (64, 128, 256)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    # a 4-point Gauss panel rule converges as h^8 once the line is resolved
    assert orders[-1] > 6.0
    chi, _ = chi_time_kernel(LORENTZ, 1.0)
    assert ref == pytest.approx(float(chi), abs=1e-3)


@given(st.integers(8, 64), st.floats(0.5, 20.0))
@settings(max_examples=30)
def test_h0_positive_semidefinite(n, length):
    ev = np.linalg.eigvalsh(assemble_H0(SpatialGrid(n, length)).matrix)
    assert ev.min() > -1e-10 * ev.max()
