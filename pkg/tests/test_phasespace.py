import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medeq.af_dynamics import PotentialState, assemble_He, fields_from_potentials, energy, hamiltonian_and_lagrangian
from medeq.dispersion import MediumStack, OscillatorModel
from medeq.errors import BasisMismatchError
from medeq.phasespace import (
    CanonicalBasis,
    LinearObservable,
    commutator,
    commutator_matrix,
    commutator_table_csv,
    evolve_observable,
    ln_hamiltonian,
    make_bosonic_modes,
)
from medeq.scenarios import Discretization
from medeq.units import Units


@pytest.fixture(scope="module")
def free():
    """sigma = 0 everywhere: a vacuum cavity plus free bath rotors."""
    disc = Discretization(MediumStack.uniform(8.0, OscillatorModel()), n=8, k=8, lam_max=6.0,
                          units=Units(hbar=0.7))
    return disc, CanonicalBasis(disc.generator)


@pytest.fixture(scope="module")
def coupled(small_slab):
    return small_slab, CanonicalBasis(small_slab.generator)


def stacked(basis, which):
    cells = basis.bath_cells
    coeffs = np.stack([np.stack([basis.field_observable(which, int(i), k).coeffs for k in range(basis.k)], axis=-1)
                       for i in cells], axis=-2)
    return LinearObservable(basis, coeffs)


def free_modes(disc, basis):
    gen = disc.generator
    return make_bosonic_modes(stacked(basis, "F2"), stacked(basis, "F4"), gen.lambdas,
                              gen.spectral.weights, disc.h0.grid.dx, basis.bath_cells, hbar=basis.hbar)


def test_basic_commutators(free):
    disc, basis = free
    dx, w, hbar = disc.h0.grid.dx, disc.grids.spectral.weights, basis.hbar
    assert commutator(basis.unit("xi1", 3), basis.unit("pi1", 3)) == pytest.approx(1j * hbar / dx)
    assert commutator(basis.unit("xi1", 3), basis.unit("xi1", 5)) == 0
    assert commutator(basis.unit("xi1", 3), basis.unit("pi1", 4)) == 0
    assert commutator(basis.unit("xi2", 2, 5), basis.unit("pi2", 2, 5)) == pytest.approx(1j * hbar / (dx * w[5]))
    assert commutator(basis.unit("pi2", 2, 5), basis.unit("xi2", 2, 5)) == pytest.approx(-1j * hbar / (dx * w[5]))


def test_basis_index_is_bijective(coupled):
    _, basis = coupled
    labels = basis.labels()
    idx = [basis.index(name, i, None if k < 0 else k) for name, i, k in labels]
    assert sorted(idx) == list(range(basis.dim))
    assert np.all(basis.weights > 0)


def test_basis_must_cover_coupled_cells(small_slab):
    with pytest.raises(BasisMismatchError, match="omits"):
        CanonicalBasis(small_slab.generator, [0, 1])
    reduced = CanonicalBasis(small_slab.generator, small_slab.generator.coupled_cells)
    with pytest.raises(BasisMismatchError):
        reduced.index("xi2", 0, 0)
    full = CanonicalBasis(small_slab.generator)
    with pytest.raises(BasisMismatchError):
        commutator(full.unit("xi1", 0), reduced.unit("pi1", 0))


def _random_obs(basis, rng, complex_=False):
    c = rng.standard_normal(basis.dim)
    if complex_:
        c = c + 1j * rng.standard_normal(basis.dim)
    return LinearObservable(basis, c)


def test_bilinear_and_antisymmetric(coupled, rng):
    _, basis = coupled
    a, b, c = (_random_obs(basis, rng, True) for _ in range(3))
    s = 0.3 - 1.2j
    ab = commutator(a, b)
    assert commutator(b, a) == -ab
    lhs = commutator(a + s * c, b)
    assert lhs == pytest.approx(ab + s * commutator(c, b), rel=1e-13)


def test_evolution_at_zero_time(coupled, rng):
    _, basis = coupled
    a = _random_obs(basis, rng)
    assert evolve_observable(a, basis.gen, 0.0) is a
    with pytest.raises(ValueError):
        evolve_observable(a, basis.gen, float("inf"))


def test_heisenberg_duality(coupled, rng):
    disc, basis = coupled
    he = assemble_He(disc.generator)
    lay = disc.generator.layout
    xi, pi = rng.standard_normal(lay.n_e), rng.standard_normal(lay.n_e)
    a = _random_obs(basis, rng)
    t = 2.7
    xt, pt = he.flow(xi, pi, t)
    lhs = evolve_observable(a, t=t).value(basis.potential_vector(xi, pi))
    rhs = a.value(basis.potential_vector(xt, pt))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_symplectic_invariance(coupled, rng):
    _, basis = coupled
    a = LinearObservable(basis, rng.standard_normal((basis.dim, 100)))
    b = LinearObservable(basis, rng.standard_normal((basis.dim, 100)))
    c0 = np.einsum("ii->i", commutator_matrix(a, b))
    for t in rng.uniform(-40.0, 40.0, 10):
        ct = np.einsum("ii->i", commutator_matrix(evolve_observable(a, t=t), evolve_observable(b, t=t)))
        np.testing.assert_allclose(ct, c0, rtol=1e-10, atol=1e-10 * np.abs(c0).max())


def test_free_mode_phase(free):
    disc, basis = free
    modes = free_modes(disc, basis)
    lam = disc.generator.lambdas
    for t in (0.4, 3.3):
        bt = evolve_observable(modes.b, t=t)
        expected = modes.b.coeffs * np.exp(-1j * lam * t)
        np.testing.assert_allclose(bt.coeffs, expected, atol=1e-12 * np.abs(expected).max())


def test_free_bosonic_algebra(free):
    disc, basis = free
    modes = free_modes(disc, basis)
    dev, dev0 = modes.algebra_deviation()
    assert dev < 1e-13 and dev0 < 1e-13
    w = disc.grids.spectral.weights
    assert commutator(modes.b[2, 3], modes.b.dagger()[2, 3]) == pytest.approx(1.0 / (disc.h0.grid.dx * w[3]), rel=1e-14)
    assert abs(commutator(modes.b[2, 3], modes.b[2, 3])) < 1e-13


def test_langevin_field_is_minus_b(free):
    disc, basis = free
    modes = free_modes(disc, basis)
    np.testing.assert_array_equal(modes.f.coeffs, -modes.b.coeffs)
    # F0' = F4' - i F2' rebuilt from the field observables
    f0 = stacked(basis, "F4") + (-1j) * stacked(basis, "F2")
    expected = -f0.coeffs / np.sqrt(2.0 * basis.hbar * disc.generator.lambdas)
    np.testing.assert_allclose(modes.f.coeffs, expected, rtol=0, atol=1e-15)


def test_mode_construction_errors(free):
    disc, basis = free
    f2 = stacked(basis, "F2")
    with pytest.raises(ValueError):
        make_bosonic_modes(f2, f2, -disc.generator.lambdas, disc.generator.spectral.weights, 1.0)
    with pytest.raises(BasisMismatchError):
        make_bosonic_modes(f2, f2[:, :3], disc.generator.lambdas, disc.generator.spectral.weights, 1.0)


def test_ln_hamiltonian_single_mode(free):
    disc, basis = free
    modes = free_modes(disc, basis)
    form = ln_hamiltonian(modes, hbar=basis.hbar, expected_cells=disc.n)
    amp = np.zeros(modes.b.shape, dtype=complex)
    assert form.evaluate(amp) == 0.0
    amp[4, 6] = 0.5 - 2.0j
    lam, w = disc.generator.lambdas[6], disc.grids.spectral.weights[6]
    assert form.evaluate(amp) == pytest.approx(basis.hbar * lam * abs(amp[4, 6]) ** 2 * disc.h0.grid.dx * w)
    with pytest.raises(ValueError, match="incomplete"):
        ln_hamiltonian(modes, expected_cells=disc.n + 1)


def test_ln_hamiltonian_matches_af_hamiltonian(free, rng):
    disc, basis = free
    gen = disc.generator
    lay = gen.layout
    form = ln_hamiltonian(free_modes(disc, basis), hbar=basis.hbar)
    for _ in range(10):
        p = PotentialState(np.zeros(lay.n), rng.standard_normal((lay.n, lay.k)),
                           np.zeros(lay.n), rng.standard_normal((lay.n, lay.k)))
        h, _ = hamiltonian_and_lagrangian(p, assemble_He(gen))
        assert form.evaluate_on(basis.potential_vector(p.xi, p.pi)) == pytest.approx(h, rel=1e-10)
        assert energy(fields_from_potentials(p, gen), gen) == pytest.approx(h, rel=1e-12)


def test_commutator_csv(free):
    disc, basis = free
    modes = free_modes(disc, basis)
    table = commutator_matrix(modes.b[:2], modes.b.dagger()[:2])
    rows = list(csv.reader(io.StringIO(commutator_table_csv(table, basis.bath_cells[:2]))))
    assert rows[0] == ["i", "j", "k", "l", "re", "im"]
    assert len(rows) == 1 + (2 * disc.k) ** 2
    diag = [r for r in rows[1:] if r[0] == r[1] and r[2] == r[3]]
    assert all(float(r[4]) > 0 and float(r[5]) == 0 for r in diag)


@given(st.floats(-100.0, 100.0), st.integers(0, 7), st.integers(0, 7))
@settings(max_examples=30, deadline=None)
def test_free_algebra_preserved_in_time(t, i, k):
    disc = Discretization(MediumStack.uniform(8.0, OscillatorModel()), n=8, k=8, lam_max=6.0)
    basis = CanonicalBasis(disc.generator)
    modes = free_modes(disc, basis)
    bt = evolve_observable(modes.b[i, k], t=t)
    target = 1.0 / (disc.h0.grid.dx * disc.grids.spectral.weights[k])
    assert commutator(bt, bt.dagger()) == pytest.approx(target, rel=1e-12)
