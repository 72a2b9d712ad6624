import math

import numpy as np
import pytest

from medeq.af_dynamics import evolve
from medeq.dispersion import Layer, MediumStack, OscillatorModel, epsilon_of_omega
from medeq.errors import GridError, StabilityError
from medeq.lattice import SpatialGrid, assemble_H0, cell_models
from medeq.reference_maxwell import (
    ReferenceMaxwell,
    convolution_step,
    simulate,
    vacuum_standing_wave_frequency,
)
from medeq.scenarios import pulse_state, standard_slab


@pytest.fixture(scope="module")
def cavity():
    return assemble_H0(SpatialGrid(32, 8.0))


def test_vacuum_standing_wave(cavity):
    dt = 0.05
    omega = vacuum_standing_wave_frequency(cavity, 1, dt)
    sol = ReferenceMaxwell(cavity, [OscillatorModel()] * 32, dt, 400)
    s = sol.initial_state(cavity.mode(1), np.zeros(33))
    s = sol.run(s, 400)
    np.testing.assert_allclose(s.E, math.cos(omega * s.t) * cavity.mode(1), atol=1e-11)
    # the leapfrog frequency approaches the semi-discrete one as dt -> 0
    exact = math.sqrt(cavity.analytic_eigenvalues()[0])
    assert abs(vacuum_standing_wave_frequency(cavity, 1, 1e-4) - exact) < 1e-8


def test_vacuum_energy_conserved(cavity, rng):
    sol = ReferenceMaxwell(cavity, [OscillatorModel()] * 32, 0.2, 10_000)
    s = sol.initial_state(rng.standard_normal(32), rng.standard_normal(33))
    e0 = sol.energy(s)
    s = sol.run(s, 10_000)
    assert abs(sol.energy(s) - e0) < 1e-10 * e0


def test_cfl_and_resolution_checks(cavity):
    with pytest.raises(StabilityError, match="CFL"):
        ReferenceMaxwell(cavity, [OscillatorModel()] * 32, 0.3, 10)
    fast = [OscillatorModel.lorentz(1.0, 20.0, 0.1)] * 32
    with pytest.raises(StabilityError, match="resolve"):
        ReferenceMaxwell(cavity, fast, 0.1, 10)
    with pytest.raises(GridError):
        ReferenceMaxwell(cavity, [OscillatorModel()] * 31, 0.1, 10)
    sol = ReferenceMaxwell(cavity, [OscillatorModel()] * 32, 0.1, 2)
    s = sol.run(sol.initial_state(np.zeros(32), np.zeros(33)), 2)
    with pytest.raises(GridError, match="history"):
        convolution_step(sol, s)
    with pytest.raises(ValueError):
        simulate(cavity, [OscillatorModel()] * 32, np.zeros(32), np.zeros(33), 1.0, 0.3)


def test_history_depth_covers_kernel():
    h0 = assemble_H0(SpatialGrid(16, 8.0))
    model = OscillatorModel.lorentz(1.0, 1.0, 0.5)
    sol = ReferenceMaxwell(h0, [model] * 16, 0.1, 100_000)
    tail = math.exp(-0.25 * (sol.depth - 1) * 0.1)
    assert tail < 1e-10
    assert sol.depth < 100_000


def test_second_order_against_exact_propagator():
    disc = standard_slab(k=200)
    st0 = pulse_state(disc, 7.0)
    exact = evolve(st0, disc.generator, 10.0).F1
    errs = []
    for dt in (0.01, 0.005):
        _, s = simulate(disc.h0, disc.cell_models, st0.F1, st0.F3, 10.0, dt)
        errs.append(np.linalg.norm(s.E - exact) / np.linalg.norm(exact))
    assert 3.6 < errs[0] / errs[1] < 4.4


def test_carrier_decay_in_uniform_lorentz_medium():
    # vacuum launch region, then a long absorbing half space; the carrier
    # amplitude decays as exp(-Im(sqrt(eps)) w x / c) between two probes
    model = OscillatorModel.lorentz(1.0, 1.0, 0.5)
    grid = SpatialGrid(800, 200.0)
    h0 = assemble_H0(grid)
    models, _ = cell_models(MediumStack((Layer(40.0), Layer(160.0, model))), grid)
    wc, width, x0 = 0.5, 10.0, 20.0
    e0 = np.exp(-(((grid.x - x0) / width) ** 2)) * np.cos(wc * (grid.x - x0))
    b0 = np.exp(-(((grid.faces - x0) / width) ** 2)) * np.cos(wc * (grid.faces - x0))
    dt, steps = 0.2, 1500
    sol = ReferenceMaxwell(h0, models, dt, steps)
    s = sol.initial_state(e0, b0)
    probes = np.array([200, 260])  # x = 50.125 and 65.125
    trace = np.empty((steps, 2))
    times = np.empty(steps)
    for n in range(steps):
        s = sol.step(s)
        trace[n] = s.E[probes]
        times[n] = s.t
    amp = np.abs(np.exp(1j * wc * times) @ trace)
    measured = -math.log(amp[1] / amp[0]) / ((probes[1] - probes[0]) * grid.dx)
    analytic = (np.sqrt(epsilon_of_omega(model, wc)) * wc / h0.units.c).imag
    assert measured == pytest.approx(analytic, rel=0.02)
