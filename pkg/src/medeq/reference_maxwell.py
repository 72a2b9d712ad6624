"""Time-domain Maxwell solver with an explicit memory convolution.

Independent of the auxiliary-field machinery: the polarization current is
built from the closed-form kernel derivative by a trapezoid sum over the
stored electric history, and the fields advance by a staggered leapfrog
(B at half steps). It shares only the spatial difference operators with the
AF solver, so agreement between the two checks the bath representation and
the exact propagator rather than the lattice.

Scheme, with ``Jt = J / eps0 = int_0^t chi'(t - s) E(s) ds``::

    B^{n+1/2} = B^{n-1/2} - dt D E^n
    E^{n+1} = E^n + dt c^2 G B^{n+1/2} - dt (Jt^n + Jt^{n+1}) / 2

where ``G`` approximates ``-d/dx``. The trapezoid weight on the newest
sample makes the update for E^{n+1} a diagonal solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dispersion import chi_time_kernel
from .errors import GridError, StabilityError
from .lattice import DiscreteH0


@dataclass
class ConvolutionState:
    """E at step n, B at step n - 1/2, and the stored medium history."""

    E: np.ndarray
    B_half: np.ndarray
    step: int
    dt: float
    history: np.ndarray = field(repr=False)
    kernel: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)
    j_prev: np.ndarray = field(repr=False)
    t0: float = 0.0

    @property
    def t(self) -> float:
        return self.t0 + self.step * self.dt


class ReferenceMaxwell:
    """Leapfrog integrator for one medium on one grid with a fixed step."""

    def __init__(self, h0: DiscreteH0, cell_models, dt: float, max_steps: int, kernel_tol: float = 1e-10,
                 resolve: float = 0.5):
        grid = h0.grid
        units = h0.units
        if len(cell_models) != grid.n:
            raise GridError(f"{len(cell_models)} cell models for {grid.n} cells")
        if not (dt > 0 and math.isfinite(dt)):
            raise ValueError(f"dt must be positive and finite, got {dt!r}")
        if units.c * dt > grid.dx * (1 + 1e-12):
            raise StabilityError(f"CFL violated: c dt = {units.c * dt:.4g} > dx = {grid.dx:.4g}")
        models = {}
        for i, m in enumerate(cell_models):
            if not m.is_vacuum:
                models.setdefault(m, []).append(i)
        for m in models:
            for p in m.poles:
                if p.plasma > 0 and dt * max(p.resonance, p.damping) > resolve:
                    raise StabilityError(
                        f"dt = {dt:g} does not resolve the pole (w0 = {p.resonance:g}, gamma = {p.damping:g}); "
                        f"need dt * max(w0, gamma) <= {resolve}"
                    )
        self.h0 = h0
        self.units = units
        self.dt = dt
        self.cells = np.array(sorted(i for idx in models.values() for i in idx), dtype=int)
        # history depth: full run, or until every kernel envelope is below kernel_tol
        depth = max_steps + 1
        for m in models:
            gmin = min(p.damping for p in m.poles if p.plasma > 0)
            depth = min(depth, int(math.ceil(2.0 * math.log(1.0 / kernel_tol) / gmin / dt)) + 1)
        self.depth = depth
        tau = np.arange(depth) * dt
        table = np.zeros((self.cells.size, depth))
        for m, idx in models.items():
            _, dchi = chi_time_kernel(m, tau)
            pos = np.searchsorted(self.cells, idx)
            table[pos] = dchi
        self.kernel = table
        self.max_steps = max_steps
        self._d = h0.d
        self._g = h0.grad_adj

    def initial_state(self, E0, B0, t0: float = 0.0) -> ConvolutionState:
        """Start from E(t0), B(t0) with no polarization history before t0."""
        E0 = np.asarray(E0, dtype=float).copy()
        B0 = np.asarray(B0, dtype=float)
        b_half = B0 + 0.5 * self.dt * (self._d @ E0)
        hist = np.zeros((self.cells.size, self.max_steps + 1))
        hist[:, 0] = E0[self.cells]
        return ConvolutionState(E0, b_half, 0, self.dt, hist, self.kernel, self.cells,
                                np.zeros(self.cells.size), t0)

    def step(self, s: ConvolutionState) -> ConvolutionState:
        n = s.step
        if n + 1 > self.max_steps:
            raise GridError(f"history buffer holds {self.max_steps} steps")
        dt, c2 = self.dt, self.units.c**2
        b_new = s.B_half - dt * (self._d @ s.E)
        rhs = s.E + dt * c2 * (self._g @ b_new)
        j_new = np.zeros(self.cells.size)
        if self.cells.size:
            # trapezoid over s = 0..t_{n+1}; newest sample handled implicitly
            m = n + 1
            lo = max(0, m - self.depth + 1)
            lags = m - np.arange(lo, m)  # lags for samples lo..n
            w = np.ones(lags.size)
            if lo == 0:
                w[0] = 0.5
            hist = s.history[:, lo:m]
            j_hist = dt * np.einsum("cj,cj->c", self.kernel[:, lags] * w, hist)
            k0 = self.kernel[:, 0]
            rhs_c = rhs[self.cells] - 0.5 * dt * (s.j_prev + j_hist)
            e_c = rhs_c / (1.0 + 0.25 * dt * dt * k0)
            rhs[self.cells] = e_c
            j_new = j_hist + 0.5 * dt * k0 * e_c
            s.history[:, m] = e_c
        return ConvolutionState(rhs, b_new, n + 1, dt, s.history, s.kernel, s.cells, j_new, s.t0)

    def run(self, s: ConvolutionState, steps: int) -> ConvolutionState:
        for _ in range(steps):
            s = self.step(s)
        return s

    def energy(self, s: ConvolutionState) -> float:
        """Leapfrog invariant 1/2 eps0 |E^n|^2 + 1/2 <B^{n-1/2}, B^{n+1/2}> / mu0 (exact in vacuum)."""
        grid = self.h0.grid
        u = self.units
        b_next = s.B_half - self.dt * (self._d @ s.E)
        e_part = 0.5 * u.eps0 * grid.dx * np.dot(s.E, s.E)
        b_part = 0.5 / u.mu0 * np.dot(grid.face_metric * s.B_half, b_next)
        return float(e_part + b_part)

    def magnetic(self, s: ConvolutionState) -> np.ndarray:
        """B at the integer time level (average of the neighbouring half steps)."""
        return s.B_half - 0.5 * self.dt * (self._d @ s.E)


def convolution_step(solver: ReferenceMaxwell, state: ConvolutionState) -> ConvolutionState:
    return solver.step(state)


def simulate(h0: DiscreteH0, cell_models, E0, B0, t_final: float, dt: float) -> tuple[ReferenceMaxwell, ConvolutionState]:
    steps = int(round(t_final / dt))
    if abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final = {t_final} is not a multiple of dt = {dt}")
    solver = ReferenceMaxwell(h0, cell_models, dt, steps)
    s = solver.run(solver.initial_state(E0, B0), steps)
    return solver, s


def vacuum_standing_wave_frequency(h0: DiscreteH0, mode: int, dt: float) -> float:
    """Leapfrog frequency of Dirichlet mode ``mode``: cos(w dt) = 1 - (c dt)^2 mu / 2."""
    mu = (2.0 - 2.0 * math.cos(mode * math.pi * h0.grid.dx / h0.grid.length)) / h0.grid.dx**2
    return math.acos(1.0 - 0.5 * (h0.units.c * dt) ** 2 * mu) / dt
