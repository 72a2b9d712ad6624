"""Spatial and spectral discretization.

Electric-type fields live at cell centres ``x_i = (i + 1/2) dx`` and vanish at
the mirror walls through odd ghost values; magnetic-type fields live on the
``N + 1`` cell faces. With this staggering the forward difference ``D`` and
its metric adjoint give a curl-curl operator whose Dirichlet spectrum is
known in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .dispersion import MediumStack, OscillatorModel
from .errors import GridError
from .units import NATURAL, Units


@dataclass(frozen=True)
class SpatialGrid:
    n: int
    length: float

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0):
            raise GridError(f"domain length must be > 0, got {self.length!r}")
        if int(self.n) != self.n or self.n < 8:
            raise GridError(f"spatial node count must be an integer >= 8, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dx

    @property
    def face_metric(self) -> np.ndarray:
        w = np.full(self.n + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


@dataclass(frozen=True)
class SpectralGrid:
    nodes: np.ndarray
    weights: np.ndarray
    lam_min: float
    lam_max: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size == 0:
            raise GridError("spectral nodes and weights must be matching nonempty 1-D arrays")
        if np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
            raise GridError("spectral nodes must be positive and strictly increasing")
        if np.any(weights <= 0):
            raise GridError("spectral weights must be positive")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def k(self) -> int:
        return self.nodes.size

    def integrate(self, values, axis: int = -1):
        return np.tensordot(np.asarray(values), self.weights, axes=([axis], [0]))


def _gl_panels(edges, counts) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = [], []
    for a, b, m in zip(edges[:-1], edges[1:], counts):
        x, w = np.polynomial.legendre.leggauss(int(m))
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * x)
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def gauss_legendre_grid(lam_min: float, lam_max: float, k: int, order: int = 8,
                        edges=None) -> SpectralGrid:
    """Composite Gauss-Legendre rule with ``k`` nodes on [lam_min, lam_max].

    Panels have ``order`` nodes (fewer when ``k < order``); leftover nodes are
    spread one per panel from the left. ``edges`` overrides the uniform panel
    boundaries and must then have one more entry than the panel count.
    """
    if not (0 <= lam_min < lam_max and math.isfinite(lam_max)):
        raise GridError(f"need 0 <= lam_min < lam_max, got [{lam_min}, {lam_max}]")
    if int(k) != k or k < 1:
        raise GridError(f"spectral node count must be a positive integer, got {k!r}")
    k = int(k)
    order = min(order, k)
    panels = max(1, k // order)
    counts = np.full(panels, k // panels)
    counts[: k % panels] += 1
    if edges is None:
        edges = np.linspace(lam_min, lam_max, panels + 1)
    else:
        edges = np.asarray(edges, dtype=float)
        if edges.size != panels + 1:
            raise GridError(f"expected {panels + 1} panel edges, got {edges.size}")
    nodes, weights = _gl_panels(edges, counts)
    return SpectralGrid(nodes, weights, float(lam_min), float(lam_max))


def graded_panel_edges(lam_min: float, lam_max: float, panels: int,
                       resonances, grading: float = 0.3) -> np.ndarray:
    """Panel edges that concentrate nodes near absorption lines.

    The edges are quantiles of a mixture density: uniform on the interval
    with weight ``1 - grading`` plus, with weight ``grading``, Lorentzians of
    half width ``2 gamma`` centred on each resonance ``w0``.
    """
    if not resonances or grading <= 0:
        return np.linspace(lam_min, lam_max, panels + 1)
    lo, hi = lam_min, lam_max
    comps = []
    for w0, gamma in resonances:
        hw = 2.0 * gamma
        a, b = math.atan((lo - w0) / hw), math.atan((hi - w0) / hw)
        comps.append((w0, hw, a, b))

    def cdf(x):
        uni = (x - lo) / (hi - lo)
        lor = np.mean([(np.arctan((x - w0) / hw) - a) / (b - a) for w0, hw, a, b in comps], axis=0)
        return (1.0 - grading) * uni + grading * lor

    fine = np.linspace(lo, hi, 200 * panels + 1)
    levels = np.linspace(0.0, 1.0, panels + 1)
    edges = np.interp(levels, cdf(fine), fine)
    edges[0], edges[-1] = lo, hi
    return edges


@dataclass(frozen=True)
class Grids:
    """Discretization of one medium stack plus its diagnostics."""

    spatial: SpatialGrid
    spectral: SpectralGrid
    cell_models: tuple[OscillatorModel, ...]
    snap_distances: np.ndarray
    warnings: tuple[str, ...] = ()

    def __iter__(self):
        return iter((self.spatial, self.spectral))

    @property
    def max_snap(self) -> float:
        return float(np.max(self.snap_distances)) if self.snap_distances.size else 0.0

    def cell_eps(self, omega) -> np.ndarray:
        """eps(x_i, w) on the cell centres (floor included)."""
        from .dispersion import epsilon_of_omega

        return np.array([epsilon_of_omega(m, omega) for m in self.cell_models])


def cell_models(stack: MediumStack, grid: SpatialGrid) -> tuple[tuple[OscillatorModel, ...], np.ndarray]:
    """Assign each cell the layer containing its centre; return snap distances.

    Interior layer edges effectively move to the nearest cell face; the
    distance moved is reported per edge.
    """
    if abs(stack.length - grid.length) > 1e-12 * max(1.0, grid.length):
        raise GridError(f"stack length {stack.length} differs from grid length {grid.length}")
    edges = stack.edges
    inner = edges[1:-1]
    snapped = np.round(inner / grid.dx) * grid.dx
    idx = np.searchsorted(edges, grid.x, side="right") - 1
    idx = np.clip(idx, 0, len(stack.layers) - 1)
    models = tuple(stack.layers[i].model for i in idx)
    return models, np.abs(snapped - inner)


def build_grids(stack: MediumStack, n: int, k: int, lam_max: float, lam_min: float = 0.0,
                grading: float = 0.3, order: int = 8) -> Grids:
    """Spatial grid over the stack and a graded spectral grid for its bath."""
    if not (math.isfinite(stack.length) and stack.length > 0):
        raise GridError("zero-size domain")
    if k < 8:
        raise GridError(f"spectral node count must be >= 8, got {k}")
    spatial = SpatialGrid(n, stack.length)
    models, snaps = cell_models(stack, spatial)
    resonances = stack.resonances()
    notes = []
    if resonances:
        top = max(w0 for w0, _ in resonances)
        if lam_max < top:
            notes.append(f"lam_max = {lam_max:g} lies below the resonance at {top:g}")
        elif lam_max < 5.0 * top:
            notes.append(f"lam_max = {lam_max:g} is below 5x the highest resonance {top:g}")
    panels = max(1, k // min(order, k))
    edges = graded_panel_edges(lam_min, lam_max, panels, resonances, grading)
    spectral = gauss_legendre_grid(lam_min, lam_max, k, order=order, edges=edges)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return Grids(spatial, spectral, models, snaps, tuple(notes))


@dataclass(frozen=True)
class DiscreteH0:
    """Staggered curl-curl operator on a mirror-bounded grid.

    ``d`` maps centre values to face derivatives, ``grad_adj`` is its adjoint
    under the face metric (an approximation of ``-d/dx``), and
    ``laplacian = grad_adj @ d`` is the symmetric ``-d^2/dx^2``.
    """

    grid: SpatialGrid
    units: Units = NATURAL
    d: sparse.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n, dx = self.grid.n, self.grid.dx
        rows = np.concatenate([np.arange(n), np.arange(1, n + 1)])
        cols = np.concatenate([np.arange(n), np.arange(n)])
        vals = np.concatenate([np.ones(n), -np.ones(n)]) / dx
        d = sparse.coo_matrix((vals, (rows, cols)), shape=(n + 1, n)).tolil()
        d[0, 0] = 2.0 / dx
        d[n, n - 1] = -2.0 / dx
        object.__setattr__(self, "d", d.tocsr())

    @cached_property
    def grad_adj(self) -> sparse.csr_matrix:
        return (self.d.T @ sparse.diags(self.grid.face_metric)).tocsr() / self.grid.dx

    @cached_property
    def laplacian_sparse(self) -> sparse.csr_matrix:
        return (self.grad_adj @ self.d).tocsr()

    @property
    def laplacian(self) -> np.ndarray:
        lap = self.laplacian_sparse.toarray()
        return 0.5 * (lap + lap.T)

    @property
    def matrix(self) -> np.ndarray:
        """c^2 (-d^2/dx^2), the operator acting on E."""
        return self.units.c**2 * self.laplacian

    def banded(self) -> np.ndarray:
        """Laplacian in LAPACK symmetric-banded upper form (2 x N)."""
        n, dx = self.grid.n, self.grid.dx
        ab = np.zeros((2, n))
        ab[0, 1:] = -1.0 / dx**2
        ab[1, :] = 2.0 / dx**2
        ab[1, 0] = ab[1, -1] = 3.0 / dx**2
        return ab

    def analytic_eigenvalues(self) -> np.ndarray:
        """c^2 (2 - 2 cos(j pi dx / L)) / dx^2 for j = 1..N, ascending."""
        j = np.arange(1, self.grid.n + 1)
        dx, length = self.grid.dx, self.grid.length
        return self.units.c**2 * (2.0 - 2.0 * np.cos(j * np.pi * dx / length)) / dx**2

    def mode(self, j: int) -> np.ndarray:
        """Unnormalized Dirichlet eigenvector sin(j pi x / L) at the centres."""
        return np.sin(j * np.pi * self.grid.x / self.grid.length)


def assemble_H0(grid: SpatialGrid, units: Units = NATURAL) -> DiscreteH0:
    return DiscreteH0(grid, units)
