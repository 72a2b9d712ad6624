"""Linear observables on the canonical phase space and their commutators.

The dynamics is linear, so every operator that appears is a linear
functional of the canonical pair and every commutator is a c-number fixed by
the symplectic form::

    [A, B] = i hbar sum_n (a_xi,n b_pi,n - a_pi,n b_xi,n) / m_n

with ``m_n`` the lattice weight of coordinate ``n`` (``dx`` for xi1/pi1,
``dx w_k`` for xi2/pi2). Discrete deltas are therefore ``delta_ij / dx`` in
space and ``delta_kl / w_k`` in the bath frequency.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .af_dynamics import GeneratorN
from .errors import BasisMismatchError


class CanonicalBasis:
    """Index map for (xi1, xi2, pi1, pi2) over a subset of bath cells.

    ``bath_cells`` defaults to every cell; a subset must contain all cells
    that couple to the field, otherwise the flow would leave the basis.
    """

    def __init__(self, gen: GeneratorN, bath_cells: Sequence[int] | None = None):
        lay = gen.layout
        cells = np.arange(lay.n) if bath_cells is None else np.unique(np.asarray(bath_cells, dtype=int))
        if cells.size and (cells.min() < 0 or cells.max() >= lay.n):
            raise BasisMismatchError("bath cell index out of range")
        missing = np.setdiff1d(gen.coupled_cells, cells)
        if missing.size:
            raise BasisMismatchError(f"basis omits coupled cells {missing.tolist()}")
        self.gen = gen
        self.n, self.k = lay.n, lay.k
        self.bath_cells = cells
        self.hbar = gen.units.hbar
        dx = gen.h0.grid.dx
        w = gen.spectral.weights
        self.n_xi = self.n + cells.size * self.k
        self.weights = np.concatenate([np.full(self.n, dx), np.tile(dx * w, cells.size)])
        # flat indices (into the generator's e block) of the xi coordinates
        bath_rows = (cells[:, None] * self.k + np.arange(self.k)[None, :]).ravel()
        self.e_index = np.concatenate([np.arange(self.n), self.n + bath_rows])
        self._cell_pos = {int(c): p for p, c in enumerate(cells)}

    @property
    def dim(self) -> int:
        return 2 * self.n_xi

    def index(self, name: str, i: int, k: int | None = None) -> int:
        """Position of a canonical coordinate: name in {xi1, xi2, pi1, pi2}."""
        if not 0 <= i < self.n:
            raise IndexError(f"cell {i} out of range")
        if name in ("xi1", "pi1"):
            off = i
        elif name in ("xi2", "pi2"):
            if k is None or not 0 <= k < self.k:
                raise IndexError(f"bath node {k!r} out of range")
            if i not in self._cell_pos:
                raise BasisMismatchError(f"cell {i} carries no bath coordinates in this basis")
            off = self.n + self._cell_pos[i] * self.k + k
        else:
            raise KeyError(name)
        return off + (self.n_xi if name.startswith("pi") else 0)

    def labels(self) -> list[tuple[str, int, int]]:
        out = [("xi1", i, -1) for i in range(self.n)]
        out += [("xi2", int(c), k) for c in self.bath_cells for k in range(self.k)]
        return out + [("pi" + name[2:], i, k) for name, i, k in out]

    def unit(self, name: str, i: int, k: int | None = None) -> "LinearObservable":
        c = np.zeros(self.dim)
        c[self.index(name, i, k)] = 1.0
        return LinearObservable(self, c)

    def compatible(self, other: "CanonicalBasis") -> bool:
        return other is self or (
            other.gen is self.gen and np.array_equal(other.bath_cells, self.bath_cells)
        )

    # ----- field coordinates -> canonical coordinates ----------------------

    def from_field_covectors(self, alpha) -> "LinearObservable":
        """Observable(s) ``alpha . y`` with ``y`` the flat field state.

        Uses F1 = -pi1, F2 = -pi2, (F3, F4) = Q xi. ``alpha`` has the field
        index first and any trailing batch shape.
        """
        gen = self.gen
        lay = gen.layout
        alpha = np.asarray(alpha)
        if alpha.shape[0] != lay.size:
            raise BasisMismatchError(f"field covector length {alpha.shape[0]} != {lay.size}")
        flat = alpha.reshape(lay.size, -1)
        a_e, a_m = flat[: lay.n_e], flat[lay.n_e:]
        xi_full = _qt(gen) @ a_m
        outside = np.ones(lay.n_e, dtype=bool)
        outside[self.e_index] = False
        if np.any(xi_full[outside] != 0) or np.any(a_e[outside] != 0):
            raise BasisMismatchError("observable touches bath cells outside the basis")
        coeffs = np.concatenate([xi_full[self.e_index], -a_e[self.e_index]], axis=0)
        return LinearObservable(self, coeffs.reshape((self.dim,) + alpha.shape[1:]))

    def field_observable(self, which: str, i: int, k: int | None = None) -> "LinearObservable":
        lay = self.gen.layout
        alpha = np.zeros(lay.size)
        if which == "F1":
            alpha[lay.f1.start + i] = 1.0
        elif which == "F3":
            alpha[lay.f3.start + i] = 1.0
        elif which in ("F2", "F4"):
            alpha[lay.aux_index(i, k, which)] = 1.0
        else:
            raise KeyError(which)
        return self.from_field_covectors(alpha)

    def potential_vector(self, xi, pi) -> np.ndarray:
        """Canonical coordinate vector from full-length (xi, pi)."""
        return np.concatenate([np.asarray(xi)[self.e_index], np.asarray(pi)[self.e_index]])


def _qt(gen: GeneratorN):
    cache = getattr(gen, "_qt_cache", None)
    if cache is None:
        cache = gen.q_matrix().T.tocsr()
        gen._qt_cache = cache
    return cache


@dataclass(frozen=True)
class LinearObservable:
    """Covector(s) over a canonical basis; leading axis is the coordinate index."""

    basis: CanonicalBasis
    coeffs: np.ndarray
    offset: complex = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim == 0 or c.shape[0] != self.basis.dim:
            raise BasisMismatchError(f"coefficient length {c.shape[:1]} != basis dimension {self.basis.dim}")
        if not np.all(np.isfinite(c)):
            raise ValueError("observable has non-finite coefficients")
        object.__setattr__(self, "coeffs", c)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    @property
    def xi(self) -> np.ndarray:
        return self.coeffs[: self.basis.n_xi]

    @property
    def pi(self) -> np.ndarray:
        return self.coeffs[self.basis.n_xi:]

    def __getitem__(self, item) -> "LinearObservable":
        if not isinstance(item, tuple):
            item = (item,)
        return LinearObservable(self.basis, self.coeffs[(slice(None),) + item])

    def _check(self, other: "LinearObservable"):
        if not self.basis.compatible(other.basis):
            raise BasisMismatchError("observables live on different canonical bases")

    def __add__(self, other: "LinearObservable") -> "LinearObservable":
        self._check(other)
        return LinearObservable(self.basis, self.coeffs + other.coeffs, self.offset + other.offset)

    def __sub__(self, other: "LinearObservable") -> "LinearObservable":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "LinearObservable":
        scalar = np.asarray(scalar)
        return LinearObservable(self.basis, self.coeffs * scalar, self.offset * complex(scalar) if scalar.ndim == 0 else self.offset)

    __rmul__ = __mul__

    def __neg__(self) -> "LinearObservable":
        return (-1.0) * self

    def dagger(self) -> "LinearObservable":
        """Adjoint: canonical coordinates are Hermitian, so coefficients conjugate."""
        return LinearObservable(self.basis, np.conj(self.coeffs), np.conj(self.offset))

    def value(self, z) -> np.ndarray:
        """Evaluate on classical canonical data ``z = (xi, pi)`` restricted to the basis."""
        return np.tensordot(self.coeffs, np.asarray(z), axes=([0], [0])) + self.offset


def commutator_matrix(a: LinearObservable, b: LinearObservable) -> np.ndarray:
    """[a_I, b_J] for every batch index pair; result has shape a.shape + b.shape."""
    a._check(b)
    basis = a.basis
    n = basis.n_xi
    inv_w = 1.0 / basis.weights
    ca = a.coeffs.reshape(basis.dim, -1)
    cb = b.coeffs.reshape(basis.dim, -1)
    pair = (ca[:n] * inv_w[:, None]).T @ cb[n:] - (ca[n:] * inv_w[:, None]).T @ cb[:n]
    return (1j * basis.hbar * pair).reshape(a.shape + b.shape)


def commutator(a: LinearObservable, b: LinearObservable) -> complex:
    """[a, b] for single observables (bilinear, antisymmetric)."""
    if a.shape or b.shape:
        raise ValueError("commutator() expects single observables; use commutator_matrix for batches")
    a._check(b)
    basis = a.basis
    # elementwise pairing summed in a fixed order: swapping a and b flips
    # every term's sign exactly, so antisymmetry holds bit for bit
    # (complex products are spelled out because SIMD complex multiplication
    # is not guaranteed to be commutative to the last bit)
    def prod(u, v):
        return u.real * v.real - u.imag * v.imag, u.real * v.imag + u.imag * v.real

    xr, xi_ = prod(a.xi, b.pi)
    yr, yi = prod(a.pi, b.xi)
    re = np.sum((xr - yr) / basis.weights)
    im = np.sum((xi_ - yi) / basis.weights)
    return complex(-basis.hbar * im, basis.hbar * re)


def evolve_observable(a: LinearObservable, gen: GeneratorN | None = None, t: float = 0.0) -> LinearObservable:
    """Heisenberg transport: coefficients follow the transpose of the canonical flow.

    With ``Phi(t)`` the flow ``xi' = pi, pi' = -He xi`` and ``Omega`` the
    Poisson matrix, ``Phi Omega Phi^T = Omega`` gives
    ``Phi(t)^T = Omega^-1 Phi(-t) Omega``, so the covector is moved by the
    state propagator run backwards.
    """
    if not math.isfinite(t):
        raise ValueError(f"time must be finite, got {t!r}")
    basis = a.basis
    if gen is not None and gen is not basis.gen:
        raise BasisMismatchError("generator differs from the basis generator")
    if t == 0:
        return a
    n = basis.n_xi
    w = basis.weights
    c = a.coeffs.reshape(basis.dim, -1)
    if np.iscomplexobj(c):
        re = _transpose_flow(basis, c.real, t, n, w)
        im = _transpose_flow(basis, c.imag, t, n, w)
        out = re + 1j * im
    else:
        out = _transpose_flow(basis, c, t, n, w)
    return LinearObservable(basis, out.reshape(a.coeffs.shape), a.offset)


def _transpose_flow(basis, c, t, n, w):
    # Omega (a_xi, a_pi) = (W^-1 a_pi, -W^-1 a_xi)
    xi0 = c[n:] / w[:, None]
    pi0 = -c[:n] / w[:, None]
    xi1, pi1 = canonical_flow(basis, xi0, pi0, -t)
    # Omega^-1 (xi, pi) = (-W pi, W xi)
    return np.concatenate([-w[:, None] * pi1, w[:, None] * xi1], axis=0)


def canonical_flow(basis: CanonicalBasis, xi, pi, t: float):
    """Exact flow of (xi, pi) columns on the basis coordinates."""
    gen = basis.gen
    sec = gen.sector()
    xi = np.asarray(xi, float)
    pi = np.asarray(pi, float)
    xo, po = xi.copy(), pi.copy()
    pos = np.searchsorted(basis.e_index, sec.e_idx)
    sw = sec.sqrt_we[:, None]
    xt = sec.v.T @ (sw * xi[pos])
    pt = sec.v.T @ (sw * pi[pos])
    om = sec.omega[:, None]
    cs, sn = np.cos(om * t), np.sin(om * t)
    xo[pos] = (sec.v @ (cs * xt + sn / om * pt)) / sw
    po[pos] = (sec.v @ (-om * sn * xt + cs * pt)) / sw
    free = np.ones(basis.n_xi, dtype=bool)
    free[pos] = False
    if free.any():
        lam = np.tile(gen.lambdas, basis.bath_cells.size)
        lam = np.concatenate([np.zeros(basis.n), lam])[free][:, None]
        cs, sn = np.cos(lam * t), np.sin(lam * t)
        xo[free] = cs * xi[free] + sn / lam * pi[free]
        po[free] = -lam * sn * xi[free] + cs * pi[free]
    return xo, po


# ----- bosonic modes ---------------------------------------------------------


@dataclass(frozen=True)
class BosonicModes:
    """Annihilators b(x_i, lambda_k) = (F4' - i F2') / sqrt(2 hbar lambda_k).

    ``b`` has batch shape (cells, K); ``f = -b`` is the Langevin-side
    bosonic field.
    """

    b: LinearObservable
    cells: np.ndarray
    lambdas: np.ndarray
    weights: np.ndarray
    dx: float

    @property
    def f(self) -> LinearObservable:
        return -self.b

    def algebra_deviation(self) -> tuple[float, float]:
        """max |[b, b^dag] - delta/(dx w)| * dx w and max |[b, b]| * dx w."""
        bb = commutator_matrix(self.b, self.b.dagger())
        bb0 = commutator_matrix(self.b, self.b)
        nc, k = self.b.shape
        scale = self.dx * self.weights
        target = np.zeros((nc, k, nc, k))
        for c in range(nc):
            target[c, np.arange(k), c, np.arange(k)] = 1.0 / scale
        norm = np.sqrt(scale[None, :, None, None] * scale[None, None, None, :])
        dev = np.max(np.abs(bb - target) * norm)
        dev0 = np.max(np.abs(bb0) * norm)
        return float(dev), float(dev0)


def make_bosonic_modes(f2p: LinearObservable, f4p: LinearObservable, lambdas, weights, dx: float,
                       cells=None, hbar: float = 1.0) -> BosonicModes:
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas <= 0):
        raise ValueError("bath frequencies must be positive")
    if f2p.shape != f4p.shape or f2p.shape[-1] != lambdas.size:
        raise BasisMismatchError(f"primed fields have shapes {f2p.shape}, {f4p.shape}; expected (cells, {lambdas.size})")
    norm = 1.0 / np.sqrt(2.0 * hbar * lambdas)
    b = (f4p + (-1j) * f2p) * norm
    cells = np.arange(f2p.shape[0]) if cells is None else np.asarray(cells)
    return BosonicModes(b, cells, lambdas, np.asarray(weights, dtype=float), dx)


@dataclass(frozen=True)
class QuadraticForm:
    """sum_{i,k} dx w_k hbar lambda_k b^dag b, normally ordered."""

    modes: BosonicModes
    hbar: float

    def coefficients(self) -> np.ndarray:
        return self.modes.dx * self.modes.weights[None, :] * self.hbar * self.modes.lambdas[None, :] * np.ones(self.modes.b.shape)

    def evaluate(self, amplitudes) -> float:
        """Value on classical mode amplitudes b(x_i, lambda_k)."""
        amplitudes = np.asarray(amplitudes)
        if amplitudes.shape != self.modes.b.shape:
            raise ValueError(f"amplitudes {amplitudes.shape} != mode set {self.modes.b.shape}")
        return float(np.sum(self.coefficients() * np.abs(amplitudes) ** 2))

    def evaluate_on(self, z) -> float:
        return self.evaluate(self.modes.b.value(z))


def ln_hamiltonian(modes: BosonicModes, hbar: float = 1.0, expected_cells: int | None = None) -> QuadraticForm:
    if expected_cells is not None and modes.b.shape[0] != expected_cells:
        raise ValueError(f"incomplete mode set: {modes.b.shape[0]} of {expected_cells} cells")
    return QuadraticForm(modes, hbar)


def commutator_table_csv(kernel: np.ndarray, cells, k_count: int | None = None) -> str:
    """CSV ``i,j,k,l,re,im`` of a (cells, K, cells, K) commutator table."""
    kernel = np.asarray(kernel)
    nc, k = kernel.shape[:2]
    cells = np.asarray(cells)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "k", "l", "re", "im"])
    for a in range(nc):
        for kk in range(k):
            for b in range(nc):
                for ll in range(k):
                    v = kernel[a, kk, b, ll]
                    w.writerow([int(cells[a]), int(cells[b]), kk, ll, f"{v.real:.17g}", f"{v.imag:.17g}"])
    return buf.getvalue()
