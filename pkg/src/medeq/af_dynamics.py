"""Auxiliary-field dynamics on the staggered lattice.

State layout (flat vector, natural ordering)::

    [F1 (N) | F2 (N*K, cell-major) | F3 (N+1 faces) | F4 (N*K)]

The "electric" block ``e = (F1, F2)`` and the "magnetic" block
``m = (F3, F4)`` are linked by the sparse map ``Q`` (``cD`` on the F1 -> F3
entry, ``sigma`` on F1 -> F4 and ``lambda`` on F2 -> F4)::

    d/dt e = We^-1 Q^T Wm m,        d/dt m = -Q e

with diagonal metrics ``We``, ``Wm`` (``dx`` per cell, ``dx w_k`` per bath
node, half weights on the wall faces). The generator is therefore
antisymmetric in the metric and the quadratic energy is conserved exactly.

Exact propagation uses the singular structure of ``C = Wm^1/2 Q We^-1/2``
restricted to cells that actually couple to the bath; uncoupled bath nodes
are free rotors handled in closed form.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .dispersion import BathSpectral
from .errors import BasisMismatchError, StabilityError
from .lattice import DiscreteH0, SpectralGrid
from .units import NATURAL, Units


@dataclass(frozen=True)
class FieldLayout:
    n: int
    k: int

    @property
    def n_e(self) -> int:
        return self.n + self.n * self.k

    @property
    def n_m(self) -> int:
        return self.n + 1 + self.n * self.k

    @property
    def size(self) -> int:
        return self.n_e + self.n_m

    @property
    def f1(self) -> slice:
        return slice(0, self.n)

    @property
    def f2(self) -> slice:
        return slice(self.n, self.n_e)

    @property
    def f3(self) -> slice:
        return slice(self.n_e, self.n_e + self.n + 1)

    @property
    def f4(self) -> slice:
        return slice(self.n_e + self.n + 1, self.size)

    def aux_index(self, i: int, k: int, which: str) -> int:
        """Flat index of F2 or F4 at cell ``i``, node ``k``."""
        base = {"F2": self.f2.start, "F4": self.f4.start}[which]
        return base + i * self.k + k


def state_metric(dx: float, face_metric: np.ndarray, weights: np.ndarray) -> np.ndarray:
    n = face_metric.size - 1
    bath = np.tile(dx * weights, n)
    return np.concatenate([np.full(n, dx), bath, face_metric, bath])


@dataclass
class FieldState:
    """AF fields at one time: F1 = sqrt(eps0) E, F3 = B / sqrt(mu0), F2/F4 bath fields."""

    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    F4: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.F1 = np.asarray(self.F1, dtype=float)
        self.F2 = np.asarray(self.F2, dtype=float)
        self.F3 = np.asarray(self.F3, dtype=float)
        self.F4 = np.asarray(self.F4, dtype=float)
        n = self.F1.size
        if self.F3.shape != (n + 1,) or self.F2.ndim != 2 or self.F2.shape[0] != n or self.F4.shape != self.F2.shape:
            raise BasisMismatchError(
                f"inconsistent field shapes F1{self.F1.shape} F2{self.F2.shape} F3{self.F3.shape} F4{self.F4.shape}"
            )
        if not all(np.all(np.isfinite(a)) for a in (self.F1, self.F2, self.F3, self.F4)):
            raise ValueError("field state contains non-finite entries")

    @property
    def layout(self) -> FieldLayout:
        return FieldLayout(*self.F2.shape)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.F1, self.F2.ravel(), self.F3, self.F4.ravel()])

    @classmethod
    def from_flat(cls, layout: FieldLayout, y, t: float = 0.0) -> "FieldState":
        y = np.asarray(y, dtype=float)
        if y.shape != (layout.size,):
            raise BasisMismatchError(f"flat state has shape {y.shape}, expected ({layout.size},)")
        shape = (layout.n, layout.k)
        return cls(y[layout.f1], y[layout.f2].reshape(shape), y[layout.f3], y[layout.f4].reshape(shape), t)

    @classmethod
    def zeros(cls, n: int, k: int) -> "FieldState":
        return cls(np.zeros(n), np.zeros((n, k)), np.zeros(n + 1), np.zeros((n, k)))

    def electric(self, units: Units = NATURAL) -> np.ndarray:
        return self.F1 / math.sqrt(units.eps0)

    def magnetic(self, units: Units = NATURAL) -> np.ndarray:
        return self.F3 * math.sqrt(units.mu0)


@dataclass
class _Sector:
    """Singular structure of the bath-coupled block."""

    cells: np.ndarray
    e_idx: np.ndarray
    m_idx: np.ndarray
    sqrt_we: np.ndarray
    sqrt_wm: np.ndarray
    omega: np.ndarray
    v: np.ndarray
    u: np.ndarray
    n0: np.ndarray


class GeneratorN:
    """Generator of the AF equations of motion on a fixed discretization."""

    def __init__(self, bath: BathSpectral, spectral: SpectralGrid, h0: DiscreteH0):
        sigma = np.asarray(bath.sigma, dtype=float)
        n, k = h0.grid.n, spectral.k
        if sigma.shape != (n, k):
            raise BasisMismatchError(f"bath table {sigma.shape} does not match grids ({n}, {k})")
        if not np.allclose(bath.lambdas, spectral.nodes, rtol=0, atol=0):
            raise BasisMismatchError("bath was sampled on different spectral nodes")
        self.bath = bath
        self.spectral = spectral
        self.h0 = h0
        self.units = h0.units
        self.layout = FieldLayout(n, k)
        self.sigma = sigma
        self.lambdas = spectral.nodes
        self.metric = state_metric(h0.grid.dx, h0.grid.face_metric, spectral.weights)
        self._lock = threading.Lock()
        self._sector: _Sector | None = None

    # ----- sparse assembly -------------------------------------------------

    @cached_property
    def coupled_cells(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.sigma > 0, axis=1))

    def q_matrix(self, include_sigma: bool = True) -> sparse.csr_matrix:
        """Sparse map Q from (F1, F2) to minus the time derivative of (F3, F4)."""
        n, k = self.layout.n, self.layout.k
        cd = self.units.c * self.h0.d
        lam = sparse.diags(np.tile(self.lambdas, n))
        if include_sigma:
            sig = sparse.csr_matrix((self.sigma.ravel(), (np.arange(n * k), np.repeat(np.arange(n), k))), shape=(n * k, n))
        else:
            sig = sparse.csr_matrix((n * k, n))
        return sparse.bmat([[cd, None], [sig, lam]], format="csr")

    def _assemble(self, include_sigma: bool) -> sparse.csr_matrix:
        lay = self.layout
        q = self.q_matrix(include_sigma)
        we_inv = sparse.diags(1.0 / self.metric[: lay.n_e])
        wm = sparse.diags(self.metric[lay.n_e:])
        return sparse.bmat([[None, we_inv @ q.T @ wm], [-q, None]], format="csr")

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        return self._assemble(True)

    @cached_property
    def n0(self) -> sparse.csr_matrix:
        """Decoupled part: vacuum Maxwell plus free bath rotors."""
        return self._assemble(False)

    @cached_property
    def n1(self) -> sparse.csr_matrix:
        """Coupling part carrying sigma."""
        return (self.matrix - self.n0).tocsr()

    @cached_property
    def p_aux(self) -> np.ndarray:
        """Diagonal of the projector onto the auxiliary (F2, F4) components."""
        lay = self.layout
        mask = np.zeros(lay.size)
        mask[lay.f2] = 1.0
        mask[lay.f4] = 1.0
        return mask

    def apply(self, y) -> np.ndarray:
        return self.matrix @ y

    def antisymmetry_residual(self, rng=None, samples: int = 4) -> float:
        """max |<N f, g> + <f, N g>| / (|N f| |g|) over random pairs."""
        rng = np.random.default_rng(0) if rng is None else rng
        worst = 0.0
        w = self.metric
        for _ in range(samples):
            f = rng.standard_normal(self.layout.size)
            g = rng.standard_normal(self.layout.size)
            nf, ng = self.apply(f), self.apply(g)
            lhs = np.dot(w * nf, g) + np.dot(w * f, ng)
            scale = math.sqrt(np.dot(w * nf, nf) * np.dot(w * g, g))
            worst = max(worst, abs(lhs) / scale)
        return worst

    def norm_bound(self) -> float:
        """Upper bound on the spectral radius of N (sqrt of norm-1 times norm-inf of C)."""
        lay = self.layout
        se = np.sqrt(self.metric[: lay.n_e])
        sm = np.sqrt(self.metric[lay.n_e:])
        c = sparse.diags(sm) @ self.q_matrix() @ sparse.diags(1.0 / se)
        return math.sqrt(splinalg.norm(c, 1) * splinalg.norm(c, np.inf))

    # ----- energy ----------------------------------------------------------

    def energy(self, y) -> np.ndarray:
        y = np.asarray(y)
        return 0.5 * np.einsum("i,i...,i...->...", self.metric, y, y)

    # ----- exact propagation -----------------------------------------------

    def sector(self) -> _Sector:
        """Eigenstructure of the coupled block, computed once and shared."""
        if self._sector is None:
            with self._lock:
                if self._sector is None:
                    self._sector = self._decompose()
        return self._sector

    def _decompose(self) -> _Sector:
        lay = self.layout
        n, k = lay.n, lay.k
        cells = self.coupled_cells
        bath_rows = (cells[:, None] * k + np.arange(k)[None, :]).ravel()
        e_idx = np.concatenate([np.arange(n), n + bath_rows])
        m_local = np.concatenate([np.arange(n + 1), n + 1 + bath_rows])
        m_idx = lay.n_e + m_local
        q = self.q_matrix()[m_local][:, e_idx]
        sqrt_we = np.sqrt(self.metric[e_idx])
        sqrt_wm = np.sqrt(self.metric[m_idx])
        c = (sparse.diags(sqrt_wm) @ q @ sparse.diags(1.0 / sqrt_we)).toarray()
        hs = c.T @ c
        omega2, v = linalg.eigh(0.5 * (hs + hs.T), driver="evd")
        if np.any(omega2 <= 0):
            raise np.linalg.LinAlgError("coupled block has a non-positive frequency; Q should be injective")
        omega = np.sqrt(omega2)
        u = (c @ v) / omega
        # the one direction of the m block that Q^T annihilates: constant F3
        n0 = np.zeros(m_idx.size)
        n0[: n + 1] = sqrt_wm[: n + 1]
        n0 /= np.linalg.norm(n0)
        return _Sector(cells, e_idx, m_idx, sqrt_we, sqrt_wm, omega, v, u, n0)

    def _free_rotor_mask(self) -> np.ndarray:
        mask = np.ones((self.layout.n, self.layout.k), dtype=bool)
        mask[self.coupled_cells] = False
        return mask

    def propagate(self, y, t: float) -> np.ndarray:
        """exp(N t) y for a vector or a batch of column vectors."""
        if not math.isfinite(t):
            raise ValueError(f"propagation time must be finite, got {t!r}")
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.layout.size:
            raise BasisMismatchError(f"state length {y.shape[0]} != {self.layout.size}")
        if t == 0:
            return y.copy()
        lay = self.layout
        sec = self.sector()
        out = y.copy()
        ue = y[sec.e_idx] * _col(sec.sqrt_we, y)
        um = y[sec.m_idx] * _col(sec.sqrt_wm, y)
        a0 = sec.v.T @ ue
        b0 = sec.u.T @ um
        z0 = sec.n0 @ um
        cs = _col(np.cos(sec.omega * t), a0)
        sn = _col(np.sin(sec.omega * t), a0)
        a = cs * a0 + sn * b0
        b = cs * b0 - sn * a0
        out[sec.e_idx] = (sec.v @ a) / _col(sec.sqrt_we, y)
        out[sec.m_idx] = (sec.u @ b + np.multiply.outer(sec.n0, z0)) / _col(sec.sqrt_wm, y)
        # bath nodes at uncoupled cells: d/dt F2 = lam F4, d/dt F4 = -lam F2
        free = self._free_rotor_mask().ravel()
        if free.any():
            lam = np.tile(self.lambdas, lay.n)[free]
            i2 = lay.f2.start + np.flatnonzero(free)
            i4 = lay.f4.start + np.flatnonzero(free)
            f2, f4 = y[i2], y[i4]
            c, s = _col(np.cos(lam * t), f2), _col(np.sin(lam * t), f2)
            out[i2] = c * f2 + s * f4
            out[i4] = c * f4 - s * f2
        return out

    def propagate_transpose(self, alpha, t: float) -> np.ndarray:
        """exp(N t)^T alpha: transports covectors so that alpha(t).y = alpha.(exp(N t) y)."""
        alpha = np.asarray(alpha)
        w = _col(self.metric, alpha)
        if np.iscomplexobj(alpha):
            return self.propagate_transpose(alpha.real, t) + 1j * self.propagate_transpose(alpha.imag, t)
        return w * self.propagate(alpha / w, -t)

    def frequencies(self) -> np.ndarray:
        """All normal-mode frequencies: coupled sector, free rotors and the static mode."""
        sec = self.sector()
        free = np.tile(self.lambdas, self.layout.n)[self._free_rotor_mask().ravel()]
        return np.sort(np.concatenate([sec.omega, free, [0.0]]))


def _col(v, like):
    return v if np.ndim(like) == 1 else v[:, None]


def assemble_N(bath: BathSpectral, spectral: SpectralGrid, h0: DiscreteH0) -> GeneratorN:
    return GeneratorN(bath, spectral, h0)


def energy(state: FieldState, gen: GeneratorN) -> float:
    """Conserved quadratic energy of the field-bath system."""
    return float(gen.energy(state.flat()))


def em_energy(state: FieldState, gen: GeneratorN) -> float:
    lay = gen.layout
    y = state.flat()
    w = gen.metric
    sl = np.r_[lay.f1, lay.f3]
    return float(0.5 * np.sum(w[sl] * y[sl] ** 2))


def evolve(state: FieldState, gen: GeneratorN, t: float, method: str = "exact", dt: float | None = None,
           drift_tol: float = 1e-6, check_every: int = 100) -> FieldState:
    """Advance ``state`` by ``t`` with the exact propagator or classical RK4.

    RK4 requires ``dt * rho(N) < 2.8`` (imaginary-axis stability of the
    scheme) and aborts with StabilityError when the relative energy drift
    exceeds ``drift_tol``.
    """
    if not math.isfinite(t):
        raise ValueError(f"time must be finite, got {t!r}")
    y0 = state.flat()
    if state.layout != gen.layout:
        raise BasisMismatchError(f"state layout {state.layout} != generator layout {gen.layout}")
    if method == "exact":
        return FieldState.from_flat(gen.layout, gen.propagate(y0, t), state.t + t)
    if method != "rk4":
        raise ValueError(f"unknown method {method!r}")
    if dt is None or not (dt > 0 and math.isfinite(dt)):
        raise ValueError("rk4 needs a positive finite dt")
    steps = max(1, int(round(abs(t) / dt)))
    h = t / steps
    bound = gen.norm_bound()
    if abs(h) * bound >= 2.8:
        raise StabilityError(f"dt * |N| = {abs(h) * bound:.3g} >= 2.8: RK4 unstable; use dt < {2.8 / bound:.3g}")
    y = rk4_integrate(gen.matrix, y0, h, steps, energy=gen.energy, drift_tol=drift_tol, check_every=check_every)
    return FieldState.from_flat(gen.layout, y, state.t + t)


def rk4_integrate(a: sparse.spmatrix, y0, h: float, steps: int, energy=None, drift_tol: float = 1e-6,
                  check_every: int = 100) -> np.ndarray:
    y = np.array(y0, dtype=float)
    e0 = energy(y) if energy is not None else None
    for step in range(1, steps + 1):
        k1 = a @ y
        k2 = a @ (y + 0.5 * h * k1)
        k3 = a @ (y + 0.5 * h * k2)
        k4 = a @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if energy is not None and e0 > 0 and step % check_every == 0:
            drift = abs(energy(y) - e0) / e0
            if not drift <= drift_tol:
                raise StabilityError(f"relative energy drift {drift:.3e} exceeds {drift_tol:.1e} at step {step} (t = {step * h:.6g})")
    return y


# ----- canonical formulation -------------------------------------------------


@dataclass
class PotentialState:
    """Temporal-gauge potentials and momenta; xi1 = sqrt(eps0) A."""

    xi1: np.ndarray
    xi2: np.ndarray
    pi1: np.ndarray
    pi2: np.ndarray

    def __post_init__(self):
        self.xi1, self.pi1 = np.asarray(self.xi1, float), np.asarray(self.pi1, float)
        self.xi2, self.pi2 = np.asarray(self.xi2, float), np.asarray(self.pi2, float)
        n = self.xi1.size
        if self.pi1.shape != (n,) or self.xi2.ndim != 2 or self.xi2.shape[0] != n or self.pi2.shape != self.xi2.shape:
            raise BasisMismatchError("inconsistent potential shapes")
        if not all(np.all(np.isfinite(a)) for a in (self.xi1, self.xi2, self.pi1, self.pi2)):
            raise ValueError("potential state contains non-finite entries")

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate([self.xi1, self.xi2.ravel()])

    @property
    def pi(self) -> np.ndarray:
        return np.concatenate([self.pi1, self.pi2.ravel()])

    @classmethod
    def from_vectors(cls, xi, pi, n: int, k: int) -> "PotentialState":
        return cls(xi[:n], xi[n:].reshape(n, k), pi[:n], pi[n:].reshape(n, k))


class HamiltonianHe:
    """He = We^-1 Q^T Wm Q acting on the potentials (xi1, xi2).

    Its 1-1 block is ``c^2 H0 + sum_k w_k sigma^2``; the shift term is the
    quadrature image of chi'(x, 0), which makes H and the field energy agree
    exactly on the discrete system.
    """

    def __init__(self, gen: GeneratorN):
        self.gen = gen
        self.layout = gen.layout
        lay = gen.layout
        self.metric = gen.metric[: lay.n_e]
        self._wm = gen.metric[lay.n_e:]
        self.q = gen.q_matrix()

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        return (sparse.diags(1.0 / self.metric) @ self.q.T @ sparse.diags(self._wm) @ self.q).tocsr()

    def apply(self, xi) -> np.ndarray:
        return (self.q.T @ (self._wm * (self.q @ xi))) / self.metric

    def shift(self) -> np.ndarray:
        """Quadrature sum_k w_k sigma^2 per cell (the discrete chi'(x, 0))."""
        return self.gen.sigma**2 @ self.gen.spectral.weights

    def flow(self, xi, pi, t: float):
        """Exact Hamiltonian flow xi' = pi, pi' = -He xi."""
        sec = self.gen.sector()
        lay = self.layout
        xi, pi = np.asarray(xi, float), np.asarray(pi, float)
        xo, po = xi.copy(), pi.copy()
        idx = sec.e_idx
        xt = sec.v.T @ (sec.sqrt_we * xi[idx])
        pt = sec.v.T @ (sec.sqrt_we * pi[idx])
        om = sec.omega
        c, s = np.cos(om * t), np.sin(om * t)
        xo[idx] = (sec.v @ (c * xt + s / om * pt)) / sec.sqrt_we
        po[idx] = (sec.v @ (-om * s * xt + c * pt)) / sec.sqrt_we
        free = self.gen._free_rotor_mask().ravel()
        if free.any():
            lam = np.tile(self.gen.lambdas, lay.n)[free]
            j = lay.n + np.flatnonzero(free)
            c, s = np.cos(lam * t), np.sin(lam * t)
            xo[j] = c * xi[j] + s / lam * pi[j]
            po[j] = -lam * s * xi[j] + c * pi[j]
        return xo, po


def assemble_He(gen: GeneratorN) -> HamiltonianHe:
    return HamiltonianHe(gen)


def hamiltonian_and_lagrangian(p: PotentialState, he: HamiltonianHe) -> tuple[float, float]:
    xi, pi = p.xi, p.pi
    if xi.size != he.layout.n_e:
        raise BasisMismatchError(f"potential length {xi.size} != {he.layout.n_e}")
    w = he.metric
    kinetic = 0.5 * np.dot(w * pi, pi)
    potential = 0.5 * np.dot(w * he.apply(xi), xi)
    return float(kinetic + potential), float(kinetic - potential)


def fields_from_potentials(p: PotentialState, gen: GeneratorN, t: float = 0.0) -> FieldState:
    """F1 = -pi1, F2 = -pi2, F3 = c D xi1, F4 = sigma xi1 + lambda xi2."""
    lay = gen.layout
    ym = gen.q_matrix() @ p.xi
    return FieldState(-p.pi1, -p.pi2, ym[: lay.n + 1], ym[lay.n + 1:].reshape(lay.n, lay.k), t)


def potentials_from_fields(state: FieldState, gen: GeneratorN) -> PotentialState:
    """Invert the field map in the gauge that fixes xi1 by the wall conditions.

    xi1 is the face-metric least-squares antiderivative of F3 / c (unique
    because the centre values vanish at the mirrors); the constant-F3 part,
    which no potential can produce, is dropped. xi2 follows from F4.
    """
    h0 = gen.h0
    c = gen.units.c
    rhs = h0.grad_adj @ state.F3 / c
    xi1 = linalg.solveh_banded(h0.banded(), rhs)
    xi2 = (state.F4 - gen.sigma * xi1[:, None]) / gen.lambdas[None, :]
    return PotentialState(xi1, xi2, -state.F1, -state.F2)


@dataclass(frozen=True)
class HeSpectrum:
    omega2: np.ndarray
    vectors: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    free_omega2: np.ndarray = field(repr=False)

    @property
    def all_omega2(self) -> np.ndarray:
        return np.sort(np.concatenate([self.omega2, self.free_omega2]))

    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0


def _clusters(values, tol: float) -> list[np.ndarray]:
    """Index groups of (sorted) values whose neighbours agree to ``tol`` relative."""
    groups, cur = [], [0]
    for j in range(1, values.size):
        if abs(values[j] - values[j - 1]) <= tol * max(abs(values[j]), abs(values[j - 1])):
            cur.append(j)
        else:
            groups.append(np.array(cur))
            cur = [j]
    groups.append(np.array(cur))
    return groups


def he_eigen(he: HamiltonianHe, refine: int = 3, cluster_tol: float = 1e-8) -> HeSpectrum:
    """Eigenpairs of He under the state metric.

    Coupled-sector eigenvectors are returned (in field coordinates over the
    sector's (xi1, xi2) entries) together with the relative residual of the
    first-block equation ``[c^2 H0 + shift] F1 + sum_k w_k lambda_k sigma F2
    = omega^2 F1``. Free bath rotors contribute lambda_k^2 analytically with
    vanishing first block, so their residual is exactly zero.

    A dense solver resolves each vector only to ``eps |He|`` in absolute
    terms, which is too coarse for nearly free bath modes whose first block
    is tiny. ``refine`` steps of shifted inverse iteration on the sparse
    sector matrix restore componentwise accuracy. Near-degenerate pairs
    (relative gap below ``cluster_tol``) are refined together as a block with
    a Rayleigh-Ritz step, since single-vector iteration drifts inside the
    degenerate subspace.
    """
    gen = he.gen
    sec = gen.sector()
    lay = gen.layout
    n = lay.n
    vec = sec.v / sec.sqrt_we[:, None]
    omega2 = sec.omega**2
    if refine:
        hs = he.matrix[sec.e_idx][:, sec.e_idx].tocsc()
        eye = sparse.identity(hs.shape[0], format="csc")
        w = he.metric[sec.e_idx]
        vec = vec.copy()
        omega2 = omega2.copy()
        for block in _clusters(omega2, cluster_tol):
            shift = float(np.mean(omega2[block]))
            try:
                lu = splinalg.splu((hs - shift * eye).tocsc())
            except RuntimeError:
                continue  # exactly singular shift: the vectors are already exact
            x = vec[:, block]
            for _ in range(refine):
                x = lu.solve(x)
                # W-orthonormalize, then Rayleigh-Ritz inside the cluster
                r = np.linalg.cholesky(x.T @ (w[:, None] * x))
                x = linalg.solve_triangular(r, x.T, lower=True).T
                theta, s_vec = np.linalg.eigh(x.T @ (w[:, None] * (hs @ x)))
                x = x @ s_vec
            if not np.all(np.isfinite(x)):
                raise np.linalg.LinAlgError(f"eigenvector refinement failed near omega^2 = {shift:g}")
            vec[:, block] = x
            omega2[block] = theta
    f1 = vec[:n]
    hsec = he.matrix[sec.e_idx][:, sec.e_idx]
    hv = hsec @ vec
    res = np.linalg.norm(hv[:n] - omega2 * f1, axis=0)
    scale = np.linalg.norm(omega2 * f1, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(res == 0, 0.0, res / scale)
    rel[~np.isfinite(rel)] = np.inf
    free = np.tile(gen.lambdas, n)[gen._free_rotor_mask().ravel()] ** 2
    return HeSpectrum(omega2, vec, sec.e_idx, rel, free)
