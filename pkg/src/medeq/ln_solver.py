"""Frequency-domain Langevin-noise machinery on the lattice.

The Helmholtz operator ``A(w) = H0 - (w/c)^2 diag(eps)`` is tridiagonal; its
inverse divided by ``dx`` is the discrete Green function (a continuum delta
becomes ``delta_ij / dx``). Everything else is built from G: the field
response to noise currents, the Green identity behind the field
commutators, and the regularized equal-time [E, B] kernel.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .dispersion import OscillatorModel
from .errors import MedeqError, PassivityError, SingularOperatorError
from .lattice import DiscreteH0


def _eps_cells(models: Sequence[OscillatorModel], omega: complex, floor: bool = True) -> np.ndarray:
    """Permittivity per cell at real or upper-half-plane frequency.

    For complex ``omega`` the floor continues analytically as ``+i eta``.
    """
    cache: dict[int, complex] = {}
    out = np.empty(len(models), dtype=complex)
    w = complex(omega)
    for i, m in enumerate(models):
        key = id(m)
        if key not in cache:
            eta = m.eta if floor else 0.0
            if w.imag == 0 and w.real < 0:
                eta = -eta
            cache[key] = 1.0 + complex(m.susceptibility(w)) + 1j * eta
        out[i] = cache[key]
    return out


@dataclass(frozen=True)
class HelmholtzOperator:
    """A(w) = H0 - (w/c)^2 diag(eps) in tridiagonal (banded) storage."""

    h0: DiscreteH0
    eps: np.ndarray
    omega: complex

    @property
    def n(self) -> int:
        return self.h0.grid.n

    def banded(self) -> np.ndarray:
        """LAPACK general-banded form with one sub- and one super-diagonal."""
        lap = self.h0.banded()
        k2 = (self.omega / self.h0.units.c) ** 2
        ab = np.zeros((3, self.n), dtype=complex)
        ab[0, 1:] = lap[0, 1:]
        ab[1] = lap[1] - k2 * self.eps
        ab[2, :-1] = lap[0, 1:]
        return ab

    def matrix(self) -> np.ndarray:
        ab = self.banded()
        return np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)

    def hermitian_defect(self) -> float:
        """|A - A^dag + 2i (w/c)^2 diag(eps_I)| for real w (zero by construction)."""
        a = self.matrix()
        k2 = (self.omega / self.h0.units.c) ** 2
        return float(np.max(np.abs(a - a.conj().T + 2j * k2 * np.diag(self.eps.imag))))


@dataclass(frozen=True)
class GreenMatrix:
    """Continuum-normalized Green function: ``G = A^-1 / dx``."""

    G: np.ndarray = field(repr=False)
    omega: complex
    dx: float
    eps: np.ndarray = field(repr=False)
    residual: float
    n: int

    @property
    def imag(self) -> np.ndarray:
        return self.G.imag

    def reciprocity_defect(self) -> float:
        return float(np.linalg.norm(self.G - self.G.T) / np.linalg.norm(self.G))


def assemble_operator(models: Sequence[OscillatorModel], h0: DiscreteH0, omega: complex) -> HelmholtzOperator:
    if len(models) != h0.grid.n:
        raise ValueError(f"{len(models)} cell models for {h0.grid.n} cells")
    return HelmholtzOperator(h0, _eps_cells(models, omega), complex(omega))


def assemble_and_invert(models: Sequence[OscillatorModel], h0: DiscreteH0, omega: complex,
                        tol: float = 1e-11, refine: int = 2) -> GreenMatrix:
    """Solve ``A G dx = I`` and verify the residual.

    Real ``omega`` must be positive and the operator must carry some
    absorption (pole losses or the floor eta). Complex ``omega`` in the upper
    half plane is accepted for contour integration.
    """
    omega = complex(omega)
    if omega.imag == 0 and not omega.real > 0:
        raise ValueError(f"frequency must be positive, got {omega.real!r}")
    if omega.imag < 0:
        raise ValueError("Green function is only assembled in the closed upper half plane")
    op = assemble_operator(models, h0, omega)
    n, dx = op.n, h0.grid.dx
    ab = op.banded()
    eye = np.eye(n, dtype=complex)
    try:
        x = linalg.solve_banded((1, 1), ab, eye, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularOperatorError(f"Helmholtz operator singular at omega = {omega}: increase eta") from exc
    a = op.matrix()
    res = _rel_residual(a, x)
    for _ in range(refine):
        if res < tol:
            break
        x = x + linalg.solve_banded((1, 1), ab, eye - a @ x, check_finite=False)
        res = _rel_residual(a, x)
    if not np.all(np.isfinite(x)) or res >= tol:
        raise SingularOperatorError(
            f"|A G dx - I| = {res:.2e} at omega = {omega}: operator too close to singular; increase eta"
        )
    return GreenMatrix(x / dx, omega, dx, op.eps, res, n)


def _rel_residual(a, x) -> float:
    return float(np.max(np.abs(a @ x - np.eye(a.shape[0]))))


def green_identity_residual(g: GreenMatrix, c: float = 1.0) -> tuple[float, bool]:
    """|Im G - (w/c)^2 G diag(eps_I) G^dag dx| / |Im G| and an applicability flag.

    With no absorption anywhere the identity has nothing to balance (Im G
    then comes from the boundary alone) and the flag is False.
    """
    if g.omega.imag != 0:
        raise ValueError("the identity holds on the real axis only")
    eps_i = g.eps.imag
    if not np.any(eps_i > 0):
        return math.nan, False
    w = g.omega.real
    rhs = (w / c) ** 2 * (g.G * eps_i[None, :]) @ g.G.conj().T * g.dx
    lhs = g.G.imag
    return float(np.linalg.norm(lhs - rhs.real) + np.linalg.norm(rhs.imag)) / float(np.linalg.norm(lhs)), True


def green_identity_scan(models, h0: DiscreteH0, omegas, workers: int = 1) -> np.ndarray:
    """Identity residuals over a frequency list; results ordered by input index."""

    def one(w):
        return green_identity_residual(assemble_and_invert(models, h0, w), h0.units.c)[0]

    if workers <= 1:
        return np.array([one(w) for w in omegas])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(one, omegas)))


@dataclass(frozen=True)
class FieldResponse:
    E: np.ndarray
    B: np.ndarray
    residual: float


def field_response(g: GreenMatrix, j, h0: DiscreteH0) -> FieldResponse:
    """E = i w mu0 dx G j at the centres and B = D E / (i w) on the faces.

    The residual is that of the discrete Ampere law
    ``G_adj B / mu0 + i w eps0 eps E - j = 0`` relative to |j| (Faraday holds
    by construction).
    """
    j = np.asarray(j, dtype=complex)
    if j.shape != (g.n,):
        raise ValueError(f"current has shape {j.shape}, expected ({g.n},)")
    u = h0.units
    w = g.omega
    e = 1j * w * u.mu0 * g.dx * (g.G @ j)
    b = (h0.d @ e) / (1j * w)
    amp = (h0.grad_adj @ b) / u.mu0 + 1j * w * u.eps0 * g.eps * e - j
    nj = np.linalg.norm(j)
    return FieldResponse(e, b, float(np.linalg.norm(amp) / nj) if nj > 0 else float(np.linalg.norm(amp)))


@dataclass(frozen=True)
class NoiseCurrentKernel:
    """(hbar w^2 / pi) eps0 eps_I(x_i, w) per node; multiply by delta_ij / dx and delta / w_omega."""

    values: np.ndarray
    omega: np.ndarray
    dx: float
    normalization: str = "delta_ij/dx * delta(w-w')"


def noise_commutator_kernel(models: Sequence[OscillatorModel], omega, dx: float, hbar: float = 1.0,
                            eps0: float = 1.0, include_floor: bool = False) -> NoiseCurrentKernel:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(omega <= 0):
        raise ValueError("kernel frequencies must be positive")
    rows = []
    for m in models:
        ei = m.susceptibility(omega).imag + (m.eta if include_floor else 0.0)
        if np.any(ei < 0):
            raise PassivityError("negative eps_I: gain media are not supported")
        rows.append(ei)
    eps_i = np.array(rows)
    return NoiseCurrentKernel(hbar * omega[None, :] ** 2 / math.pi * eps0 * eps_i, omega, dx)


def noise_charge(p_n, omega: float | None = None):
    """Noise charge -d/dx . P_n of a transverse field: identically zero.

    Returns ``(rho, j)`` with ``j = -i w P_n`` when ``omega`` is given.
    """
    p_n = np.asarray(p_n)
    rho = np.zeros(p_n.shape, dtype=p_n.dtype if np.iscomplexobj(p_n) else float)
    if omega is None:
        return rho, None
    return rho, -1j * omega * p_n


# ----- equal-time field commutators ----------------------------------------


@dataclass(frozen=True)
class EqualTimeKernel:
    kernel: np.ndarray = field(repr=False)  # [E(x_i), B(x_f)], shape (N, N+1)
    canonical: np.ndarray = field(repr=False)
    medium_part: np.ndarray = field(repr=False)
    deviation: float
    tail_estimate: float
    omega_max: float
    ee_max: float


def canonical_eb_kernel(h0: DiscreteH0, hbar: float = 1.0) -> np.ndarray:
    """i hbar D[f, i] / (eps0 dx): the canonical lattice [E_i, B_f]."""
    u = h0.units
    return 1j * hbar * h0.d.toarray().T / (u.eps0 * h0.grid.dx)


def _omega_g(models, h0, omega):
    """w G(w) with the vacuum counterpart on the same lattice."""
    g_med = assemble_and_invert(models, h0, omega).G
    vac = [OscillatorModel((), m.eta) for m in models]
    g_vac = assemble_and_invert(vac, h0, omega).G
    return omega * (g_med - g_vac)


def equal_time_commutator_EB(models: Sequence[OscillatorModel], h0: DiscreteH0, omega_max: float,
                             nodes: int = 96, hbar: float = 1.0, tail_tol: float = 0.05,
                             workers: int = 1) -> EqualTimeKernel:
    """Regularized [E(x), B(x')] = (2 i hbar mu0 / pi) int_0^wmax w d_x' Im G dw.

    The vacuum lattice integral equals the canonical kernel exactly (each
    cavity mode contributes a delta in w^2), so only the medium-minus-vacuum
    part is integrated numerically. Its real-axis integral is rotated onto the
    imaginary axis plus the arc |w| = wmax, where the integrand is smooth:
    ``int_0^R f = int_0^{iR} f + int_arc f`` for f = w dG analytic in the
    upper half plane. The arc term bounds what is left beyond wmax and is
    reported as the tail estimate.
    """
    if not omega_max > 0:
        raise ValueError("omega_max must be positive")
    u = h0.units
    n = h0.grid.n
    x, wq = np.polynomial.legendre.leggauss(nodes)
    # imaginary axis: w = i y, y in (0, R); graded towards the origin
    s = 0.5 * (x + 1.0)
    y = omega_max * s**2
    dy = omega_max * 2.0 * s * 0.5 * wq
    # arc: w = R e^{i theta}, theta from pi/2 down to 0, graded towards the real axis
    th = 0.5 * math.pi * (1.0 - s**2)
    dth = -0.5 * math.pi * 2.0 * s * 0.5 * wq
    pts = [1j * yy for yy in y] + [omega_max * np.exp(1j * t) for t in th]
    jac = [1j * d for d in dy] + [1j * omega_max * np.exp(1j * t) * d for t, d in zip(th, dth)]

    def one(p):
        return _omega_g(models, h0, p)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(one, pts))
    else:
        vals = [one(p) for p in pts]
    axis = sum(j * v for j, v in zip(jac[:nodes], vals[:nodes]))
    arc = sum(j * v for j, v in zip(jac[nodes:], vals[nodes:]))
    dt = h0.d.toarray().T  # d/dx' on the second index
    pref = 2j * hbar * u.mu0 / math.pi
    medium = pref * ((axis + arc).imag @ dt)
    tail = pref * (arc.imag @ dt)
    can = canonical_eb_kernel(h0, hbar)
    scale = np.max(np.abs(can))
    dev = float(np.max(np.abs(medium)) / scale)
    tail_rel = float(np.max(np.abs(tail)) / scale)
    if tail_rel > tail_tol:
        raise MedeqError(f"medium-minus-vacuum integral not converged: arc term {tail_rel:.2e} > {tail_tol:.2e}")
    # [E, E] from the same representation: the w-integrand is the part of
    # w^2 Im G that is odd under x <-> x', which reciprocity removes
    ee = _ee_kernel(vals, pts, jac, hbar, u.mu0) / scale
    return EqualTimeKernel(can + medium, can, medium, dev, tail_rel, float(omega_max), ee)


def _ee_kernel(vals, pts, jac, hbar, mu0) -> float:
    """max |[E(x_i), E(x_j)]| of the medium-minus-vacuum part."""
    acc = sum(j * p * v for j, p, v in zip(jac, pts, vals))
    k = (hbar * mu0 / math.pi) * acc.imag
    return float(np.max(np.abs(k - k.T)))
