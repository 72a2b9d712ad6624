"""Medium description: Lorentz susceptibilities, permittivity, memory kernels
and the oscillator-bath spectral density that replaces the memory.

The supported family is a sum of underdamped Lorentz poles

    chi(w) = sum_p  wp^2 / (w0^2 - w^2 - i gamma w)

plus a constant absorption floor ``eta`` that only enters Helmholtz
inversions (it regularizes a mirror-bounded grid) and never the bath.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import GridError, PassivityError


@dataclass(frozen=True)
class LorentzPole:
    plasma: float
    resonance: float
    damping: float

    def __post_init__(self):
        if not (math.isfinite(self.plasma) and self.plasma >= 0):
            raise ValueError(f"plasma strength must be >= 0, got {self.plasma!r}")
        if not (math.isfinite(self.resonance) and self.resonance > 0):
            raise ValueError(f"resonance must be > 0, got {self.resonance!r}")
        if not (math.isfinite(self.damping) and self.damping > 0):
            raise ValueError(f"damping must be > 0 (strictly absorbing pole), got {self.damping!r}")

    @property
    def underdamped(self) -> bool:
        return self.damping < 2.0 * self.resonance

    @property
    def ringing_frequency(self) -> float:
        """sqrt(w0^2 - gamma^2/4); only defined for underdamped poles."""
        if not self.underdamped:
            raise ValueError("overdamped pole (gamma >= 2 w0) has no ringing frequency")
        return math.sqrt(self.resonance**2 - 0.25 * self.damping**2)

    def susceptibility(self, omega):
        omega = np.asarray(omega)
        return self.plasma**2 / (self.resonance**2 - omega**2 - 1j * self.damping * omega)


@dataclass(frozen=True)
class OscillatorModel:
    """Local response of one material: Lorentz poles plus absorption floor ``eta``."""

    poles: tuple[LorentzPole, ...] = ()
    eta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple(self.poles))
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"epsilon floor eta must be >= 0, got {self.eta!r}")

    @classmethod
    def lorentz(cls, plasma: float, resonance: float, damping: float, eta: float = 0.0):
        return cls((LorentzPole(plasma, resonance, damping),), eta)

    @property
    def is_vacuum(self) -> bool:
        return all(p.plasma == 0 for p in self.poles)

    def with_eta(self, eta: float) -> "OscillatorModel":
        return OscillatorModel(self.poles, eta)

    def susceptibility(self, omega):
        """Causal pole part chi(w); accepts complex w (upper half plane)."""
        omega = np.asarray(omega)
        out = np.zeros(omega.shape, dtype=complex)
        for pole in self.poles:
            out = out + pole.susceptibility(omega)
        return out

    def static_sum_rule(self) -> float:
        """chi'(t=0) = sum of plasma strengths squared."""
        return float(sum(p.plasma**2 for p in self.poles))


def epsilon_of_omega(model: OscillatorModel, omega):
    """Complex permittivity ``1 + chi(w) + i eta`` for real frequencies.

    The floor enters as ``i eta sign(w)`` (``+i eta`` at w = 0) so that
    eps(-w) = conj(eps(w)) holds away from the origin.
    """
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ValueError("omega must be finite")
    floor = np.where(omega < 0, -model.eta, model.eta)
    return 1.0 + model.susceptibility(omega) + 1j * floor


def chi_time_kernel(model: OscillatorModel, t):
    """Memory kernel chi(t) and its derivative chi'(t) in closed form.

    Per pole ``chi(t) = wp^2/nu exp(-gamma t/2) sin(nu t)`` with
    ``nu = sqrt(w0^2 - gamma^2/4)``; hence chi(0) = 0 and chi'(0) = wp^2.
    """
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0):
        raise ValueError("kernel is defined for finite t >= 0 only")
    chi = np.zeros(t.shape)
    dchi = np.zeros(t.shape)
    for pole in model.poles:
        if not pole.underdamped:
            raise ValueError(
                f"overdamped pole (gamma={pole.damping} >= 2 w0={2 * pole.resonance}) "
                "is outside the supported family"
            )
        nu = pole.ringing_frequency
        amp = pole.plasma**2 / nu
        decay = np.exp(-0.5 * pole.damping * t)
        s, c = np.sin(nu * t), np.cos(nu * t)
        chi = chi + amp * decay * s
        dchi = dchi + amp * decay * (nu * c - 0.5 * pole.damping * s)
    return chi, dchi


@dataclass(frozen=True)
class Layer:
    thickness: float
    model: OscillatorModel = field(default_factory=OscillatorModel)

    def __post_init__(self):
        if not (math.isfinite(self.thickness) and self.thickness > 0):
            raise ValueError(f"layer thickness must be > 0, got {self.thickness!r}")


@dataclass(frozen=True)
class MediumStack:
    """Ordered layers from x = 0 to x = L."""

    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a medium stack needs at least one layer")

    @classmethod
    def slab(cls, left: float, thickness: float, right: float, model: OscillatorModel,
             eta: float = 0.0) -> "MediumStack":
        """Vacuum | dielectric | vacuum, with a uniform floor ``eta`` in every layer."""
        vac = OscillatorModel((), eta)
        return cls((Layer(left, vac), Layer(thickness, model.with_eta(eta)), Layer(right, vac)))

    @classmethod
    def uniform(cls, length: float, model: OscillatorModel) -> "MediumStack":
        return cls((Layer(length, model),))

    @property
    def length(self) -> float:
        return float(sum(layer.thickness for layer in self.layers))

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([layer.thickness for layer in self.layers])])

    @property
    def models(self) -> tuple[OscillatorModel, ...]:
        return tuple(layer.model for layer in self.layers)

    def resonances(self) -> list[tuple[float, float]]:
        """(w0, gamma) of every pole with nonzero strength."""
        out = []
        for model in self.models:
            out.extend((p.resonance, p.damping) for p in model.poles if p.plasma > 0)
        return out


@dataclass(frozen=True)
class BathSpectral:
    """Spectral density nu(x_i, lambda_k) and coupling sigma = sqrt(2 nu)."""

    nu: np.ndarray
    sigma: np.ndarray
    lambdas: np.ndarray

    @property
    def coupled_cells(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.sigma > 0, axis=1))


def bath_from_eps_imag(eps_imag, lambdas) -> BathSpectral:
    """nu = lambda eps_I / pi and sigma = sqrt(2 nu) on an (x, lambda) table."""
    eps_imag = np.atleast_2d(np.asarray(eps_imag, dtype=float))
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size == 0 or np.any(lambdas <= 0):
        raise GridError("spectral nodes must be nonempty and strictly positive")
    if np.any(eps_imag < 0):
        i, k = np.argwhere(eps_imag < 0)[0]
        raise PassivityError(
            f"eps_I = {eps_imag[i, k]:.3e} < 0 at cell {i}, lambda = {lambdas[k]:.6g}: "
            "gain media are not supported"
        )
    nu = lambdas[None, :] * eps_imag / np.pi
    return BathSpectral(nu=nu, sigma=np.sqrt(2.0 * nu), lambdas=lambdas)


def bath_spectral(models: Sequence[OscillatorModel], lambdas) -> BathSpectral:
    """Bath of one model per spatial cell, sampled at the spectral nodes.

    The absorption floor ``eta`` is not part of the bath: the bath only
    represents the causal pole response.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if len(models) == 0:
        raise GridError("spatial grid is empty")
    cache: dict[int, np.ndarray] = {}
    rows = []
    for model in models:
        key = id(model)
        if key not in cache:
            cache[key] = model.susceptibility(lambdas).imag
        rows.append(cache[key])
    return bath_from_eps_imag(np.array(rows), lambdas)


@dataclass(frozen=True)
class KKResult:
    residual: float
    omega: np.ndarray
    reconstructed: np.ndarray
    target: np.ndarray
    band_mask: np.ndarray

    def passed(self, tol: float = 1e-3) -> bool:
        return self.residual < tol


def _kk_transform(omega, eps_imag, targets, order: int = 6):
    """(1/pi) PV int_0^wmax f(w') 2w'/(w'^2 - w^2) dw' with f a cubic spline of eps_I.

    The singularity is removed by subtracting f(w); the subtracted integrand is
    smooth and is integrated by Gauss-Legendre per grid cell, while the
    subtracted term integrates to f(w) ln|(wmax^2 - w^2)/w^2|.
    """
    f = CubicSpline(omega, eps_imag)
    x, wq = np.polynomial.legendre.leggauss(order)
    a, b = omega[:-1], omega[1:]
    nodes = (0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x).ravel()
    weights = (0.5 * (b - a)[:, None] * wq).ravel()
    fn = f(nodes)
    wmax2 = omega[-1] ** 2
    out = np.empty(len(targets))
    for start in range(0, len(targets), 256):
        w = targets[start:start + 256, None]
        fw = f(w)
        smooth = (fn - fw) * 2.0 * nodes / (nodes**2 - w**2)
        out[start:start + 256] = smooth @ weights + (fw * np.log(np.abs(wmax2 - w**2) / w**2)).ravel()
    return out / np.pi


def kramers_kronig_residual(omega, eps, band=None, edge_tol: float = 1e-3) -> KKResult:
    """Rebuild eps_R - 1 from eps_I by principal-value quadrature.

    ``eps_R(w) - 1 = (1/pi) PV int_0^wmax eps_I(w') [1/(w'-w) + 1/(w'+w)] dw'``
    with eps_I interpolated by a cubic spline. The relative L2 deviation is
    reported over ``band`` (default: 2 % to 60 % of the grid maximum).

    Raises GridError when |eps - 1| at the upper edge exceeds ``edge_tol``:
    the truncated tail would then dominate.
    """
    omega = np.asarray(omega, dtype=float)
    eps = np.asarray(eps, dtype=complex)
    if omega.ndim != 1 or omega.shape != eps.shape or omega.size < 8:
        raise GridError("omega and eps must be matching 1-D arrays with >= 8 samples")
    if np.any(np.diff(omega) <= 0) or omega[0] < 0:
        raise GridError("omega grid must be nonnegative and strictly increasing")
    edge = abs(eps[-1] - 1.0)
    if edge > edge_tol:
        raise GridError(
            f"|eps - 1| = {edge:.3e} at omega_max = {omega[-1]:.6g} exceeds {edge_tol:.1e}: "
            "grid too narrow for the response to have decayed"
        )
    wmax = omega[-1]
    lo, hi = band if band is not None else (0.02 * wmax, 0.6 * wmax)
    mask = (omega >= lo) & (omega <= hi) & (omega > 0)
    targets = omega[mask]
    recon = _kk_transform(omega, eps.imag, targets)
    target = eps.real[mask] - 1.0
    denom = np.linalg.norm(target)
    diff = np.linalg.norm(recon - target)
    residual = 0.0 if diff == 0 else diff / denom if denom > 0 else math.inf
    return KKResult(residual=float(residual), omega=targets, reconstructed=recon, target=target, band_mask=mask)
