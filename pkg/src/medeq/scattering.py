"""Asymptotic (primed) bath fields and the bridge to the Langevin picture.

With ``F0 = F4 - i F2`` the bath equations give
``d/dt (e^{i lam t} F0) = -sigma e^{i lam t} F1``, so the asymptotically free
data are

    F0'(x, lam) = lim_{t -> -inf} e^{i lam t} F0(x, lam, t)
                = F0(x, lam, 0) + sigma int_{-inf}^0 e^{i lam s} F1(x, s) ds.

On a mirror-bounded lattice the limit is replaced by a finite horizon T
that must end before radiation leaving the dielectric returns from a wall.
Three routes are provided: sampling the limit, Simpson quadrature of the
integral, and the finite-horizon wave operator. All act on classical states
or, by linearity, on covectors (observables).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .af_dynamics import FieldState, GeneratorN
from .errors import BasisMismatchError, GridError, HorizonError
from .phasespace import CanonicalBasis, LinearObservable, commutator_matrix


# ----- horizon ------------------------------------------------------------


@dataclass(frozen=True)
class Horizon:
    t_min: float
    t_max: float
    left: float
    right: float


def horizon_bounds(gen: GeneratorN) -> Horizon:
    """Admissible horizons for the bath-coupled region.

    Lower bound: light crossing of the coupled region. Upper bound: light
    travel from the region to the nearest wall (no-reflection condition).
    """
    cells = gen.coupled_cells
    grid = gen.h0.grid
    c = gen.units.c
    if cells.size == 0:
        return Horizon(0.0, math.inf, 0.0, grid.length)
    left = cells.min() * grid.dx
    right = (cells.max() + 1) * grid.dx
    if cells.min() == 0 or cells.max() == grid.n - 1:
        raise HorizonError("the dielectric touches a wall; asymptotic fields are undefined on this grid")
    return Horizon((right - left) / c, min(left, grid.length - right) / c, left, right)


def check_horizon(gen: GeneratorN, T: float, factor: float = 1.0) -> Horizon:
    if not (math.isfinite(T) and T > 0):
        raise HorizonError(f"horizon must be positive and finite, got {T!r}")
    hz = horizon_bounds(gen)
    if T < hz.t_min:
        raise HorizonError(f"horizon T = {T:g} is shorter than the light-crossing time {hz.t_min:g} of the dielectric")
    if factor * T >= hz.t_max:
        raise HorizonError(
            f"horizon {factor:g} x T = {factor * T:g} reaches the walls (no-reflection bound {hz.t_max:g})"
        )
    return hz


# ----- primed fields -------------------------------------------------------


@dataclass(frozen=True)
class PrimedFields:
    """F2', F4' on (coupled cells, K): classical arrays or observables, never mixed."""

    F2p: object
    F4p: object
    cells: np.ndarray
    kind: str
    error_estimate: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        obs = [isinstance(v, LinearObservable) for v in (self.F2p, self.F4p)]
        if obs[0] != obs[1]:
            raise TypeError("classical and observable primed fields cannot be mixed")
        kind = "observable" if obs[0] else "classical"
        if self.kind != kind:
            raise TypeError(f"declared kind {self.kind!r} but data are {kind}")

    @property
    def F0p(self):
        if self.kind == "classical":
            return np.asarray(self.F4p) - 1j * np.asarray(self.F2p)
        return self.F4p + (-1j) * self.F2p

    @classmethod
    def from_F0(cls, f0, cells, kind: str, **kw) -> "PrimedFields":
        if kind == "classical":
            return cls(-np.imag(f0), np.real(f0), np.asarray(cells), kind, **kw)
        raise TypeError("use the observable constructors for observable data")


def _aux_f0(gen: GeneratorN, y, cells) -> np.ndarray:
    lay = gen.layout
    y = np.asarray(y)
    f2 = y[lay.f2].reshape((lay.n, lay.k) + y.shape[1:])[cells]
    f4 = y[lay.f4].reshape((lay.n, lay.k) + y.shape[1:])[cells]
    return f4 - 1j * f2


def relative_difference(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


# ----- route 1: sampled limit ----------------------------------------------


def f0_extract_limit(state: FieldState | np.ndarray, gen: GeneratorN, T: float, levels: int = 6,
                     resolution: float = 0.02) -> PrimedFields:
    """e^{i lam t} F0(t) sampled at t_j -> -T and extrapolated to -T.

    Samples sit at ``t_j = -T + h_j`` with ``h_j = h_min 2^(levels-1-j)``,
    where ``h_min * omega_max = resolution``; a Neville table in ``h``
    extrapolates to ``h = 0`` and the change between the last two diagonal
    entries is the reported error estimate.
    """
    y0 = state.flat() if isinstance(state, FieldState) else np.asarray(state, float)
    check_horizon(gen, T)
    cells = gen.coupled_cells
    lam = gen.lambdas
    if cells.size == 0:
        f0 = _aux_f0(gen, y0, np.arange(gen.layout.n))
        return PrimedFields.from_F0(f0, np.arange(gen.layout.n), "classical", error_estimate=0.0)
    omega_max = float(np.max(gen.sector().omega)) + float(lam.max())
    h_min = min(resolution / omega_max, T / 2 ** (levels + 1))
    hs = h_min * 2.0 ** np.arange(levels - 1, -1, -1)
    samples = []
    for h in hs:
        t = -T + h
        yt = gen.propagate(y0, t)
        samples.append(np.exp(1j * lam * t)[None, :] * _aux_f0(gen, yt, cells))
    value, spreads = _neville_zero(hs, samples)
    scale = max(np.max(np.abs(value)), 1e-300)
    if len(spreads) >= 2 and spreads[-1] >= spreads[-2] and spreads[-1] > 1e-12 * scale:
        raise HorizonError(
            f"limit samples are not Cauchy (extrapolation spreads {spreads[-2]:.3e} -> {spreads[-1]:.3e}); "
            "the horizon or sampling is too short"
        )
    return PrimedFields.from_F0(value, cells, "classical", error_estimate=spreads[-1] / scale,
                                meta={"route": "limit", "T": T, "h": hs.tolist()})


def _neville_zero(hs, samples):
    """Polynomial extrapolation to h = 0; returns value and diagonal changes."""
    table = [np.array(s, dtype=complex) for s in samples]
    diag = [table[0]]
    for m in range(1, len(hs)):
        for j in range(len(hs) - 1, m - 1, -1):
            table[j] = table[j] + (table[j] - table[j - 1]) * hs[j] / (hs[j - m] - hs[j])
        diag.append(table[m].copy())
    diag_final = table[-1]
    spreads = [float(np.max(np.abs(diag[m] - diag[m - 1]))) for m in range(1, len(diag))]
    return diag_final, spreads


# ----- route 2: history integral -------------------------------------------


@dataclass(frozen=True)
class F1History:
    times: np.ndarray
    values: np.ndarray  # (len(times), cells)
    cells: np.ndarray


def simpson_weights(m: int, h: float) -> np.ndarray:
    if m < 2 or m % 2:
        raise GridError(f"Simpson rule needs an even number of intervals, got {m}")
    q = np.ones(m + 1)
    q[1:-1:2] = 4.0
    q[2:-1:2] = 2.0
    return q * h / 3.0


def history_grid(T: float, dt: float) -> tuple[np.ndarray, float]:
    m = int(math.ceil(T / dt))
    m += m % 2
    h = T / m
    return -T + h * np.arange(m + 1), h


def sample_f1_history(state: FieldState | np.ndarray, gen: GeneratorN, T: float, dt: float) -> F1History:
    """F1 at the coupled cells on a uniform grid over [-T, 0] (exact propagation)."""
    y0 = state.flat() if isinstance(state, FieldState) else np.asarray(state, float)
    times, _ = history_grid(T, dt)
    cells = gen.coupled_cells
    sec = gen.sector()
    lay = gen.layout
    ue = y0[sec.e_idx] * sec.sqrt_we
    um = y0[sec.m_idx] * sec.sqrt_wm
    a0, b0 = sec.v.T @ ue, sec.u.T @ um
    rows = sec.v[cells] / sec.sqrt_we[cells][:, None]
    om = sec.omega[None, :]
    tt = times[:, None]
    coef = np.cos(om * tt) * a0[None, :] + np.sin(om * tt) * b0[None, :]
    return F1History(times, coef @ rows.T, cells)


def f0_extract_integral(history: F1History, gen: GeneratorN, state0: FieldState | np.ndarray) -> PrimedFields:
    """F0' = F0(0) + sigma sum_j q_j e^{i lam s_j} F1(s_j) with Simpson weights q_j."""
    y0 = state0.flat() if isinstance(state0, FieldState) else np.asarray(state0, float)
    times = np.asarray(history.times)
    h = times[1] - times[0]
    if not np.allclose(np.diff(times), h, rtol=1e-9, atol=0) or abs(times[-1]) > 1e-9 * max(1.0, abs(times[0])):
        raise GridError("history must be sampled uniformly and end at t = 0")
    lam = gen.lambdas
    if h * lam.max() >= math.pi:
        raise GridError(f"history step {h:g} under-resolves lam_max = {lam.max():g} (need dt * lam_max < pi)")
    q = simpson_weights(times.size - 1, h)
    phase = q[:, None] * np.exp(1j * np.outer(times, lam))  # (M+1, K)
    integral = history.values.T @ phase  # (cells, K)
    sigma = gen.sigma[history.cells]
    f0 = _aux_f0(gen, y0, history.cells) + sigma * integral
    return PrimedFields.from_F0(f0, history.cells, "classical",
                                meta={"route": "integral", "T": -float(times[0]), "dt": float(h)})


def simpson_exp_sum(theta, T: float, m: int) -> np.ndarray:
    """sum_j q_j exp(i theta s_j) on s_j = -T + j h, closed form via geometric sums."""
    theta = np.asarray(theta, dtype=float)
    h = T / m
    half = m // 2
    phi = 2.0 * theta * h

    def geom(n):
        s = np.sin(0.5 * phi)
        small = np.abs(s) < 1e-300
        ratio = np.where(small, float(n), np.sin(0.5 * n * phi) / np.where(small, 1.0, s))
        return np.exp(0.5j * (n - 1) * phi) * ratio

    even = geom(half + 1)
    odd = np.exp(1j * theta * h) * geom(half)
    total = 2.0 * even + 4.0 * odd - 1.0 - np.exp(1j * theta * m * h)
    return (h / 3.0) * np.exp(-1j * theta * T) * total


# ----- observable-valued extraction ----------------------------------------


def _f0_covectors_integral(gen: GeneratorN, T: float, dt: float) -> np.ndarray:
    """Field covectors of F0'(i, k) at the coupled cells by the Simpson route.

    Returns a complex array (state size, cells, K).
    """
    lay = gen.layout
    sec = gen.sector()
    cells = gen.coupled_cells
    lam = gen.lambdas
    _, h = history_grid(T, dt)
    m = int(round(T / h))
    if h * lam.max() >= math.pi:
        raise GridError(f"history step {h:g} under-resolves lam_max = {lam.max():g}")
    om = sec.omega
    plus = simpson_exp_sum(lam[None, :] + om[:, None], T, m)
    minus = simpson_exp_sum(lam[None, :] - om[:, None], T, m)
    c_cos = 0.5 * (plus + minus)  # (modes, K)
    c_sin = (plus - minus) / 2j
    rows = sec.v[cells] / sec.sqrt_we[cells][:, None]  # (cells, modes)
    sigma = gen.sigma[cells]  # (cells, K)
    out = np.zeros((lay.size, cells.size, lam.size), dtype=complex)
    # covector over u_e is V (c_cos * row) and over u_m is U (c_sin * row); u = sqrt(W) y
    ce = np.einsum("mk,cm->mck", c_cos, rows) * sigma[None]
    cm = np.einsum("mk,cm->mck", c_sin, rows) * sigma[None]
    out[sec.e_idx] = sec.sqrt_we[:, None, None] * np.tensordot(sec.v, ce, axes=([1], [0]))
    out[sec.m_idx] = sec.sqrt_wm[:, None, None] * np.tensordot(sec.u, cm, axes=([1], [0]))
    for a, i in enumerate(cells):
        for k in range(lam.size):
            out[lay.aux_index(i, k, "F4"), a, k] += 1.0
            out[lay.aux_index(i, k, "F2"), a, k] -= 1j
    return out


def _primed_observables(basis: CanonicalBasis, cov: np.ndarray, cells, route: str, **meta) -> PrimedFields:
    obs = basis.from_field_covectors(cov)
    # F0' = F4' - i F2' with real F2', F4' observables
    f4 = LinearObservable(basis, obs.coeffs.real.copy())
    f2 = LinearObservable(basis, -obs.coeffs.imag.copy())
    return PrimedFields(f2, f4, np.asarray(cells), "observable", meta={"route": route, **meta})


def primed_observables_integral(basis: CanonicalBasis, T: float, dt: float) -> PrimedFields:
    """Observable F2', F4' from the Simpson-route extraction map."""
    gen = basis.gen
    check_horizon(gen, T)
    cov = _f0_covectors_integral(gen, T, dt)
    return _primed_observables(basis, cov, gen.coupled_cells, "integral", T=T, dt=dt)


def primed_observables_moller(basis: CanonicalBasis, T: float) -> PrimedFields:
    """Observable F2', F4' as rows of the past wave operator."""
    gen = basis.gen
    mo = moller(gen, "past", T)
    cov = mo.f0_covectors()
    return _primed_observables(basis, cov, gen.coupled_cells, "moller", T=T)


# ----- wave operators ------------------------------------------------------


@dataclass
class MollerOperator:
    """Finite-horizon adjoint wave operator P_aux exp(-N0 T') exp(N T').

    ``direction='past'`` uses ``T' = -T`` and ``'future'`` uses ``T' = T``.
    """

    gen: GeneratorN
    direction: str
    T: float

    @property
    def signed_time(self) -> float:
        return -self.T if self.direction == "past" else self.T

    def apply(self, y) -> np.ndarray:
        """Full-length vector supported on the auxiliary components."""
        gen = self.gen
        tp = self.signed_time
        yt = gen.propagate(np.asarray(y, float), tp)
        return _free_aux(gen, gen.p_aux[:, None] * yt if yt.ndim > 1 else gen.p_aux * yt, -tp)

    def primed(self, y) -> PrimedFields:
        out = self.apply(y)
        cells = self.gen.coupled_cells
        return PrimedFields.from_F0(_aux_f0(self.gen, out, cells), cells, "classical",
                                    meta={"route": "moller", "T": self.T})

    def f0_covectors(self) -> np.ndarray:
        """Covectors of the F0' rows at coupled cells: (state size, cells, K) complex."""
        gen = self.gen
        lay = gen.layout
        cells = gen.coupled_cells
        k = lay.k
        tp = self.signed_time
        cov = np.zeros((lay.size, cells.size * k), dtype=complex)
        col = 0
        for i in cells:
            for kk in range(k):
                cov[lay.aux_index(i, kk, "F4"), col] = 1.0
                cov[lay.aux_index(i, kk, "F2"), col] = -1j
                col += 1
        # rows of P exp(-N0 tp) exp(N tp) are exp(N tp)^T exp(-N0 tp)^T P e_a
        cov = _free_aux_transpose(gen, cov, -tp)
        cov = gen.propagate_transpose(cov, tp)
        return cov.reshape(lay.size, cells.size, k)

    def matrix(self) -> np.ndarray:
        """Dense matrix (only sensible for small systems)."""
        eye = np.eye(self.gen.layout.size)
        return self.apply(eye)


def _free_aux(gen: GeneratorN, y, t: float):
    """exp(N0 t) restricted to the auxiliary components (free rotors)."""
    lay = gen.layout
    out = np.zeros_like(y)
    lam = np.tile(gen.lambdas, lay.n)
    c, s = np.cos(lam * t), np.sin(lam * t)
    if y.ndim > 1:
        c, s = c[:, None], s[:, None]
    f2, f4 = y[lay.f2], y[lay.f4]
    out[lay.f2] = c * f2 + s * f4
    out[lay.f4] = c * f4 - s * f2
    return out


def _free_aux_transpose(gen: GeneratorN, cov, t: float):
    return _free_aux(gen, cov, -t)


def moller(gen: GeneratorN, direction: str, T: float) -> MollerOperator:
    if direction not in ("past", "future"):
        raise ValueError(f"direction must be 'past' or 'future', got {direction!r}")
    check_horizon(gen, T)
    return MollerOperator(gen, direction, T)


def decoupling_residuals(gen: GeneratorN, y0, T: float, times) -> np.ndarray:
    """|P_aux y(t) - exp(N0 t) Omega_-^* y(0)| at the given (negative) times."""
    mo = moller(gen, "past", T)
    prim = mo.apply(y0)
    w = gen.metric
    out = []
    for t in times:
        lhs = gen.p_aux * gen.propagate(y0, t)
        rhs = _free_aux(gen, prim, t)
        d = lhs - rhs
        out.append(math.sqrt(np.dot(w * d, d)))
    return np.array(out)


# ----- noise current and identification ------------------------------------


@dataclass(frozen=True)
class NoiseCurrent:
    """Primed noise current J'(x, t), polarization P'(x, t) and per-lambda density."""

    current: LinearObservable  # batch shape (cells,)
    polarization: LinearObservable
    density: LinearObservable  # batch shape (cells, K)
    t: float


def noise_current_observable(primed: PrimedFields, gen: GeneratorN, t: float) -> NoiseCurrent:
    """J' = sqrt(eps0) sum_k w_k sigma [sin(lam t) F2' - cos(lam t) F4'].

    The per-frequency density ``J'(x, lam) = -(sqrt(eps0)/2) sigma F0'`` is
    the positive-frequency amplitude: ``J'(t) = sum_k w_k [J'(lam) e^{-i lam t} + h.c.]``.
    """
    if primed.kind != "observable":
        raise TypeError("noise current needs observable-valued primed fields")
    cells = primed.cells
    lam = gen.lambdas
    w = gen.spectral.weights
    sig = gen.sigma[cells]
    root = math.sqrt(gen.units.eps0)
    sn, cs = np.sin(lam * t), np.cos(lam * t)
    f2, f4 = primed.F2p, primed.F4p
    cj = root * (f2.coeffs * (w * sig * sn)[None] - f4.coeffs * (w * sig * cs)[None]).sum(axis=-1)
    cp = root * (-f2.coeffs * (w * sig / lam * cs)[None] - f4.coeffs * (w * sig / lam * sn)[None]).sum(axis=-1)
    dens = (-0.5 * root) * sig[None] * primed.F0p.coeffs
    basis = f2.basis
    return NoiseCurrent(LinearObservable(basis, cj), LinearObservable(basis, cp), LinearObservable(basis, dens), t)


@dataclass(frozen=True)
class CommutatorReport:
    diag_max_rel: float
    offdiag_max_rel: float
    other_max_rel: float
    kernel: np.ndarray = field(repr=False)
    target_diag: np.ndarray = field(repr=False)


def commutator_F42(primed: PrimedFields, gen: GeneratorN) -> CommutatorReport:
    """[F4'(x_i, lam_k), F2'(x_j, lam_l)] against -i hbar lam_k delta delta / (dx w_k).

    Also checks [F4', F4'] and [F2', F2'] vanish; off-diagonal and other
    entries are measured against the diagonal scale.
    """
    if primed.kind != "observable":
        raise TypeError("commutator table needs observable-valued primed fields")
    hbar = gen.units.hbar
    dx = gen.h0.grid.dx
    w = gen.spectral.weights
    lam = gen.lambdas
    kern = commutator_matrix(primed.F4p, primed.F2p)
    nc, k = kern.shape[:2]
    target = -1j * hbar * lam / (dx * w)
    diag = np.array([kern[c, np.arange(k), c, np.arange(k)] for c in range(nc)])
    diag_rel = np.max(np.abs(diag - target[None]) / np.abs(target)[None]) if nc else 0.0
    scale = np.abs(target)
    norm = np.sqrt(scale[None, :, None, None] * scale[None, None, None, :])
    off = kern.copy()
    for c in range(nc):
        off[c, np.arange(k), c, np.arange(k)] = 0.0
    off_rel = float(np.max(np.abs(off) / norm)) if nc else 0.0
    other = max(
        float(np.max(np.abs(commutator_matrix(primed.F4p, primed.F4p)) / norm)) if nc else 0.0,
        float(np.max(np.abs(commutator_matrix(primed.F2p, primed.F2p)) / norm)) if nc else 0.0,
    )
    return CommutatorReport(float(diag_rel), off_rel, other, kern, target)


@dataclass(frozen=True)
class LangevinReport:
    max_rel_dev: float
    offdiag_rel: float
    af_diag: np.ndarray = field(repr=False)
    ln_diag: np.ndarray = field(repr=False)
    symbolic_prefactor: str = ""
    symbolic_ok: bool = False
    cells: np.ndarray = field(repr=False, default=None)

    def lines(self) -> list[str]:
        return [
            f"max relative deviation (diagonal): {self.max_rel_dev:.3e}",
            f"max off-diagonal / diagonal scale: {self.offdiag_rel:.3e}",
            f"symbolic prefactor: {self.symbolic_prefactor} ({'ok' if self.symbolic_ok else 'MISMATCH'})",
        ]


def symbolic_prefactor_check() -> tuple[str, bool]:
    """Substitute nu = lam eps_I / pi into the AF-side commutator prefactor."""
    import sympy as sp

    hbar, lam, eps0, eps_i, dx, w = sp.symbols("hbar lambda epsilon_0 epsilon_I dx w", positive=True)
    nu = lam * eps_i / sp.pi
    sigma2 = 2 * nu
    # [J'(lam), J'(lam)^dag] = (eps0 / 4) sigma^2 [F0', F0'^dag], [F0', F0'^dag] = 2 hbar lam / (dx w)
    af = sp.Rational(1, 4) * eps0 * sigma2 * 2 * hbar * lam / (dx * w)
    ln = hbar * lam**2 * eps0 * eps_i / (sp.pi * dx * w)
    ok = sp.simplify(af - ln) == 0
    return str(sp.simplify(af * dx * w)), bool(ok)


def identify_langevin(primed: PrimedFields, gen: GeneratorN, eps_imag=None) -> LangevinReport:
    """Compare [J'(x, lam_k), J'(x', lam_l)^dag] with (hbar lam^2/pi) eps0 eps_I delta delta.

    ``eps_imag`` (cells, K) defaults to the value implied by the bath,
    ``pi nu / lam``; pass the medium's own eps_I to make the comparison
    independent of the bath construction.
    """
    if primed.kind != "observable":
        raise TypeError("identification needs observable-valued primed fields")
    cells = primed.cells
    lam = gen.lambdas
    w = gen.spectral.weights
    dx = gen.h0.grid.dx
    units = gen.units
    if eps_imag is None:
        eps_imag = math.pi * gen.bath.nu[cells] / lam[None, :]
    eps_imag = np.asarray(eps_imag, dtype=float)
    if eps_imag.shape != (cells.size, lam.size):
        raise BasisMismatchError(f"eps_I table {eps_imag.shape} does not match ({cells.size}, {lam.size})")
    nj = noise_current_observable(primed, gen, 0.0)
    kern = commutator_matrix(nj.density, nj.density.dagger())
    nc, k = kern.shape[:2]
    af = np.array([kern[c, np.arange(k), c, np.arange(k)] for c in range(nc)])
    ln = units.hbar * lam[None, :] ** 2 / math.pi * units.eps0 * eps_imag / (dx * w[None, :])
    mask = ln > 0
    dev = np.zeros_like(ln)
    dev[mask] = np.abs(af[mask] - ln[mask]) / ln[mask]
    dev[~mask] = np.abs(af[~mask])
    off = kern.copy()
    for c in range(nc):
        off[c, np.arange(k), c, np.arange(k)] = 0.0
    scale = np.sqrt(np.abs(ln).reshape(nc, k, 1, 1) * np.abs(ln).reshape(1, 1, nc, k))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(scale > 0, np.abs(off) / scale, np.abs(off))
    text, ok = symbolic_prefactor_check()
    return LangevinReport(float(dev.max()) if dev.size else 0.0, float(ratio.max()) if ratio.size else 0.0,
                          af, ln, text, ok, cells)
