"""Named physical setups shared by the CLI, the acceptance suite and the tests."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .af_dynamics import FieldState, GeneratorN, assemble_N
from .dispersion import MediumStack, OscillatorModel, bath_spectral
from .lattice import DiscreteH0, Grids, build_grids
from .units import NATURAL, Units

# vacuum | Lorentz slab | vacuum in a mirror box
STANDARD_LENGTH = 24.0
STANDARD_SLAB = (11.0, 2.0, 11.0)
STANDARD_N = 96
STANDARD_LAM_MAX = 40.0
STANDARD_ETA = 1e-6


def lorentz_slab(plasma: float = 1.0, resonance: float = 1.0, damping: float = 0.1,
                 eta: float = STANDARD_ETA, layout=STANDARD_SLAB) -> MediumStack:
    return MediumStack.slab(*layout, OscillatorModel.lorentz(plasma, resonance, damping), eta=eta)


@dataclass
class Discretization:
    """A medium stack on concrete grids, with its generator built on demand."""

    stack: MediumStack
    n: int = STANDARD_N
    k: int = 64
    lam_max: float = STANDARD_LAM_MAX
    units: Units = NATURAL
    grids: Grids = field(init=False, repr=False)
    h0: DiscreteH0 = field(init=False, repr=False)
    _gen: GeneratorN | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            self.grids = build_grids(self.stack, self.n, self.k, self.lam_max)
        self.h0 = DiscreteH0(self.grids.spatial, self.units)

    @property
    def generator(self) -> GeneratorN:
        if self._gen is None:
            spec = self.grids.spectral
            self._gen = assemble_N(bath_spectral(self.grids.cell_models, spec.nodes), spec, self.h0)
        return self._gen

    @property
    def cell_models(self):
        return self.grids.cell_models


def standard_slab(k: int = 64, damping: float = 0.1, n: int = STANDARD_N, lam_max: float = STANDARD_LAM_MAX,
                  eta: float = STANDARD_ETA) -> Discretization:
    return Discretization(lorentz_slab(damping=damping, eta=eta), n, k, lam_max)


def gaussian_pulse(x, x0: float, width: float = 1.0, wavenumber: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.exp(-(((x - x0) / width) ** 2)) * np.cos(wavenumber * (x - x0))


def pulse_state(disc: Discretization, x0: float, width: float = 1.0, wavenumber: float = 1.0) -> FieldState:
    """Right-moving vacuum pulse (F3 equal to F1 on the faces) with an empty bath."""
    sp = disc.grids.spatial
    k = disc.k
    return FieldState(gaussian_pulse(sp.x, x0, width, wavenumber), np.zeros((sp.n, k)),
                      gaussian_pulse(sp.faces, x0, width, wavenumber), np.zeros((sp.n, k)))


# Propagation scenario: a pulse launched in vacuum that enters the slab well
# before any reflection from the walls returns.
PROPAGATION_X0 = 7.0
PROPAGATION_T = 10.0

# Extraction scenario: the pulse starts inside the slab; horizon T and 2T both
# fit inside the no-reflection window of the standard layout.
EXTRACTION_X0 = 12.0
EXTRACTION_T = 5.0
EXTRACTION_DT = 0.005
