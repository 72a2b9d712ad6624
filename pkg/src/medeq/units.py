"""Physical constants carried through every formula.

Natural units (c = eps0 = mu0 = hbar = 1) are the default; any consistent
SI-like set may be configured instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Units:
    c: float = 1.0
    eps0: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("c", "eps0", "hbar"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"units.{name} must be finite and positive, got {value!r}")

    @property
    def mu0(self) -> float:
        return 1.0 / (self.eps0 * self.c**2)


NATURAL = Units()
