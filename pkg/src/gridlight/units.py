"""Grid-natural units: one node per Planck length, one tick per Planck time.

With h = c = 1 every scalar relation reduces to a reciprocal of the
wavelength measured in nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

MIN_WAVELENGTH = 2.0
UNCERTAINTY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class GridUnits:
    h: float = 1.0
    c: float = 1.0
    planck_length: float = 1.0
    planck_time: float = 1.0

    def __post_init__(self):
        for name in ("h", "c", "planck_length", "planck_time"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")

    @property
    def hbar(self) -> float:
        return self.h / (2.0 * math.pi)


UNITS = GridUnits()


def _check_wavelength(lam: float) -> float:
    if not isinstance(lam, (int, float)) or math.isnan(lam):
        raise DomainError(f"wavelength must be a number, got {lam!r}")
    if lam < MIN_WAVELENGTH:
        raise DomainError(f"wavelength {lam} nodes is shorter than first light (minimum 2 nodes)")
    return float(lam)


def frequency_of(lam: float) -> float:
    """Cycles per tick, f = c / lambda."""
    return UNITS.c / _check_wavelength(lam)


def energy_of(lam: float) -> float:
    """Energy in h-units, E = h c / lambda."""
    return UNITS.h * UNITS.c / _check_wavelength(lam)


def momentum_of(lam: float) -> float:
    """Momentum in h-units, p = h / lambda."""
    return UNITS.h / _check_wavelength(lam)


def node_processing_share(lam: float) -> float:
    """Fraction of one Planck program each node carries per tick."""
    return 1.0 / _check_wavelength(lam)


def uncertainty_satisfied(sigma_x: float, sigma_p: float) -> bool:
    """True when sigma_x * sigma_p >= hbar/2 up to an absolute 1e-9 slack."""
    if sigma_x < 0 or sigma_p < 0:
        raise DomainError("spreads must be non-negative")
    return sigma_x * sigma_p >= UNITS.hbar / 2.0 - UNCERTAINTY_TOLERANCE
