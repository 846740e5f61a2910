"""Pointwise constitutive laws of the phase-field model."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhaseParams:
    """Fluid 1 sits at phi = +1, fluid 2 at phi = -1."""

    rho1: float
    rho2: float
    nu1: float
    nu2: float
    sigma: float
    eps: float
    gamma: float

    def __post_init__(self):
        for name in ("rho1", "rho2", "nu1", "nu2", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("sigma", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")

    @property
    def sigma_tilde(self) -> float:
        return scaled_surface_tension(self.sigma)


def double_well(phi):
    """W, W' and W'' of W(phi) = (phi^2 - 1)^2 / 4."""
    phi = np.asarray(phi, dtype=float)
    return 0.25 * (phi**2 - 1.0) ** 2, phi**3 - phi, 3.0 * phi**2 - 1.0


def linearized_dW(phi_old, phi_new):
    """W'(phi_old) + W''(phi_old) (phi_new - phi_old) / 2."""
    _, dW, d2W = double_well(phi_old)
    return dW + 0.5 * d2W * (np.asarray(phi_new, dtype=float) - phi_old)


def mobility(phi, gamma):
    phi = np.asarray(phi, dtype=float)
    return gamma * (phi**2 - 1.0) ** 2


def _average(phi, a1, a2):
    phi = np.asarray(phi, dtype=float)
    return a1 * (1.0 + phi) / 2.0 + a2 * (1.0 - phi) / 2.0


def density(phi, p: PhaseParams, clamp: bool = False):
    return _average(np.clip(phi, -1.0, 1.0) if clamp else phi, p.rho1, p.rho2)


def viscosity(phi, p: PhaseParams, clamp: bool = False):
    return _average(np.clip(phi, -1.0, 1.0) if clamp else phi, p.nu1, p.nu2)


def density_star(phi, p: PhaseParams):
    """Density clamped to the pure-phase values outside [-1, 1]."""
    return density(phi, p, clamp=True)


def viscosity_star(phi, p: PhaseParams):
    return viscosity(phi, p, clamp=True)


def scaled_surface_tension(sigma: float) -> float:
    if sigma < 0:
        raise ValueError("surface tension must be non-negative")
    return 3.0 * sigma / (2.0 * math.sqrt(2.0))
