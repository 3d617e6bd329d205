"""Named analytic initial conditions ``(theta0, omega0)``."""

from __future__ import annotations

import numpy as np

from .spectral import SpectralField, WaveGrid

PRESETS = ("heat-mode", "shear-mode", "two-mode")


def initial_condition(name: str, n: int) -> tuple[SpectralField, SpectralField]:
    """
    heat-mode
        ``theta = sin(2 pi x2)``, ``omega = 0``; decays like ``exp(-(kappa + nu) 4 pi^2 t)``.
    shear-mode
        ``theta = 0``, ``omega = sin(2 pi x1)``; decays like ``exp(-nu 4 pi^2 t)``.
    two-mode
        ``theta = sin(2 pi x2)``, ``omega = cos(2 pi x1)``; the shear flow tilts
        the temperature layers, so advection and buoyancy are both active.
    """
    grid = WaveGrid(n)
    x1, x2 = grid.x
    zero = np.zeros_like(x1)
    if name == "heat-mode":
        th, om = np.sin(2 * np.pi * x2), zero
    elif name == "shear-mode":
        th, om = zero, np.sin(2 * np.pi * x1)
    elif name == "two-mode":
        th, om = np.sin(2 * np.pi * x2), np.cos(2 * np.pi * x1)
    else:
        raise ValueError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")
    return SpectralField.from_physical(grid, th), SpectralField.from_physical(grid, om)
