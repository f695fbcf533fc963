"""Uniform sample grids and trapezoid weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import ValidationError, check_positive


def trapezoid_weights(n, dt):
    """Composite trapezoid weights for ``n`` intervals of width ``dt``."""
    w = np.full(n + 1, float(dt))
    w[0] = w[-1] = 0.5 * dt
    return w


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_i = i*dt`` on ``[0, T]`` with ``n`` intervals."""

    T: float
    n: int

    def __post_init__(self):
        check_positive(self.T, "T")
        check_positive(self.n, "n", integer=True)

    @property
    def dt(self):
        return self.T / self.n

    @property
    def t(self):
        return np.arange(self.n + 1) * self.dt

    @property
    def weights(self):
        return trapezoid_weights(self.n, self.dt)

    def doubled(self):
        """Grid on ``[0, 2T]`` with the same step."""
        return TimeGrid(2.0 * self.T, 2 * self.n)

    def halved(self):
        """Grid on ``[0, T/2]`` with the same step; ``n`` must be even."""
        if self.n % 2:
            raise ValidationError(f"cannot halve a grid with odd n={self.n}")
        return TimeGrid(0.5 * self.T, self.n // 2)


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform spatial grid on ``[0, ell]`` with ``n_x`` intervals."""

    ell: float
    n_x: int

    def __post_init__(self):
        check_positive(self.ell, "ell")
        check_positive(self.n_x, "n_x", integer=True)

    @property
    def h(self):
        return self.ell / self.n_x

    @property
    def x(self):
        return np.arange(self.n_x + 1) * self.h

    @property
    def interior(self):
        return self.x[1:-1]
