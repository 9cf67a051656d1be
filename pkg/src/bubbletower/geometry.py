"""Sector decomposition and the symmetry-reduced coordinates (s, theta, t).

A point y = (y', y'') in R^2 x R^{N-2} is reduced to s = |y'|, the angle of
y' measured from the nearest ring center, and t = |y''|.  Functions in the
symmetry class only depend on these three numbers, so every integral over
R^N becomes k times a three-dimensional integral over one sector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

_TIE_TOL = 1e-12


def sphere_area(d: int) -> float:
    """Area of the unit sphere S^d in R^{d+1}."""
    return 2.0 * np.pi ** ((d + 1) / 2.0) / gamma((d + 1) / 2.0)


@dataclass(frozen=True)
class SectorPoint:
    s: float
    theta: float
    t: float

    def weight(self, N: int) -> float:
        """Volume density s t^{N-3} |S^{N-3}| of the reduced coordinates."""
        return self.s * self.t ** (N - 3) * sphere_area(N - 3)


def sector_index(y, k: int) -> int:
    """1-based index j of the sector Omega_j containing y (ties go to the smaller j)."""
    y = np.asarray(y, dtype=float)
    yp = y[:2]
    n = np.hypot(yp[0], yp[1])
    if n == 0.0:
        return 1
    ang = 2.0 * np.pi * np.arange(k) / k
    cosines = (yp[0] * np.cos(ang) + yp[1] * np.sin(ang)) / n
    best = cosines.max()
    return int(np.flatnonzero(cosines >= best - _TIE_TOL)[0]) + 1


def reduce_point(y, k: int) -> tuple[SectorPoint, int]:
    y = np.asarray(y, dtype=float)
    j = sector_index(y, k)
    s = float(np.hypot(y[0], y[1]))
    t = float(np.linalg.norm(y[2:]))
    if s == 0.0:
        return SectorPoint(0.0, 0.0, t), j
    center_angle = 2.0 * np.pi * (j - 1) / k
    theta = np.arctan2(y[1], y[0]) - center_angle
    theta = (theta + np.pi) % (2.0 * np.pi) - np.pi
    return SectorPoint(s, float(theta), t), j


def lift_point(p: SectorPoint, j: int, k: int, N: int) -> np.ndarray:
    """Representative point of R^N with reduced coordinates p in sector j (y'' along e_3)."""
    ang = p.theta + 2.0 * np.pi * (j - 1) / k
    y = np.zeros(N)
    y[0] = p.s * np.cos(ang)
    y[1] = p.s * np.sin(ang)
    if N > 2:
        y[2] = p.t
    return y


def lift_arrays(s, theta, t, N: int) -> np.ndarray:
    s, theta, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, theta, t)))
    y = np.zeros(s.shape + (N,))
    y[..., 0] = s * np.cos(theta)
    y[..., 1] = s * np.sin(theta)
    y[..., 2] = t
    return y


def reduce_arrays(y):
    """Vectorised (s, absolute angle, t) of points y with shape (..., N)."""
    y = np.asarray(y, dtype=float)
    s = np.hypot(y[..., 0], y[..., 1])
    ang = np.arctan2(y[..., 1], y[..., 0])
    t = np.linalg.norm(y[..., 2:], axis=-1)
    return s, ang, t


def rotate(y, k: int, times: int = 1) -> np.ndarray:
    """Rotate the y' plane by 2 pi times/k."""
    y = np.array(y, dtype=float)
    a = 2.0 * np.pi * times / k
    c, sn = np.cos(a), np.sin(a)
    y0, y1 = y[..., 0].copy(), y[..., 1].copy()
    y[..., 0] = c * y0 - sn * y1
    y[..., 1] = sn * y0 + c * y1
    return y


@dataclass(frozen=True)
class LaplacianCoefficients:
    """Delta = ss d_ss + s d_s + thth d_thth + tt d_tt + t d_t on symmetric functions."""

    ss: float
    s: float
    thth: float
    tt: float
    t: float


def laplacian_coefficients(p: SectorPoint, N: int) -> LaplacianCoefficients:
    if p.s <= 0.0 or p.t <= 0.0:
        raise ValueError("reduced Laplacian coefficients are singular on the axes s=0, t=0")
    return LaplacianCoefficients(1.0, 1.0 / p.s, 1.0 / p.s**2, 1.0, (N - 3.0) / p.t)


def reduced_laplacian(f, p: SectorPoint, N: int, h: float = 1e-4) -> float:
    """Apply the reduced Laplacian to f(s, theta, t) with central differences."""
    c = laplacian_coefficients(p, N)
    s, th, t = p.s, p.theta, p.t
    f0 = f(s, th, t)
    d_ss = (f(s + h, th, t) - 2 * f0 + f(s - h, th, t)) / h**2
    d_s = (f(s + h, th, t) - f(s - h, th, t)) / (2 * h)
    d_thth = (f(s, th + h, t) - 2 * f0 + f(s, th - h, t)) / h**2
    d_tt = (f(s, th, t + h) - 2 * f0 + f(s, th, t - h)) / h**2
    d_t = (f(s, th, t + h) - f(s, th, t - h)) / (2 * h)
    return c.ss * d_ss + c.s * d_s + c.thth * d_thth + c.tt * d_tt + c.t * d_t
