"""Aubin-Talenti bubbles, their r- and Lambda-derivatives, and the ring ansatz W_r."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# switch to the log form of the kernel beyond this value of Lambda^2 |y-x|^2
_LOG_SWITCH = 1e8


def bubble_const(N: int) -> float:
    return (N * (N - 2.0)) ** ((N - 2.0) / 4.0)


def _as_points(y, N):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != N:
        raise ValueError(f"points must have trailing dimension {N}, got {y.shape}")
    return y


def bubble_profile(N: int, lam: float, q):
    """U as a function of q = |y-x|^2."""
    q = np.asarray(q, dtype=float)
    a = lam * lam * q
    e = (N - 2.0) / 2.0
    c = bubble_const(N)
    with np.errstate(divide="ignore"):
        direct = c * (lam / (1.0 + a)) ** e
        if np.any(a > _LOG_SWITCH):
            logform = np.exp(np.log(c) + e * (np.log(lam) - np.log1p(a)))
            direct = np.where(a > _LOG_SWITCH, logform, direct)
    return direct


@dataclass(frozen=True)
class Bubble:
    center: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def N(self) -> int:
        return self.center.shape[0]

    def peak(self) -> float:
        return bubble_const(self.N) * self.lam ** ((self.N - 2) / 2.0)


def eval_bubble(b: Bubble, y):
    N = b.N
    y = _as_points(y, N)
    q = np.sum((y - b.center) ** 2, axis=-1)
    return bubble_profile(N, b.lam, q)


def eval_Z(b: Bubble, which: str, y):
    """Closed-form derivatives of U_{x,Lambda}.

    ``which="radial"`` moves the center along x/|x| (unit speed);
    ``which="lambda"`` differentiates in the concentration parameter.
    """
    N = b.N
    y = _as_points(y, N)
    diff = y - b.center
    q = np.sum(diff**2, axis=-1)
    lam = b.lam
    a = lam * lam * q
    if which == "lambda":
        u = bubble_profile(N, lam, q)
        return u * ((N - 2.0) / 2.0) * (1.0 - a) / (lam * (1.0 + a))
    if which == "radial":
        norm = np.linalg.norm(b.center)
        if norm == 0.0:
            raise ValueError("radial derivative undefined for a bubble centred at the origin")
        e = b.center / norm
        c = bubble_const(N)
        return c * (N - 2.0) * lam ** ((N + 2.0) / 2.0) * (1.0 + a) ** (-N / 2.0) * (diff @ e)
    raise ValueError(f"unknown derivative kind {which!r}")


def ring_centers(k: int, r: float, N: int = 5) -> np.ndarray:
    """x_j = (r cos(2(j-1)pi/k), r sin(2(j-1)pi/k), 0, ..., 0), j = 1..k."""
    if k < 1 or r <= 0:
        raise ValueError("need k >= 1 and r > 0")
    ang = 2.0 * np.pi * np.arange(k) / k
    out = np.zeros((k, N))
    out[:, 0] = r * np.cos(ang)
    out[:, 1] = r * np.sin(ang)
    # exact values on the axes
    out[np.isclose(out, 0.0, atol=1e-15 * r)] = 0.0
    return out


@dataclass(frozen=True)
class RingConfig:
    N: int
    k: int
    r: float
    lam: float

    @property
    def centers(self) -> np.ndarray:
        return ring_centers(self.k, self.r, self.N)

    def bubbles(self) -> list[Bubble]:
        return [Bubble(c, self.lam) for c in self.centers]

    def chord(self, j: int) -> float:
        """|x_{1+j} - x_1|."""
        return 2.0 * self.r * np.sin(j * np.pi / self.k)


def eval_W(cfg: RingConfig, y):
    y = _as_points(y, cfg.N)
    out = np.zeros(y.shape[:-1])
    for c in cfg.centers:
        out = out + bubble_profile(cfg.N, cfg.lam, np.sum((y - c) ** 2, axis=-1))
    return out


def ring_bubble_values(cfg: RingConfig, s, theta, t):
    """Per-bubble values U_j at reduced coordinates, shape (k,) + broadcast shape.

    The point has y' = s (cos theta, sin theta) and |y''| = t.
    """
    s, theta, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, theta, t)))
    ang = 2.0 * np.pi * np.arange(cfg.k) / cfg.k
    out = np.empty((cfg.k,) + s.shape)
    base = s * s + cfg.r * cfg.r + t * t
    for j, a in enumerate(ang):
        q = np.maximum(base - 2.0 * s * cfg.r * np.cos(theta - a), 0.0)
        out[j] = bubble_profile(cfg.N, cfg.lam, q)
    return out


def ring_dW(cfg: RingConfig, which: str, s, theta, t):
    """dW/dr or dW/dLambda at reduced coordinates (sum of the per-bubble Z kernels)."""
    s, theta, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, theta, t)))
    N, lam, r = cfg.N, cfg.lam, cfg.r
    ang = 2.0 * np.pi * np.arange(cfg.k) / cfg.k
    out = np.zeros(s.shape)
    base = s * s + r * r + t * t
    c = bubble_const(N)
    for a in ang:
        cosd = np.cos(theta - a)
        q = np.maximum(base - 2.0 * s * r * cosd, 0.0)
        aa = lam * lam * q
        if which == "lambda":
            u = bubble_profile(N, lam, q)
            out += u * ((N - 2.0) / 2.0) * (1.0 - aa) / (lam * (1.0 + aa))
        elif which == "radial":
            # (y - x_j) . x_j/|x_j| = s cos(theta - a) - r
            out += c * (N - 2.0) * lam ** ((N + 2.0) / 2.0) * (1.0 + aa) ** (-N / 2.0) * (s * cosd - r)
        else:
            raise ValueError(f"unknown derivative kind {which!r}")
    return out
