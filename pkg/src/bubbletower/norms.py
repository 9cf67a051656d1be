"""Weighted sup-norms, the residual l_k of the ansatz and the nonlinear remainder N(phi).

The weights are sums of per-bubble polynomial decays,

    star:        sum_j (1 + |y - x_j|)^{-((N-2)/2 + tau)}
    double_star: sum_j (1 + |y - x_j|)^{-((N+2)/2 + tau)}

and the norms are sup |f|/weight.  True suprema over R^N are out of reach, so
norm_estimate samples a deterministic point cloud that covers the places
where the ratio peaks (bubble cores, the sector walls between neighbouring
bubbles, the far field).  The result is a lower bound of the true norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc

from .bubbles import RingConfig, bubble_profile
from .config import CurvatureModel, ProblemParams
from .geometry import lift_arrays

FAMILIES = ("star", "double_star")


@dataclass(frozen=True)
class WeightedNormSpec:
    family: str
    tau: float
    config: RingConfig

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown norm family {self.family!r}")

    @property
    def exponent(self) -> float:
        N = self.config.N
        if self.family == "star":
            return (N - 2) / 2.0 + self.tau
        return (N + 2) / 2.0 + self.tau


@dataclass(frozen=True)
class SampledNormEstimate:
    value: float
    argmax_point: np.ndarray
    sample_count: int
    sampling_seed: int


def _points(y, N):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != N:
        raise ValueError(f"points must have trailing dimension {N}")
    return y


def _bubble_matrix(cfg: RingConfig, y):
    """Per-bubble values, shape y.shape[:-1] + (k,)."""
    q = np.sum((y[..., None, :] - cfg.centers) ** 2, axis=-1)
    return bubble_profile(cfg.N, cfg.lam, q)


def weight(spec: WeightedNormSpec, y):
    cfg = spec.config
    y = _points(y, cfg.N)
    d = np.sqrt(np.sum((y[..., None, :] - cfg.centers) ** 2, axis=-1))
    return np.sum((1.0 + d) ** (-spec.exponent), axis=-1)


def residual_lk(cfg: RingConfig, model: CurvatureModel, p: ProblemParams, y):
    """l_k = K(|y|/mu) W^{2*-1} - sum_j U_j^{2*-1}.

    Written as (W^p - sum U_j^p) - (1-K) W^p with the first bracket expanded
    around the largest bubble, so that neither piece loses digits.
    """
    y = _points(y, cfg.N)
    pw = (cfg.N + 2.0) / (cfg.N - 2.0)
    U = _bubble_matrix(cfg, y)
    W = U.sum(axis=-1)
    Umax = U.max(axis=-1)
    others = W - Umax
    cross = Umax**pw * np.expm1(pw * np.log1p(others / Umax)) - (np.sum(U**pw, axis=-1) - Umax**pw)
    rho = np.linalg.norm(y, axis=-1)
    return cross - model.deficit(rho / p.mu) * W**pw


def nonlinear_remainder(cfg: RingConfig, model: CurvatureModel, p: ProblemParams, phi, y):
    """N(phi) = K ((W+phi)_+^{2*-1} - W^{2*-1} - (2*-1) W^{2*-2} phi).

    ``phi`` is either a callable on points or an array of values at ``y``.
    """
    y = _points(y, cfg.N)
    pw = (cfg.N + 2.0) / (cfg.N - 2.0)
    W = _bubble_matrix(cfg, y).sum(axis=-1)
    ph = phi(y) if callable(phi) else np.asarray(phi, dtype=float)
    K = 1.0 - model.deficit(np.linalg.norm(y, axis=-1) / p.mu)
    x = ph / W
    # W^p [(1+x)_+^p - 1 - p x] without cancellation for small x
    small = np.abs(x) < 1e-3
    series = pw * (pw - 1) / 2 * x**2 + pw * (pw - 1) * (pw - 2) / 6 * x**3 + \
        pw * (pw - 1) * (pw - 2) * (pw - 3) / 24 * x**4
    direct = np.maximum(1.0 + x, 0.0) ** pw - 1.0 - pw * x
    return K * W**pw * np.where(small, series, direct)


# ----------------------------------------------------------------------------
# sampling


@dataclass
class Sampler:
    """Deterministic point cloud for sup-norm estimation.

    shells: spheres of radii 0, 1/2, 1, 2, 4, ... around three centers;
    walls: the sector boundary theta = pi/k over a graded range of s and t;
    far: a shell of radius ``far_factor`` times r;
    interior: ``n_interior`` scrambled Sobol points (a power of two) in Omega_1, placed at
    log-uniform distance from x_1.
    """

    seed: int = 0
    n_interior: int = 16_384
    n_directions: int = 64
    far_factor: float = 100.0
    parts: dict = field(default_factory=dict, repr=False)

    def _directions(self, N, rng_seed):
        eng = qmc.Sobol(d=N, scramble=True, seed=rng_seed)
        g = eng.random(self.n_directions)
        v = norm.ppf(np.clip(g, 1e-12, 1 - 1e-12))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v

    def points(self, cfg: RingConfig) -> np.ndarray:
        N, k, r = cfg.N, cfg.k, cfg.r
        dirs = self._directions(N, self.seed)
        centers = cfg.centers
        half_gap = r * np.sin(np.pi / k) if k > 1 else r
        radii = [0.0] + list(0.5 * 2.0 ** np.arange(0, int(np.ceil(np.log2(max(4.0 * half_gap, 2.0)))) + 2))
        reps = sorted({0, 1 % k, k // 2})
        shells = [centers[j] + rad * dirs for j in reps for rad in radii]
        shells = np.concatenate(shells)

        # sector walls: theta = pi/k, s around r, t from 0 outward
        ds = np.concatenate([[0.0], np.geomspace(0.05, max(4.0 * r, 1.0), 48)])
        s = np.concatenate([r - ds[::-1], r + ds[1:]])
        s = s[s >= 0]
        t = np.concatenate([[0.0], np.geomspace(0.05, max(4.0 * r, 1.0), 24)])
        S, T = np.meshgrid(s, t, indexing="ij")
        th = np.pi / k if k > 1 else np.pi
        walls = lift_arrays(S.ravel(), th, T.ravel(), N)

        far = self.far_factor * max(r, 1.0) * dirs

        eng = qmc.Sobol(d=N + 1, scramble=True, seed=self.seed + 1)
        u = eng.random(self.n_interior)
        v = norm.ppf(np.clip(u[:, :N], 1e-12, 1 - 1e-12))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        dist = np.exp(np.log(1e-2) + u[:, N] * (np.log(max(2.0 * r, 1.0)) - np.log(1e-2)))
        interior = centers[0] + dist[:, None] * v

        self.parts = {"shells": len(shells), "walls": len(walls), "far": len(far), "interior": len(interior)}
        return np.concatenate([shells, walls, far, interior])


def norm_estimate(spec: WeightedNormSpec, f, sampler: Sampler | None = None, points=None) -> SampledNormEstimate:
    """sup over the sample cloud of |f(y)|/weight(y)."""
    sampler = sampler or Sampler()
    y = sampler.points(spec.config) if points is None else np.asarray(points, dtype=float)
    vals = np.abs(f(y)) / weight(spec, y)
    i = int(np.argmax(vals))
    return SampledNormEstimate(float(vals[i]), y[i].copy(), int(y.shape[0]), sampler.seed)


# ----------------------------------------------------------------------------
# decay study


@dataclass(frozen=True)
class DecayRow:
    k: int
    mu: float
    norm_value: float
    argmax: tuple
    predicted_rate: float
    ratio: float


@dataclass(frozen=True)
class DecayStudy:
    rows: list
    slope: float
    predicted_rate: float

    @property
    def relative_slope_error(self) -> float:
        return abs(self.slope - self.predicted_rate) / self.predicted_rate


def lk_decay_study(p_base: ProblemParams, k_list, lam: float | None = None,
                   sampler: Sampler | None = None) -> DecayStudy:
    """||l_k||_** at r = mu r0 for each k, against the rate (k/mu)^{(N+2)/2 - tau}.

    Lambda defaults to the closed-form Lambda_0 of the expansion.
    """
    if any(k < 2 for k in k_list):
        raise ValueError("the decay study needs k >= 2")
    if lam is None:
        from .constants import compute_constants, lambda0

        lam = lambda0(p_base, compute_constants(p_base))
    sampler = sampler or Sampler()
    rate = (p_base.N + 2) / 2.0 - p_base.tau
    rows = []
    for k in k_list:
        p = p_base.with_k(k)
        cfg = RingConfig(p.N, k, p.mu * p.r0, lam)
        spec = WeightedNormSpec("double_star", p.tau, cfg)
        model = p.curvature()
        est = norm_estimate(spec, lambda y: residual_lk(cfg, model, p, y), sampler)
        x = k / p.mu
        rows.append(DecayRow(k, p.mu, est.value, tuple(float(v) for v in est.argmax_point),
                             rate, est.value / x**rate))
    xs = np.log([row.k / row.mu for row in rows])
    ys = np.log([row.norm_value for row in rows])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return DecayStudy(rows, slope, rate)
