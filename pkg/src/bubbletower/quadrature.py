"""Integration engine for bubble integrals and the energy I(W_r).

All rules are deterministic composite rules: Gauss-Legendre on panels that
grow geometrically away from the places where the integrand concentrates,
or a double-exponential rule for the purely radial integrals.  Error
estimates are the difference against the same rule with every panel split
in two, plus an analytic bound for the part beyond the truncation radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .bubbles import Bubble, RingConfig, bubble_const, bubble_profile
from .config import CurvatureModel, ProblemParams
from .geometry import sphere_area

RULES = ("gauss_legendre_panels", "tanh_sinh")


@dataclass(frozen=True)
class QuadratureSpec:
    """Node placement for every integral in the package.

    ``r_max`` is the truncation radius; ``None`` means ``r_max_factor`` times
    the natural length scale of the integral (max(ring radius, 1)).
    ``order`` is the number of Gauss points per panel and ``core`` the width
    of the innermost panel in units of the bubble width 1/Lambda.
    """

    radial_rule: str = "gauss_legendre_panels"
    r_max: float | None = None
    r_max_factor: float = 1e3
    order: int = 8
    core: float = 0.5
    de_level: int = 5
    target_rel_tol: float = 1e-8
    chunk_size: int = 2_000_000

    def __post_init__(self):
        if self.radial_rule not in RULES:
            raise ValueError(f"unknown radial rule {self.radial_rule!r}")
        if not 1e-12 <= self.target_rel_tol <= 1e-3:
            raise ValueError("target_rel_tol must lie in [1e-12, 1e-3]")
        if self.r_max_factor < 50:
            raise ValueError("truncation radius must be at least 50 length scales")

    def truncation(self, scale: float = 1.0) -> float:
        R = self.r_max if self.r_max is not None else self.r_max_factor * max(scale, 1.0)
        if R < 50 * max(scale, 1.0):
            raise ValueError("truncation radius must be at least 50 length scales")
        return R


@dataclass(frozen=True)
class IntegralResult:
    value: float
    est_error: float
    nodes_used: int

    def __add__(self, other: "IntegralResult") -> "IntegralResult":
        return IntegralResult(self.value + other.value, self.est_error + other.est_error,
                              self.nodes_used + other.nodes_used)

    def scaled(self, c: float) -> "IntegralResult":
        return IntegralResult(c * self.value, abs(c) * self.est_error, self.nodes_used)


class QuadratureError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# one-dimensional rules

@lru_cache(maxsize=64)
def _gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gauss_panels(breaks, order: int):
    """Composite Gauss-Legendre nodes and weights on consecutive panels."""
    b = np.asarray(breaks, dtype=float)
    x, w = _gauss(order)
    a, c = b[:-1, None], b[1:, None]
    half = 0.5 * (c - a)
    nodes = (a + c) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def split_panels(breaks):
    b = np.asarray(breaks, dtype=float)
    mid = 0.5 * (b[:-1] + b[1:])
    out = np.empty(2 * b.size - 1)
    out[0::2] = b
    out[1::2] = mid
    return out


def geometric_breaks(lo: float, hi: float, centers, h0: float) -> np.ndarray:
    """Panel ends clustered at each center: c, c +- h0, c +- 2 h0, c +- 4 h0, ..."""
    pts = [lo, hi]
    for c in np.atleast_1d(centers):
        if not lo <= c <= hi:
            continue
        pts.append(c)
        for sgn in (-1.0, 1.0):
            h = h0
            while True:
                x = c + sgn * h
                if x <= lo or x >= hi:
                    break
                pts.append(x)
                h *= 2.0
    b = np.unique(np.asarray(pts, dtype=float))
    # drop slivers left by overlapping clusters
    keep = [b[0]]
    for x in b[1:]:
        if x - keep[-1] > 1e-9 * max(1.0, abs(x)) and x - keep[-1] > 0.05 * h0:
            keep.append(x)
        elif x == b[-1]:
            keep[-1] = x
    return np.asarray(keep)


def de_semi_infinite(scale: float, level: int, r_max: float):
    """Double-exponential (exp-sinh) rule on [0, r_max] for algebraically decaying integrands."""
    h = 2.0 ** (-level)
    tmax = 4.5
    t = np.arange(-int(tmax / h), int(tmax / h) + 1) * h
    e = 0.5 * np.pi * np.sinh(t)
    x = scale * np.exp(e)
    w = scale * h * 0.5 * np.pi * np.cosh(t) * np.exp(e)
    keep = x <= r_max
    return x[keep], w[keep]


def radial_nodes(spec: QuadratureSpec, scale: float, r_max: float, refined: bool = False):
    if spec.radial_rule == "tanh_sinh":
        return de_semi_infinite(scale, spec.de_level + (1 if refined else 0), r_max)
    b = geometric_breaks(0.0, r_max, [0.0], spec.core * scale)
    if refined:
        b = split_panels(b)
    return gauss_panels(b, spec.order)


def _two_level(evaluate, *, tail: float = 0.0):
    coarse, n1 = evaluate(False)
    fine, n2 = evaluate(True)
    return IntegralResult(float(fine), float(abs(fine - coarse) + abs(tail)), int(n1 + n2))


# ----------------------------------------------------------------------------
# single-bubble integrals


def _check_tail_exponent(decay: float, what: str):
    if decay <= 0:
        raise ValueError(f"{what}: integrand is not integrable at infinity")


def integral_bubble_power(N: int, p_exp: float, spec: QuadratureSpec | None = None,
                          lam: float = 1.0) -> IntegralResult:
    """int_{R^N} U_{0,lam}^p by radial quadrature."""
    spec = spec or QuadratureSpec()
    decay = p_exp * (N - 2) - N
    _check_tail_exponent(decay, "integral_bubble_power")
    R = spec.truncation(1.0 / lam)
    area = sphere_area(N - 1)

    def evaluate(refined):
        x, w = radial_nodes(spec, 1.0 / lam, R, refined)
        f = x ** (N - 1) * bubble_profile(N, lam, x * x) ** p_exp
        return area * np.sum(w * f), x.size

    c = bubble_const(N) * lam ** (-(N - 2) / 2.0)
    tail = area * c**p_exp * R ** (-decay) / decay
    return _two_level(evaluate, tail=tail)


def beta_bubble_power(N: int, p_exp: float) -> float:
    """Closed form of int U_{0,1}^p via the Beta function (independent check)."""
    from scipy.special import beta

    e = p_exp * (N - 2) / 2.0
    radial = 0.5 * beta(N / 2.0, e - N / 2.0)
    return bubble_const(N) ** p_exp * sphere_area(N - 1) * radial


def moment_integral(N: int, m_ord: float, p_exp: float,
                    spec: QuadratureSpec | None = None) -> IntegralResult:
    """int |y_1|^m U_{0,1}^p over R^N through the (y_1, |y_perp|) reduction."""
    spec = spec or QuadratureSpec()
    decay = p_exp * (N - 2) - N - m_ord
    _check_tail_exponent(decay, "moment_integral")
    R = spec.truncation(1.0)
    perp_area = sphere_area(N - 2)

    def evaluate(refined):
        b = geometric_breaks(0.0, R, [0.0], spec.core)
        if refined:
            b = split_panels(b)
        x, w = gauss_panels(b, spec.order)
        Y1, Q = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w)
        f = Y1**m_ord * Q ** (N - 2) * bubble_profile(N, 1.0, Y1 * Y1 + Q * Q) ** p_exp
        return 2.0 * perp_area * np.sum(W * f), W.size

    tail = sphere_area(N - 1) * bubble_const(N) ** p_exp * R ** (-decay) / decay
    return _two_level(evaluate, tail=tail)


def interaction_integral(b1: Bubble, b2: Bubble, spec: QuadratureSpec | None = None) -> IntegralResult:
    """int_{R^N} U_1^{2*-1} U_2 in cylindrical coordinates about the axis x_1 -> x_2."""
    spec = spec or QuadratureSpec()
    N = b1.N
    d = float(np.linalg.norm(b2.center - b1.center))
    if d == 0.0:
        raise ValueError("coincident centers: use integral_bubble_power instead")
    p = (N + 2.0) / (N - 2.0)
    w1, w2 = 1.0 / b1.lam, 1.0 / b2.lam
    R = spec.truncation(max(d, w1, w2))
    h0 = spec.core * min(w1, w2)
    perp_area = sphere_area(N - 2)

    def evaluate(refined):
        bz = geometric_breaks(-R, d + R, [0.0, d], h0)
        bq = geometric_breaks(0.0, R, [0.0], h0)
        if refined:
            bz, bq = split_panels(bz), split_panels(bq)
        z, wz = gauss_panels(bz, spec.order)
        q, wq = gauss_panels(bq, spec.order)
        Z, Q = np.meshgrid(z, q, indexing="ij")
        f = (bubble_profile(N, b1.lam, Z * Z + Q * Q) ** p
             * bubble_profile(N, b2.lam, (Z - d) ** 2 + Q * Q) * Q ** (N - 2))
        return perp_area * np.sum(np.outer(wz, wq) * f), f.size

    c = bubble_const(N)
    tail = (sphere_area(N - 1) * c ** (p + 1) * b1.lam ** (-(N + 2) / 2.0)
            * b2.lam ** (-(N - 2) / 2.0) * R ** (-N) / N)
    return _two_level(evaluate, tail=tail)


def interaction_profile(N: int, D: float, spec: QuadratureSpec | None = None) -> IntegralResult:
    """G(D) = int U_{0,1}^{2*-1} U_{D e,1}; by scaling int U_{x1,L}^{2*-1}U_{x2,L} = G(L |x1-x2|)."""
    e = np.zeros(N)
    e[0] = D
    return interaction_integral(Bubble(np.zeros(N), 1.0), Bubble(e, 1.0), spec)


# ----------------------------------------------------------------------------
# three-dimensional sector quadrature


def _sector_rules(cfg: RingConfig, spec: QuadratureSpec, refined: bool, theta_max: float,
                  center_angles=(0.0,)):
    r, lam = cfg.r, cfg.lam
    R = spec.truncation(r)
    h0 = spec.core / lam
    bs = geometric_breaks(0.0, R, [r], h0)
    bt = geometric_breaks(0.0, R, [0.0], h0)
    # arc-length grading at radius r around each center direction
    bth = geometric_breaks(0.0, theta_max, list(center_angles), h0 / r)
    if refined:
        bs, bt, bth = split_panels(bs), split_panels(bt), split_panels(bth)
    return gauss_panels(bs, spec.order), gauss_panels(bth, spec.order), gauss_panels(bt, spec.order)


def sector_integrate(cfg: RingConfig, integrand, spec: QuadratureSpec, refined: bool,
                     theta_max: float | None = None, center_angles=(0.0,)):
    """int over {0 <= theta <= theta_max} of integrand(s, theta, t) s t^{N-3} |S^{N-3}|.

    ``integrand`` receives broadcastable arrays of shape (ns, nth, nt).
    """
    N = cfg.N
    if theta_max is None:
        theta_max = np.pi / cfg.k
    (s, ws), (th, wth), (t, wt) = _sector_rules(cfg, spec, refined, theta_max, center_angles)
    area = sphere_area(N - 3) if N > 3 else 2.0
    tw = wt * t ** (N - 3) * area
    per_slice = th.size * t.size
    step = max(1, spec.chunk_size // max(per_slice, 1))
    total = 0.0
    for i in range(0, s.size, step):
        S = s[i:i + step, None, None]
        vals = integrand(S, th[None, :, None], t[None, None, :])
        total += np.einsum("ijk,i,j,k->", vals, ws[i:i + step] * s[i:i + step], wth, tw)
    return total, s.size * per_slice


def _split_ring(cfg: RingConfig, s, theta, t):
    from .bubbles import ring_bubble_values

    U = ring_bubble_values(cfg, s, theta, t)
    return U[0], U[1:]


def energy_components(cfg: RingConfig, model: CurvatureModel, p: ProblemParams,
                      spec: QuadratureSpec | None = None, estimate_error: bool = True):
    """Pieces of I(W_r) - k A computed without cancellation.

    Returns a dict of IntegralResult with keys ``bubbles`` (k A),
    ``interaction`` ((k/2) sum_i int U_1^{2*-1} U_i), ``cross``
    (-(k/2*) int_{Omega_1} (W^{2*} - sum_j U_j^{2*})) and ``deficit``
    ((k/2*) int_{Omega_1} (1-K(|y|/mu)) W^{2*}).
    """
    spec = spec or QuadratureSpec()
    N, k, lam = cfg.N, cfg.k, cfg.lam
    two_star = 2.0 * N / (N - 2.0)
    mu = p.mu
    out = {}
    base = integral_bubble_power(N, two_star, spec)
    out["bubbles"] = base.scaled(k / N)

    inter = IntegralResult(0.0, 0.0, 0)
    for j in range(1, k):
        g = interaction_profile(N, lam * cfg.chord(j), spec)
        inter = inter + g
    out["interaction"] = inter.scaled(0.5 * k)

    def cross(S, TH, T):
        U1, rest = _split_ring(cfg, S, TH, T)
        if rest.shape[0] == 0:
            return np.zeros(np.broadcast_shapes(S.shape, TH.shape, T.shape))
        ratio = rest.sum(axis=0) / U1
        return U1**two_star * np.expm1(two_star * np.log1p(ratio)) - np.sum(rest**two_star, axis=0)

    def deficit(S, TH, T):
        U1, rest = _split_ring(cfg, S, TH, T)
        W = U1 + rest.sum(axis=0)
        rho = np.sqrt(S * S + T * T)
        return model.deficit(rho / mu) * W**two_star

    theta_max = np.pi / k
    for name, f, c in (("cross", cross, -2.0 * k / two_star), ("deficit", deficit, 2.0 * k / two_star)):
        if k == 1 and name == "cross":
            out[name] = IntegralResult(0.0, 0.0, 0)
            continue
        if estimate_error:
            res = _two_level(lambda refined: sector_integrate(cfg, f, spec, refined, theta_max))
        else:
            v, n = sector_integrate(cfg, f, spec, False, theta_max)
            res = IntegralResult(float(v), 0.0, n)
        out[name] = res.scaled(c)
    return out


def energy_excess(cfg, model, p, spec=None, estimate_error=True) -> IntegralResult:
    """I(W_r) - k A."""
    comp = energy_components(cfg, model, p, spec, estimate_error)
    return comp["interaction"] + comp["cross"] + comp["deficit"]


def energy_I(cfg: RingConfig, model: CurvatureModel, p: ProblemParams,
             spec: QuadratureSpec | None = None, estimate_error: bool = True,
             max_rel_error: float | None = None) -> IntegralResult:
    """I(W_r) = 1/2 int |DW|^2 - 1/2* int K(|y|/mu) W^{2*}.

    The gradient term uses int |DW|^2 = sum_{i,j} int U_i^{2*-1} U_j and the
    potential term k-fold sector symmetry.  If ``max_rel_error`` is given a
    larger estimated error raises :class:`QuadratureError`.
    """
    comp = energy_components(cfg, model, p, spec, estimate_error)
    total = comp["bubbles"] + comp["interaction"] + comp["cross"] + comp["deficit"]
    if max_rel_error is not None and total.est_error > max_rel_error * abs(total.value):
        raise QuadratureError(f"energy quadrature did not converge: est_error={total.est_error:.3e}")
    return total


def energy_brute_force(cfg: RingConfig, model: CurvatureModel, p: ProblemParams,
                       spec: QuadratureSpec | None = None, full_angle: bool = True) -> IntegralResult:
    """I(W_r) from the pointwise gradient of W, without the interaction identity.

    With ``full_angle`` the whole half-plane theta in [0, pi] is integrated
    (evenness in y_2 only), otherwise one sector times k.
    """
    spec = spec or QuadratureSpec()
    N, k, lam, r = cfg.N, cfg.k, cfg.lam, cfg.r
    two_star = 2.0 * N / (N - 2.0)
    mu = p.mu
    c = bubble_const(N)
    ang = 2.0 * np.pi * np.arange(k) / k

    def integrand(S, TH, T):
        shape = np.broadcast_shapes(S.shape, TH.shape, T.shape)
        W = np.zeros(shape)
        g1 = np.zeros(shape)
        g2 = np.zeros(shape)
        gs = np.zeros(shape)
        y1, y2 = S * np.cos(TH), S * np.sin(TH)
        for a in ang:
            q = np.maximum((y1 - r * np.cos(a)) ** 2 + (y2 - r * np.sin(a)) ** 2 + T * T, 0.0)
            W += bubble_profile(N, lam, q)
            g = -(N - 2.0) * c * lam ** ((N + 2.0) / 2.0) * (1.0 + lam * lam * q) ** (-N / 2.0)
            g1 += g * (y1 - r * np.cos(a))
            g2 += g * (y2 - r * np.sin(a))
            gs += g
        grad2 = g1 * g1 + g2 * g2 + gs * gs * T * T
        K = 1.0 - model.deficit(np.sqrt(S * S + T * T) / mu)
        return 0.5 * grad2 - K * W**two_star / two_star

    if full_angle:
        theta_max, centers, factor = np.pi, [a for a in ang if a <= np.pi + 1e-12], 2.0
    else:
        theta_max, centers, factor = np.pi / k, [0.0], 2.0 * k
    res = _two_level(lambda refined: sector_integrate(cfg, integrand, spec, refined, theta_max, centers))
    return res.scaled(factor)


def full_space_integral(cfg: RingConfig, f, spec: QuadratureSpec | None = None,
                        refined: bool = False) -> float:
    """int_{R^N} f for f in the symmetry class, f given on reduced coordinates."""
    spec = spec or QuadratureSpec()
    v, _ = sector_integrate(cfg, f, spec, refined, np.pi / cfg.k)
    return 2.0 * cfg.k * v


def ball_volume_check(N: int) -> float:
    """Closed-form int_{R^N} (1+|y|^2)^{-N} (used to test the sector machinery)."""
    return sphere_area(N - 1) * 0.5 * math.gamma(N / 2.0) ** 2 / math.gamma(N)
