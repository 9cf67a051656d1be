"""Expansion constants A, B0..B4, the concentration Lambda_0 and the reduced energy F(r, Lambda).

On the ring with r = mu r0 the energy of the ansatz behaves like

    I(W_r) = k (A + (B1/Lambda^m - B3 B4/(Lambda^{N-2} r0^{N-2})) / mu^m
               + B2/(Lambda^{m-2} mu^m) (mu r0 - r)^2 + ...)

where B3 is the pair-interaction coefficient and B4 the limit of the
normalised lattice sum.  The product B3*B4 is what multiplies the
interaction term, so everything downstream (Lambda_0, the gradient) uses it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.special import zeta

from .bubbles import RingConfig, bubble_const
from .config import CurvatureModel, ProblemParams
from .quadrature import (
    QuadratureSpec,
    energy_I,
    integral_bubble_power,
    interaction_profile,
    moment_integral,
)

PROVENANCES = ("quadrature", "lattice_extrapolation", "closed_form_candidate")


@dataclass(frozen=True)
class Constant:
    value: float
    est_error: float
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class ExpansionConstants:
    N: int
    m: float
    c0: float
    A: Constant
    B0: Constant
    B1: Constant
    B2: Constant
    B3: Constant
    B4: Constant

    @property
    def B_interaction(self) -> float:
        """Coefficient of -1/(Lambda^{N-2} r0^{N-2} mu^m) in the per-bubble energy."""
        return self.B3.value * self.B4.value

    def values(self) -> dict:
        return {n: getattr(self, n).value for n in ("A", "B0", "B1", "B2", "B3", "B4")}

    def to_dict(self) -> dict:
        out = {"N": self.N, "m": self.m, "c0": self.c0}
        for n in ("A", "B0", "B1", "B2", "B3", "B4"):
            out[n] = asdict(getattr(self, n))
        out["B_interaction"] = self.B_interaction
        return out


# ----------------------------------------------------------------------------
# lattice sums


def lattice_sum(k: int, r: float, N: int) -> float:
    """sum_{j=2}^k |x_j - x_1|^{-(N-2)} = sum_{j=1}^{k-1} (2 r sin(j pi/k))^{-(N-2)}."""
    if k < 2:
        raise ValueError("lattice_sum needs k >= 2")
    j = np.arange(1, k)
    # pair j with k-j so that the sum is symmetric and insensitive to ordering
    terms = (2.0 * r * np.sin(np.pi * np.minimum(j, k - j) / k)) ** (-(N - 2.0))
    return math.fsum(terms)


def B4_closed_form(N: int) -> float:
    """2 zeta(N-2)/(2 pi)^{N-2}."""
    return 2.0 * float(zeta(N - 2.0)) / (2.0 * np.pi) ** (N - 2)


def normalised_lattice_sum(k: int, N: int) -> float:
    return lattice_sum(k, 1.0, N) / float(k) ** (N - 2)


def extrapolate_B4(N: int, k_base: int = 4096) -> Constant:
    """Richardson extrapolation of lattice_sum k^{-(N-2)} from k, 2k, 4k.

    The leading correction is O(k^{-(N-3)}); one Richardson step removes it
    and the remaining change between the last two levels is the error bar.
    """
    ks = [k_base, 2 * k_base, 4 * k_base]
    b = [normalised_lattice_sum(k, N) for k in ks]
    q = 2.0 ** (N - 3)
    r1 = (q * b[1] - b[0]) / (q - 1.0)
    r2 = (q * b[2] - b[1]) / (q - 1.0)
    err = abs(r2 - r1) + abs(b[2] - b[1]) * 1e-3
    return Constant(r2, err, "lattice_extrapolation")


# ----------------------------------------------------------------------------
# interaction plateau


def interaction_plateau(N: int, ds=(10.0, 20.0, 40.0, 80.0), spec: QuadratureSpec | None = None):
    """G(d) d^{N-2} at the given separations (Lambda = 1), with the log-log slope
    and a Richardson-extrapolated plateau assuming an O(d^{-2}) correction."""
    ds = np.asarray(ds, dtype=float)
    vals = np.array([interaction_profile(N, d, spec).value for d in ds])
    scaled = vals * ds ** (N - 2)
    slope = np.polyfit(np.log(ds), np.log(vals), 1)[0]
    q = (ds[-1] / ds[-2]) ** 2
    plateau = (q * scaled[-1] - scaled[-2]) / (q - 1.0)
    return {"d": ds, "value": vals, "scaled": scaled, "slope": float(slope), "plateau": float(plateau)}


def B0_closed_form(N: int) -> float:
    """(N(N-2))^{(N-2)/4} int U^{2*-1} = (N(N-2))^{N/2} |S^{N-1}|/N."""
    from .geometry import sphere_area

    return (N * (N - 2.0)) ** (N / 2.0) * sphere_area(N - 1) / N


# ----------------------------------------------------------------------------
# the constants


def compute_constants(p: ProblemParams, spec: QuadratureSpec | None = None) -> ExpansionConstants:
    spec = spec or QuadratureSpec()
    N, m, c0 = p.N, p.m, p.c0
    if m >= N - 2 or m < 0:
        raise ValueError("constants need 0 <= m < N-2")
    ts = p.crit_exp
    full = integral_bubble_power(N, ts, spec)
    A = Constant(full.value / N, full.est_error / N, "quadrature")

    mom = moment_integral(N, m, ts, spec)
    B1 = Constant(c0 / ts * mom.value, c0 / ts * mom.est_error, "quadrature")
    if m == 2:
        low = full
    else:
        low = moment_integral(N, m - 2.0, ts, spec)
    fac = c0 / ts * m * (m - 1.0) / 2.0
    B2 = Constant(fac * low.value, fac * low.est_error, "quadrature")

    # U^{2*-1} decays only like |y|^{-(N+2)}: push the truncation further out
    inner = integral_bubble_power(N, ts - 1.0, replace(spec, r_max=None, r_max_factor=1e6))
    c = bubble_const(N)
    B0 = Constant(c * inner.value, c * inner.est_error, "quadrature")
    B3 = Constant(0.5 * B0.value, 0.5 * B0.est_error, "closed_form_candidate")
    B4 = extrapolate_B4(N)
    return ExpansionConstants(N, m, c0, A, B0, B1, B2, B3, B4)


def lambda0_closed_form(N: int, m: float, r0: float, B1: float, B4: float) -> float:
    """Unique zero of -B1 m/Lambda^{m+1} + B4 (N-2)/(Lambda^{N-1} r0^{N-2})."""
    if B1 <= 0 or B4 <= 0:
        raise ValueError("Lambda_0 needs positive constants")
    if N - 2 - m <= 0:
        raise ValueError("Lambda_0 needs N - 2 - m > 0")
    return (B4 * (N - 2.0) / (B1 * m * r0 ** (N - 2.0))) ** (1.0 / (N - 2.0 - m))


def lambda0(p: ProblemParams, consts: ExpansionConstants) -> float:
    return lambda0_closed_form(p.N, p.m, p.r0, consts.B1.value, consts.B_interaction)


def F_expansion(p: ProblemParams, consts: ExpansionConstants, r, lam):
    N, m, k, mu, r0 = p.N, p.m, p.k, p.mu, p.r0
    B1, B2, A = consts.B1.value, consts.B2.value, consts.A.value
    Bi = consts.B_interaction
    r = np.asarray(r, dtype=float)
    lam = np.asarray(lam, dtype=float)
    main = (B1 / lam**m - Bi / (lam ** (N - 2) * r0 ** (N - 2))) / mu**m
    return k * (A + main + B2 / (lam ** (m - 2) * mu**m) * (mu * r0 - r) ** 2)


def dF_dLambda_expansion(p: ProblemParams, consts: ExpansionConstants, r, lam):
    """k(-B1 m/Lambda^{m+1} + B (N-2)/(Lambda^{N-1} r0^{N-2}))/mu^m (no B2 term)."""
    N, m, k, mu, r0 = p.N, p.m, p.k, p.mu, p.r0
    lam = np.asarray(lam, dtype=float)
    B1, Bi = consts.B1.value, consts.B_interaction
    out = k * (-B1 * m / lam ** (m + 1) + Bi * (N - 2) / (lam ** (N - 1) * r0 ** (N - 2))) / mu**m
    return out + 0.0 * np.asarray(r, dtype=float)


def grad_F_expansion(p: ProblemParams, consts: ExpansionConstants, r, lam):
    """Exact (dF/dr, dF/dLambda) of F_expansion, including the B2 term."""
    m, k, mu, r0 = p.m, p.k, p.mu, p.r0
    B2 = consts.B2.value
    dr = -2.0 * k * B2 / (lam ** (m - 2) * mu**m) * (mu * r0 - r)
    dl = dF_dLambda_expansion(p, consts, r, lam) - k * (m - 2) * B2 / (lam ** (m - 1) * mu**m) * (mu * r0 - r) ** 2
    return np.asarray(dr, dtype=float), np.asarray(dl, dtype=float)


# ----------------------------------------------------------------------------
# comparison against the quadrature energy


@dataclass(frozen=True)
class ExpansionComparison:
    k: int
    mu: float
    r: float
    lam: float
    I_quad: float
    I_err: float
    F_exp: float
    abs_gap: float
    normalized_gap: float

    def to_dict(self):
        return asdict(self)


def compare_expansion(p: ProblemParams, model: CurvatureModel, consts: ExpansionConstants,
                      cfg: RingConfig, spec: QuadratureSpec | None = None) -> ExpansionComparison:
    I = energy_I(cfg, model, p, spec)
    F = float(F_expansion(p, consts, cfg.r, cfg.lam))
    gap = abs(I.value - F)
    return ExpansionComparison(p.k, p.mu, cfg.r, cfg.lam, I.value, I.est_error, F, gap,
                               gap * p.mu**p.m / p.k)


def refit_B3(p: ProblemParams, consts: ExpansionConstants, rows) -> Constant:
    """Least-squares B3 from quadrature energies of a k-sweep.

    ``rows`` are ExpansionComparison records taken at r = mu r0.  Each gives
    (I_quad/k - A) mu^m - B1/Lambda^m = -B3 B4/(Lambda^{N-2} r0^{N-2}).
    """
    N, m, r0 = p.N, p.m, p.r0
    A, B1, B4 = consts.A.value, consts.B1.value, consts.B4.value
    xs, ys = [], []
    for row in rows:
        lhs = (row.I_quad / row.k - A) * row.mu**m - B1 / row.lam**m
        xs.append(-B4 / (row.lam ** (N - 2) * r0 ** (N - 2)))
        ys.append(lhs)
    xs, ys = np.asarray(xs), np.asarray(ys)
    b3 = float(xs @ ys / (xs @ xs))
    spread = float(np.max(np.abs(ys / xs - b3))) if xs.size > 1 else 0.0
    return Constant(b3, spread, "quadrature")


def lambda0_is_unique_root(p: ProblemParams, consts: ExpansionConstants, lo=1e-3, hi=1e3, n=4001) -> int:
    """Number of sign changes of Lambda^{N-1} dF/dLambda on a log grid."""
    lam = np.geomspace(lo, hi, n)
    g = lam ** (p.N - 1) * dF_dLambda_expansion(p, consts, p.mu * p.r0, lam)
    return int(np.count_nonzero(np.diff(np.sign(g)) != 0))
