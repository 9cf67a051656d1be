"""Problem parameters, the curvature profile K(r) and the k -> mu scaling law."""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

MODEL_KINDS = ("exact_power", "power_plus_bump")


@dataclass(frozen=True)
class ProblemParams:
    """Standing parameters of the rescaled curvature problem.

    Construction only rejects values that make no sense at all (non-integer
    dimension, k < 1, ...).  The analytic hypotheses of the construction
    (N >= 5, 2 <= m < N-2, 1 < tau < 2, ...) are reported by
    :func:`validate_assumptions` and enforced by :meth:`require_valid`.
    """

    N: int = 5
    m: float = 2.0
    c0: float = 0.4
    r0: float = 1.0
    theta_K: float = 1.0
    delta: float = 0.5
    k: int = 8
    tau: float = 1.01
    theta_bar: float = 0.1
    L0: float = 0.2
    L1: float = 5.0
    model_kind: str = "exact_power"
    bump: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown curvature model {self.model_kind!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "k", int(self.k))

    @property
    def crit_exp(self) -> float:
        """2* = 2N/(N-2)."""
        return 2.0 * self.N / (self.N - 2)

    @property
    def mu(self) -> float:
        return mu_of_k(self)

    def with_k(self, k: int) -> "ProblemParams":
        return replace(self, k=k)

    def replace(self, **changes) -> "ProblemParams":
        return replace(self, **changes)

    def curvature(self) -> "CurvatureModel":
        return CurvatureModel.from_params(self)

    def require_valid(self) -> None:
        report = validate_assumptions(self)
        if not report.ok:
            failed = "; ".join(c.name for c in report.checks if not c.passed)
            raise ValueError(f"invalid problem parameters: {failed}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CurvatureModel:
    kind: str
    c0: float
    r0: float
    m: float
    theta_K: float
    delta: float
    bump: float = 0.0

    @classmethod
    def from_params(cls, p: ProblemParams) -> "CurvatureModel":
        return cls(p.model_kind, p.c0, p.r0, p.m, p.theta_K, p.delta, p.bump)

    def _bump(self, r):
        # smooth bump supported in (r0 + delta, r0 + 2 delta)
        x = (r - self.r0 - 1.5 * self.delta) / (0.5 * self.delta)
        out = np.zeros_like(r)
        inside = np.abs(x) < 1.0
        xi = x[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - xi * xi))
        return out

    def _dbump(self, r):
        x = (r - self.r0 - 1.5 * self.delta) / (0.5 * self.delta)
        out = np.zeros_like(r)
        inside = np.abs(x) < 1.0
        xi = x[inside]
        g = np.exp(1.0 - 1.0 / (1.0 - xi * xi))
        out[inside] = g * (-2.0 * xi / (1.0 - xi * xi) ** 2) / (0.5 * self.delta)
        return out

    def __call__(self, r):
        return eval_K(self, r)

    def derivative(self, r):
        """K'(r)."""
        r = np.asarray(r, dtype=float)
        d = r - self.r0
        out = -self.c0 * self.m * np.abs(d) ** (self.m - 1.0) * np.sign(d)
        if self.kind == "power_plus_bump" and self.bump:
            out = out + self.bump * self._dbump(np.atleast_1d(r)).reshape(r.shape)
        return out

    def deficit(self, r):
        """1 - K(r), computed without cancellation."""
        r = np.asarray(r, dtype=float)
        out = self.c0 * np.abs(r - self.r0) ** self.m
        if self.kind == "power_plus_bump" and self.bump:
            out = out - self.bump * self._bump(np.atleast_1d(r)).reshape(r.shape)
        return out


def eval_K(model: CurvatureModel, r):
    """K(r) = 1 - c0 |r - r0|^m, plus the optional bump away from r0."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("K is only defined for r >= 0")
    out = 1.0 - model.deficit(r_arr)
    if np.ndim(r) == 0:
        return float(out)
    return out


def scaling_exponent(p: ProblemParams) -> Fraction:
    """(N-2)/(N-2-m) as an exact rational."""
    n2 = Fraction(p.N - 2)
    m = Fraction(p.m).limit_denominator(10**6)
    if n2 - m == 0:
        raise ValueError("m = N-2 makes the scaling law singular")
    return n2 / (n2 - m)


def _exact_rational_power(k: int, e: Fraction) -> float:
    if e.denominator == 1:
        if e.numerator >= 0:
            return float(k ** e.numerator)
        return 1.0 / float(k ** (-e.numerator))
    num = k ** abs(e.numerator)
    root = round(num ** (1.0 / e.denominator))
    for cand in (root - 1, root, root + 1):
        if cand > 0 and cand ** e.denominator == num:
            val = float(cand)
            break
    else:
        val = math.exp(math.log(num) / e.denominator)
    return val if e.numerator > 0 else 1.0 / val


def mu_of_k(p: ProblemParams) -> float:
    """mu = k^{(N-2)/(N-2-m)}."""
    return _exact_rational_power(p.k, scaling_exponent(p))


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list[AssumptionCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def __str__(self):
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}" for c in self.checks]
        return "\n".join(lines)


def validate_assumptions(p: ProblemParams, n_samples: int = 201) -> AssumptionReport:
    rep = AssumptionReport()
    add = rep.checks.append
    add(AssumptionCheck("N >= 5", p.N >= 5, f"N={p.N}"))
    add(AssumptionCheck("m >= 2", p.m >= 2, f"m={p.m}"))
    add(AssumptionCheck("m < N-2", p.m < p.N - 2, f"m={p.m}, N-2={p.N - 2}"))
    add(AssumptionCheck("1 < tau < 2", 1 < p.tau < 2, f"tau={p.tau}"))
    add(AssumptionCheck("c0 > 0", p.c0 > 0, f"c0={p.c0}"))
    add(AssumptionCheck("theta_K > 0", p.theta_K > 0, f"theta_K={p.theta_K}"))
    add(AssumptionCheck("delta > 0", p.delta > 0, f"delta={p.delta}"))
    add(AssumptionCheck("r0 > 0", p.r0 > 0, f"r0={p.r0}"))
    add(AssumptionCheck("k >= 2", p.k >= 2, f"k={p.k}"))
    add(AssumptionCheck("theta_bar > 0", p.theta_bar > 0, f"theta_bar={p.theta_bar}"))
    add(AssumptionCheck("0 < L0 <= L1", 0 < p.L0 <= p.L1, f"L0={p.L0}, L1={p.L1}"))
    if p.delta > 0 and p.r0 > 0:
        rs = np.linspace(max(p.r0 - p.delta, 0.0), p.r0 + p.delta, n_samples)
        kmin = float(np.min(eval_K(p.curvature(), rs)))
        add(AssumptionCheck("K > 0 near r0", kmin > 0, f"min K={kmin:.6g} on [r0-delta, r0+delta]"))
    return rep


_KEYS = {
    "n": ("N", int),
    "m": ("m", float),
    "c0": ("c0", float),
    "r0": ("r0", float),
    "theta_k": ("theta_K", float),
    "delta": ("delta", float),
    "k": ("k", int),
    "tau": ("tau", float),
    "theta_bar": ("theta_bar", float),
    "l0": ("L0", float),
    "l1": ("L1", float),
    "model.kind": ("model_kind", str),
    "model.bump": ("bump", float),
}


def parse_config(text: str, base: ProblemParams | None = None) -> ProblemParams:
    """Parse the ``key = value`` config format (``#`` comments allowed)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str.lower
    cp.read_string("[params]\n" + text)
    changes = {}
    for key, raw in cp["params"].items():
        if key not in _KEYS:
            raise ValueError(f"unknown config key {key!r}")
        attr, conv = _KEYS[key]
        changes[attr] = conv(raw.strip())
    return replace(base or ProblemParams(), **changes)


def load_config(path, base: ProblemParams | None = None) -> ProblemParams:
    return parse_config(Path(path).read_text(), base)


def dump_config(p: ProblemParams) -> str:
    lines = []
    for key, (attr, _) in _KEYS.items():
        lines.append(f"{key} = {getattr(p, attr)}")
    return "\n".join(lines) + "\n"
