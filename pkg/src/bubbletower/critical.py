"""Critical points of the reduced energy F(r, Lambda) inside the window D.

F is a saddle: concave in r around mu r0 and convex in Lambda around
Lambda_0 (equivalently Fbar = -F has a maximum in r and a minimum in
Lambda).  The min-max level c of Fbar over paths that fix the r-edges of
D is attained at that saddle.  Two flows are provided: the plain descent
of Fbar, which leaves D through the r-edges once Fbar has dropped below
alpha_1, and a saddle flow (descent in Lambda, ascent in r) that converges
to the critical point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubbles import RingConfig
from .config import CurvatureModel, ProblemParams
from .constants import ExpansionConstants, F_expansion, grad_F_expansion, lambda0
from .quadrature import QuadratureSpec, energy_excess, integral_bubble_power


class CriticalPointError(RuntimeError):
    pass


@dataclass(frozen=True)
class RegionD:
    """|r - mu r0| <= mu^{-theta_bar}, |Lambda - Lambda_0| <= mu^{-3 theta_bar/2} (within [L0, L1])."""

    r_lo: float
    r_hi: float
    lam_lo: float
    lam_hi: float

    def __post_init__(self):
        if not (self.r_lo <= self.r_hi and self.lam_lo <= self.lam_hi):
            raise ValueError("empty region")

    @classmethod
    def from_params(cls, p: ProblemParams, lam0: float, clip: bool = True) -> "RegionD":
        mu = p.mu
        wr = mu ** (-p.theta_bar)
        wl = mu ** (-1.5 * p.theta_bar)
        lo, hi = lam0 - wl, lam0 + wl
        if clip:
            lo, hi = max(lo, p.L0), min(hi, p.L1)
        return cls(mu * p.r0 - wr, mu * p.r0 + wr, lo, hi)

    @property
    def center(self):
        return 0.5 * (self.r_lo + self.r_hi), 0.5 * (self.lam_lo + self.lam_hi)

    @property
    def half_widths(self):
        return 0.5 * (self.r_hi - self.r_lo), 0.5 * (self.lam_hi - self.lam_lo)

    def contains(self, r, lam, slack: float = 0.0) -> bool:
        wr, wl = self.half_widths
        return (self.r_lo - slack * wr <= r <= self.r_hi + slack * wr
                and self.lam_lo - slack * wl <= lam <= self.lam_hi + slack * wl)


# ----------------------------------------------------------------------------
# objectives


class ExpansionObjective:
    """F_expansion with its exact gradient (times an optional positive factor)."""

    kind = "expansion"

    def __init__(self, p: ProblemParams, consts: ExpansionConstants, factor: float = 1.0):
        if factor <= 0:
            raise ValueError("factor must be positive")
        self.p, self.consts, self.factor = p, consts, factor

    def value(self, r, lam) -> float:
        return self.factor * float(F_expansion(self.p, self.consts, r, lam))

    def grad(self, r, lam) -> np.ndarray:
        dr, dl = grad_F_expansion(self.p, self.consts, r, lam)
        return self.factor * np.array([float(dr), float(dl)])

    def hess(self, r, lam) -> np.ndarray:
        hr = 1e-4 * max(abs(r), 1.0) * 1e-3
        hl = 1e-4 * max(abs(lam), 1.0)
        g = np.array([(self.grad(r + hr, lam) - self.grad(r - hr, lam)) / (2 * hr),
                      (self.grad(r, lam + hl) - self.grad(r, lam - hl)) / (2 * hl)])
        return 0.5 * (g + g.T)


class QuadratureObjective:
    """F(r, Lambda) = I(W_r) from the sector quadrature, with central-difference derivatives.

    Only the Lambda- and r-dependent part I - kA is evaluated; kA is added
    back in :meth:`value`.  Derivative steps default to 1/100 of the window
    half-widths.
    """

    kind = "quadrature"

    def __init__(self, p: ProblemParams, model: CurvatureModel | None = None,
                 spec: QuadratureSpec | None = None, steps=None):
        self.p = p
        self.model = model or p.curvature()
        self.spec = spec or QuadratureSpec()
        mu = p.mu
        self.steps = steps or (mu ** (-p.theta_bar) / 100.0, mu ** (-1.5 * p.theta_bar) / 100.0)
        self._kA = p.k / p.N * integral_bubble_power(p.N, p.crit_exp, self.spec).value
        self._cache: dict = {}
        self.evaluations = 0

    def excess(self, r, lam) -> float:
        key = (float(r), float(lam))
        if key not in self._cache:
            cfg = RingConfig(self.p.N, self.p.k, float(r), float(lam))
            self._cache[key] = energy_excess(cfg, self.model, self.p, self.spec, estimate_error=False).value
            self.evaluations += 1
        return self._cache[key]

    def value(self, r, lam) -> float:
        return self._kA + self.excess(r, lam)

    def grad(self, r, lam) -> np.ndarray:
        hr, hl = self.steps
        f = self.excess
        return np.array([(f(r + hr, lam) - f(r - hr, lam)) / (2 * hr),
                         (f(r, lam + hl) - f(r, lam - hl)) / (2 * hl)])

    def hess(self, r, lam) -> np.ndarray:
        hr, hl = self.steps
        f = self.excess
        c = f(r, lam)
        hrr = (f(r + hr, lam) - 2 * c + f(r - hr, lam)) / hr**2
        hll = (f(r, lam + hl) - 2 * c + f(r, lam - hl)) / hl**2
        hrl = (f(r + hr, lam + hl) - f(r + hr, lam - hl) - f(r - hr, lam + hl)
               + f(r - hr, lam - hl)) / (4 * hr * hl)
        return np.array([[hrr, hrl], [hrl, hll]])


# ----------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class CriticalPointResult:
    r_star: float
    lam_star: float
    grad_norm: float
    method: str
    objective: str
    iterations: int

    def to_dict(self):
        return dict(r_star=self.r_star, lam_star=self.lam_star, grad_norm=self.grad_norm,
                    method=self.method, objective=self.objective, iterations=self.iterations)


@dataclass
class FlowResult:
    result: CriticalPointResult
    status: str  # converged | left_region | max_iter | stalled
    trajectory: list = field(default_factory=list)  # rows (r, lam, Fbar, grad_norm)
    exit_level: float | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def default_grad_tol(p: ProblemParams) -> float:
    return 1e-8 * p.k / p.mu**p.m


def gradient_flow(obj, start, region: RegionD, mode: str = "saddle", tol: float | None = None,
                  max_iter: int = 500) -> FlowResult:
    """Explicit adaptive flow for Fbar = -F inside ``region``.

    ``mode="descent"`` integrates dr/dt = -D_r Fbar, dLambda/dt = -D_Lambda Fbar;
    steps are accepted only on sufficient decrease of Fbar, and the flow stops (status
    ``left_region``) at the first step that would leave D.

    ``mode="saddle"`` flips the r-component (ascent of Fbar in r) and accepts a
    step when the scaled gradient norm decreases or when Fbar goes up in r and
    down in Lambda; this is the flow that converges to the critical point from
    anywhere in D.

    The step is preconditioned by the squared half-widths of D so that both
    directions move on the scale of the window.
    """
    if mode not in ("saddle", "descent"):
        raise ValueError(f"unknown flow mode {mode!r}")
    p = obj.p
    tol = default_grad_tol(p) if tol is None else tol
    r, lam = map(float, start)
    if not region.contains(r, lam):
        raise CriticalPointError("start point outside the region")
    wr, wl = region.half_widths
    scale = np.array([max(wr, 1e-300) ** 2, max(wl, 1e-300) ** 2])

    def fbar(r, lam):
        return -obj.value(r, lam)

    def merit(g):
        return float(np.hypot(g[0] * wr, g[1] * wl))

    g = -obj.grad(r, lam)  # gradient of Fbar
    fb = fbar(r, lam)
    traj = [(r, lam, fb, float(np.linalg.norm(g)))]
    # initial step: a move of ~1/4 window along the scaled gradient; each
    # coordinate keeps its own step factor, halved whenever its gradient
    # component changes sign (overshoot) and grown otherwise
    alpha = np.full(2, 0.25 / max(merit(g), 1e-300))
    status, exit_level = "max_iter", None
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) < tol:
            status = "converged"
            it -= 1
            break
        direction = -g * scale
        if mode == "saddle":
            direction[0] = -direction[0]
        accepted = False
        while np.max(alpha * np.abs(direction) / np.sqrt(scale)) > 1e-14:
            rn, ln = r + alpha[0] * direction[0], lam + alpha[1] * direction[1]
            if not region.contains(rn, ln):
                if mode == "descent":
                    status, exit_level = "left_region", fbar(rn, ln)
                    r, lam = rn, ln
                    traj.append((r, lam, exit_level, float("nan")))
                    break
                alpha *= 0.5
                continue
            gn = -obj.grad(rn, ln)
            fn = fbar(rn, ln)
            if mode == "descent":
                ok = fn <= fb - 1e-4 * float(np.dot(alpha * g * scale, g))
            else:
                # the scaled gradient norm is not monotone where F changes
                # convexity, so also accept a step that raises Fbar in r and
                # lowers it in Lambda
                ok = merit(gn) < merit(g) or (fbar(rn, lam) > fb and fn < fbar(rn, lam))
            if ok:
                flipped = gn * g < 0
                alpha = np.where(flipped, 0.5 * alpha, 1.5 * alpha)
                r, lam, g, fb = rn, ln, gn, fn
                accepted = True
                break
            alpha *= 0.5
        if status == "left_region":
            break
        if not accepted:
            status = "converged" if np.linalg.norm(g) < tol else "stalled"
            break
        traj.append((r, lam, fb, float(np.linalg.norm(g))))
    gnorm = float(np.linalg.norm(obj.grad(r, lam))) if region.contains(r, lam) else float("nan")
    res = CriticalPointResult(r, lam, gnorm, "flow", obj.kind, it)
    return FlowResult(res, status, traj, exit_level)


def newton_polish(obj, start, tol: float = 1e-10, max_iter: int = 30,
                  region: RegionD | None = None) -> tuple[CriticalPointResult, list]:
    """2-D Newton on grad F with the objective's Hessian.  Returns the result and the grad-norm history."""
    r, lam = map(float, start)
    history = []
    g = obj.grad(r, lam)
    history.append(float(np.linalg.norm(g)))
    it = 0
    for it in range(1, max_iter + 1):
        if history[-1] < tol:
            it -= 1
            break
        H = obj.hess(r, lam)
        if not np.all(np.isfinite(H)) or np.linalg.cond(H) > 1e14:
            raise CriticalPointError("singular Hessian in Newton polish")
        dx = np.linalg.solve(H, g)
        r, lam = r - dx[0], lam - dx[1]
        g = obj.grad(r, lam)
        history.append(float(np.linalg.norm(g)))
        if not np.isfinite(history[-1]) or (len(history) > 4 and history[-1] > 1e3 * history[0]):
            raise CriticalPointError("Newton polish diverged")
        if region is not None and not region.contains(r, lam, slack=1.0):
            raise CriticalPointError("Newton polish left the neighbourhood of the region")
        hr = getattr(obj, "steps", (0.0, 0.0))
        # for finite-difference objectives stop once the step is below the stencil resolution
        if obj.kind == "quadrature" and abs(dx[0]) < 1e-3 * hr[0] and abs(dx[1]) < 1e-3 * hr[1]:
            break
    return CriticalPointResult(r, lam, history[-1], "newton", obj.kind, it), history


def find_critical_point(obj, region: RegionD, start=None, flow_tol: float | None = None,
                        newton_tol: float | None = None, max_flow_iter: int = 200) -> tuple[CriticalPointResult, FlowResult]:
    """Saddle flow from ``start`` (default: the center of D) followed by Newton polish."""
    start = start or region.center
    p = obj.p
    if flow_tol is None:
        flow_tol = 1e-3 * p.k / p.mu**p.m
    flow = gradient_flow(obj, start, region, "saddle", flow_tol, max_flow_iter)
    if newton_tol is None:
        newton_tol = 1e-10 * min(1.0, p.k / p.mu**p.m) if obj.kind == "expansion" else default_grad_tol(p)
    res, hist = newton_polish(obj, (flow.result.r_star, flow.result.lam_star), newton_tol, region=region)
    out = CriticalPointResult(res.r_star, res.lam_star, res.grad_norm, "hybrid", obj.kind,
                              flow.result.iterations + res.iterations)
    return out, flow


# ----------------------------------------------------------------------------
# levels and the min-max value


def alpha_levels(p: ProblemParams, consts: ExpansionConstants, eta: float = 1e-3):
    """(alpha_1, alpha_2) of the deformation argument, with the effective interaction coefficient."""
    N, m, k, mu, r0 = p.N, p.m, p.k, p.mu, p.r0
    L0 = lambda0(p, consts)
    A, B1, Bi = consts.A.value, consts.B1.value, consts.B_interaction
    bracket = B1 / L0**m - Bi / (L0 ** (N - 2) * r0 ** (N - 2))
    a1 = k * (-A - bracket / mu**m - mu ** (-m - 2.5 * p.theta_bar))
    a2 = k * (-A + eta)
    return a1, a2


@dataclass(frozen=True)
class MinMaxResult:
    c: float
    r_saddle: float
    lam_saddle: float
    refinement_delta: float
    grid: tuple

    def grid_ok(self, tol: float) -> bool:
        return self.refinement_delta <= tol


def _minmax_grid(values: np.ndarray):
    """min over index paths j(i) with |j(i+1) - j(i)| <= 1 of max_i values[i, j(i)]."""
    nr, nl = values.shape
    cost = values[0].copy()
    back = np.zeros((nr, nl), dtype=int)
    for i in range(1, nr):
        prev = np.full((3, nl), np.inf)
        prev[1] = cost
        prev[0, 1:] = cost[:-1]
        prev[2, :-1] = cost[1:]
        choice = np.argmin(prev, axis=0)
        best = prev[choice, np.arange(nl)]
        back[i] = np.arange(nl) + choice - 1
        cost = np.maximum(values[i], best)
    j = int(np.argmin(cost))
    c = float(cost[j])
    path = [j]
    for i in range(nr - 1, 0, -1):
        j = back[i, j]
        path.append(j)
    path = path[::-1]
    along = values[np.arange(nr), path]
    i_star = int(np.argmax(along))
    return c, i_star, path[i_star]


def minmax_value(obj, region: RegionD, n_r: int = 41, n_lam: int = 41) -> MinMaxResult:
    """Discrete min-max level of Fbar over paths crossing D from r_lo to r_hi.

    The level is computed on an n_r x n_lam grid and again on the grid with
    every cell halved; the difference is reported as ``refinement_delta``.
    """
    def solve(nr, nl):
        rs = np.linspace(region.r_lo, region.r_hi, nr) if region.r_hi > region.r_lo else np.array([region.r_lo])
        ls = np.linspace(region.lam_lo, region.lam_hi, nl) if region.lam_hi > region.lam_lo else np.array([region.lam_lo])
        vals = np.array([[-obj.value(r, l) for l in ls] for r in rs])
        c, i, j = _minmax_grid(vals)
        return c, rs[i], ls[j]

    c, rs, ls = solve(n_r, n_lam)
    c2, rs2, ls2 = solve(2 * n_r - 1, 2 * n_lam - 1)
    return MinMaxResult(c2, rs2, ls2, abs(c2 - c), (2 * n_r - 1, 2 * n_lam - 1))


def boundary_probe(obj, region: RegionD, n: int = 21) -> dict:
    """Signs of the outward derivatives of Fbar on the Lambda-edges and Fbar on the r-edges."""
    rs = np.linspace(region.r_lo, region.r_hi, n)
    ls = np.linspace(region.lam_lo, region.lam_hi, n)
    d_top = np.array([-obj.grad(r, region.lam_hi)[1] for r in rs])
    d_bottom = np.array([-obj.grad(r, region.lam_lo)[1] for r in rs])
    fb_edges = np.array([[-obj.value(region.r_lo, l), -obj.value(region.r_hi, l)] for l in ls])
    return {"min_dFbar_dlam_top": float(d_top.min()), "max_dFbar_dlam_bottom": float(d_bottom.max()),
            "max_Fbar_r_edges": float(fb_edges.max())}


@dataclass(frozen=True)
class InvarianceStudy:
    mode: str
    n_starts: int
    statuses: dict
    exits: int
    exit_levels_below_alpha1: int
    max_final_grad: float


def flow_invariance_study(obj, region: RegionD, n_starts: int = 100, seed: int = 0,
                          mode: str = "saddle", alpha1: float | None = None,
                          max_iter: int = 500) -> InvarianceStudy:
    """Run the flow from quasi-random interior starts and count exits from D.

    For the descent flow an exit is only consistent with the deformation
    argument when it happens at a level of Fbar below ``alpha1``; those exits
    are counted separately.
    """
    from scipy.stats import qmc

    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n_starts)
    u = 0.05 + 0.9 * u  # strictly interior
    statuses: dict = {}
    exits = below = 0
    worst = 0.0
    for a, b in u:
        start = (region.r_lo + a * (region.r_hi - region.r_lo), region.lam_lo + b * (region.lam_hi - region.lam_lo))
        fl = gradient_flow(obj, start, region, mode, max_iter=max_iter)
        statuses[fl.status] = statuses.get(fl.status, 0) + 1
        if fl.status == "left_region":
            exits += 1
            if alpha1 is not None and fl.exit_level is not None and fl.exit_level < alpha1:
                below += 1
        else:
            worst = max(worst, fl.result.grad_norm)
    return InvarianceStudy(mode, n_starts, statuses, exits, below, worst)
