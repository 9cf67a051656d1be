"""Newton solver for -Delta u = K(|y|/mu) u_+^{2*-1} in the symmetry class (N = 5).

Functions in the class depend on (s, theta, t) only and are even in theta
about 0 and about pi/k, so the unknowns live on the cells of
[0, S] x [0, pi/k] x [0, T].  The Laplacian is discretised by finite
volumes on a tensor grid graded with sinh maps around the bubble core
(s, theta, t) = (r, 0, 0); the axes s = 0 and t = 0 carry no flux, the
theta-ends are mirror planes, and the outer faces use the Robin condition
matching the |y|^{2-N} tail.  Multiplying by cell volumes makes the
operator a symmetric positive definite matrix.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import minres

from .bubbles import RingConfig, ring_bubble_values, ring_dW
from .config import CurvatureModel, ProblemParams

SOLVER_N = 5


log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


def _sinh_faces(lo: float, hi: float, center: float, a: float, h: float) -> np.ndarray:
    """Faces lo = f_0 < ... < f_n = hi with spacing ~h at ``center`` growing like sinh."""
    x0 = np.arcsinh((lo - center) / a)
    x1 = np.arcsinh((hi - center) / a)
    n = max(int(np.ceil((x1 - x0) * a / h)), 2)
    xi = np.linspace(x0, x1, n + 1)
    f = center + a * np.sinh(xi)
    f[0], f[-1] = lo, hi
    return f


@dataclass(frozen=True)
class SectorGrid:
    """Cell-centred tensor grid on [0, R] x [0, pi/k] x [0, R]."""

    k: int
    r: float
    r_max: float
    s_faces: np.ndarray
    th_faces: np.ndarray
    t_faces: np.ndarray
    h: float
    a: float
    N: int = SOLVER_N

    @classmethod
    def build(cls, k: int, r: float, r_max: float | None = None, h: float = 0.125,
              a: float = 1.0, lam: float = 1.0) -> "SectorGrid":
        """Spacing h/lam at the core, stretching on the scale a/lam.

        The default truncation 3(r + 1) is enough because the defect
        correction in :func:`newton_solve` removes the boundary error of the
        ansatz itself; only the far field of the small correction is affected.
        """
        if r_max is None:
            r_max = 3.0 * (r + 1.0)
        hh, aa = h / lam, a / lam
        s_f = _sinh_faces(0.0, r_max, r, aa, hh)
        th_max = np.pi / k
        # arc-length grading at radius r
        th_f = _sinh_faces(0.0, th_max * r, 0.0, aa, hh) / r
        th_f[-1] = th_max
        t_f = _sinh_faces(0.0, r_max, 0.0, aa, hh)
        return cls(k, r, r_max, s_f, th_f, t_f, h, a)

    @property
    def shape(self):
        return (self.s_faces.size - 1, self.th_faces.size - 1, self.t_faces.size - 1)

    @property
    def size(self) -> int:
        ns, nth, nt = self.shape
        return ns * nth * nt

    @property
    def s(self):
        return 0.5 * (self.s_faces[1:] + self.s_faces[:-1])

    @property
    def th(self):
        return 0.5 * (self.th_faces[1:] + self.th_faces[:-1])

    @property
    def t(self):
        return 0.5 * (self.t_faces[1:] + self.t_faces[:-1])

    def mesh(self):
        return np.meshgrid(self.s, self.th, self.t, indexing="ij")

    def volumes(self) -> np.ndarray:
        """Cell volumes of one sector half (the |S^{N-3}| factor included)."""
        sf, tf = self.s_faces, self.t_faces
        vs = 0.5 * np.diff(sf**2)
        vth = np.diff(self.th_faces)
        vt = np.diff(tf ** (self.N - 2)) / (self.N - 2)
        return 4.0 * np.pi * vs[:, None, None] * vth[None, :, None] * vt[None, None, :]

    def core_cells(self) -> int:
        """Fewest cells, over the three directions, within a unit-length window
        centred on the bubble core (mirror images included on the axes)."""
        n_s = int(np.count_nonzero(np.abs(self.s - self.r) <= 0.5))
        n_t = 2 * int(np.count_nonzero(self.t <= 0.5))
        n_th = 2 * int(np.count_nonzero(self.th * self.r <= 0.5))
        return min(n_s, n_t, n_th)

    def resolves_core(self) -> bool:
        return self.core_cells() >= 8

    def metadata(self) -> dict:
        return {"k": self.k, "r": self.r, "r_max": self.r_max, "h": self.h, "a": self.a, "N": self.N,
                "shape": list(self.shape)}


# ----------------------------------------------------------------------------
# operator


def assemble_operator(grid: SectorGrid, boundary: str = "robin") -> sp.csr_matrix:
    """Volume-integrated -Delta as a sparse SPD matrix (s-fastest ordering).

    ``boundary`` is ``"robin"`` (d_n u = -(N-2) u (n.y)/|y|^2 on the outer
    faces, exact for the |y|^{2-N} tail) or ``"dirichlet"`` (u = 0 there).
    """
    if boundary not in ("robin", "dirichlet"):
        raise ValueError("boundary must be 'robin' or 'dirichlet'")
    N = grid.N
    ns, nth, nt = grid.shape
    sf, thf, tf = grid.s_faces, grid.th_faces, grid.t_faces
    s, th, t = grid.s, grid.th, grid.t
    c = 4.0 * np.pi
    ds = np.diff(sf)
    dth = np.diff(thf)
    Ts = np.diff(tf ** (N - 2)) / (N - 2)  # int t^{N-3} dt over a cell
    Ss = 0.5 * np.diff(sf**2)  # int s ds over a cell

    def idx(i, j, l):
        return i + ns * (j + nth * l)

    rows, cols, vals = [], [], []
    diag = np.zeros((ns, nth, nt))

    # s-faces between i and i+1
    coef = c * sf[1:-1, None, None] * dth[None, :, None] * Ts[None, None, :] / np.diff(s)[:, None, None]
    I, J, L = np.meshgrid(np.arange(ns - 1), np.arange(nth), np.arange(nt), indexing="ij")
    a_, b_ = idx(I, J, L).ravel(), idx(I + 1, J, L).ravel()
    rows += [a_, b_]
    cols += [b_, a_]
    vals += [-coef.ravel(), -coef.ravel()]
    diag[:-1] += coef
    diag[1:] += coef

    # theta-faces: flux int (1/s) d_theta u ds dt ~ (ds_i/s_i) T_l du/dtheta
    coef = c * (ds / s)[:, None, None] * Ts[None, None, :] / np.diff(th)[None, :, None]
    I, J, L = np.meshgrid(np.arange(ns), np.arange(nth - 1), np.arange(nt), indexing="ij")
    a_, b_ = idx(I, J, L).ravel(), idx(I, J + 1, L).ravel()
    rows += [a_, b_]
    cols += [b_, a_]
    vals += [-coef.ravel(), -coef.ravel()]
    diag[:, :-1] += coef
    diag[:, 1:] += coef

    # t-faces
    coef = c * Ss[:, None, None] * dth[None, :, None] * (tf[1:-1] ** (N - 3) / np.diff(t))[None, None, :]
    I, J, L = np.meshgrid(np.arange(ns), np.arange(nth), np.arange(nt - 1), indexing="ij")
    a_, b_ = idx(I, J, L).ravel(), idx(I, J, L + 1).ravel()
    rows += [a_, b_]
    cols += [b_, a_]
    vals += [-coef.ravel(), -coef.ravel()]
    diag[:, :, :-1] += coef
    diag[:, :, 1:] += coef

    # outer faces
    S_out, T_out = sf[-1], tf[-1]
    area_s = c * S_out * dth[:, None] * Ts[None, :]  # (nth, nt)
    area_t = c * Ss[:, None] * dth[None, :] * T_out ** (N - 3)  # (ns, nth)
    if boundary == "robin":
        rho_f = np.hypot(S_out, t)
        rho_c = np.hypot(s[-1], t)
        g = (N - 2) * (rho_c / rho_f) ** (N - 2) * S_out / rho_f**2
        diag[-1] += area_s * g[None, :]
        rho_f = np.hypot(s, T_out)
        rho_c = np.hypot(s, t[-1])
        g = (N - 2) * (rho_c / rho_f) ** (N - 2) * T_out / rho_f**2
        diag[:, :, -1] += area_t * g[:, None]
    else:
        diag[-1] += area_s * 2.0 / (sf[-1] - sf[-2])
        diag[:, :, -1] += area_t * 2.0 / (tf[-1] - tf[-2])

    n = grid.size
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag.ravel(order="F"))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A


def to_vector(field3d: np.ndarray) -> np.ndarray:
    return np.asarray(field3d).ravel(order="F")


def to_field(vec: np.ndarray, grid: SectorGrid) -> np.ndarray:
    return np.asarray(vec).reshape(grid.shape, order="F")


def sample_on_grid(cfg: RingConfig, grid: SectorGrid, which: str = "W") -> np.ndarray:
    S, TH, T = grid.mesh()
    if which == "W":
        return ring_bubble_values(cfg, S, TH, T).sum(axis=0)
    return ring_dW(cfg, which, S, TH, T)


# ----------------------------------------------------------------------------
# Newton


@dataclass
class DiscreteSolution:
    grid: SectorGrid
    u: np.ndarray  # 3-D field
    W: np.ndarray
    residual_norm: float
    residual_history: list
    omega_sup: float
    W_sup: float
    newton_iters: int
    converged: bool
    clip_fraction: float
    projections: dict = field(default_factory=dict)
    linear_iterations: list = field(default_factory=list)
    cfg: RingConfig | None = None

    @property
    def omega_ratio(self) -> float:
        return self.omega_sup / self.W_sup

    @property
    def positive(self) -> bool:
        return bool(np.all(self.u > 0))

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.metadata(),
            "residual_norm": self.residual_norm,
            "residual_history": self.residual_history,
            "omega_sup": self.omega_sup,
            "W_sup": self.W_sup,
            "omega_ratio": self.omega_ratio,
            "newton_iters": self.newton_iters,
            "converged": self.converged,
            "clip_fraction": self.clip_fraction,
            "positive": self.positive,
            "projections": self.projections,
            "linear_iterations": self.linear_iterations,
        }


def _amg_preconditioner(A):
    import pyamg

    ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=500)
    return ml.aspreconditioner(cycle="V")


def _linear_solve(J, b, M, rtol: float, max_passes: int = 6):
    """MINRES on the symmetric, possibly indefinite Newton matrix.

    MINRES stops on a preconditioned backward error, so the true relative
    residual is checked and the solve repeated on the remainder (iterative
    refinement).  Returns (x, relative residual, Krylov iterations).
    """
    count = [0]

    def cb(_):
        count[0] += 1

    x = np.zeros_like(b)
    bn = float(np.linalg.norm(b))
    rel = 1.0 if bn > 0 else 0.0
    for i in range(max_passes):
        if rel <= rtol:
            break
        dx, _ = minres(J, b - J @ x, M=M, rtol=1e-10 if i == 0 else 1e-4, maxiter=5000, callback=cb)
        x += dx
        rel = float(np.linalg.norm(b - J @ x)) / bn
    return x, rel, count[0]


def newton_solve(grid: SectorGrid, cfg: RingConfig, model: CurvatureModel, p: ProblemParams,
                 tol: float = 1e-10, max_iter: int = 30, linear_rtol: float = 1e-8,
                 boundary: str = "robin", u0: np.ndarray | None = None,
                 max_clip_fraction: float = 0.01, tau_correction: bool = True) -> DiscreteSolution:
    """Damped Newton from W_r (or ``u0``) for A u = V K u_+^{2*-1}.

    With ``tau_correction`` the discrete truncation error of the bubbles,
    tau = sum_j (A U_j - V U_j^{2*-1}), is subtracted from the equation
    (defect correction).  Without it the O(h^2) error of the discrete bubble
    energy depends on Lambda and r and swamps the reduced energy, whose
    derivatives are only O(k/mu^m).

    Convergence means the V-weighted residual norm dropped below ``tol``
    times its initial value, or below the rounding level of the residual
    evaluation when that is larger.  Linear systems are solved by MINRES
    preconditioned with smoothed-aggregation AMG built on the Laplacian.
    """
    if grid.N != SOLVER_N or cfg.N != SOLVER_N:
        raise ValueError("the grid solver is implemented for N = 5 only")
    if cfg.k != grid.k:
        raise ValueError("grid and ring configuration disagree on k")
    N = SOLVER_N
    pw = (N + 2.0) / (N - 2.0)
    A = assemble_operator(grid, boundary)
    V = to_vector(grid.volumes())
    S, TH, T = grid.mesh()
    K = to_vector(1.0 - model.deficit(np.hypot(S, T) / p.mu))
    W = to_vector(ring_bubble_values(cfg, S, TH, T).sum(axis=0))
    # truncation error of the individual bubbles, each an exact solution of
    # -Delta U = U^{2*-1}; subtracting it leaves -V l_k as the residual at W
    tau = _bubble_defect(grid, cfg, A, V) if tau_correction else 0.0
    u = W.copy() if u0 is None else to_vector(u0).copy()
    M = _amg_preconditioner(A)
    sqrtV = np.sqrt(V)

    def residual(u):
        return A @ u - V * K * np.maximum(u, 0.0) ** pw - tau

    def rnorm(R):
        return float(np.linalg.norm(R / sqrtV))

    def floor(u):
        # size of the rounding error in evaluating the residual at u
        up = np.maximum(u, 0.0)
        return 10.0 * float(np.finfo(float).eps) * rnorm(abs(A) @ np.abs(u) + V * np.abs(K) * up**pw + np.abs(tau))

    R = residual(u)
    r0 = rnorm(R)
    hist = [r0]
    lin_its = []
    converged = r0 == 0.0
    it = 0
    for it in range(1, max_iter + 1):
        if hist[-1] <= max(tol * r0, floor(u)):
            converged = True
            it -= 1
            break
        up = np.maximum(u, 0.0)
        J = A - sp.diags(V * K * pw * up ** (pw - 1.0))
        delta, lin_res, n_lin = _linear_solve(J, -R, M, linear_rtol)
        lin_its.append(n_lin)
        if lin_res > linear_rtol:
            if lin_res > 1e-6:
                raise SolverError(f"linear solve failed (relative residual {lin_res:.2e})")
            log.warning("linear solve reached only %.2e relative residual", lin_res)
        step = 1.0
        while step >= 1.0 / 64:
            un = u + step * delta
            Rn = residual(un)
            if rnorm(Rn) < (1.0 - 1e-4 * step) * hist[-1]:
                break
            step *= 0.5
        else:
            raise SolverError(f"Newton line search failed; residual history {hist}")
        u, R = un, Rn
        hist.append(rnorm(R))
        log.debug("newton %d: residual %.3e step %g krylov %d min u %.3e", it, hist[-1], step,
                  lin_its[-1], float(u.min()))
        if not np.isfinite(hist[-1]) or hist[-1] > 1e6 * r0:
            raise SolverError("Newton iteration diverged")
    else:
        converged = bool(hist[-1] <= max(tol * r0, floor(u)))

    clip = float(np.mean(u <= 0.0))
    if converged and clip > max_clip_fraction:
        raise SolverError(f"positive-part clipping active on {clip:.1%} of the cells")

    # multiplier analogues: final residual against the discrete Z kernels
    proj = {}
    for name in ("radial", "lambda"):
        Z = to_vector(sample_on_grid(cfg, grid, name))
        zn = float(np.sqrt(np.sum(V * Z * Z)))
        proj[name] = abs(float(R @ Z)) / (r0 * zn) if r0 > 0 else 0.0

    u3, W3 = to_field(u, grid), to_field(W, grid)
    return DiscreteSolution(grid, u3, W3, hist[-1], hist, float(np.max(np.abs(u - W))),
                            float(np.max(W)), it, converged, clip, proj, lin_its, cfg)


def _bubble_defect(grid: SectorGrid, cfg: RingConfig, A, V) -> np.ndarray:
    """sum_j (A U_j - V U_j^{2*-1}): the discrete truncation error of the bubbles."""
    pw = (grid.N + 2.0) / (grid.N - 2.0)
    S, TH, T = grid.mesh()
    S3 = ring_bubble_values(cfg, S, TH, T)
    return A @ to_vector(S3.sum(axis=0)) - V * to_vector(np.sum(S3**pw, axis=0))


def pointwise_residual(sol: DiscreteSolution, model: CurvatureModel, p: ProblemParams,
                       boundary: str = "robin", tau_correction: bool = True) -> np.ndarray:
    """(-Delta_h u - K u_+^{2*-1}) per cell, with the same defect correction as the solve."""
    grid = sol.grid
    A = assemble_operator(grid, boundary)
    V = to_vector(grid.volumes())
    S, TH, T = grid.mesh()
    K = to_vector(1.0 - model.deficit(np.hypot(S, T) / p.mu))
    u = to_vector(sol.u)
    pw = (grid.N + 2.0) / (grid.N - 2.0)
    Au = A @ u
    if tau_correction and sol.cfg is not None:
        Au = Au - _bubble_defect(grid, sol.cfg, A, V)
    return to_field(Au / V - K * np.maximum(u, 0.0) ** pw, grid)


# ----------------------------------------------------------------------------
# Kazdan-Warner type identities


def kazdan_warner_defect(sol: DiscreteSolution, model: CurvatureModel, p: ProblemParams) -> float:
    """int K'(|y|/mu) (y_1/|y|) u^{2*} / int |K'(|y|/mu)| u^{2*} over all of R^N.

    The sector values are unfolded to every image sector (both theta
    orientations) before summing, so the symmetry does the cancelling.
    """
    grid = sol.grid
    N, k = grid.N, grid.k
    S, TH, T = grid.mesh()
    rho = np.hypot(S, T)
    w = grid.volumes() * np.maximum(sol.u, 0.0) ** (2.0 * N / (N - 2.0))
    dK = model.derivative(rho / p.mu)
    den = 2 * k * float(np.sum(np.abs(dK) * w))
    if den == 0.0:
        return 0.0
    num = 0.0
    for j in range(k):
        base = 2.0 * np.pi * j / k
        for sgn in (1.0, -1.0):
            num += float(np.sum(dK * (S * np.cos(base + sgn * TH) / np.where(rho > 0, rho, 1.0)) * w))
    return num / den


def dilation_defect(sol: DiscreteSolution, model: CurvatureModel, p: ProblemParams) -> float:
    """int K'(|y|/mu) (|y|/mu) u^{2*} / int |K'| (|y|/mu) u^{2*}; zero for exact solutions."""
    grid = sol.grid
    N = grid.N
    S, TH, T = grid.mesh()
    x = np.hypot(S, T) / p.mu
    w = grid.volumes() * np.maximum(sol.u, 0.0) ** (2.0 * N / (N - 2.0))
    dK = model.derivative(x)
    den = float(np.sum(np.abs(dK) * x * w))
    return 0.0 if den == 0.0 else float(np.sum(dK * x * w)) / den


# ----------------------------------------------------------------------------
# snapshots

_HEADER = struct.Struct("<6d")


def write_snapshot(path, sol: DiscreteSolution, extra: dict | None = None) -> tuple[Path, Path]:
    """Binary snapshot: header (n_s, n_theta, n_t, R_max, k, N) as little-endian
    float64, then the cell values in s-fastest order; metadata goes to ``path.json``."""
    path = Path(path)
    g = sol.grid
    ns, nth, nt = g.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ns, nth, nt, g.r_max, g.k, g.N))
        fh.write(np.asarray(to_vector(sol.u), dtype="<f8").tobytes())
    meta = {"grid": g.metadata(), "s_faces": g.s_faces.tolist(), "theta_faces": g.th_faces.tolist(),
            "t_faces": g.t_faces.tolist(), "solution": sol.to_dict()}
    if sol.cfg is not None:
        meta["config"] = {"N": sol.cfg.N, "k": sol.cfg.k, "r": sol.cfg.r, "lam": sol.cfg.lam}
    if extra:
        meta.update(extra)
    mpath = path.with_name(path.name + ".json")
    mpath.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, mpath


def read_snapshot(path):
    """Returns (header dict, values as an (n_s, n_theta, n_t) array)."""
    data = Path(path).read_bytes()
    ns, nth, nt, R, k, N = _HEADER.unpack_from(data, 0)
    shape = (int(ns), int(nth), int(nt))
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if vals.size != shape[0] * shape[1] * shape[2]:
        raise ValueError("snapshot size does not match its header")
    header = {"n_s": shape[0], "n_theta": shape[1], "n_t": shape[2], "R_max": R, "k": int(k), "N": int(N)}
    return header, vals.reshape(shape, order="F")
