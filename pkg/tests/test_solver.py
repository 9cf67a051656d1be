import numpy as np
import pytest

from bubbletower.bubbles import RingConfig, ring_bubble_values
from bubbletower.config import ProblemParams
from bubbletower.constants import compute_constants, lambda0
from bubbletower.solver import (
    SectorGrid,
    SolverError,
    _bubble_defect,
    assemble_operator,
    dilation_defect,
    kazdan_warner_defect,
    newton_solve,
    pointwise_residual,
    read_snapshot,
    to_field,
    to_vector,
    write_snapshot,
)


@pytest.fixture(scope="module")
def small_solve():
    p = ProblemParams(k=3)
    lam = lambda0(p, compute_constants(p))
    grid = SectorGrid.build(3, p.mu, h=0.25, lam=lam)
    cfg = RingConfig(5, 3, p.mu, lam)
    return p, grid, cfg, newton_solve(grid, cfg, p.curvature(), p)


def test_grid_geometry():
    g = SectorGrid.build(4, 20.0, h=0.2)
    assert g.s_faces[0] == 0.0 and g.s_faces[-1] == pytest.approx(63.0)
    assert g.th_faces[-1] == pytest.approx(np.pi / 4)
    assert g.size == np.prod(g.shape)
    # volumes of the half sector of a 5-D cylinder: (pi/k)|S^2| R^2/2 R^3/3
    R = g.r_max
    assert g.volumes().sum() == pytest.approx(np.pi / 4 * 4 * np.pi * R**2 / 2 * R**3 / 3, rel=1e-12)
    fine = SectorGrid.build(4, 20.0, h=0.1)
    assert fine.core_cells() >= 8 and fine.resolves_core()
    assert not SectorGrid.build(4, 20.0, h=0.4).resolves_core()


def test_operator_annihilates_constants_in_the_interior():
    g = SectorGrid.build(3, 6.0, h=0.4)
    A = assemble_operator(g)
    row = to_field(A @ np.ones(g.size), g)
    assert np.max(np.abs(row[:-1, :, :-1])) < 1e-10 * abs(A).max()
    assert np.all(row[-1] > 0)
    with pytest.raises(ValueError):
        assemble_operator(g, boundary="neumann")


@pytest.mark.parametrize("boundary", ["robin", "dirichlet"])
def test_operator_symmetric(boundary):
    g = SectorGrid.build(3, 6.0, h=0.4)
    A = assemble_operator(g, boundary)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u, v = rng.normal(size=(2, g.size))
        a, b = u @ (A @ v), v @ (A @ u)
        assert abs(a - b) <= 1e-10 * abs(a)
    # positive definite on a random vector
    assert u @ (A @ u) > 0


def test_vector_field_round_trip():
    g = SectorGrid.build(3, 6.0, h=0.4)
    f = np.random.default_rng(1).normal(size=g.shape)
    assert np.array_equal(to_field(to_vector(f), g), f)
    # s is the fastest index
    assert to_vector(f)[1] == f[1, 0, 0]


def test_discrete_bubble_defect_second_order():
    # k = 1, Lambda = 1: the bubble solves -Delta U = U^{2*-1} exactly
    cfg = RingConfig(5, 1, 8.0, 1.0)
    sup, l2 = [], []
    for h in (0.2, 0.1):
        g = SectorGrid.build(1, 8.0, h=h, r_max=24.0)
        A = assemble_operator(g)
        V = to_vector(g.volumes())
        d = to_field(_bubble_defect(g, cfg, A, V) / V, g)
        sup.append(np.max(np.abs(d)))
        l2.append(np.sqrt(np.sum(d**2 * g.volumes())))
    assert l2[0] / l2[1] > 3.5
    assert sup[0] / sup[1] > 3.0


def test_single_bubble_is_a_fixed_point():
    p = ProblemParams(k=1, c0=0.0)
    cfg = RingConfig(5, 1, 5.0, 1.0)
    g = SectorGrid.build(1, 5.0, h=0.5)
    sol = newton_solve(g, cfg, p.curvature(), p)
    assert sol.converged and sol.newton_iters == 0
    assert np.array_equal(sol.u, sol.W)
    assert kazdan_warner_defect(sol, p.curvature(), p) == 0.0


def test_input_validation(small_solve):
    p, grid, cfg, _ = small_solve
    with pytest.raises(ValueError):
        newton_solve(grid, RingConfig(5, 4, p.mu, 1.0), p.curvature(), p)
    with pytest.raises(ValueError):
        newton_solve(grid, RingConfig(6, 3, p.mu, 1.0), p.curvature(), p)


def test_small_solve(small_solve):
    p, grid, cfg, sol = small_solve
    assert sol.converged and sol.positive
    assert sol.residual_norm <= 1e-10 * sol.residual_history[0]
    assert sol.omega_ratio < 0.05
    assert max(sol.projections.values()) < 1e-3
    assert sol.clip_fraction == 0.0
    # quadratic convergence: each residual at most ~ the square of the previous (relative)
    h = np.array(sol.residual_history) / sol.residual_history[0]
    assert len(h) <= 6


def test_pointwise_residual_small(small_solve):
    p, grid, cfg, sol = small_solve
    res = pointwise_residual(sol, p.curvature(), p)
    assert np.max(np.abs(res)) < 1e-8 * np.max(sol.u) ** (7 / 3)
    raw = pointwise_residual(sol, p.curvature(), p, tau_correction=False)
    assert np.max(np.abs(raw)) > np.max(np.abs(res))


def test_identities_small(small_solve):
    p, _, _, sol = small_solve
    assert abs(kazdan_warner_defect(sol, p.curvature(), p)) < 1e-12
    assert np.isfinite(dilation_defect(sol, p.curvature(), p))


def test_snapshot_round_trip(small_solve, tmp_path):
    p, grid, cfg, sol = small_solve
    path, meta = write_snapshot(tmp_path / "u.bin", sol, {"note": 1})
    header, vals = read_snapshot(path)
    assert header == {"n_s": grid.shape[0], "n_theta": grid.shape[1], "n_t": grid.shape[2],
                      "R_max": grid.r_max, "k": 3, "N": 5}
    assert np.array_equal(vals, sol.u)
    assert path.stat().st_size == 48 + 8 * grid.size
    assert meta.exists()
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_snapshot(path)


def test_clip_gate():
    # a start far below zero makes the positive part inactive on most cells
    p = ProblemParams(k=3)
    grid = SectorGrid.build(3, 4.0, h=0.5, r_max=12.0)
    cfg = RingConfig(5, 3, 4.0, 1.0)
    W = sum(ring_bubble_values(cfg, *grid.mesh()))
    with pytest.raises(SolverError):
        newton_solve(grid, cfg, p.curvature(), p, u0=-W, max_iter=3, max_clip_fraction=0.0)
