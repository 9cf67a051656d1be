import numpy as np
import pytest

from bubbletower.config import ProblemParams
from bubbletower.constants import F_expansion, compute_constants, lambda0
from bubbletower.critical import (
    CriticalPointError,
    ExpansionObjective,
    RegionD,
    _minmax_grid,
    alpha_levels,
    boundary_probe,
    find_critical_point,
    flow_invariance_study,
    gradient_flow,
    minmax_value,
    newton_polish,
)


@pytest.fixture(scope="module")
def setup():
    p = ProblemParams(k=8)
    c = compute_constants(p)
    L0 = lambda0(p, c)
    return p, c, L0, ExpansionObjective(p, c), RegionD.from_params(p, L0)


def test_region_shape(setup):
    p, _, L0, _, D = setup
    assert D.center == pytest.approx((p.mu, L0))
    assert D.half_widths[0] == pytest.approx(p.mu ** -p.theta_bar)
    assert D.contains(*D.center) and not D.contains(D.r_hi + 1e-9, L0)
    with pytest.raises(ValueError):
        RegionD(1.0, 0.0, 1.0, 2.0)


def test_region_clipping():
    p = ProblemParams(k=2, L0=0.95, theta_bar=0.01)
    D = RegionD.from_params(p, 1.0)
    assert D.lam_lo == 0.95
    assert RegionD.from_params(p, 1.0, clip=False).lam_lo < 0.95


@pytest.mark.parametrize("k", [4, 8, 64])
def test_expansion_critical_point_recovered(k):
    p = ProblemParams(k=k)
    c = compute_constants(p)
    L0 = lambda0(p, c)
    D = RegionD.from_params(p, L0)
    res, flow = find_critical_point(ExpansionObjective(p, c), D, start=(D.r_lo + 0.3 * (D.r_hi - D.r_lo), D.lam_hi - 1e-3))
    assert res.r_star == pytest.approx(p.mu * p.r0, rel=1e-10)
    assert res.lam_star == pytest.approx(L0, rel=1e-10)
    assert flow.status == "converged"


def test_objective_factor_rescales(setup):
    p, c, L0, obj, _ = setup
    o2 = ExpansionObjective(p, c, factor=3.0)
    assert o2.value(p.mu, L0) == pytest.approx(3 * obj.value(p.mu, L0))
    assert np.allclose(o2.grad(p.mu + 0.1, 1.0), 3 * obj.grad(p.mu + 0.1, 1.0))
    with pytest.raises(ValueError):
        ExpansionObjective(p, c, factor=0.0)


def test_hessian_signature(setup):
    # F is a min in r and a max in Lambda at the critical point
    p, _, L0, obj, _ = setup
    H = obj.hess(p.mu, L0)
    assert H[0, 0] > 0 and H[1, 1] < 0


def test_flow_rejects_outside_start_and_bad_mode(setup):
    _, _, _, obj, D = setup
    with pytest.raises(CriticalPointError):
        gradient_flow(obj, (D.r_hi + 1.0, D.lam_lo), D)
    with pytest.raises(ValueError):
        gradient_flow(obj, D.center, D, mode="sideways")


def test_descent_flow_exits_below_alpha1(setup):
    p, c, _, obj, D = setup
    a1, a2 = alpha_levels(p, c)
    assert a1 < a2
    study = flow_invariance_study(obj, D, n_starts=10, mode="descent", alpha1=a1)
    assert study.exits == 10 and study.exit_levels_below_alpha1 == 10


def test_saddle_flow_never_leaves(setup):
    _, _, _, obj, D = setup
    study = flow_invariance_study(obj, D, n_starts=20)
    assert study.exits == 0 and study.statuses == {"converged": 20}


def test_newton_polish_history_is_quadratic(setup):
    p, _, L0, obj, D = setup
    res, hist = newton_polish(obj, (p.mu + 0.5 * D.half_widths[0], L0 + 0.2 * D.half_widths[1]))
    assert res.grad_norm < 1e-10
    assert len(hist) <= 8


def test_minmax_grid_on_known_saddle():
    # values = x^2 - y^2 style: max over rows along best path is at the saddle
    x = np.linspace(-1, 1, 21)[:, None]
    y = np.linspace(-1, 1, 21)[None, :]
    c, i, j = _minmax_grid(-(x**2) + y**2 - 0.0 * x * y)
    assert c == pytest.approx(0.0, abs=1e-12) and (i, j) == (10, 10)


def test_minmax_value_equals_critical_level(setup):
    p, c, L0, obj, D = setup
    mm = minmax_value(obj, D, 21, 21)
    assert mm.c == pytest.approx(-float(F_expansion(p, c, p.mu, L0)), rel=1e-12)
    assert mm.grid_ok(1e-9)


def test_boundary_probe_signs(setup):
    _, _, _, obj, D = setup
    b = boundary_probe(obj, D)
    # Fbar increases outward on both Lambda-edges
    assert b["min_dFbar_dlam_top"] > 0 and b["max_dFbar_dlam_bottom"] < 0
