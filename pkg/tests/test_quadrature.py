import numpy as np
import pytest

from bubbletower.bubbles import Bubble, RingConfig
from bubbletower.config import ProblemParams
from bubbletower.quadrature import (
    IntegralResult,
    QuadratureSpec,
    ball_volume_check,
    beta_bubble_power,
    energy_brute_force,
    energy_components,
    energy_I,
    full_space_integral,
    gauss_panels,
    geometric_breaks,
    integral_bubble_power,
    interaction_integral,
    interaction_profile,
    moment_integral,
    QuadratureError,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(radial_rule="simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(target_rel_tol=1e-15)
    assert QuadratureSpec(r_max=700.0).truncation(10.0) == 700.0
    with pytest.raises(ValueError):
        QuadratureSpec(r_max=7.0).truncation(1.0)
    with pytest.raises(ValueError):
        QuadratureSpec(r_max_factor=10.0)


def test_gauss_panels_integrate_polynomials_exactly():
    x, w = gauss_panels(geometric_breaks(0.0, 3.0, [1.0], 0.1), 6)
    assert np.sum(w * x**11) == pytest.approx(3.0**12 / 12, rel=1e-13)


def test_geometric_breaks_cluster_at_centers():
    b = geometric_breaks(0.0, 100.0, [50.0], 0.5)
    assert 50.0 in b and 50.5 in b and 49.5 in b
    assert np.all(np.diff(b) > 0)


@pytest.mark.parametrize("N", [5, 6, 7])
@pytest.mark.parametrize("rule", ["gauss_legendre_panels", "tanh_sinh"])
def test_bubble_power_matches_beta_function(N, rule):
    p = 2.0 * N / (N - 2)
    res = integral_bubble_power(N, p, QuadratureSpec(radial_rule=rule))
    assert res.value == pytest.approx(beta_bubble_power(N, p), rel=1e-8)
    assert res.est_error < 1e-6 * res.value


def test_bubble_power_scaling_in_lambda():
    # int U_lam^{2*} is dilation invariant; int U_lam^{2*-1} scales like lam^{-(N-2)/2}
    N = 5
    a = integral_bubble_power(N, 10 / 3, lam=2.5).value
    assert a == pytest.approx(integral_bubble_power(N, 10 / 3).value, rel=1e-9)
    b = integral_bubble_power(N, 7 / 3, QuadratureSpec(r_max_factor=1e6), lam=2.0).value
    b1 = integral_bubble_power(N, 7 / 3, QuadratureSpec(r_max_factor=1e6)).value
    assert b == pytest.approx(b1 * 2.0**-1.5, rel=1e-6)


def test_nonintegrable_power_rejected():
    with pytest.raises(ValueError):
        integral_bubble_power(5, 5 / 3)


def test_moment_zero_reduces_to_plain_integral():
    r = moment_integral(5, 0.0, 10 / 3)
    assert r.value == pytest.approx(beta_bubble_power(5, 10 / 3), rel=1e-8)


def test_second_moment_matches_radial_form():
    # int y_1^2 f(|y|) = (1/N) int |y|^2 f(|y|): closed form via Beta functions
    from scipy.special import beta

    from bubbletower.bubbles import bubble_const
    from bubbletower.geometry import sphere_area

    N, p = 5, 10 / 3
    e = p * (N - 2) / 2
    radial = 0.5 * beta((N + 2) / 2, e - (N + 2) / 2)
    exact = bubble_const(N) ** p * sphere_area(N - 1) * radial / N
    assert moment_integral(N, 2.0, p).value == pytest.approx(exact, rel=1e-8)


def test_interaction_is_symmetric_and_scales():
    N = 5
    a = Bubble(np.zeros(N), 1.0)
    b = Bubble(np.array([7.0, 0, 0, 0, 0]), 1.0)
    g = interaction_profile(N, 7.0).value
    assert interaction_integral(a, b).value == pytest.approx(g, rel=1e-10)
    # G(Lambda d) gives the interaction of two Lambda-bubbles at distance d
    a2, b2 = Bubble(np.zeros(N), 2.0), Bubble(np.array([3.5, 0, 0, 0, 0]), 2.0)
    assert interaction_integral(a2, b2).value == pytest.approx(g, rel=1e-8)
    with pytest.raises(ValueError):
        interaction_integral(a, a)


def test_interaction_equals_gradient_inner_product_at_contact():
    # int U_1^{2*-1} U_1 = int U^{2*}: the d -> 0 limit of the profile
    g = interaction_profile(5, 1e-6).value
    assert g == pytest.approx(beta_bubble_power(5, 10 / 3), rel=1e-5)


def test_sector_machinery_on_closed_form():
    cfg = RingConfig(5, 1, 1.0, 1.0)
    f = lambda s, th, t: (1.0 + s * s + t * t) ** (-5.0)  # noqa: E731
    v = full_space_integral(cfg, f, QuadratureSpec(), refined=True)
    assert v == pytest.approx(ball_volume_check(5), rel=1e-8)


def test_energy_decomposition_matches_brute_force():
    p = ProblemParams(k=3)
    cfg = RingConfig(5, 3, p.mu, 1.1)
    model = p.curvature()
    spec = QuadratureSpec(order=8)
    a = energy_I(cfg, model, p, spec)
    b = energy_brute_force(cfg, model, p, spec, full_angle=False)
    assert a.value == pytest.approx(b.value, rel=1e-9)


def test_single_bubble_energy():
    # k = 1 with K = 1 at the center only through the deficit: I = A + deficit > 0 part
    p = ProblemParams(k=1, c0=1e-300)
    cfg = RingConfig(5, 1, 1.0, 1.0)
    comp = energy_components(cfg, p.curvature(), p)
    assert comp["cross"].value == 0.0 and comp["interaction"].value == 0.0
    A = beta_bubble_power(5, 10 / 3) / 5
    assert energy_I(cfg, p.curvature(), p).value == pytest.approx(A, rel=1e-9)


def test_energy_error_gate():
    p = ProblemParams(k=3)
    cfg = RingConfig(5, 3, p.mu, 1.0)
    with pytest.raises(QuadratureError):
        energy_I(cfg, p.curvature(), p, QuadratureSpec(order=2), max_rel_error=1e-16)


def test_integral_result_arithmetic():
    a = IntegralResult(1.0, 0.1, 3) + IntegralResult(2.0, 0.2, 4)
    assert (a.value, a.nodes_used) == (3.0, 7)
    assert a.est_error == pytest.approx(0.3)
    assert a.scaled(-2.0).value == -6.0 and a.scaled(-2.0).est_error == pytest.approx(0.6)


def test_energy_increases_with_c0():
    # K = 1 - c0 |.|^m falls as c0 grows, so -(1/2*) int K W^{2*} rises;
    # to leading order dI/dc0 = k B1/(c0 Lambda^m mu^m) > 0
    from bubbletower.constants import compute_constants

    vals = []
    for c0 in (0.39, 0.41):
        p = ProblemParams(k=3, c0=c0)
        cfg = RingConfig(5, 3, p.mu, 1.0)
        vals.append(energy_I(cfg, p.curvature(), p).value)
    slope = (vals[1] - vals[0]) / 0.02
    p = ProblemParams(k=3)
    B1_per_c0 = compute_constants(p).B1.value / p.c0
    assert slope > 0
    assert slope == pytest.approx(3 * B1_per_c0 / p.mu**2, rel=0.05)
