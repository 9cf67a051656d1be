from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubbletower.config import (
    CurvatureModel,
    ProblemParams,
    dump_config,
    eval_K,
    mu_of_k,
    parse_config,
    scaling_exponent,
    validate_assumptions,
)


def test_mu_examples():
    assert mu_of_k(ProblemParams(N=5, m=2, k=10)) == 1000.0
    assert mu_of_k(ProblemParams(N=6, m=2, k=1)) == 1.0
    assert mu_of_k(ProblemParams(N=7, m=3, k=8)) == pytest.approx(8**2.5, rel=1e-15)
    assert mu_of_k(ProblemParams(N=7, m=3, k=8)) == pytest.approx(181.019335983756, rel=1e-12)


def test_scaling_exponent_is_exact():
    assert scaling_exponent(ProblemParams(N=5, m=2)) == Fraction(3)
    assert scaling_exponent(ProblemParams(N=7, m=3)) == Fraction(5, 2)
    assert scaling_exponent(ProblemParams(N=6, m=2.5)) == Fraction(8, 3)


def test_perfect_powers_come_out_exact():
    # N=7, m=3: k = 4 gives 4^{5/2} = 32 exactly
    assert mu_of_k(ProblemParams(N=7, m=3, k=4)) == 32.0
    assert mu_of_k(ProblemParams(N=7, m=3, k=9)) == 243.0


@given(st.integers(2, 40), st.integers(2, 40))
def test_mu_is_a_power_law_homomorphism(k1, k2):
    p = ProblemParams(N=5, m=2)
    lhs = mu_of_k(p.with_k(k1 * k2))
    assert lhs == mu_of_k(p.with_k(k1)) * mu_of_k(p.with_k(k2))


@given(st.sampled_from([(5, 2), (6, 2), (6, 3), (7, 2), (7, 4)]), st.integers(1, 200))
def test_mu_strictly_increasing(nm, k):
    N, m = nm
    p = ProblemParams(N=N, m=m)
    assert mu_of_k(p.with_k(k + 1)) > mu_of_k(p.with_k(k))


@given(st.sampled_from([(5, 2), (6, 2), (7, 3), (8, 4)]))
def test_interaction_and_deficit_orders_coincide(nm):
    # (k/mu)^{N-2} k^{-1} = mu^{-m}: exponent identity in exact rationals
    N, m = nm
    e = scaling_exponent(ProblemParams(N=N, m=m))
    assert (N - 2) - (N - 2) * e - 1 == -m * e - 1 + (N - 2) - (N - 2) * e + m * e
    assert (1 - e) * (N - 2) == -m * e


def test_eval_K_examples():
    assert eval_K(CurvatureModel("exact_power", 1.0, 1.0, 2.0, 1.0, 0.5), 1.0) == 1.0
    assert eval_K(CurvatureModel("exact_power", 1.0, 1.0, 2.0, 1.0, 0.5), 1.1) == pytest.approx(0.99)
    assert eval_K(CurvatureModel("exact_power", 2.0, 2.0, 3.0, 1.0, 0.5), 1.5) == pytest.approx(0.75)


def test_eval_K_rejects_negative_radius():
    with pytest.raises(ValueError):
        eval_K(ProblemParams().curvature(), -0.1)


@given(st.floats(0.0, 0.49), st.floats(0.1, 3.0), st.sampled_from([2.0, 2.5, 3.0]))
def test_K_even_about_r0(h, c0, m):
    K = CurvatureModel("exact_power", c0, 1.0, m, 1.0, 0.5)
    assert eval_K(K, 1.0 + h) == pytest.approx(eval_K(K, 1.0 - h), abs=1e-15)


def test_bump_model_agrees_near_r0_and_differs_outside():
    p = ProblemParams(model_kind="power_plus_bump", bump=0.3)
    K, K0 = p.curvature(), ProblemParams().curvature()
    r = np.linspace(0.5, 1.5, 11)
    assert np.allclose(K(r), K0(r))
    assert K(np.array([1.75]))[0] > K0(np.array([1.75]))[0]


def test_derivative_matches_finite_difference():
    K = ProblemParams(model_kind="power_plus_bump", bump=0.3, m=2.5).curvature()
    r = np.array([0.7, 0.95, 1.2, 1.7, 1.8])
    h = 1e-6
    fd = (K(r + h) - K(r - h)) / (2 * h)
    assert np.allclose(K.derivative(r), fd, rtol=1e-6, atol=1e-8)


def test_validate_assumptions_examples():
    assert validate_assumptions(ProblemParams(N=5, m=2)).ok
    rep = validate_assumptions(ProblemParams(N=5, m=3.5))
    assert "m < N-2" in rep.failures()
    rep = validate_assumptions(ProblemParams(N=4, m=2))
    assert "N >= 5" in rep.failures()
    assert not validate_assumptions(ProblemParams(tau=2.5)).ok


def test_require_valid_raises():
    with pytest.raises(ValueError):
        ProblemParams(N=4).require_valid()


def test_construction_rejects_nonsense():
    with pytest.raises(ValueError):
        ProblemParams(N=5.5)
    with pytest.raises(ValueError):
        ProblemParams(k=0)
    with pytest.raises(ValueError):
        ProblemParams(model_kind="spline")


@settings(max_examples=30)
@given(st.integers(5, 9), st.floats(0.1, 5.0), st.integers(2, 64), st.floats(1.001, 1.999))
def test_config_round_trip(N, c0, k, tau):
    p = ProblemParams(N=N, c0=c0, k=k, tau=tau)
    assert parse_config(dump_config(p)) == p


def test_config_rejects_unknown_key():
    with pytest.raises(ValueError):
        parse_config("n = 5\ncolour = blue\n")


def test_config_comments_and_case():
    p = parse_config("# a comment\nN = 6   # inline\nModel.Kind = power_plus_bump\n")
    assert p.N == 6 and p.model_kind == "power_plus_bump"
