import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubbletower.bubbles import Bubble, RingConfig, eval_bubble
from bubbletower.config import ProblemParams
from bubbletower.norms import (
    Sampler,
    WeightedNormSpec,
    lk_decay_study,
    nonlinear_remainder,
    norm_estimate,
    residual_lk,
    weight,
)


@pytest.fixture
def ring():
    p = ProblemParams(k=4)
    return p, RingConfig(5, 4, p.mu, 1.0)


def test_exponents(ring):
    _, cfg = ring
    assert WeightedNormSpec("star", 1.01, cfg).exponent == pytest.approx(2.51)
    assert WeightedNormSpec("double_star", 1.01, cfg).exponent == pytest.approx(4.51)
    with pytest.raises(ValueError):
        WeightedNormSpec("triple", 1.01, cfg)


def test_weight_at_a_center(ring):
    _, cfg = ring
    spec = WeightedNormSpec("star", 1.0, cfg)
    c = cfg.centers
    expected = 1.0 + sum((1.0 + np.linalg.norm(c[j] - c[0])) ** -2.5 for j in range(1, 4))
    assert weight(spec, c[0]) == pytest.approx(expected)


def test_norm_of_weight_is_one(ring):
    _, cfg = ring
    spec = WeightedNormSpec("double_star", 1.01, cfg)
    s = Sampler(n_interior=256)
    assert norm_estimate(spec, lambda y: weight(spec, y), s).value == pytest.approx(1.0, rel=1e-14)
    assert norm_estimate(spec, lambda y: 2.0 * weight(spec, y), s).value == pytest.approx(2.0, rel=1e-14)


def test_norm_estimate_is_deterministic(ring):
    p, cfg = ring
    spec = WeightedNormSpec("double_star", p.tau, cfg)
    f = lambda y: residual_lk(cfg, p.curvature(), p, y)  # noqa: E731
    a = norm_estimate(spec, f, Sampler(seed=3, n_interior=512))
    b = norm_estimate(spec, f, Sampler(seed=3, n_interior=512))
    assert a.value == b.value and np.array_equal(a.argmax_point, b.argmax_point)


def test_sup_is_monotone_in_the_sample_set(ring):
    p, cfg = ring
    spec = WeightedNormSpec("double_star", p.tau, cfg)
    f = lambda y: residual_lk(cfg, p.curvature(), p, y)  # noqa: E731
    pts = Sampler(n_interior=1024).points(cfg)
    small = norm_estimate(spec, f, points=pts[: len(pts) // 2]).value
    assert norm_estimate(spec, f, points=pts).value >= small


def test_sampler_parts(ring):
    _, cfg = ring
    s = Sampler(n_interior=128)
    pts = s.points(cfg)
    assert pts.shape[1] == 5 and sum(s.parts.values()) == len(pts)
    assert set(s.parts) == {"shells", "walls", "far", "interior"}


def test_lk_vanishes_for_one_bubble_and_flat_K():
    p = ProblemParams(k=1, c0=0.0)
    cfg = RingConfig(5, 1, 1.0, 1.3)
    y = np.random.default_rng(0).normal(size=(50, 5)) * 3
    assert np.all(residual_lk(cfg, p.curvature(), p, y) == 0.0)


def test_lk_matches_direct_formula(ring):
    p, cfg = ring
    y = cfg.centers[0] + np.random.default_rng(1).normal(size=(40, 5)) * 5
    U = np.array([eval_bubble(b, y) for b in cfg.bubbles()])
    W = U.sum(0)
    K = p.curvature()(np.linalg.norm(y, axis=1) / p.mu)
    direct = K * W ** (7 / 3) - np.sum(U ** (7 / 3), axis=0)
    assert np.allclose(residual_lk(cfg, p.curvature(), p, y), direct, rtol=1e-9, atol=1e-14)


def test_lk_far_field_tail_bound(ring):
    p, cfg = ring
    y = np.random.default_rng(2).normal(size=(64, 5))
    y *= 1e3 * cfg.r / np.linalg.norm(y, axis=1, keepdims=True)
    tail = max(eval_bubble(b, y).max() for b in cfg.bubbles())
    bound = 2 * cfg.k ** (7 / 3) * tail ** (7 / 3)
    assert np.all(np.abs(residual_lk(cfg, ProblemParams(k=4, c0=1e-9).curvature(), p, y)) <= bound)


def test_nonlinear_remainder_zero_and_identity():
    p = ProblemParams(k=1, c0=0.0)
    cfg = RingConfig(5, 1, 1.0, 1.0)
    y = np.random.default_rng(0).normal(size=(30, 5))
    assert np.all(nonlinear_remainder(cfg, p.curvature(), p, np.zeros(30), y) == 0)
    U = eval_bubble(Bubble(cfg.centers[0], 1.0), y)
    pw = 7 / 3
    for c in (0.5, 0.99, 1.3):
        got = nonlinear_remainder(cfg, p.curvature(), p, (c - 1) * U, y)
        # the remainder is O((c-1)^2) and loses ~|log10(c-1)| digits to cancellation
        assert np.allclose(got, (c**pw - 1 - pw * (c - 1)) * U**pw, rtol=1e-9, atol=0)


def test_nonlinear_remainder_positive_part():
    p = ProblemParams(k=1, c0=0.0)
    cfg = RingConfig(5, 1, 1.0, 1.0)
    y = np.zeros((1, 5))
    W = eval_bubble(Bubble(cfg.centers[0], 1.0), y)
    got = nonlinear_remainder(cfg, p.curvature(), p, -3 * W, y)
    # (W + phi)_+ = 0: N = -W^p - p W^{p-1} phi = W^p (-1 + 3p)
    assert got[0] == pytest.approx(W[0] ** (7 / 3) * (3 * 7 / 3 - 1))


@pytest.mark.parametrize("N", [5, 6, 8])
def test_nonlinear_remainder_small_eps_slope(N):
    p = ProblemParams(N=N, k=1, c0=0.0)
    cfg = RingConfig(N, 1, 1.0, 1.0)
    y = np.random.default_rng(0).normal(size=(100, N)) * 2
    U = eval_bubble(Bubble(cfg.centers[0], 1.0), y)
    eps = np.geomspace(1e-4, 1e-2, 5)
    sup = [np.max(np.abs(nonlinear_remainder(cfg, p.curvature(), p, e * U, y))) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(sup), 1)[0]
    pw = (N + 2) / (N - 2)
    assert slope >= min(2.0, pw) - 0.05


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.9, 3.0))
def test_nonlinear_remainder_nonnegative_for_K_one(c):
    # t -> t_+^p is convex, so the second-order remainder is >= 0
    p = ProblemParams(k=1, c0=0.0)
    cfg = RingConfig(5, 1, 1.0, 1.0)
    y = np.random.default_rng(1).normal(size=(20, 5))
    U = eval_bubble(Bubble(cfg.centers[0], 1.0), y)
    assert np.all(nonlinear_remainder(cfg, p.curvature(), p, c * U, y) >= -1e-12 * U ** (7 / 3))


def test_decay_study_rows_and_errors(params):
    st_ = lk_decay_study(params, [4, 8], lam=1.0, sampler=Sampler(n_interior=1024))
    assert [r.k for r in st_.rows] == [4, 8]
    assert st_.predicted_rate == pytest.approx(2.49)
    assert st_.rows[1].norm_value < st_.rows[0].norm_value
    with pytest.raises(ValueError):
        lk_decay_study(params, [1, 4])
