"""Symmetrizer identities: SA symmetry, determinant = discriminant, J bound."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triplex.cubic import default_condition_grid
from triplex.models import LowerOrderTerms, gallery
from triplex.symmetrizer import (
    PointEval,
    build_Stilde,
    check_SA_symmetric,
    det_identities,
    det3,
    lower_bound_delta,
    matrix_A,
    matrix_B,
    matrix_J,
    matrix_S,
    matrix_SA_closed,
    point_eval,
    stilde_floor,
)


def _pe(a, b, t=0.5, alpha=0.3, xi=2.0):
    return PointEval(t=t, x=0.0, xi=xi, alpha=alpha, atilde=1.0, a=a, b=b,
                     jp=math.sqrt(1.0 + xi**2))


@settings(max_examples=150, deadline=None)
@given(
    st.floats(min_value=1e-4, max_value=50.0),
    st.floats(min_value=-0.999, max_value=0.999),
)
def test_sa_product_is_symmetric_and_closed_form(a, frac):
    b = frac * math.sqrt(4.0 * a**3 / 27.0)
    pe = _pe(a, b)
    asym, closed = check_SA_symmetric(pe)
    assert asym <= 1e-13
    assert closed <= 1e-13


@settings(max_examples=150, deadline=None)
@given(
    st.floats(min_value=1e-4, max_value=50.0),
    st.floats(min_value=-0.999, max_value=0.999),
)
def test_det_S_equals_discriminant(a, frac):
    b = frac * math.sqrt(4.0 * a**3 / 27.0)
    pe = _pe(a, b)
    rep = det_identities(pe)
    scale = 1.0 + abs(a) ** 3 + b**2
    assert abs(rep.det_S - rep.delta) <= 1e-12 * scale
    assert np.isfinite(rep.remainder_ratio)


def test_shifted_determinant_remainder_is_order_one():
    # det(S - 2 delta t J) - Delta stays O(delta t (t+alpha)^2) with a
    # modest constant once a = (t + alpha) atilde is consistent (atilde = 1)
    worst = 0.0
    for t, alpha in ((0.5, 0.3), (0.1, 0.01), (1.0, 2.0), (0.01, 0.0)):
        a = t + alpha
        for frac in (-0.9, 0.0, 0.9):
            b = frac * math.sqrt(4.0 * a**3 / 27.0)
            rep = det_identities(_pe(a, b, t=t, alpha=alpha), delta=0.25)
            worst = max(worst, rep.remainder_ratio)
    assert worst <= 30.0


def test_point_eval_splits_a():
    model = gallery("g_E")
    pe = point_eval(model, 0.4, 1.2, 3.0)
    assert pe.a == pytest.approx((0.4 + pe.alpha) * pe.atilde, rel=1e-14)
    assert pe.scale >= 1.0
    assert pe.jp == pytest.approx(math.sqrt(10.0), rel=1e-15)


def test_lower_order_matrix_occupies_first_row():
    lot = LowerOrderTerms.random_trig(3, amplitude=0.5)
    B = matrix_B(point_eval(gallery("g_E"), 0.5, 1.0, 2.0), lot)
    assert np.all(B[1:] == 0)
    assert np.any(B[0] != 0)


def test_det3_matches_numpy():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = rng.standard_normal((3, 3))
        assert det3(m) == pytest.approx(np.linalg.det(m), rel=1e-10, abs=1e-12)


def test_stilde_shift_makes_min_eig_nonnegative():
    model = gallery("g_E")
    grid = default_condition_grid(model, nt=12, nx=12, nxi=5)
    lam = stilde_floor(model, grid)
    assert lam >= 0.0
    for t in (0.05, 0.5, 1.0):
        pe = point_eval(model, t, 2.0, 4.0)
        st_mat = build_Stilde(pe, lam)
        floor = lam / (2.0 * pe.t * pe.jp**2)
        assert np.linalg.eigvalsh(st_mat)[0] >= floor - 1e-10 * pe.scale


def test_stilde_requires_positive_time():
    pe = _pe(1.0, 0.0, t=0.0)
    with pytest.raises(ValueError):
        build_Stilde(pe, 1.0)


def test_delta_sym_bound_certifies_positivity():
    model = gallery("g_zero_b")
    grid = default_condition_grid(model, nt=16, nx=16, nxi=5)
    rep = lower_bound_delta(model, grid)
    assert rep.delta_sym > 0
    # certificate check: S - 2 delta t J stays PSD at fresh sample points
    for t in (0.1, 0.6):
        for x in (0.3, 2.0, 4.5):
            pe = point_eval(model, t, x, 3.0)
            shifted = matrix_S(pe) - 2.0 * rep.delta_sym * t * matrix_J(pe)
            assert np.linalg.eigvalsh(shifted)[0] >= -1e-8 * pe.scale


def test_delta_sym_decreases_with_degeneracy():
    grid_kw = dict(nt=12, nx=12, nxi=5)
    strict = gallery("g_strict")
    degen = gallery("g_zero_b")
    rep_strict = lower_bound_delta(strict, default_condition_grid(strict, **grid_kw))
    rep_degen = lower_bound_delta(degen, default_condition_grid(degen, **grid_kw))
    assert rep_strict.delta_sym >= rep_degen.delta_sym


def test_matrix_shapes_and_J():
    pe = _pe(2.0, 0.5)
    assert matrix_A(pe).shape == (3, 3)
    assert matrix_S(pe).shape == (3, 3)
    assert np.array_equal(matrix_J(pe), np.diag([1.0, 1.0, 2.0]))
    sa = matrix_SA_closed(pe)
    assert sa[0, 0] == 0.0 and sa[2, 2] == pytest.approx(-pe.a * pe.b)
