import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fosrpower.bspline import DemmlerReinsch, build_spline_basis, difference_penalty
from fosrpower.exceptions import InvalidGridError
from fosrpower.fungrid import Grid


def test_partition_of_unity(grid101):
    b = build_spline_basis(grid101, 30)
    np.testing.assert_allclose(b.evaluate(np.ones(30)), 1.0, atol=1e-12)


def test_linear_reproduction(grid101):
    b = build_spline_basis(grid101, 30)
    coef, *_ = np.linalg.lstsq(b.matrix, grid101.points, rcond=None)
    assert np.max(np.abs(b.matrix @ coef - grid101.points)) < 1e-8


def test_penalty_of_constant_and_linear_is_zero():
    S = difference_penalty(30, 2)
    assert np.abs(S @ np.ones(30)).max() == 0
    assert np.abs(S @ np.arange(30.0)).max() < 1e-12


def test_penalty_psd_rank():
    vals = np.linalg.eigvalsh(difference_penalty(20, 2))
    assert vals.min() > -1e-10
    assert int(np.sum(vals > 1e-10)) == 18


def test_nonuniform_grid_basis_sums_to_one():
    pts = np.sort(np.r_[0.0, np.random.default_rng(0).random(60), 1.0])
    b = build_spline_basis(Grid(pts), 12)
    np.testing.assert_allclose(b.matrix.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(b.matrix >= -1e-15)


def test_errors(grid101):
    with pytest.raises(InvalidGridError):
        build_spline_basis(grid101, 3, degree=3)
    with pytest.raises(InvalidGridError):
        build_spline_basis(Grid.uniform(10), 12)


@given(st.floats(-8, 12))
def test_demmler_reinsch_matches_direct_smoother(loglam):
    g = Grid.uniform(41)
    b = build_spline_basis(g, 12)
    lam = float(np.exp(loglam))
    B = b.matrix
    direct = B @ np.linalg.solve(B.T @ B + lam * b.penalty, B.T)
    np.testing.assert_allclose(DemmlerReinsch(b).smoother(lam), direct, atol=1e-7)


def test_gcv_prefers_heavy_smoothing_for_lines():
    g = Grid.uniform(81)
    b = build_spline_basis(g, 20)
    rng = np.random.default_rng(3)
    Y = 2 + 3 * g.points[None, :] + 0.1 * rng.standard_normal((30, 81))
    lam, S = DemmlerReinsch(b).gcv_select(Y)
    assert lam > 1e3
    rough = np.sin(12 * np.pi * g.points)[None, :] + 0.01 * rng.standard_normal((30, 81))
    lam2, _ = DemmlerReinsch(b).gcv_select(rough)
    assert lam2 < lam


def test_basis_penalty_null_space_is_lines(grid101):
    from fosrpower.bspline import greville_abscissae

    b = build_spline_basis(grid101, 30)
    g = greville_abscissae(b.knots, b.degree, b.n_basis)
    c = 0.7 - 2.0 * g
    # coefficients at the Greville points reproduce the line exactly
    np.testing.assert_allclose(b.evaluate(c), 0.7 - 2.0 * grid101.points, atol=1e-12)
    scale = np.abs(b.penalty).max()
    assert c @ b.penalty @ c < 1e-12 * scale * (c @ c)
    assert np.ones(30) @ b.penalty @ np.ones(30) < 1e-12 * scale * 30
    vals = np.linalg.eigvalsh(b.penalty)
    assert int(np.sum(vals > 1e-9 * vals.max())) == 28


def test_basis_penalty_matches_plain_differences_in_interior(grid101):
    b = build_spline_basis(grid101, 30)
    plain = difference_penalty(30, 2)
    np.testing.assert_allclose(b.penalty[10:20, 10:20], plain[10:20, 10:20], atol=1e-12)
