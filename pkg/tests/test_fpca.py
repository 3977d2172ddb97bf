import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fosrpower.exceptions import GridMismatchError, RankDeficiencyError
from fosrpower.fpca import compute_scores, fit_fpca, sign_align
from fosrpower.fungrid import FunctionOnGrid, Grid, gram_matrix, l2_correlation
from fosrpower.synthgen import Tm1Config, Tm2Config, fourier_eigenfunction, generate_tm1, generate_tm2

SQ2 = np.sqrt(2.0)


@pytest.fixture(scope="module")
def tm2_noise_free():
    return generate_tm2(Tm2Config(n_subjects=1000, sigma_eps=0.0, seed=101))


class TestRecovery:
    def test_noise_free_tm2(self, tm2_noise_free):
        sim = tm2_noise_free
        es = fit_fpca(sim.dataset, n_components=4)
        # without noise the fit must reproduce the sample covariance of the
        # true scores; the nominal values are then a sampling statement
        emp = np.sort(np.linalg.eigvalsh(np.cov(sim.scores.T)))[::-1]
        np.testing.assert_allclose(es.eigenvalues, emp, rtol=1e-3)
        rel = np.abs(es.eigenvalues / [1, 0.5, 0.25, 0.125] - 1)
        assert rel.max() < 4 * np.sqrt(2 / 1000)
        for l in range(4):
            assert abs(l2_correlation(es.eigenfunction(l + 1), sim.eigenfunctions[l])) > 0.99

    def test_rank_one_pve(self, grid101, rng):
        c = rng.standard_normal(40)
        Y = c[:, None] * (SQ2 * np.sin(2 * np.pi * grid101.points))[None, :]
        es = fit_fpca(Y, grid101, n_components=1)
        assert es.pve[0] == pytest.approx(1.0, abs=1e-6)

    def test_tm1_lambda_oracle(self):
        # Monte Carlo oracle: mean of the estimated eigenvalue over 50 replicates
        est = []
        for i in range(50):
            sim = generate_tm1(Tm1Config(n_subjects=2000, seed=1000 + i))
            est.append(fit_fpca(sim.dataset, n_components=1).eigenvalues[0])
        # white noise adds sigma^2 * (max quadrature weight share) ~ 0.0025
        assert np.mean(est) == pytest.approx(0.5, rel=0.10)

    def test_smoothing_removes_noise_bias(self):
        sim = generate_tm2(Tm2Config(n_subjects=600, sigma_eps=1.0, seed=5))
        raw = fit_fpca(sim.dataset, n_components=4)
        smooth = fit_fpca(sim.dataset, n_components=4, smoothing=True)
        assert smooth.smoothed and smooth.smoothing_parameter > 0
        assert smooth.residual_variance == pytest.approx(1.0, rel=0.1)
        for l in range(4):
            assert abs(l2_correlation(smooth.eigenfunction(l + 1), sim.eigenfunctions[l])) >= \
                abs(l2_correlation(raw.eigenfunction(l + 1), sim.eigenfunctions[l])) - 1e-3


class TestSelection:
    def test_pve_threshold(self, tm2_noise_free):
        es = fit_fpca(tm2_noise_free.dataset, pve=0.9)
        # cumulative shares of 1, .5, .25, .125 are .533, .8, .933, 1
        assert es.n_components == 3
        assert es.pve[-1] >= 0.9 and es.pve[-2] < 0.9

    def test_l_exceeds_rank(self, grid101, rng):
        Y = rng.standard_normal((10, 1)) * np.sin(grid101.points)[None, :]
        with pytest.raises(RankDeficiencyError):
            fit_fpca(Y, grid101, n_components=2)

    def test_constant_data(self, grid101):
        with pytest.raises(RankDeficiencyError):
            fit_fpca(np.ones((5, 101)), grid101)

    def test_too_many_components(self, grid101, rng):
        with pytest.raises(RankDeficiencyError):
            fit_fpca(rng.standard_normal((5, 101)), grid101, n_components=5)

    def test_grid_mismatch(self, grid101, rng):
        with pytest.raises(GridMismatchError):
            fit_fpca(rng.standard_normal((5, 50)), grid101)


class TestInvariants:
    def test_orthonormal_decreasing_centered(self, rng):
        sim = generate_tm2(Tm2Config(n_subjects=300, seed=8))
        es = fit_fpca(sim.dataset, n_components=6)
        G = gram_matrix([es.eigenfunction(l + 1) for l in range(6)])
        np.testing.assert_allclose(G, np.eye(6), atol=1e-3)
        assert np.all(np.diff(es.eigenvalues) <= 0) and np.all(es.eigenvalues >= 0)
        np.testing.assert_allclose(es.scores.mean(axis=0), 0, atol=1e-8)

    def test_nonuniform_grid_orthonormal(self, rng):
        pts = np.sort(np.r_[0.0, rng.random(80), 1.0])
        g = Grid(pts)
        sim = generate_tm2(Tm2Config(n_subjects=300, grid=g, seed=9))
        es = fit_fpca(sim.dataset, n_components=4)
        G = gram_matrix([es.eigenfunction(l + 1) for l in range(4)])
        np.testing.assert_allclose(G, np.eye(4), atol=1e-10)

    def test_reconstruction_error_decreases(self):
        sim = generate_tm2(Tm2Config(n_subjects=200, seed=10))
        es = fit_fpca(sim.dataset, n_components=10)
        w = es.grid.weights
        errs = [float(np.sum((sim.dataset.Y - es.reconstruct(L)) ** 2 @ w)) for L in range(1, 11)]
        assert np.all(np.diff(errs) <= 1e-9)

    def test_score_uncorrelated_at_large_n(self):
        for sim in (generate_tm1(Tm1Config(n_subjects=2000, seed=3)),
                    generate_tm2(Tm2Config(n_subjects=2000, seed=3))):
            es = fit_fpca(sim.dataset, n_components=4)
            R = np.corrcoef(es.scores.T)
            assert np.abs(R[np.triu_indices(4, 1)]).max() <= 0.05

    def test_total_variance_split(self):
        sim = generate_tm2(Tm2Config(n_subjects=400, seed=12))
        es = fit_fpca(sim.dataset, n_components=4)
        Yc = sim.dataset.Y - es.mean
        total = float(np.sum(Yc**2 @ es.grid.weights) / (Yc.shape[0] - 1))
        assert es.eigenvalues.sum() + es.residual_variance * es.grid.length == pytest.approx(total, rel=1e-10)


class TestScores:
    def test_twice_phi(self, grid201):
        phis = np.column_stack([fourier_eigenfunction(k, grid201).values for k in (1, 2)])
        sc = compute_scores(2 * phis[:, :1].T, phis, grid201)
        np.testing.assert_allclose(sc, [[2.0, 0.0]], atol=1e-10)

    def test_mean_subject_zero(self, grid101, rng):
        Y = rng.standard_normal((6, 101))
        Y[2] = np.delete(Y, 2, axis=0).mean(axis=0)
        es = fit_fpca(Y, grid101, n_components=3)
        np.testing.assert_allclose(es.scores[2], 0, atol=1e-12)

    def test_noise_free_scores_match_truth(self):
        sim = generate_tm1(Tm1Config(n_subjects=200, sigma_eps=0.0, seed=4))
        es = sign_align(fit_fpca(sim.dataset, n_components=1), sim.eigenfunctions)
        truth = sim.scores[:, 0] - sim.scores[:, 0].mean()
        np.testing.assert_allclose(es.scores[:, 0], truth, atol=1e-3)

    def test_grid_mismatch(self, grid101):
        with pytest.raises(GridMismatchError):
            compute_scores(np.zeros((2, 101)), np.zeros((50, 1)), grid101)


class TestSignAlign:
    def test_flip_to_reference(self, grid201, rng):
        phi = fourier_eigenfunction(1, grid201)
        c = rng.standard_normal(30)
        Y = c[:, None] * (-phi.values)[None, :] + 0.01 * rng.standard_normal((30, 201))
        es = fit_fpca(Y, grid201, n_components=1)
        ref_neg = sign_align(es, [FunctionOnGrid(grid201, -phi.values)])
        al = sign_align(ref_neg, [phi])
        assert l2_correlation(al.eigenfunction(1), phi) > 0.99
        np.testing.assert_allclose(al.scores, -ref_neg.scores)

    def test_idempotent(self, grid201, rng):
        Y = rng.standard_normal((20, 201))
        es = fit_fpca(Y, grid201, n_components=3)
        once = sign_align(es)
        assert sign_align(once) is once

    def test_canonical_rule(self, grid201):
        phi = fourier_eigenfunction(1, grid201).values
        from dataclasses import replace

        es = fit_fpca(np.outer([1.0, -1.0, 2.0], phi), grid201, n_components=1)
        flipped = replace(es, eigenfunctions=-es.eigenfunctions, scores=-es.scores)
        out = sign_align(flipped)
        np.testing.assert_allclose(out.eigenfunctions[:, 0], phi, atol=1e-10)

    @given(st.lists(st.booleans(), min_size=3, max_size=3))
    def test_product_invariant_under_flips(self, flips):
        g = Grid.uniform(41)
        Y = np.random.default_rng(0).standard_normal((15, 41))
        es = fit_fpca(Y, g, n_components=3)
        ref = es.eigenfunctions * np.where(flips, -1.0, 1.0)[None, :]
        al = sign_align(es, ref)
        np.testing.assert_allclose(al.scores @ al.eigenfunctions.T, es.scores @ es.eigenfunctions.T, atol=1e-12)
