"""Cubic B-spline bases with a second-difference (P-spline) penalty.

Knots are equally spaced with clamped (repeated) boundary knots.  Because
clamping bunches the Greville abscissae near the ends, the second
differences are taken relative to those abscissae so that the penalty's
null space is exactly the straight lines.
"""

from dataclasses import dataclass

import numpy as np

from ._accel import bspline_design
from .exceptions import InvalidGridError
from .fungrid import Grid


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """B-spline evaluations ``matrix`` (P x K) and difference penalty (K x K)."""

    grid: Grid
    matrix: np.ndarray
    penalty: np.ndarray
    knots: np.ndarray
    degree: int
    penalty_order: int = 2

    @property
    def n_basis(self):
        return self.matrix.shape[1]

    @property
    def null_space_dim(self):
        return self.penalty_order

    def evaluate(self, coef):
        """Function values ``B @ coef`` (coef may be (K,) or (K, m))."""
        return self.matrix @ np.asarray(coef, dtype=float)


def clamped_knots(lo, hi, n_basis, degree):
    n_interior = n_basis - degree - 1
    inner = np.linspace(lo, hi, n_interior + 2)
    return np.concatenate([np.full(degree, lo), inner, np.full(degree, hi)])


def greville_abscissae(knots, degree, n_basis):
    """Knot averages at which coefficients reproduce linear functions."""
    return np.array([knots[j + 1:j + degree + 1].mean() for j in range(n_basis)])


def difference_penalty(n_basis, order=2, abscissae=None):
    """``D'D`` for the order-``order`` difference matrix ``D``.

    With ``abscissae`` (order 2 only) the differences are taken relative to
    those locations and rescaled by the widest spacing: the penalty then
    vanishes exactly on coefficient vectors that are linear in the
    abscissae, and equals the plain second difference where the spacing is
    even.
    """
    if abscissae is None or order != 2:
        D = np.diff(np.eye(n_basis), n=order, axis=0)
        return D.T @ D
    g = np.asarray(abscissae, dtype=float)
    h = np.diff(g)
    scale = float(h.max())
    D = np.zeros((n_basis - 2, n_basis))
    for j in range(n_basis - 2):
        D[j, j] = scale / h[j]
        D[j, j + 1] = -scale / h[j] - scale / h[j + 1]
        D[j, j + 2] = scale / h[j + 1]
    return D.T @ D


def build_spline_basis(grid, n_basis=30, degree=3, penalty_order=2):
    """Clamped B-spline basis on equally spaced knots spanning the grid.

    Raises
    ------
    InvalidGridError
        If ``n_basis < degree + 1`` or the grid has fewer points than basis
        functions.
    """
    n_basis = int(n_basis)
    degree = int(degree)
    if n_basis < degree + 1:
        raise InvalidGridError(f"need at least {degree + 1} basis functions for degree {degree}")
    if n_basis <= penalty_order:
        raise InvalidGridError("basis too small for the difference penalty")
    if grid.size < n_basis:
        raise InvalidGridError(f"grid of {grid.size} points is too coarse for {n_basis} basis functions")
    s = grid.points
    knots = clamped_knots(s[0], s[-1], n_basis, degree)
    B = bspline_design(s, knots, degree, n_basis)
    S = difference_penalty(n_basis, penalty_order, greville_abscissae(knots, degree, n_basis))
    B.setflags(write=False)
    S.setflags(write=False)
    return SplineBasis(grid, B, S, knots, degree, penalty_order)


class DemmlerReinsch:
    """Spectral form of a P-spline smoother ``S(lam) = B (B'B + lam D)^-1 B'``.

    With ``B'B = R'R`` and ``R^-T D R^-1 = U diag(g) U'`` the smoother is
    ``Psi diag(1 / (1 + lam g)) Psi'`` where ``Psi = B R^-1 U`` has
    orthonormal columns, so any ``lam`` costs one diagonal rescale.
    """

    def __init__(self, basis, ridge=1e-10):
        B = basis.matrix
        BtB = B.T @ B
        BtB = BtB + ridge * np.trace(BtB) / BtB.shape[0] * np.eye(BtB.shape[0])
        R = np.linalg.cholesky(BtB).T
        Rinv = np.linalg.solve(R, np.eye(R.shape[0]))
        g, U = np.linalg.eigh(Rinv.T @ basis.penalty @ Rinv)
        self.eigenvalues = np.clip(g, 0.0, None)
        self.Psi = B @ Rinv @ U

    def shrinkage(self, lam):
        return 1.0 / (1.0 + lam * self.eigenvalues)

    def smoother(self, lam):
        h = self.shrinkage(lam)
        return (self.Psi * h[None, :]) @ self.Psi.T

    def gcv_select(self, Y, log_lams=None):
        """Common smoothing parameter for all rows of ``Y`` by GCV.

        Returns ``(lam, smoother_matrix)``.
        """
        if log_lams is None:
            log_lams = np.linspace(-10.0, 12.0, 45)
        Y = np.asarray(Y, dtype=float)
        n_rows, p = Y.shape
        n = n_rows * p
        proj = Y @ self.Psi
        a = np.sum(proj**2, axis=0)
        total = float(np.sum(Y**2))
        lams = np.exp(np.asarray(log_lams, dtype=float))
        h = 1.0 / (1.0 + lams[:, None] * self.eigenvalues[None, :])
        rss = total - np.sum(a[None, :] * (2.0 * h - h**2), axis=1)
        edf = np.sum(h, axis=1)
        denom = (n - n_rows * edf) ** 2
        gcv = n * np.maximum(rss, 0.0) / np.where(denom > 0, denom, np.inf)
        k = int(np.argmin(gcv))
        lam = float(lams[k])
        return lam, self.smoother(lam)

    def gcv_select_covariance(self, C, log_lams=None, n_impute=4):
        """Smoothing parameter for the sandwich smoother ``S C S`` by GCV.

        Only off-diagonal entries enter the criterion; the diagonal, which
        carries the measurement-error spike, is imputed from the smooth fit
        a few times.  Selecting on the curves themselves oversmooths a
        covariance, which averages N curves.  Returns ``(lam, smoother)``.
        """
        if log_lams is None:
            log_lams = np.linspace(-10.0, 12.0, 45)
        C = np.asarray(C, dtype=float)
        Psi = self.Psi
        p = C.shape[0]
        d0 = np.diag(C).copy()
        M_off = Psi.T @ C @ Psi - (Psi.T * d0[None, :]) @ Psi
        off_norm = float(np.sum(C**2) - np.sum(d0**2))
        n = p * p - p
        best = (np.inf, None)
        for ll in np.asarray(log_lams, dtype=float):
            lam = float(np.exp(ll))
            h = self.shrinkage(lam)
            d = d0
            for _ in range(n_impute):
                G = h[:, None] * (M_off + (Psi.T * d[None, :]) @ Psi) * h[None, :]
                d = np.sum((Psi @ G) * Psi, axis=1)
            # fitted diagonal d comes from the final G
            rss = off_norm - 2.0 * float(np.sum(M_off * G)) + float(np.sum(G**2)) - float(np.sum(d**2))
            denom = (n - h.sum() ** 2) ** 2
            score = n * max(rss, 0.0) / denom if denom > 0 else np.inf
            if score < best[0]:
                best = (score, lam)
        lam = best[1] if best[1] is not None else float(np.exp(log_lams[-1]))
        return lam, self.smoother(lam)
