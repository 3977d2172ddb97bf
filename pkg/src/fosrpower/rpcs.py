"""Regression of principal component scores on scalar covariates.

Each score column is regressed on the covariates with ordinary least squares
and classical t-tests.  The per-component tests for a covariate are combined
into one decision with or without a Bonferroni correction, and the implied
functional effect is rebuilt from the slopes and eigenfunctions.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import GridMismatchError, RankDeficiencyError
from .fungrid import FunctionOnGrid

CORRECTIONS = ("none", "bonferroni")


@dataclass(frozen=True, eq=False)
class OLSResult:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_statistics: np.ndarray
    p_values: np.ndarray
    residual_variance: float
    df: int


def _design(X, n):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise ValueError(f"design has {X.shape[0]} rows, response has {n}")
    return np.column_stack([np.ones(n), X])


def _ols_many(Y, Z):
    """OLS of every column of ``Y`` on ``Z`` (intercept already included)."""
    n, k = Z.shape
    df = n - k
    if df < 1:
        raise RankDeficiencyError(f"need more than {k} observations, got {n}")
    Q, R = np.linalg.qr(Z)
    d = np.abs(np.diag(R))
    if d.min() <= 1e-10 * d.max():
        raise RankDeficiencyError("design matrix is rank deficient")
    coef = np.linalg.solve(R, Q.T @ Y)
    resid = Y - Z @ coef
    s2 = np.sum(resid**2, axis=0) / df
    Rinv = np.linalg.solve(R, np.eye(k))
    xtx_inv_diag = np.sum(Rinv**2, axis=1)
    se = np.sqrt(np.outer(xtx_inv_diag, s2))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.where(coef == 0, 0.0, np.inf * np.sign(coef)))
    p = 2.0 * stats.t.sf(np.abs(t), df)
    return coef, se, t, np.clip(p, 0.0, 1.0), s2, df


def ols_fit(y, X):
    """Least squares of ``y`` on an intercept and the columns of ``X``.

    Returns an :class:`OLSResult` whose arrays are ordered
    ``(intercept, X_1, ..., X_Q)``; p-values are two-sided with
    ``N - Q - 1`` degrees of freedom.
    """
    y = np.asarray(y, dtype=float)
    Z = _design(X, y.shape[0])
    coef, se, t, p, s2, df = _ols_many(y[:, None], Z)
    return OLSResult(coef[:, 0], se[:, 0], t[:, 0], p[:, 0], float(s2[0]), df)


@dataclass(frozen=True, eq=False)
class RPCSFit:
    """Per-component regressions; arrays are (L, Q + 1), column 0 = intercept."""

    slopes: np.ndarray
    standard_errors: np.ndarray
    t_statistics: np.ndarray
    p_values: np.ndarray
    residual_variances: np.ndarray
    n: int
    covariate_names: tuple = None

    @property
    def n_components(self):
        return self.slopes.shape[0]

    @property
    def n_covariates(self):
        return self.slopes.shape[1] - 1


def rpcs_regress(scores, X, covariate_names=None):
    """Regress each score column on the covariates (one OLS per column)."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    Z = _design(X, scores.shape[0])
    coef, se, t, p, s2, _ = _ols_many(scores, Z)
    q = Z.shape[1] - 1
    if covariate_names is None:
        covariate_names = tuple(f"X{j + 1}" for j in range(q))
    return RPCSFit(coef.T, se.T, t.T, p.T, s2, scores.shape[0], tuple(covariate_names))


@dataclass(frozen=True)
class JointTestResult:
    covariate: int
    component_p_values: tuple
    correction: str
    global_p: float
    alpha: float
    reject: bool


def combine_p_values(p_values, correction="none"):
    """Global p-value from per-component p-values.

    ``none`` returns the minimum (anti-conservative); ``bonferroni``
    returns ``min(1, L * min p)``.
    """
    p = np.asarray(p_values, dtype=float)
    if correction == "none":
        return float(p.min())
    if correction == "bonferroni":
        return float(min(1.0, p.size * p.min()))
    raise ValueError(f"unknown correction {correction!r}; expected one of {CORRECTIONS}")


def rpcs_joint_test(fit, q, alpha=0.05, correction="bonferroni"):
    """Test that covariate ``q`` (1-based) has zero slope on every component."""
    if not 1 <= q <= fit.n_covariates:
        raise ValueError(f"covariate index must be in 1..{fit.n_covariates}")
    p = fit.p_values[:, q]
    g = combine_p_values(p, correction)
    return JointTestResult(q, tuple(float(v) for v in p), correction, g, float(alpha), bool(g < alpha))


@dataclass(frozen=True, eq=False)
class ReconstructedEffect:
    function: FunctionOnGrid
    components: tuple
    empty_selection: bool


def reconstruct_effect(fit, system, q, mode="all", alpha=0.05, correction="none"):
    """Functional effect implied by the score slopes of covariate ``q``.

    ``mode='all'`` sums ``b_ql * phi_l`` over every component;
    ``mode='significant'`` keeps components whose p-value (Bonferroni-
    adjusted when ``correction='bonferroni'``) is below ``alpha``.
    """
    if fit.n_components != system.n_components:
        raise ValueError("fit and eigensystem disagree on the number of components")
    b = fit.slopes[:, q]
    L = fit.n_components
    if mode == "all":
        keep = np.ones(L, dtype=bool)
    elif mode == "significant":
        p = fit.p_values[:, q]
        if correction == "bonferroni":
            p = np.minimum(1.0, L * p)
        elif correction != "none":
            raise ValueError(f"unknown correction {correction!r}")
        keep = p < alpha
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'all' or 'significant'")
    values = system.eigenfunctions[:, keep] @ b[keep]
    comps = tuple(int(l + 1) for l in np.flatnonzero(keep))
    return ReconstructedEffect(FunctionOnGrid(system.grid, values), comps, not keep.any())


def theoretical_projection(beta, system):
    """Inner products of ``beta`` with each eigenfunction of ``system``.

    These are the score-regression slopes the misspecified pipeline
    estimates when ``beta`` is the true coefficient function.
    """
    if not beta.grid.same_as(system.grid):
        raise GridMismatchError("beta and eigensystem are on different grids")
    return (system.grid.weights * beta.values) @ system.eigenfunctions
