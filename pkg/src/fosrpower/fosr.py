"""Function-on-scalar regression with penalized splines.

Model: ``W_i(s) = beta_0(s) + sum_q X_iq beta_q(s) + sum_l xi_il phi_l(s) + eps_i(s)``.

Every coefficient function is expanded in the same cubic B-spline basis
``B`` (P x K) with a second-difference penalty.  Because all curves share
the grid, the stacked design ``[1, X] (x) B`` has Kronecker structure and
every normal-equation matrix reduces to ``kron(D'D, B' V^-1 B)`` plus a
block-diagonal penalty, a ((Q+1)K)-square system independent of N and P.

Estimation:

1. working-independence penalized least squares, smoothing parameters by
   REML (coordinate grid search on log scale + golden-section refinement);
2. FPCA of the residual curves gives ``V = Phi Lambda Phi' + sigma2 I``;
3. penalized GLS refit using ``V^-1`` through the Woodbury identity;
4. repeat 2-3 until the spline coefficients settle.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from ._accel import row_max_abs_scaled
from .bspline import build_spline_basis
from .exceptions import CovarianceError, RankDeficiencyError
from .fpca import fit_fpca
from .fungrid import FunctionOnGrid

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
CMA_CHUNK = 2000


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FoSROptions:
    """Tuning knobs for :func:`fit_fosr`.

    ``smoothing`` fixes the working-independence smoothing parameters (one
    per coefficient function, intercept first) and skips REML.
    ``max_iter = 0`` stops after the working-independence fit.
    """

    n_basis: int = 30
    degree: int = 3
    smoothing: tuple = None
    n_components: int = None
    pve: float = 0.90
    fpca_smoothing: bool = True
    max_iter: int = 4
    tol: float = 1e-4
    reselect_smoothing: bool = True
    log_lambda_min: float = -12.0
    log_lambda_max: float = 14.0
    log_lambda_step: float = 1.0
    golden_tol: float = 0.02
    reml_cycles: int = 3
    band_max_points: int = 300


@dataclass(frozen=True, eq=False)
class FoSRFit:
    """Fitted coefficient functions and their spline-coefficient covariance.

    ``spline_coefficients`` is ordered by coefficient function: entries
    ``q*K:(q+1)*K`` belong to ``beta_q`` (q = 0 is the intercept).
    ``smoothing_parameters`` are the working-independence REML values; the
    GLS refit uses them divided by ``working_variance``.
    """

    basis: object
    coefficient_functions: tuple
    spline_coefficients: np.ndarray
    coefficient_covariance: np.ndarray
    smoothing_parameters: np.ndarray
    working_variance: float
    eigensystem: object
    variance_components: dict
    iterations: int
    converged: bool
    deltas: tuple
    covariate_names: tuple
    n_subjects: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.basis.grid

    @property
    def n_coefficients(self):
        return len(self.coefficient_functions)

    def coefficient_block(self, q):
        K = self.basis.n_basis
        return self.spline_coefficients[q * K:(q + 1) * K]

    def covariance_block(self, q):
        K = self.basis.n_basis
        return self.coefficient_covariance[q * K:(q + 1) * K, q * K:(q + 1) * K]


# ---------------------------------------------------------------------------
# Penalized (generalized) least squares with Kronecker structure
# ---------------------------------------------------------------------------

def _add_penalty(H, S, lam):
    K = S.shape[0]
    for q, l in enumerate(lam):
        H[q * K:(q + 1) * K, q * K:(q + 1) * K] += l * S
    return H


def _solve_penalized(XtX, Xty, S, lam):
    H = _add_penalty(XtX.copy(), S, lam)
    try:
        cf = linalg.cho_factor(H, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise RankDeficiencyError("penalized normal equations are singular") from exc
    theta = linalg.cho_solve(cf, Xty, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return theta, cf, logdet


class _RemlProblem:
    """Profiled restricted likelihood of a penalized Gaussian model.

    ``-2 l_r(rho) = (n - M0) log(rss_pen / (n - M0)) + log|H| - sum_q r log lam_q``
    with ``lam_q = scale_q exp(rho_q)``, ``H = XtX + sum_q lam_q S_q`` and
    ``rss_pen = yty - theta' Xty``.
    """

    def __init__(self, XtX, Xty, yty, n_obs, S, n_coef, null_dim):
        self.XtX = XtX
        self.Xty = Xty
        self.yty = float(yty)
        self.S = S
        self.K = S.shape[0]
        self.n_coef = n_coef
        self.rank = self.K - null_dim
        self.dof = n_obs - n_coef * null_dim
        trS = float(np.trace(S))
        self.scales = np.array([
            max(float(np.trace(XtX[q * self.K:(q + 1) * self.K, q * self.K:(q + 1) * self.K])), 1e-300) / trS
            for q in range(n_coef)
        ])
        self.n_evals = 0

    def lambdas(self, rho):
        return self.scales * np.exp(rho)

    def objective(self, rho):
        self.n_evals += 1
        lam = self.lambdas(rho)
        try:
            theta, _, logdet = _solve_penalized(self.XtX, self.Xty, self.S, lam)
        except RankDeficiencyError:
            return np.inf
        rss = max(self.yty - float(theta @ self.Xty), 1e-300 * max(self.yty, 1.0))
        return self.dof * math.log(rss / self.dof) + logdet - self.rank * float(np.sum(np.log(lam)))

    def fit(self, rho):
        lam = self.lambdas(rho)
        theta, cf, _ = _solve_penalized(self.XtX, self.Xty, self.S, lam)
        rss = max(self.yty - float(theta @ self.Xty), 0.0)
        return theta, cf, rss / self.dof


def _golden_section(f, a, b, tol):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def select_smoothing_reml(problem, options):
    """Coordinate-wise grid search plus golden-section refinement of log lambdas."""
    grid = np.arange(options.log_lambda_min, options.log_lambda_max + 1e-9, options.log_lambda_step)
    rho = np.zeros(problem.n_coef)
    best = problem.objective(rho)
    for _ in range(max(1, options.reml_cycles)):
        start = rho.copy()
        for q in range(problem.n_coef):
            def f(x, q=q):
                r = rho.copy()
                r[q] = x
                return problem.objective(r)

            vals = np.array([f(x) for x in grid])
            k = int(np.argmin(vals))
            lo = grid[max(k - 1, 0)]
            hi = grid[min(k + 1, grid.size - 1)]
            x, fx = _golden_section(f, lo, hi, options.golden_tol)
            if vals[k] < fx:
                x, fx = grid[k], vals[k]
            if fx <= best:
                rho[q] = x
                best = fx
        if np.max(np.abs(rho - start)) < 0.1:
            break
    return rho


# ---------------------------------------------------------------------------
# Residual covariance via Woodbury
# ---------------------------------------------------------------------------

def _woodbury_apply(A, Phi, lam, sigma2):
    """Apply ``(Phi diag(lam) Phi' + sigma2 I)^-1`` to the columns of ``A``."""
    keep = lam > 0
    if not np.any(keep):
        return A / sigma2
    Phi = Phi[:, keep]
    lam = lam[keep]
    core = sigma2 * np.diag(1.0 / lam) + Phi.T @ Phi
    return (A - Phi @ np.linalg.solve(core, Phi.T @ A)) / sigma2


def _noise_floor(Y):
    # keeps the Woodbury core well conditioned for (nearly) noise-free data
    scale = float(np.mean(np.var(Y, axis=0))) if Y.size else 1.0
    return max(1e-8 * scale, 1e-300)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _design(X, n):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(n), X])


def fit_fosr(data, basis=None, options=None):
    """Fit the function-on-scalar regression for ``data``.

    Parameters
    ----------
    data : FunctionalDataset
    basis : SplineBasis, optional
        Defaults to a cubic basis with ``min(options.n_basis, P)`` functions.
    options : FoSROptions, optional

    Returns
    -------
    FoSRFit
        ``converged`` is False (and a :class:`ConvergenceWarning` is issued)
        when the coefficient change never fell below ``options.tol``.
    """
    if options is None:
        options = FoSROptions()
    grid = data.grid
    Y = data.Y
    n, p = Y.shape
    if basis is None:
        basis = build_spline_basis(grid, n_basis=min(options.n_basis, p), degree=options.degree)
    B = basis.matrix
    S = basis.penalty
    K = B.shape[1]
    D = _design(data.X, n)
    n_coef = D.shape[1]
    if np.linalg.matrix_rank(D) < n_coef:
        raise RankDeficiencyError("covariate design [1, X] is rank deficient")
    if not np.all(np.isfinite(Y)):
        raise ValueError("response contains non-finite values")

    G = D.T @ D
    YD = Y.T @ D  # P x (Q+1)

    # (1) working independence
    XtX = np.kron(G, B.T @ B)
    Xty = (B.T @ YD).T.ravel()
    problem = _RemlProblem(XtX, Xty, float(np.sum(Y * Y)), n * p, S, n_coef, basis.null_space_dim)
    if options.smoothing is not None:
        lam_wi = np.asarray(options.smoothing, dtype=float)
        if lam_wi.shape != (n_coef,) or np.any(lam_wi < 0):
            raise ValueError(f"smoothing needs {n_coef} nonnegative values")
        theta_wi, cf_wi, _ = _solve_penalized(XtX, Xty, S, lam_wi)
        rss = max(problem.yty - float(theta_wi @ Xty), 0.0)
        sigma2_wi = rss / problem.dof
        rho = None
    else:
        rho = select_smoothing_reml(problem, options)
        lam_wi = problem.lambdas(rho)
        theta_wi, cf_wi, sigma2_wi = problem.fit(rho)
    sigma2_wi = max(sigma2_wi, 1e-300)

    theta = theta_wi
    eig = None
    deltas = []
    converged = options.max_iter == 0
    it = 0
    lam_gls = lam_wi / sigma2_wi
    if options.max_iter == 0:
        H = cf_wi
        cov = sigma2_wi * linalg.cho_solve(H, linalg.cho_solve(H, XtX).T)
    for it in range(1, options.max_iter + 1):
        # (2) residual structure
        Theta = theta.reshape(n_coef, K).T
        resid = Y - D @ (B @ Theta).T
        eig = fit_fpca(resid, grid, n_components=options.n_components, pve=options.pve,
                       smoothing=options.fpca_smoothing)
        sigma2 = max(eig.residual_variance, _noise_floor(resid))
        # (3) penalized GLS
        ViB = _woodbury_apply(B, eig.eigenfunctions, eig.eigenvalues, sigma2)
        Mv = B.T @ ViB
        XtVX = np.kron(G, Mv)
        XtVy = (ViB.T @ YD).T.ravel()
        if options.reselect_smoothing:
            ViY = _woodbury_apply(Y.T, eig.eigenfunctions, eig.eigenvalues, sigma2)
            gls_problem = _RemlProblem(XtVX, XtVy, float(np.sum(Y.T * ViY)), n * p, S, n_coef,
                                       basis.null_space_dim)
            rho_g = select_smoothing_reml(gls_problem, options)
            lam_gls = gls_problem.lambdas(rho_g)
        theta_new, cf, _ = _solve_penalized(XtVX, XtVy, S, lam_gls)
        delta = float(np.linalg.norm(theta_new - theta) / max(np.linalg.norm(theta_new), 1e-300))
        deltas.append(delta)
        theta = theta_new
        Hinv_XtVX = linalg.cho_solve(cf, XtVX)
        cov = linalg.cho_solve(cf, Hinv_XtVX.T)
        if delta < options.tol:
            converged = True
            break
    cov = 0.5 * (cov + cov.T)

    if not converged:
        warnings.warn(
            f"FoSR did not converge in {options.max_iter} iterations (last change {deltas[-1]:.2e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    funcs = tuple(FunctionOnGrid(grid, B @ theta[q * K:(q + 1) * K]) for q in range(n_coef))
    if eig is not None:
        vc = {
            "eigenvalues": [float(v) for v in eig.eigenvalues],
            "sigma2_eps": float(eig.residual_variance),
            "n_components": int(eig.n_components),
        }
    else:
        vc = {"eigenvalues": [], "sigma2_eps": float(sigma2_wi), "n_components": 0}
    names = ("intercept",) + tuple(data.covariate_names)
    return FoSRFit(
        basis=basis,
        coefficient_functions=funcs,
        spline_coefficients=theta,
        coefficient_covariance=cov,
        smoothing_parameters=np.asarray(lam_wi, dtype=float),
        working_variance=float(sigma2_wi),
        eigensystem=eig,
        variance_components=vc,
        iterations=it,
        converged=converged,
        deltas=tuple(deltas),
        covariate_names=names,
        n_subjects=n,
        diagnostics={
            "reml_evaluations": problem.n_evals,
            "log_lambda": None if rho is None else rho.tolist(),
            "band_max_points": int(options.band_max_points),
            "gls_smoothing_parameters": np.asarray(lam_gls, dtype=float).tolist(),
        },
    )


# ---------------------------------------------------------------------------
# Confidence bands and global test
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BandSet:
    """Estimate with pointwise and (optionally) simultaneous bands on ``points``."""

    points: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    alpha: float
    pointwise_multiplier: float
    pw_lower: np.ndarray
    pw_upper: np.ndarray
    cma_multiplier: float = None
    cma_lower: np.ndarray = None
    cma_upper: np.ndarray = None
    global_p: float = None
    statistic: float = None
    subgrid: bool = False


def band_indices(n_points, max_points):
    if n_points <= max_points:
        return np.arange(n_points)
    return np.unique(np.round(np.linspace(0, n_points - 1, max_points)).astype(int))


def covariance_factor(V, rtol=1e-6):
    """Return F with ``F F' = V`` after symmetrizing and clipping at zero.

    Raises :class:`CovarianceError` if clipping moves an eigenvalue by more
    than ``rtol`` times the largest eigenvalue magnitude.
    """
    V = 0.5 * (np.asarray(V, dtype=float) + np.asarray(V, dtype=float).T)
    vals, vecs = np.linalg.eigh(V)
    top = float(np.max(np.abs(vals))) if vals.size else 0.0
    if top > 0 and np.any(vals < -rtol * top):
        raise CovarianceError(f"covariance has a negative eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)[None, :]


def _band_core(fit, q):
    if not 0 <= q < fit.n_coefficients:
        raise ValueError(f"coefficient index must be in 0..{fit.n_coefficients - 1}")
    B = fit.basis.matrix
    P = fit.grid.size
    idx = band_indices(P, fit.diagnostics.get("band_max_points", 300))
    Bs = B[idx]
    F = Bs @ covariance_factor(fit.covariance_block(q))
    se = np.sqrt(np.sum(F * F, axis=1))
    est = fit.coefficient_functions[q].values[idx]
    return fit.grid.points[idx], est, se, F, idx.size < P


def pointwise_band(fit, q, alpha=0.05):
    """Estimate plus/minus ``z_{1-alpha/2}`` pointwise standard errors."""
    points, est, se, _, sub = _band_core(fit, q)
    z = float(stats.norm.ppf(1.0 - alpha / 2.0))
    return BandSet(points, est, se, float(alpha), z, est - z * se, est + z * se, subgrid=sub)


def max_t_calibration(factor, estimate, alpha=0.05, n_draws=10000, seed=0):
    """Calibrate the maximum absolute t-statistic over a grid by simulation.

    Parameters
    ----------
    factor : ndarray, shape (P, r)
        Covariance square root of the estimated function values.
    estimate : ndarray, shape (P,)

    Returns
    -------
    multiplier, global_p, observed_statistic, se

    Points with zero standard error are left out of the maximum.  Draws are
    made in fixed chunks with per-chunk streams ``(seed, chunk)`` so the
    result does not depend on how chunks are scheduled.
    """
    factor = np.asarray(factor, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    se = np.sqrt(np.sum(factor * factor, axis=1))
    tol = 1e-12 * max(float(se.max()) if se.size else 0.0, 1e-300)
    live = se > tol
    if not np.any(live):
        z = float(stats.norm.ppf(1.0 - alpha / 2.0))
        return z, (1.0 if np.all(estimate == 0) else 0.0), (0.0 if np.all(estimate == 0) else np.inf), se
    inv_se = np.where(live, 1.0 / np.where(live, se, 1.0), 0.0)
    n_draws = int(n_draws)
    maxima = np.empty(n_draws)
    r = factor.shape[1]
    for c, start in enumerate(range(0, n_draws, CMA_CHUNK)):
        m = min(CMA_CHUNK, n_draws - start)
        rng = np.random.default_rng([int(seed), c])
        Z = rng.standard_normal((m, r))
        maxima[start:start + m] = row_max_abs_scaled(Z @ factor.T, inv_se)
    observed = float(np.max(np.abs(estimate[live]) * inv_se[live]))
    srt = np.sort(maxima)
    k = min(max(int(math.ceil((1.0 - alpha) * n_draws)) - 1, 0), n_draws - 1)
    multiplier = float(srt[k])
    p = float(np.mean(maxima >= observed))
    return multiplier, p, observed, se


def cma_band(fit, q, alpha=0.05, n_draws=10000, seed=0):
    """Pointwise band plus the simultaneous band and global p-value."""
    points, est, se, F, sub = _band_core(fit, q)
    z = float(stats.norm.ppf(1.0 - alpha / 2.0))
    mult, p, obs, _ = max_t_calibration(F, est, alpha, n_draws, seed)
    return BandSet(
        points, est, se, float(alpha), z, est - z * se, est + z * se,
        cma_multiplier=mult, cma_lower=est - mult * se, cma_upper=est + mult * se,
        global_p=p, statistic=obs, subgrid=sub,
    )


@dataclass(frozen=True)
class GlobalTestResult:
    coefficient: int
    p_value: float
    reject: bool
    statistic: float
    multiplier: float
    alpha: float


def fosr_global_test(fit, q, alpha=0.05, seed=0, n_draws=10000):
    """Test ``beta_q(s) = 0`` for all s with the max-|t| calibration."""
    band = cma_band(fit, q, alpha, n_draws, seed)
    return GlobalTestResult(q, band.global_p, bool(band.global_p < alpha), band.statistic,
                            band.cma_multiplier, float(alpha))
