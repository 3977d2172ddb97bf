"""Functional principal component analysis on a common grid.

The covariance operator is diagonalised in the L2 metric of the grid: with
``W = diag(quadrature weights)`` we eigendecompose ``W^1/2 C W^1/2`` and map
eigenvectors back with ``W^-1/2``, so eigenfunctions have unit L2 norm and
eigenvalues are variances of the scores.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .bspline import DemmlerReinsch, build_spline_basis
from .data import FunctionalDataset
from .exceptions import GridMismatchError, RankDeficiencyError
from .fungrid import FunctionOnGrid, Grid, weighted_projection

DEFAULT_PVE = 0.90
SMOOTHER_BASIS_DIM = 35
_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Output of :func:`fit_fpca`.

    ``eigenfunctions`` is a (P, L) array whose columns have unit L2 norm;
    ``pve`` holds the cumulative proportion of variance explained by the
    first 1..L components.  ``all_eigenvalues`` keeps the full (possibly
    smoothed) spectrum for diagnostics.
    """

    grid: Grid
    mean: np.ndarray
    eigenfunctions: np.ndarray
    eigenvalues: np.ndarray
    scores: np.ndarray
    pve: np.ndarray
    residual_variance: float
    all_eigenvalues: np.ndarray = field(default=None, repr=False)
    smoothed: bool = False
    smoothing_parameter: float = None

    @property
    def n_components(self):
        return self.eigenfunctions.shape[1]

    def eigenfunction(self, l):
        """Component ``l`` (1-based) as a :class:`FunctionOnGrid`."""
        return FunctionOnGrid(self.grid, self.eigenfunctions[:, l - 1])

    @property
    def mean_function(self):
        return FunctionOnGrid(self.grid, self.mean)

    def reconstruct(self, n_components=None):
        L = self.n_components if n_components is None else int(n_components)
        return self.mean[None, :] + self.scores[:, :L] @ self.eigenfunctions[:, :L].T

    def covariance(self):
        """Grid-unit covariance ``Phi Lambda Phi' + sigma2 I`` implied by the fit."""
        Phi = self.eigenfunctions
        C = (Phi * self.eigenvalues[None, :]) @ Phi.T
        C[np.diag_indices_from(C)] += self.residual_variance
        return C


def compute_scores(centered, eigenfunctions, grid):
    """Quadrature projections of centred curves onto eigenfunctions.

    Parameters
    ----------
    centered : ndarray, shape (N, P)
    eigenfunctions : ndarray, shape (P, L)
    grid : Grid
    """
    centered = np.asarray(centered, dtype=float)
    eigenfunctions = np.asarray(eigenfunctions, dtype=float)
    if eigenfunctions.ndim == 1:
        eigenfunctions = eigenfunctions[:, None]
    if centered.shape[-1] != grid.size or eigenfunctions.shape[0] != grid.size:
        raise GridMismatchError("curves and eigenfunctions must share the grid")
    return weighted_projection(centered, eigenfunctions, grid.weights)


def _sample_covariance(Yc):
    n = Yc.shape[0]
    C = Yc.T @ Yc / (n - 1)
    return 0.5 * (C + C.T)


def _smooth_covariance(C, grid):
    """Sandwich-smooth ``C`` with a GCV-tuned P-spline and strip the noise.

    Returns the smoothed covariance with the white-noise leak removed, the
    noise variance estimate and the smoothing parameter.
    """
    p = grid.size
    k = min(SMOOTHER_BASIS_DIM, p)
    basis = build_spline_basis(grid, n_basis=k, degree=min(3, k - 1))
    dr = DemmlerReinsch(basis)
    lam, S = dr.gcv_select_covariance(C)
    SCS = S @ C @ S.T
    SS = S @ S.T
    w = grid.weights
    num = float(np.dot(w, np.diag(C) - np.diag(SCS)))
    den = float(np.dot(w, 1.0 - np.diag(SS)))
    sigma2 = max(num / den, 0.0) if den > 0 else 0.0
    Cs = SCS - sigma2 * SS
    return 0.5 * (Cs + Cs.T), sigma2, lam


def _l2_eigh(C, w):
    sw = np.sqrt(w)
    M = sw[:, None] * C * sw[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    phis = vecs / sw[:, None]
    return vals, phis


def _peak_signs(phis):
    # first grid point reaching the peak magnitude; near-ties (symmetric
    # shapes such as sines) resolve to the leftmost peak
    a = np.abs(phis)
    peak = a.max(axis=0)
    idx = np.argmax(a >= peak[None, :] * (1.0 - 1e-9), axis=0)
    signs = np.sign(phis[idx, np.arange(phis.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def _canonical_signs(phis):
    return phis * _peak_signs(phis)[None, :]


def fit_fpca(data, grid=None, n_components=None, pve=DEFAULT_PVE, smoothing=False):
    """Fit the component model ``W_i = mu + sum_l xi_il phi_l + eps_i``.

    Parameters
    ----------
    data : FunctionalDataset or ndarray, shape (N, P)
    grid : Grid, optional
        Required when ``data`` is an array.
    n_components : int, optional
        Fixed number of components.  When omitted, the smallest L whose
        cumulative proportion of variance explained reaches ``pve``.
    pve : float
        Threshold in (0, 1] for the automatic choice.
    smoothing : bool
        Smooth the covariance with a P-spline sandwich smoother and remove
        the measurement-error diagonal before the eigendecomposition.

    Raises
    ------
    RankDeficiencyError
        When the data are constant or ``n_components`` exceeds the rank.
    """
    if isinstance(data, FunctionalDataset):
        Y = data.Y
        grid = data.grid
    else:
        Y = np.asarray(data, dtype=float)
        if grid is None:
            raise GridMismatchError("a grid is required for array input")
    n, p = Y.shape
    if p != grid.size:
        raise GridMismatchError(f"data have {p} columns, grid has {grid.size} points")
    if n < 2 or p < 2:
        raise RankDeficiencyError("need at least 2 curves and 2 grid points")
    if not 0.0 < pve <= 1.0:
        raise ValueError("pve threshold must be in (0, 1]")

    mean = Y.mean(axis=0)
    Yc = Y - mean[None, :]
    C = _sample_covariance(Yc)
    w = grid.weights
    total = float(np.dot(w, np.diag(C)))

    lam_s = None
    sigma2_noise = 0.0
    if smoothing:
        C_eig, sigma2_noise, lam_s = _smooth_covariance(C, grid)
    else:
        C_eig = C
    vals, phis = _l2_eigh(C_eig, w)
    scale_ref = max(abs(vals[0]), total, np.finfo(float).tiny)
    pos = np.clip(vals, 0.0, None)
    rank = int(np.sum(vals > _RANK_TOL * scale_ref))
    if rank == 0 or total <= 0:
        raise RankDeficiencyError("data have no variation around the mean")
    cum = np.cumsum(pos) / pos.sum()

    max_l = min(n - 1, p)
    if n_components is not None:
        L = int(n_components)
        if L < 1 or L > max_l:
            raise RankDeficiencyError(f"n_components={L} must be in 1..{max_l}")
        if L > rank:
            raise RankDeficiencyError(f"n_components={L} exceeds the numerical rank {rank}")
    else:
        L = int(np.searchsorted(cum, pve - 1e-12) + 1)
        L = max(1, min(L, rank, max_l))

    phis = _canonical_signs(phis[:, :L])
    lam = pos[:L]
    scores = compute_scores(Yc, phis, grid)
    leftover = float(pos[L:].sum())
    residual_variance = leftover / grid.length + sigma2_noise
    return EigenSystem(
        grid=grid,
        mean=mean,
        eigenfunctions=phis,
        eigenvalues=lam,
        scores=scores,
        pve=cum[:L].copy(),
        residual_variance=residual_variance,
        all_eigenvalues=vals,
        smoothed=bool(smoothing),
        smoothing_parameter=lam_s,
    )


def sign_align(system, reference=None):
    """Flip eigenfunctions (and score columns) to a fixed orientation.

    With ``reference`` (a sequence of FunctionOnGrid or a (P, L) array) each
    component is oriented to have a nonnegative inner product with its
    reference; otherwise the largest-magnitude grid value is made positive (the
    leftmost one when several tie).
    """
    phis = system.eigenfunctions
    L = phis.shape[1]
    if reference is None:
        signs = _peak_signs(phis)
    else:
        if isinstance(reference, np.ndarray):
            ref = reference if reference.ndim == 2 else reference[:, None]
        else:
            ref = np.column_stack([r.values for r in reference])
        if ref.shape[0] != system.grid.size:
            raise GridMismatchError("reference functions are on a different grid")
        m = min(L, ref.shape[1])
        ips = np.sum(system.grid.weights[:, None] * phis[:, :m] * ref[:, :m], axis=0)
        signs = np.ones(L)
        signs[:m] = np.sign(ips)
    signs = np.where(signs == 0, 1.0, signs)
    if np.all(signs > 0):
        return system
    return replace(
        system,
        eigenfunctions=phis * signs[None, :],
        scores=system.scores * signs[None, :],
    )
