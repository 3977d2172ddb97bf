"""Seeded generators for the two simulation scenarios.

Scenario TM1 has one covariate and one random-effect component; TM2 has
two covariates and four Fourier components.  Every generator is a pure
function of its config, and replicate streams are derived from
``(seed, replicate_index)`` through :class:`numpy.random.SeedSequence`, so
serial and parallel runs produce identical data.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import FunctionalDataset
from .exceptions import ConfigError
from .fungrid import FunctionOnGrid, Grid

SQRT2 = np.sqrt(2.0)
DEFAULT_N_SUBJECTS = 300
DEFAULT_N_POINTS = 101
DEFAULT_SIGMA_EPS = 0.5
DEFAULT_LAMBDA1 = 0.5
DEFAULT_EIGENVALUES = (1.0, 0.5, 0.25, 0.125)

# TM2 case table: (beta_1 shape, frequency of the sine in f_2)
TM2_CASES = {
    1: ("constant", 1),
    2: ("constant", 2),
    3: ("constant", 3),
    4: ("sine", 1),
    5: ("sine", 2),
    6: ("sine", 3),
}


def replicate_rng(seed, replicate_index=None):
    """Generator for ``seed`` or for replicate ``replicate_index`` of ``seed``."""
    if replicate_index is None:
        return np.random.default_rng(np.random.SeedSequence(int(seed)))
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replicate_index)]))


def fourier_eigenfunction(index, grid):
    """One of the four orthonormal Fourier components used by TM2.

    1: sqrt(2) sin(2 pi s), 2: sqrt(2) cos(2 pi s),
    3: sqrt(2) sin(4 pi s), 4: sqrt(2) cos(4 pi s).
    """
    s = grid.points
    if index == 1:
        v = SQRT2 * np.sin(2 * np.pi * s)
    elif index == 2:
        v = SQRT2 * np.cos(2 * np.pi * s)
    elif index == 3:
        v = SQRT2 * np.sin(4 * np.pi * s)
    elif index == 4:
        v = SQRT2 * np.cos(4 * np.pi * s)
    else:
        raise ConfigError(f"eigenfunction index must be in 1..4, got {index}")
    return FunctionOnGrid(grid, v)


def sine_function(frequency, grid):
    """sqrt(2) sin(2 pi k s) for integer ``frequency`` k."""
    return FunctionOnGrid(grid, SQRT2 * np.sin(2 * np.pi * frequency * grid.points))


def _check_dw(d, w):
    if not d >= 0:
        raise ConfigError(f"effect size d must be >= 0, got {d}")
    if not 0.0 <= w <= 1.0:
        raise ConfigError(f"weight w must be in [0, 1], got {w}")


def beta_tm1(d, w, grid):
    """TM1 coefficient ``d * (w + (1 - w) sqrt(2) sin(2 pi s))``."""
    _check_dw(d, w)
    v = d * (w + (1.0 - w) * SQRT2 * np.sin(2 * np.pi * grid.points))
    return FunctionOnGrid(grid, v)


def beta_pair_tm2(case_id, d, w, grid):
    """Coefficient pair ``(beta_1, beta_2)`` for TM2 case 1..6.

    ``beta_1`` is 1 for cases 1-3 and sqrt(2) sin(2 pi s) for cases 4-6.
    ``beta_2 = w + (1 - w) f_2`` where f_2 is sqrt(2) sin(2 pi k s) with
    k = 1, 2, 3 for cases {1, 4}, {2, 5}, {3, 6}.  Both are scaled by d.
    """
    if case_id not in TM2_CASES:
        raise ConfigError(f"unknown TM2 case {case_id}; expected 1..6")
    _check_dw(d, w)
    shape1, freq = TM2_CASES[case_id]
    s = grid.points
    if shape1 == "constant":
        b1 = np.ones_like(s)
    else:
        b1 = SQRT2 * np.sin(2 * np.pi * s)
    f2 = SQRT2 * np.sin(2 * np.pi * freq * s)
    b2 = w + (1.0 - w) * f2
    return FunctionOnGrid(grid, d * b1), FunctionOnGrid(grid, d * b2)


def _default_grid(n_points):
    return Grid.uniform(n_points)


@dataclass(frozen=True)
class Tm1Config:
    n_subjects: int = DEFAULT_N_SUBJECTS
    n_points: int = DEFAULT_N_POINTS
    d: float = 0.0
    w: float = 0.0
    lambda1: float = DEFAULT_LAMBDA1
    sigma_eps: float = DEFAULT_SIGMA_EPS
    seed: int = 0
    grid: Grid = None

    def __post_init__(self):
        _check_dw(self.d, self.w)
        if self.n_subjects < 2:
            raise ConfigError("n_subjects must be >= 2")
        if self.lambda1 < 0 or self.sigma_eps < 0:
            raise ConfigError("lambda1 and sigma_eps must be nonnegative")
        if self.grid is None:
            object.__setattr__(self, "grid", _default_grid(self.n_points))
        else:
            object.__setattr__(self, "n_points", self.grid.size)


@dataclass(frozen=True)
class Tm2Config:
    n_subjects: int = DEFAULT_N_SUBJECTS
    n_points: int = DEFAULT_N_POINTS
    d: float = 0.0
    w: float = 0.0
    case_id: int = 1
    eigenvalues: tuple = DEFAULT_EIGENVALUES
    sigma_eps: float = DEFAULT_SIGMA_EPS
    intercept: float = 0.0
    seed: int = 0
    grid: Grid = None

    def __post_init__(self):
        _check_dw(self.d, self.w)
        if self.case_id not in TM2_CASES:
            raise ConfigError(f"unknown TM2 case {self.case_id}; expected 1..6")
        if self.n_subjects < 2:
            raise ConfigError("n_subjects must be >= 2")
        ev = tuple(float(v) for v in self.eigenvalues)
        if len(ev) != 4 or any(v < 0 for v in ev):
            raise ConfigError("TM2 needs four nonnegative eigenvalues")
        object.__setattr__(self, "eigenvalues", ev)
        if self.sigma_eps < 0:
            raise ConfigError("sigma_eps must be nonnegative")
        if self.grid is None:
            object.__setattr__(self, "grid", _default_grid(self.n_points))
        else:
            object.__setattr__(self, "n_points", self.grid.size)


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Simulated data together with every component used to build it."""

    dataset: FunctionalDataset
    betas: tuple
    eigenfunctions: tuple
    scores: np.ndarray
    noise: np.ndarray
    intercept: np.ndarray = field(default=None)

    @property
    def grid(self):
        return self.dataset.grid

    def reconstruct(self):
        """Rebuild the response matrix from the stored components."""
        return _assemble(
            self.dataset.X,
            np.vstack([b.values for b in self.betas]),
            self.scores,
            np.column_stack([f.values for f in self.eigenfunctions]),
            self.noise,
            self.intercept,
        )


def _assemble(X, beta_mat, scores, phi_mat, noise, intercept):
    Y = X @ beta_mat + scores @ phi_mat.T + noise
    if intercept is not None:
        Y = Y + intercept[None, :]
    return Y


COVARIATE_VARIANCE = 1.0 / 12.0  # covariates are uniform on [0, 1]


def marginal_eigenfunctions(config, n_components=None):
    """Leading eigenfunctions of the marginal covariance of the curves.

    A principal component analysis that ignores the covariates targets the
    covariance ``sum_l lam_l phi_l phi_l' + Var(X) sum_q beta_q beta_q'``
    (plus white noise, which does not move eigenfunctions).  Score-regression
    slopes converge to projections on these functions, which differ from the
    generating ``phi_l`` whenever part of an effect is orthogonal to them.
    Signs follow the generating eigenfunctions.
    """
    grid = config.grid
    if isinstance(config, Tm1Config):
        betas = (beta_tm1(config.d, config.w, grid),)
        lams = (config.lambda1,)
    elif isinstance(config, Tm2Config):
        betas = beta_pair_tm2(config.case_id, config.d, config.w, grid)
        lams = config.eigenvalues
    else:
        raise ConfigError(f"unsupported config type {type(config).__name__}")
    phis = np.column_stack([fourier_eigenfunction(k + 1, grid).values for k in range(len(lams))])
    bmat = np.column_stack([b.values for b in betas])
    C = (phis * np.asarray(lams, dtype=float)[None, :]) @ phis.T + COVARIATE_VARIANCE * bmat @ bmat.T
    sw = np.sqrt(grid.weights)
    vals, vecs = np.linalg.eigh(sw[:, None] * C * sw[None, :])
    L = len(lams) if n_components is None else int(n_components)
    top = vecs[:, np.argsort(vals)[::-1][:L]] / sw[:, None]
    out = []
    for l in range(L):
        f = top[:, l]
        if l < phis.shape[1] and np.dot(grid.weights, f * phis[:, l]) < 0:
            f = -f
        out.append(FunctionOnGrid(grid, f))
    return tuple(out)


def _draw(rng, n, q, eigenvalues, p, sigma_eps):
    # fixed draw order: covariates, scores, noise
    X = rng.uniform(0.0, 1.0, size=(n, q))
    z = rng.standard_normal((n, len(eigenvalues)))
    scores = z * np.sqrt(np.asarray(eigenvalues, dtype=float))[None, :]
    noise = sigma_eps * rng.standard_normal((n, p))
    return X, scores, noise


def generate_tm1(config, rng=None):
    """Simulate TM1: ``W_i = X_i beta(s) + xi_i phi_1(s) + eps_i(s)``.

    ``rng`` overrides the generator derived from ``config.seed``.
    """
    grid = config.grid
    if rng is None:
        rng = replicate_rng(config.seed)
    beta = beta_tm1(config.d, config.w, grid)
    phi = fourier_eigenfunction(1, grid)
    X, scores, noise = _draw(rng, config.n_subjects, 1, (config.lambda1,), grid.size, config.sigma_eps)
    Y = _assemble(X, beta.values[None, :], scores, phi.values[:, None], noise, None)
    ds = FunctionalDataset(grid, Y, X, covariate_names=("X1",))
    return SyntheticDataset(ds, (beta,), (phi,), scores, noise, None)


def generate_tm2(config, rng=None):
    """Simulate TM2 with two covariates and four Fourier components."""
    grid = config.grid
    if rng is None:
        rng = replicate_rng(config.seed)
    b1, b2 = beta_pair_tm2(config.case_id, config.d, config.w, grid)
    phis = tuple(fourier_eigenfunction(k, grid) for k in range(1, 5))
    X, scores, noise = _draw(rng, config.n_subjects, 2, config.eigenvalues, grid.size, config.sigma_eps)
    intercept = np.full(grid.size, float(config.intercept))
    beta_mat = np.vstack([b1.values, b2.values])
    phi_mat = np.column_stack([f.values for f in phis])
    Y = _assemble(X, beta_mat, scores, phi_mat, noise, intercept)
    ds = FunctionalDataset(grid, Y, X, covariate_names=("X1", "X2"))
    return SyntheticDataset(ds, (b1, b2), phis, scores, noise, intercept)


def generate(config, rng=None):
    if isinstance(config, Tm1Config):
        return generate_tm1(config, rng)
    if isinstance(config, Tm2Config):
        return generate_tm2(config, rng)
    raise ConfigError(f"unsupported config type {type(config).__name__}")
