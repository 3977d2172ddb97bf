"""Functions sampled on a shared 1-D grid and their L2 geometry.

Integrals over the observation domain are approximated with the trapezoid
rule, which accommodates non-uniform grids.
"""

from dataclasses import dataclass, field

import numpy as np

from ._accel import trapezoid_weights
from .exceptions import DegenerateFunctionError, GridMismatchError, InvalidGridError


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def quad_weights(points):
    """Trapezoid quadrature weights for strictly increasing ``points``.

    Parameters
    ----------
    points : array_like, shape (P,)
        At least two strictly increasing locations.

    Returns
    -------
    ndarray, shape (P,)
        ``w[0] = (s[1]-s[0])/2``, ``w[-1] = (s[-1]-s[-2])/2`` and
        ``w[j] = (s[j+1]-s[j-1])/2`` in between.
    """
    s = np.asarray(points, dtype=float)
    if s.ndim != 1 or s.shape[0] < 2:
        raise InvalidGridError("a grid needs at least 2 points")
    if not np.all(np.isfinite(s)):
        raise InvalidGridError("grid points must be finite")
    if np.any(np.diff(s) <= 0):
        raise InvalidGridError("grid points must be strictly increasing")
    w = trapezoid_weights(s)
    if not np.all(w > 0):
        raise InvalidGridError("grid spacing is too small to give positive weights")
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Observation locations in [0, 1] with their quadrature weights."""

    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = quad_weights(pts)
        if pts[0] < 0.0 or pts[-1] > 1.0:
            raise InvalidGridError("grid points must lie in [0, 1]")
        if self.weights is not None:
            w_given = np.asarray(self.weights, dtype=float)
            if w_given.shape != pts.shape or np.any(w_given <= 0):
                raise InvalidGridError("weights must be positive, one per point")
            w = w_given
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, n_points, start=0.0, stop=1.0):
        return cls(np.linspace(start, stop, int(n_points)))

    @property
    def size(self):
        return self.points.shape[0]

    def __len__(self):
        return self.size

    @property
    def length(self):
        """Total quadrature mass (domain length covered by the grid)."""
        return float(self.weights.sum())

    def same_as(self, other):
        if self is other:
            return True
        return (
            isinstance(other, Grid)
            and other.size == self.size
            and np.array_equal(other.points, self.points)
            and np.array_equal(other.weights, self.weights)
        )

    def __eq__(self, other):
        return self.same_as(other)

    def __hash__(self):
        return hash((self.size, self.points.tobytes()))

    def subgrid(self, indices):
        """Grid restricted to ``indices`` with weights recomputed."""
        return Grid(self.points[np.asarray(indices)])


@dataclass(frozen=True, eq=False)
class FunctionOnGrid:
    """Values of a function at the points of ``grid``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise GridMismatchError(
                f"function has {v.shape} values but grid has {self.grid.size} points"
            )
        object.__setattr__(self, "values", _frozen(v))

    def __add__(self, other):
        _check_same_grid(self, other)
        return FunctionOnGrid(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return FunctionOnGrid(self.grid, self.values - other.values)

    def __mul__(self, c):
        return FunctionOnGrid(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return FunctionOnGrid(self.grid, -self.values)

    def __call__(self, s):
        """Linear interpolation at ``s`` (convenience for reporting)."""
        return np.interp(s, self.grid.points, self.values)


def _check_same_grid(f, g):
    if not f.grid.same_as(g.grid):
        raise GridMismatchError("functions are defined on different grids")


def inner_product(f, g):
    """Quadrature approximation of the integral of ``f * g``."""
    _check_same_grid(f, g)
    return float(np.dot(f.grid.weights, f.values * g.values))


def l2_norm(f):
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def l2_correlation(f, g):
    """Inner product of ``f`` and ``g`` divided by the product of their norms."""
    _check_same_grid(f, g)
    nf, ng = l2_norm(f), l2_norm(g)
    if nf == 0.0 or ng == 0.0:
        raise DegenerateFunctionError("correlation is undefined for a zero-norm function")
    r = inner_product(f, g) / (nf * ng)
    return float(min(1.0, max(-1.0, r)))


def gram_matrix(functions):
    """Matrix of pairwise inner products of a sequence of functions."""
    functions = list(functions)
    if not functions:
        return np.zeros((0, 0))
    grid = functions[0].grid
    for f in functions[1:]:
        _check_same_grid(functions[0], f)
    F = np.column_stack([f.values for f in functions])
    return F.T @ (grid.weights[:, None] * F)


def weighted_projection(values, basis_values, weights):
    """Project rows of ``values`` (n, P) onto columns of ``basis_values`` (P, L)."""
    values = np.asarray(values, dtype=float)
    basis_values = np.asarray(basis_values, dtype=float)
    if values.shape[-1] != basis_values.shape[0] or basis_values.shape[0] != weights.shape[0]:
        raise GridMismatchError("array lengths do not match the grid")
    return values @ (weights[:, None] * basis_values)
