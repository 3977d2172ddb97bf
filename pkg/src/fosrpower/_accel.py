"""Hot kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``FOSRPOWER_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
always importable so tests and the benchmark can compare them directly.
"""

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _env_disabled():
    return os.environ.get("FOSRPOWER_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = NUMBA_AVAILABLE and not _env_disabled()


# ---------------------------------------------------------------------------
# B-spline design matrix (Cox-de Boor)
# ---------------------------------------------------------------------------

def _find_span(x, knots, degree, n_basis):
    # last knot interval with knots[i] <= x < knots[i+1]; right end maps to last span
    if x >= knots[n_basis]:
        return n_basis - 1
    lo = degree
    hi = n_basis
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x < knots[mid]:
            hi = mid
        else:
            lo = mid
    return lo


@njit(cache=True)
def _bspline_design_nb(x, knots, degree, n_basis):
    out = np.zeros((x.shape[0], n_basis))
    left = np.empty(degree + 1)
    right = np.empty(degree + 1)
    vals = np.empty(degree + 1)
    for r in range(x.shape[0]):
        xr = x[r]
        if xr >= knots[n_basis]:
            span = n_basis - 1
        else:
            lo = degree
            hi = n_basis
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if xr < knots[mid]:
                    hi = mid
                else:
                    lo = mid
            span = lo
        vals[0] = 1.0
        for j in range(1, degree + 1):
            left[j] = xr - knots[span + 1 - j]
            right[j] = knots[span + j] - xr
            saved = 0.0
            for k in range(j):
                den = right[k + 1] + left[j - k]
                temp = 0.0
                if den != 0.0:
                    temp = vals[k] / den
                vals[k] = saved + right[k + 1] * temp
                saved = left[j - k] * temp
            vals[j] = saved
        for k in range(degree + 1):
            out[r, span - degree + k] = vals[k]
    return out


def _bspline_design_np(x, knots, degree, n_basis):
    """Vectorised Cox-de Boor recursion over all points at once."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(knots, dtype=float)
    spans = np.array([_find_span(xi, t, degree, n_basis) for xi in x], dtype=np.intp)
    m = x.shape[0]
    vals = np.zeros((m, degree + 1))
    vals[:, 0] = 1.0
    left = np.zeros((m, degree + 1))
    right = np.zeros((m, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = x - t[spans + 1 - j]
        right[:, j] = t[spans + j] - x
        saved = np.zeros(m)
        for k in range(j):
            den = right[:, k + 1] + left[:, j - k]
            with np.errstate(divide="ignore", invalid="ignore"):
                temp = np.where(den != 0.0, vals[:, k] / den, 0.0)
            vals[:, k] = saved + right[:, k + 1] * temp
            saved = left[:, j - k] * temp
        vals[:, j] = saved
    out = np.zeros((m, n_basis))
    cols = spans[:, None] - degree + np.arange(degree + 1)[None, :]
    out[np.arange(m)[:, None], cols] = vals
    return out


def bspline_design(x, knots, degree, n_basis, use_numba=None):
    """Evaluate ``n_basis`` B-splines of ``degree`` on knots at points ``x``."""
    if use_numba is None:
        use_numba = USE_NUMBA
    x = np.ascontiguousarray(x, dtype=float)
    knots = np.ascontiguousarray(knots, dtype=float)
    if use_numba:
        return _bspline_design_nb(x, knots, int(degree), int(n_basis))
    return _bspline_design_np(x, knots, int(degree), int(n_basis))


# ---------------------------------------------------------------------------
# Max standardized deviation per draw (simultaneous band calibration)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _row_max_abs_scaled_nb(values, scale):
    n, p = values.shape
    out = np.empty(n)
    for i in range(n):
        m = 0.0
        for j in range(p):
            v = abs(values[i, j]) * scale[j]
            if v > m:
                m = v
        out[i] = m
    return out


def _row_max_abs_scaled_np(values, scale):
    return np.max(np.abs(values) * scale[None, :], axis=1)


def row_max_abs_scaled(values, scale, use_numba=None):
    """Return ``max_j |values[i, j]| * scale[j]`` for every row ``i``."""
    if use_numba is None:
        use_numba = USE_NUMBA
    values = np.ascontiguousarray(values, dtype=float)
    scale = np.ascontiguousarray(scale, dtype=float)
    if values.shape[1] == 0:
        return np.zeros(values.shape[0])
    if use_numba:
        return _row_max_abs_scaled_nb(values, scale)
    return _row_max_abs_scaled_np(values, scale)


# ---------------------------------------------------------------------------
# Trapezoid weights
# ---------------------------------------------------------------------------

@njit(cache=True)
def _trapezoid_weights_nb(points):
    p = points.shape[0]
    w = np.empty(p)
    w[0] = 0.5 * (points[1] - points[0])
    w[p - 1] = 0.5 * (points[p - 1] - points[p - 2])
    for j in range(1, p - 1):
        w[j] = 0.5 * (points[j + 1] - points[j - 1])
    return w


def _trapezoid_weights_np(points):
    w = np.empty_like(points)
    w[0] = 0.5 * (points[1] - points[0])
    w[-1] = 0.5 * (points[-1] - points[-2])
    w[1:-1] = 0.5 * (points[2:] - points[:-2])
    return w


def trapezoid_weights(points, use_numba=None):
    if use_numba is None:
        use_numba = USE_NUMBA
    points = np.ascontiguousarray(points, dtype=float)
    if use_numba:
        return _trapezoid_weights_nb(points)
    return _trapezoid_weights_np(points)
