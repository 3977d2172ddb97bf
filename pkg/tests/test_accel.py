import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fosrpower import _accel
from fosrpower.bspline import clamped_knots

needs_numba = pytest.mark.skipif(not _accel.NUMBA_AVAILABLE, reason="numba not installed")


@needs_numba
@pytest.mark.parametrize("degree,n_basis", [(3, 30), (2, 8), (1, 5), (3, 4)])
def test_bspline_paths_agree(degree, n_basis):
    x = np.concatenate([np.linspace(0, 1, 137), [0.0, 1.0, 0.5]])
    knots = clamped_knots(0.0, 1.0, n_basis, degree)
    a = _accel.bspline_design(x, knots, degree, n_basis, use_numba=True)
    b = _accel.bspline_design(x, knots, degree, n_basis, use_numba=False)
    np.testing.assert_allclose(a, b, atol=1e-13)


@needs_numba
@given(arrays(np.float64, (7, 9), elements=st.floats(-1e6, 1e6)),
       arrays(np.float64, 9, elements=st.floats(0, 10)))
def test_row_max_paths_agree(values, scale):
    a = _accel.row_max_abs_scaled(values, scale, use_numba=True)
    b = _accel.row_max_abs_scaled(values, scale, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-15)
    np.testing.assert_allclose(b, np.max(np.abs(values) * scale, axis=1))


@needs_numba
def test_trapezoid_paths_agree():
    pts = np.sort(np.random.default_rng(1).random(300))
    np.testing.assert_allclose(
        _accel.trapezoid_weights(pts, use_numba=True),
        _accel.trapezoid_weights(pts, use_numba=False),
        rtol=1e-15,
    )


def test_partition_of_unity_numpy_path():
    x = np.linspace(0, 1, 101)
    B = _accel.bspline_design(x, clamped_knots(0, 1, 12, 3), 3, 12, use_numba=False)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-13)


@pytest.mark.parametrize("value,disabled", [("1", True), ("yes", True), ("0", False), ("", False),
                                            ("false", False)])
def test_env_flag(monkeypatch, value, disabled):
    monkeypatch.setenv("FOSRPOWER_DISABLE_NUMBA", value)
    assert _accel._env_disabled() is disabled


def test_env_flag_selects_numpy_at_import():
    code = "from fosrpower import _accel; print(_accel.USE_NUMBA)"
    env = dict(os.environ, FOSRPOWER_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_module_reload_keeps_api():
    mod = importlib.reload(_accel)
    for name in ("bspline_design", "row_max_abs_scaled", "trapezoid_weights", "USE_NUMBA"):
        assert hasattr(mod, name)
