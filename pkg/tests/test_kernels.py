"""The compiled kernels and the NumPy fallback must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from voltsmile import _kernels_py, kernels

compiled = pytest.importorskip("voltsmile._kernels")

V = np.concatenate([[0.0], np.logspace(-6, 3, 400)])
PSI_ARGS = [(0.189, 0.0586, 0.0137, np.expm1(0.0044 * 27), 0.0044, 27.0),
            (0.189, -0.0586, 0.0030, np.expm1(0.0044 * 400), 0.0044, 400.0),
            (2.0, 0.5, 0.3, 0.0, 0.0, 10.0), (0.189, 0.0586, 0.0, np.expm1(0.0044 * 5), 0.0044, 5.0)]


class TestParity:
    def test_nig_cumulant(self):
        for a, b, d in [(0.189, 0.0586, 1.0), (0.0005, 0.0002, 1.0), (5.0, -4.9, 0.3)]:
            np.testing.assert_allclose(compiled.nig_cumulant(V, a, b, d), _kernels_py.nig_cumulant(V, a, b, d),
                                       rtol=1e-12, atol=1e-300)

    @pytest.mark.parametrize("args", PSI_ARGS)
    def test_psi1_closed(self, args):
        np.testing.assert_allclose(compiled.psi1_closed(V, *args), _kernels_py.psi1_closed(V, *args),
                                   rtol=1e-12, atol=1e-300)

    def test_two_factor_log_cf(self):
        args = (0.189, 0.0586, 0.0005, 0.0002, 0.0137, 0.126, 0.0044, 27.0, 0.0129)
        np.testing.assert_allclose(compiled.two_factor_log_cf(V, *args), _kernels_py.two_factor_log_cf(V, *args),
                                   rtol=1e-12, atol=1e-300)

    @pytest.mark.parametrize("strikes", [np.linspace(30, 42, 40), np.array([31.0, 33.5, 36.0, 41.25]),
                                         np.array([36.0]), np.array([35.0, 36.0])])
    def test_mt_time_values(self, strikes):
        v = np.linspace(0.0, 40.0, 2049)
        w = np.full(v.size, v[1])
        logpsi = _kernels_py.two_factor_log_cf(v, 0.189, 0.0586, 0.0005, 0.0002, 0.0137, 0.126, 0.0044, 27.0, 0.0129)
        a = compiled.mt_time_values(v, w, logpsi, 36.0, strikes, 0.5)
        b = _kernels_py.mt_time_values(v, w, logpsi, 36.0, strikes, 0.5)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_dispatcher_reports_backend():
    assert kernels.BACKEND in ("cython", "python")


def test_pure_python_switch():
    env = dict(os.environ, VOLTSMILE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from voltsmile import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_dispatcher_accepts_non_contiguous_input():
    v = np.linspace(0, 5, 21)[::2]
    np.testing.assert_allclose(kernels.nig_cumulant(v, 1.0, 0.2, 1.0), _kernels_py.nig_cumulant(v, 1.0, 0.2, 1.0),
                               rtol=1e-13)
