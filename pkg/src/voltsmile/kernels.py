"""Kernel dispatch: compiled extension when available, NumPy otherwise.

Set ``VOLTSMILE_PURE_PYTHON=1`` to force the NumPy path.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("VOLTSMILE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def nig_cumulant(theta, alpha, beta, delta):
    return _impl.nig_cumulant(_f64(theta), float(alpha), float(beta), float(delta))


def psi1_closed(v, alpha1, beta1, x_scale, growth, mu, tau):
    return _impl.psi1_closed(_f64(v), float(alpha1), float(beta1), float(x_scale),
                             float(growth), float(mu), float(tau))


def two_factor_log_cf(v, alpha1, beta1, alpha2, beta2, x_scale, growth, mu, tau, gamma2):
    return _impl.two_factor_log_cf(_f64(v), float(alpha1), float(beta1), float(alpha2),
                                   float(beta2), float(x_scale), float(growth), float(mu),
                                   float(tau), float(gamma2))


def mt_time_values(v, weights, logpsi, forward, strikes, half_var):
    return _impl.mt_time_values(_f64(v), _f64(weights),
                                np.ascontiguousarray(logpsi, dtype=np.complex128),
                                float(forward), _f64(strikes), float(half_var))
