"""Backend selection for the assignment kernels.

The compiled extension is used when it imports; set ``EQUIPART_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("EQUIPART_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def _prep(points, sites, weights):
    return (
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(sites, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
    )


def assign(points, sites, weights, impl=None):
    """Label each point by the lowest-index site of minimal power.

    Returns ``(labels, hmin)`` with ``hmin`` the minimal power value.
    """
    return (impl or _impl).assign(*_prep(points, sites, weights))


def assign_pair(points, sites, weights, impl=None):
    """Like :func:`assign`, also returning the runner-up site and power gap."""
    return (impl or _impl).assign_pair(*_prep(points, sites, weights))


def backends():
    """Available kernel implementations keyed by name."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
