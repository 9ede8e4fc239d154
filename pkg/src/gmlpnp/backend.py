"""Kernel backend selection.

The hot numeric kernels exist twice: a numba-compiled version
(:mod:`gmlpnp._numba_impl`) and a vectorized pure-numpy fallback
(:mod:`gmlpnp._numpy_impl`). The active one is selected once at import
time from the ``GMLPNP_BACKEND`` environment variable:

* unset          — numba when importable, numpy otherwise
* ``numba``      — require numba, raise if missing
* ``numpy``      — force the pure-numpy path

``impl`` is the selected module; both expose the identical function set.
``benchmarks/backend_bench.py`` compares the two head to head.
"""

import os

from . import _numpy_impl

_ENV_VAR = "GMLPNP_BACKEND"
_requested = os.environ.get(_ENV_VAR, "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"{_ENV_VAR}={_requested!r} is not recognized; use 'numba' or 'numpy'"
    )

if _requested == "numpy":
    impl = _numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import _numba_impl

        impl = _numba_impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        impl = _numpy_impl
        BACKEND = "numpy"


def active_backend():
    """Name of the kernel backend selected at import time."""
    return BACKEND
