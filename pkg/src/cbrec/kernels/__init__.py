"""Hot inner loops with two interchangeable backends.

The default backend JIT-compiles the kernels with numba; a pure-numpy
fallback implements the same sampling scheme (identical ray sets, identical
interpolation weights) and is selected with

    CBREC_BACKEND=numpy

The fallback is exact but slow; it exists for environments without a working
numba and as an independent reference in the test suite.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os

_requested = os.environ.get("CBREC_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "", "numba", "numpy"):
    raise ValueError(
        f"CBREC_BACKEND={_requested!r}: expected 'numba', 'numpy' or 'auto'"
    )

if _requested in ("auto", ""):
    try:
        import numba  # noqa: F401

        _requested = "numba"
    except ImportError:
        _requested = "numpy"

if _requested == "numba":
    from . import _numba as _impl
else:
    from . import _numpy as _impl

BACKEND = _requested

radon2d_forward = _impl.radon2d_forward
radon2d_adjoint = _impl.radon2d_adjoint
cone_forward = _impl.cone_forward
cone_backproject_accum = _impl.cone_backproject_accum
cone_backproject_adjoint = _impl.cone_backproject_adjoint


def set_num_threads(n: int) -> None:
    """Limit kernel parallelism; 0 leaves the backend default untouched."""
    if n > 0 and BACKEND == "numba":
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
