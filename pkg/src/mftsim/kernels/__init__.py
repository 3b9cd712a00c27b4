"""Backend selection for the evaluation kernels.

The numba backend is the default. Set MFTSIM_DISABLE_NUMBA=1 (or numba's own
NUMBA_DISABLE_JIT=1) to force the pure-numpy implementation; the flag is read
once at import. Both backends share one contract, see numpy_backend.
"""

from __future__ import annotations

import os

from . import numpy_backend

_disabled = os.environ.get("MFTSIM_DISABLE_NUMBA", "").strip() not in ("", "0")
_jit_off = os.environ.get("NUMBA_DISABLE_JIT", "").strip() not in ("", "0")

if _disabled or _jit_off:
    BACKEND = "numpy"
    impl = numpy_backend
else:
    try:
        from . import numba_backend as impl  # noqa: F401

        BACKEND = "numba"
    except ImportError:
        BACKEND = "numpy"
        impl = numpy_backend

eval_amp = impl.eval_amp
eval_vel = impl.eval_vel
eval_grad = impl.eval_grad
eval_grad2 = impl.eval_grad2
eval_branch_relog = impl.eval_branch_relog


def set_threads(k):
    """Pin the numba thread pool to k threads (no-op on the numpy backend).

    Returns the effective thread count used for parallel kernels.
    """
    if BACKEND != "numba" or k is None or k <= 0:
        return 1 if BACKEND != "numba" else None
    import numba

    k = min(int(k), numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(k)
    return k
