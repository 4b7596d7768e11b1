"""DSK_THREADS support: cap BLAS parallelism before numpy loads."""

import os

_BLAS_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def apply_thread_cap() -> None:
    """Propagate DSK_THREADS to the BLAS thread-count variables.

    Effective only while numpy is not yet initialized in the process;
    the CLI entry points import this package first, so command-line use
    always honors the cap.
    """
    cap = os.environ.get("DSK_THREADS")
    if not cap:
        return
    for var in _BLAS_VARS:
        os.environ[var] = cap
