"""Kernel backend selection.

``ELASTOGAUGE_BACKEND=numpy`` forces the pure-numpy path; the default is
numba when it imports cleanly.
"""

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

ENV_VAR = "ELASTOGAUGE_BACKEND"


def get_backend(override=None):
    choice = (override or os.environ.get(ENV_VAR, "numba")).lower()
    if choice not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}; expected 'numba' or 'numpy'")
    if choice == "numba" and not HAVE_NUMBA:
        return "numpy"
    return choice


def set_threads(count):
    if HAVE_NUMBA and count:
        import numba

        numba.set_num_threads(min(int(count), numba.config.NUMBA_NUM_THREADS))
