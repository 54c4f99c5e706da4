"""Kernel backend selection.

The compiled extension is preferred; the pure-NumPy implementation is the
fallback when the extension was not built (or when SPILLSC_KERNEL=python is
set, mainly for testing and benchmarking). Both expose `run_chain_dhs` and
`run_chain_ds2` with identical signatures and semantics.
"""

import os

from . import pygibbs

if os.environ.get("SPILLSC_KERNEL", "").lower() == "python":
    _impl = pygibbs
    BACKEND = "python"
else:
    try:
        from . import _gibbs as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = pygibbs
        BACKEND = "python"

run_chain_dhs = _impl.run_chain_dhs
run_chain_ds2 = _impl.run_chain_ds2


def available_backends():
    """Map of importable backend name -> module; used by tests and benchmarks."""
    out = {"python": pygibbs}
    try:
        from . import _gibbs

        out["cython"] = _gibbs
    except ImportError:
        pass
    return out
