"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``HYBRIDRC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("HYBRIDRC_PURE_PYTHON"):
    _backend = _pykernels
else:
    try:
        from . import _ckernels as _backend
    except ImportError:  # extension not built
        _backend = _pykernels

BACKEND = _backend.BACKEND
HAVE_EXTENSION = BACKEND == "cython"


def get_backend(name=None):
    """Return a kernel module by name ("cython", "python") or the active one."""
    if name is None:
        return _backend
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


ode_sample = _backend.ode_sample
ode_propagate = _backend.ode_propagate
dde_sample = _backend.dde_sample
reservoir_drive = _backend.reservoir_drive
closed_loop = _backend.closed_loop
