"""Kernel selection: the compiled extension when importable, else pure Python.

Set ``SPINDISSIM_PURE=1`` to force the Python implementation.
"""

import os

from . import _pykernels as python

compiled = None
if os.environ.get("SPINDISSIM_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else python

IMPLEMENTATION = active.IMPLEMENTATION
discrete_rounds = active.discrete_rounds
continuous_events = active.continuous_events
sse_diagonal_update = active.sse_diagonal_update
sse_loop_update = active.sse_loop_update


def backends() -> dict:
    """Available implementations by name."""
    out = {"python": python}
    if compiled is not None:
        out["cython"] = compiled
    return out
