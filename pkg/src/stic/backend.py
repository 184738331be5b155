"""Kernel backend selection.

The compiled extension is used when it imports cleanly; setting
``STIC_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from stic import _kernels_py

NAME = "python"
kernels = _kernels_py

if not os.environ.get("STIC_PURE_PYTHON"):
    try:
        from stic import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        NAME = "compiled"


def get(name=None):
    """Return the kernel module called ``name`` ("compiled" or "python")."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from stic import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
