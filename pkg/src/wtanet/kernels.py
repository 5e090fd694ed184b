"""Backend selection for the simulation kernel.

The compiled Cython kernel is used when available; otherwise the NumPy
implementation takes over.  Force a backend with WTANET_BACKEND=python or
WTANET_BACKEND=compiled, or per network via Network(backend=...).
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:          # extension not built; NumPy fallback
    _compiled = None


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def default_backend() -> str:
    env = os.environ.get("WTANET_BACKEND")
    if env:
        if env not in ("python", "compiled"):
            raise ValueError(f"WTANET_BACKEND must be python or compiled, got {env!r}")
        if env == "compiled" and _compiled is None:
            raise ImportError("compiled kernel requested but the extension is not built")
        return env
    return "compiled" if _compiled is not None else "python"


def get_backend(name: str | None = None):
    """Return the run_stimulus callable of the chosen backend."""
    name = name or default_backend()
    if name == "python":
        return _kernels_py.run_stimulus
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernel is not built")
        return _compiled.run_stimulus
    raise ValueError(f"unknown backend {name!r}")
