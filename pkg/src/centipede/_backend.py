"""Select the compiled kernel if it is built, else the pure-Python one.

Set ``CENTIPEDE_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["cython"] = _compiled

if _compiled is not None and os.environ.get("CENTIPEDE_PURE_PYTHON", "") in ("", "0"):
    NAME = "cython"
else:
    NAME = "python"

level_recursion = BACKENDS[NAME].level_recursion


def use(name: str) -> None:
    """Switch the active backend at runtime ("cython" or "python")."""
    global NAME, level_recursion
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    NAME = name
    level_recursion = BACKENDS[name].level_recursion
