"""Selects the compiled walk core when available.

Set ``RWPT_PURE_PYTHON=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pycore

BACKEND = "python"
_impl = _pycore

if os.environ.get("RWPT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ext as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "compiled"

run_paths = _impl.run_paths
draw_steps = _impl.draw_steps
philox4x32 = _impl.philox4x32


def backends() -> dict:
    """Both implementations, for benchmarks and equivalence tests."""
    out = {"python": _pycore}
    try:
        from . import _ext

        out["compiled"] = _ext
    except ImportError:  # pragma: no cover
        pass
    return out
