"""Factor-kernel backend selection.

The compiled extension is used when it has been built; otherwise the numpy
implementation.  Set ``IDLINE_KERNELS=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("IDLINE_KERNELS", "").lower() != "python":
    try:
        from . import _kernels_ext as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py

line_factors = _impl.line_factors
world_line_factors = _impl.world_line_factors
point_factors = _impl.point_factors


def backend(name: str):
    """Return the kernel module for ``"python"`` or ``"compiled"``."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels_ext

        return _kernels_ext
    raise ValueError(f"unknown kernel backend {name!r}")


def compiled_available() -> bool:
    try:
        from . import _kernels_ext  # noqa: F401
    except ImportError:
        return False
    return True
