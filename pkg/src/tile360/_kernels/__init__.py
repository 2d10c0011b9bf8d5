"""Hot-loop kernels with backend selection at import.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
pure-Python module is loaded. Set ``TILE360_PURE_PYTHON=1`` to force the
fallback (the test-suite runs both).
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("TILE360_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None and _active is compiled_backend else "python"

discounted_returns = _active.discounted_returns
gae = _active.gae
download_time = _active.download_time
assign_nearest = _active.assign_nearest

__all__ = [
    "BACKEND",
    "assign_nearest",
    "compiled_backend",
    "discounted_returns",
    "download_time",
    "gae",
    "python_backend",
]
