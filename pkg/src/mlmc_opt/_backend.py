"""Select the compiled kernels when available, else the numpy fallback.

``MLMC_OPT_BACKEND=python`` forces the fallback even when the extension
is built.
"""

import os

from . import _core_py

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _core_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

if os.environ.get("MLMC_OPT_BACKEND", "").lower() == "python" or _compiled is None:
    NAME = "python"
else:
    NAME = "cython"

kernels = BACKENDS[NAME]


def get(name: str):
    """Kernel module by backend name (``"cython"`` or ``"python"``)."""
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available") from None
