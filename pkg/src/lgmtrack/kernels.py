"""Backend selection for the temporal convolution kernels.

The compiled extension is used when it was built; set ``LGMTRACK_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "numpy"
_impl = _kernels_py

if os.environ.get("LGMTRACK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

conv1d_forward = _impl.conv1d_forward
conv1d_backward_input = _impl.conv1d_backward_input
conv1d_backward_weight = _impl.conv1d_backward_weight


def implementations():
    """Return {name: module} for every backend importable in this process."""
    found = {"numpy": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return found
    found["cython"] = _compiled
    return found
