"""Hot numeric kernels with selectable backend.

Set ATTNLINK_BACKEND=numpy to force the pure-numpy fallback, or
ATTNLINK_BACKEND=numba to require the compiled backend. The default ("auto")
uses numba when importable and falls back to numpy otherwise.
"""

import os

_choice = os.environ.get("ATTNLINK_BACKEND", "auto").lower()

if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"ATTNLINK_BACKEND must be 'auto', 'numba' or 'numpy', got {_choice!r}")

if _choice == "numpy":
    from . import _numpy as _impl
elif _choice == "numba":
    from . import _numba as _impl
else:
    try:
        from . import _numba as _impl
    except ImportError:
        from . import _numpy as _impl

BACKEND = _impl.BACKEND_NAME
conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
bicubic_resize_stack = _impl.bicubic_resize_stack
