"""Kernel backend selection.

The compiled Cython lane is preferred when its extension module was built;
otherwise the numpy lane is used. Set ``NEWSCAST_BACKEND=python`` to force
the numpy lane or ``NEWSCAST_BACKEND=compiled`` to require the extension.
"""

import os

from . import _kernels_np

_choice = os.environ.get("NEWSCAST_BACKEND", "auto")
if _choice not in ("auto", "compiled", "python"):
    raise ValueError(f"NEWSCAST_BACKEND must be auto|compiled|python, got {_choice!r}")

if _choice == "python":
    _impl = _kernels_np
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _kernels_np

gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
adam_update = _impl.adam_update


def backend_name():
    """Name of the active kernel lane: 'compiled' or 'numpy'."""
    return _impl.BACKEND_NAME
