"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``ECGNET_PURE_PYTHON=1``
to force the numpy fallback. Both backends expose the same three
functions and produce bit-identical results.
"""

import os

from ecgnet import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from ecgnet import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("ECGNET_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

_impl = BACKENDS[BACKEND]
median_filter = _impl.median_filter
decode_212 = _impl.decode_212
encode_212 = _impl.encode_212


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active one)."""
    return BACKENDS[name or BACKEND]
