"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy versions in ``_pykernels``.  Set ``XAICOMPRESS_PURE_PYTHON=1`` to force
the fallback.
"""
import os

from . import _pykernels

if os.environ.get("XAICOMPRESS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

quantize_columns = _impl.quantize_columns
pack_codes = _impl.pack_codes
unpack_codes = _impl.unpack_codes
packed_group_bytes = _pykernels.packed_group_bytes
