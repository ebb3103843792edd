"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``KSDL_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
pure-Python versions are used.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_force_python = os.environ.get("KSDL_PURE_PYTHON", "") not in ("", "0")

if not _force_python:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

cd_lasso_gram = _impl.cd_lasso_gram
top_s_sums = _impl.top_s_sums
greedy_match = _impl.greedy_match

__all__ = ["BACKEND", "cd_lasso_gram", "top_s_sums", "greedy_match"]
