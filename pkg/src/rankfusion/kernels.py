"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``RANKFUSION_BACKEND=python`` is set, the numpy fallback
is used. Callers always go through this module's attributes, so
:func:`use_backend` switches every caller at once.
"""

from __future__ import annotations

import os
from types import ModuleType

from rankfusion import _pykernels

try:
    from rankfusion import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_KERNELS = ("bm25_accumulate", "segment_sum", "dense_dot", "encode_varints", "decode_varints")

BACKEND = ""

bm25_accumulate = _pykernels.bm25_accumulate
segment_sum = _pykernels.segment_sum
dense_dot = _pykernels.dense_dot
encode_varints = _pykernels.encode_varints
decode_varints = _pykernels.decode_varints


def available_backends() -> list[str]:
    return ["python"] if _ckernels is None else ["cython", "python"]


def use_backend(name: str) -> None:
    """Route all kernel calls to ``"cython"`` or ``"python"``."""
    global BACKEND
    if name == "cython":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        module: ModuleType = _ckernels
    elif name == "python":
        module = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    for fn in _KERNELS:
        globals()[fn] = getattr(module, fn)
    BACKEND = name


use_backend(
    "python"
    if _ckernels is None or os.environ.get("RANKFUSION_BACKEND", "").lower() == "python"
    else "cython"
)
