"""Backend selection for the scoring kernels.

The compiled extension is preferred when importable; set DUOREP_PURE_PYTHON=1
to force the NumPy fallback. ``benchmarks/bench_kernels.py`` compares both.
"""

from __future__ import annotations

import os

from . import _kernels_py

_BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _native
except ImportError:
    _native = None
else:
    _BACKENDS["native"] = _native

if os.environ.get("DUOREP_PURE_PYTHON"):
    _ACTIVE = "python"
else:
    _ACTIVE = "native" if _native is not None else "python"

maxsim = _BACKENDS[_ACTIVE].maxsim
maxsim_batch = _BACKENDS[_ACTIVE].maxsim_batch
adc_scores = _BACKENDS[_ACTIVE].adc_scores


def active_backend() -> str:
    return _ACTIVE


def available_backends() -> dict:
    """Name -> module for every importable backend (used by tests and benchmarks)."""
    return dict(_BACKENDS)
