"""Kernel backend selection.

The env var NPPLAB_BACKEND picks the implementation of the hot kernels:
"numba" (default when numba imports) or "numpy" (pure-numpy fallback).
Matrix products in the training path always go through BLAS (np.matmul);
the kernels here cover the fused elementwise/reduction loops and the
deterministic row-independent matmul used by incremental decoding.
"""

from __future__ import annotations

import os

_KERNEL_NAMES = [
    "softmax_rows",
    "softmax_rows_bwd",
    "causal_softmax",
    "causal_softmax_bwd",
    "rmsnorm_fwd",
    "rmsnorm_bwd",
    "layernorm_fwd",
    "layernorm_bwd",
    "silu_fwd",
    "silu_bwd",
    "rope_2d_apply",
    "grouped_ce_fwd",
    "grouped_ce_bwd",
    "adamw_update",
    "sumsq",
    "embedding_grad",
    "matmul_det",
    "warmup",
]

active_backend = "numpy"


def _load(name: str):
    if name == "numba":
        from npplab import kernels_numba as mod
    elif name == "numpy":
        from npplab import kernels_numpy as mod
    else:
        raise ValueError(f"unknown backend {name!r} (expected 'numba' or 'numpy')")
    return mod


def set_backend(name: str) -> str:
    """Bind the named kernel set into this module. Returns the active name."""
    global active_backend
    mod = _load(name)
    for fn in _KERNEL_NAMES:
        globals()[fn] = getattr(mod, fn)
    active_backend = name
    return name


def _initial_backend() -> str:
    requested = os.environ.get("NPPLAB_BACKEND", "").strip().lower()
    if requested:
        return requested
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


set_backend(_initial_backend())
