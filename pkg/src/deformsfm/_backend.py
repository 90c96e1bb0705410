"""Kernel backend selection.

Imports the compiled extension when available, otherwise falls back to
the NumPy implementations.  Set the environment variable
``DEFORMSFM_PURE_PYTHON=1`` to force the pure backend (used by the
benchmark and the parity tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

__all__ = [
    "BACKEND",
    "quad_monomials",
    "quad_monomial_grads",
    "repeated_system",
    "quasi_system",
    "generic_system",
    "three_view_residual",
    "split_residual",
    "two_view_residual",
    "theta_design",
    "depth_scan",
]

_FORCE_PURE = os.environ.get("DEFORMSFM_PURE_PYTHON", "").strip() not in ("", "0")

if not _FORCE_PURE:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"
else:
    _impl = _kernels_py
    BACKEND = "python"

quad_monomials = _impl.quad_monomials
quad_monomial_grads = _impl.quad_monomial_grads
repeated_system = _impl.repeated_system
quasi_system = _impl.quasi_system
generic_system = _impl.generic_system
three_view_residual = _impl.three_view_residual
split_residual = _impl.split_residual
two_view_residual = _impl.two_view_residual
theta_design = _impl.theta_design
depth_scan = _impl.depth_scan
