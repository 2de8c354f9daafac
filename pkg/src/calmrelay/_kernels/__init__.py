"""Deposit-kernel backend selection.

The compiled cython kernel is used when importable, the pure-python
reference otherwise. Both produce bit-identical grids; CALMRELAY_KERNELS
(python|cython|auto) forces a choice, e.g. for benchmarking.
"""

from __future__ import annotations

import os

from . import _deposit as _py

AVAILABLE = {"python": _py.deposit_gaussian}

try:
    from . import _deposit_cy as _cy

    AVAILABLE["cython"] = _cy.deposit_gaussian
except ImportError:
    _cy = None

_choice = os.environ.get("CALMRELAY_KERNELS", "auto")
if _choice == "auto":
    BACKEND = "cython" if _cy is not None else "python"
elif _choice in AVAILABLE:
    BACKEND = _choice
else:
    raise ImportError(
        f"CALMRELAY_KERNELS={_choice!r} not available (have: {sorted(AVAILABLE)})"
    )

deposit_gaussian = AVAILABLE[BACKEND]
