"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-numpy twin
is used otherwise.  Setting the environment variable ``BPSA_PURE_PYTHON``
to a non-empty value forces the fallback (useful for parity testing and
benchmarking).
"""

from __future__ import annotations

import os

from . import _matchpy

if os.environ.get("BPSA_PURE_PYTHON"):
    _impl = _matchpy
    BACKEND = "python"
else:
    try:
        from . import _matchcore as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _matchpy
        BACKEND = "python"

nn_match_counts = _impl.nn_match_counts
random_match_counts = _impl.random_match_counts


def backend_name() -> str:
    return BACKEND
