"""Backend dispatch for the hot routing/search kernels.

The VNFSCALE_BACKEND environment variable picks the implementation
("numba" or "numpy"). Unset, numba is used when importable and the pure
numpy path otherwise. Both backends produce bit-identical float64 results;
the flag only trades speed, never output.
"""

from __future__ import annotations

import os

from . import numpy_impl

_VALID = ("numba", "numpy")
_requested = os.environ.get("VNFSCALE_BACKEND", "").strip().lower()
if _requested and _requested not in _VALID:
    raise ValueError(
        f"VNFSCALE_BACKEND={_requested!r}: expected one of {_VALID}"
    )

if _requested == "numpy":
    _impl = numpy_impl
else:
    try:
        from . import numba_impl as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "numba":
            raise
        _impl = numpy_impl

BACKEND = _impl.NAME
layered_distances = _impl.layered_distances
chain_delays = _impl.chain_delays
reward_from_delays = _impl.reward_from_delays
exact_search = _impl.exact_search


def get_backend(name: str):
    """Fetch a backend module by name regardless of the env flag (used by
    the cross-backend tests and the benchmark script)."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import numba_impl

        return numba_impl
    raise ValueError(f"unknown backend {name!r}: expected one of {_VALID}")
