"""Message-passing kernel backend selection.

The compiled Cython core is used when it imported successfully; otherwise
the numpy implementation takes over with identical semantics. Set
``LSESMP_KERNELS=numpy`` or ``LSESMP_KERNELS=cython`` to force a backend
(forcing cython raises if the extension is unavailable).

Both backends expose ``sum_messages``, ``variable_messages`` and
``em_stats`` with the contracts documented in ``_numpy_impl``.
"""
import os

from . import _numpy_impl

try:
    from . import _core
except ImportError:  # extension not built; pure fallback
    _core = None

_forced = os.environ.get("LSESMP_KERNELS", "").strip().lower()
if _forced == "numpy":
    _impl = _numpy_impl
elif _forced == "cython":
    if _core is None:
        raise ImportError(
            "LSESMP_KERNELS=cython requested but the compiled kernel "
            "module lsesmp.kernels._core is not available"
        )
    _impl = _core
elif _forced:
    raise ImportError(f"unknown LSESMP_KERNELS value {_forced!r}")
else:
    _impl = _core if _core is not None else _numpy_impl

BACKEND = _impl.BACKEND_NAME
sum_messages = _impl.sum_messages
variable_messages = _impl.variable_messages
em_stats = _impl.em_stats
em_stats_matched = _impl.em_stats_matched


def available_backends():
    """Name -> module map of the kernel implementations that import."""
    out = {"numpy": _numpy_impl}
    if _core is not None:
        out["cython"] = _core
    return out
