"""Optional allocator tuning for render-heavy loops.

Observation grids are 256 KiB each and are allocated/released every step.
With glibc defaults those blocks are mmap-backed, so every grid pays page
faults on first touch; on sandboxed kernels that dominates render time.
Raising the mmap threshold and disabling heap trimming keeps the blocks
on the reused heap.  Semantics are unaffected; this is opt-in and called
by the CLI entry point.
"""

from __future__ import annotations

import ctypes
import ctypes.util

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3

_applied = False


def tune_allocator() -> bool:
    """Keep medium-sized buffers on the heap; returns True if applied."""
    global _applied
    if _applied:
        return True
    try:
        name = ctypes.util.find_library("c") or "libc.so.6"
        libc = ctypes.CDLL(name)
        ok = (
            libc.mallopt(_M_MMAP_THRESHOLD, 8 * 1024 * 1024)
            and libc.mallopt(_M_TRIM_THRESHOLD, 2**31 - 1)
            and libc.mallopt(_M_TOP_PAD, 16 * 1024 * 1024)
        )
        _applied = bool(ok)
    except (OSError, AttributeError):
        _applied = False
    return _applied
