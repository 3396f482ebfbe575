"""Opt-in allocation accounting used to verify the storage contract.

Setting the environment variable ``SDP_AUDIT_ALLOC=1`` (or entering an
:class:`AllocationAudit` scope explicitly) turns on ``tracemalloc`` for the
duration of a run.  The recorded figure is the peak *total* traced memory
above the baseline at scope entry; since any single contiguous buffer is at
most the total, the peak upper-bounds the largest numeric buffer allocated
inside the scope.  numpy registers its array buffers with tracemalloc, so
an accidental dense n-by-n temporary anywhere in the pipeline shows up.
"""

from __future__ import annotations

import os
import tracemalloc

ENV_FLAG = "SDP_AUDIT_ALLOC"

_FLOAT_BYTES = 8


def audit_enabled() -> bool:
    return os.environ.get(ENV_FLAG, "") not in ("", "0")


class AllocationAudit:
    """Context manager tracking peak traced allocation within its scope."""

    def __init__(self, enabled: bool | None = None):
        self.enabled = audit_enabled() if enabled is None else enabled
        self.peak_bytes = 0
        self._baseline = 0
        self._started_tracing = False
        self._active = False

    @classmethod
    def from_env(cls) -> "AllocationAudit":
        return cls(enabled=None)

    def start(self):
        if not self.enabled or self._active:
            return self
        if not tracemalloc.is_tracing():
            tracemalloc.start()
            self._started_tracing = True
        self._baseline = tracemalloc.get_traced_memory()[0]
        tracemalloc.reset_peak()
        self._active = True
        return self

    def stop(self):
        if not self._active:
            return self
        self.checkpoint()
        if self._started_tracing:
            tracemalloc.stop()
            self._started_tracing = False
        self._active = False
        return self

    def checkpoint(self):
        """Fold the current tracemalloc peak into the running maximum."""
        if self._active:
            _, peak = tracemalloc.get_traced_memory()
            self.peak_bytes = max(self.peak_bytes, peak - self._baseline)
        return self.peak_bytes

    @property
    def peak_entries(self) -> int:
        """Peak expressed in float64-equivalent entries."""
        return self.peak_bytes // _FLOAT_BYTES

    def report(self) -> dict:
        return {
            "enabled": self.enabled,
            "peak_traced_bytes": self.peak_bytes,
            "peak_float64_entries": self.peak_entries,
        }

    def __enter__(self):
        return self.start()

    def __exit__(self, exc_type, exc, tb):
        self.stop()
        return False
