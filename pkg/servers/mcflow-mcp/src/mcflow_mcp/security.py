"""Guards for the tool server.

Handles the directory allowlist for configs and outputs, and the limiter
that keeps experiment runs from overlapping.
"""

import asyncio
import logging
import os
from pathlib import Path

logger = logging.getLogger(__name__)


class PathFilter:
    """Restricts tool-server file access to allowlisted roots."""

    def __init__(self, allowed_roots: str | None = None):
        """Initialize with comma-separated directories.

        Args:
            allowed_roots: Comma-separated directories (e.g., "configs,runs").
                Defaults to MCFLOW_ALLOWED_ROOTS, then the working directory.
        """
        raw = allowed_roots or os.environ.get("MCFLOW_ALLOWED_ROOTS", ".")
        self.allowed_roots = [Path(r.strip()).resolve() for r in raw.split(",") if r.strip()]
        logger.info(f"Path allowlist: {[str(r) for r in self.allowed_roots]}")

    def is_allowed(self, path: str | Path) -> bool:
        resolved = Path(path).resolve()
        return any(resolved == root or root in resolved.parents for root in self.allowed_roots)

    def check(self, path: str | Path) -> Path:
        """Resolved path, or PermissionError when it lies outside every root."""
        if not self.is_allowed(path):
            raise PermissionError(f"Path '{path}' is outside the allowed roots")
        return Path(path).resolve()


class RunLimiter:
    """Lets one experiment run at a time and counts queued requests."""

    def __init__(self):
        self._lock = asyncio.Lock()
        self.waiting = 0

    async def __aenter__(self) -> "RunLimiter":
        self.waiting += 1
        if self._lock.locked():
            logger.debug(f"Run queued behind an active experiment ({self.waiting} waiting)")
        await self._lock.acquire()
        self.waiting -= 1
        return self

    async def __aexit__(self, *exc) -> None:
        self._lock.release()
