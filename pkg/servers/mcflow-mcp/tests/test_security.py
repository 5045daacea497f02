"""Tests for the tool-server guards."""

import asyncio
from unittest.mock import patch

import pytest

from mcflow_mcp.security import PathFilter, RunLimiter


class TestPathFilter:
    """Tests for PathFilter."""

    def test_default_is_working_directory(self, tmp_path, monkeypatch):
        """Without configuration only the working directory is allowed."""
        monkeypatch.chdir(tmp_path)
        with patch.dict("os.environ", {}, clear=True):
            paths = PathFilter()
        assert paths.is_allowed(tmp_path / "configs" / "run.yaml")
        assert paths.is_allowed(tmp_path)
        assert not paths.is_allowed(tmp_path.parent / "elsewhere")

    def test_custom_roots(self, tmp_path):
        """Comma-separated roots are each allowed."""
        configs = tmp_path / "configs"
        runs = tmp_path / "runs"
        paths = PathFilter(f"{configs}, {runs}")
        assert paths.is_allowed(configs / "a.yaml")
        assert paths.is_allowed(runs / "a" / "report.txt")
        assert not paths.is_allowed(tmp_path / "secrets.yaml")

    def test_environment_roots(self, tmp_path):
        """MCFLOW_ALLOWED_ROOTS is read when no roots are given."""
        with patch.dict("os.environ", {"MCFLOW_ALLOWED_ROOTS": str(tmp_path / "configs")}):
            paths = PathFilter()
        assert paths.is_allowed(tmp_path / "configs" / "a.yaml")
        assert not paths.is_allowed(tmp_path / "a.yaml")

    def test_traversal_is_resolved(self, tmp_path):
        """'..' segments cannot escape a root."""
        paths = PathFilter(str(tmp_path / "configs"))
        assert not paths.is_allowed(tmp_path / "configs" / ".." / "a.yaml")

    def test_check(self, tmp_path):
        """check returns the resolved path or raises PermissionError."""
        paths = PathFilter(str(tmp_path))
        assert paths.check(tmp_path / "a.yaml") == (tmp_path / "a.yaml").resolve()
        with pytest.raises(PermissionError, match="outside the allowed roots"):
            paths.check("/")


class TestRunLimiter:
    """Tests for RunLimiter."""

    @pytest.mark.asyncio
    async def test_runs_do_not_overlap(self):
        """A second run waits for the first to finish."""
        limiter = RunLimiter()
        events = []

        async def job(label):
            async with limiter:
                events.append(f"{label}-start")
                await asyncio.sleep(0.01)
                events.append(f"{label}-end")

        await asyncio.gather(job("a"), job("b"))
        assert events == ["a-start", "a-end", "b-start", "b-end"]

    @pytest.mark.asyncio
    async def test_counts_waiting(self):
        """Queued requests are counted until they acquire the lock."""
        limiter = RunLimiter()
        async with limiter:
            waiter = asyncio.create_task(limiter.__aenter__())
            await asyncio.sleep(0)
            assert limiter.waiting == 1
        await waiter
        assert limiter.waiting == 0
        await limiter.__aexit__(None, None, None)
