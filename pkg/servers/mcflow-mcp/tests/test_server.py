"""Tests for the MCP tool handlers."""

import json

import pytest

from mcflow_mcp import server
from mcflow_mcp.security import PathFilter

FLAT_RUN = """\
name: flat
criteria: [6]
solver:
  final_time: 0.1
  dt: 0.05
"""


@pytest.fixture
def sandbox(tmp_path, monkeypatch):
    monkeypatch.setattr(server, "_path_filter", PathFilter(str(tmp_path)))
    return tmp_path


def payload(response):
    assert len(response) == 1
    return json.loads(response[0].text)


class TestTools:
    """Tests for the tool listing."""

    @pytest.mark.asyncio
    async def test_list_tools(self):
        """Every handler has a tool with a schema."""
        tools = await server.list_tools()
        names = {tool.name for tool in tools}
        assert names == {
            "mcflow_run_experiment",
            "mcflow_verify_suite",
            "mcflow_blowup_parameters",
            "mcflow_scaling_exponent",
        }
        assert all(tool.inputSchema["required"] for tool in tools)

    @pytest.mark.asyncio
    async def test_unknown_tool(self):
        """Unknown tools are answered, not raised."""
        response = await server.call_tool("mcflow_launch", {})
        assert response[0].text == "Unknown tool: mcflow_launch"


class TestExponentTools:
    """Tests for the exact exponent tools."""

    @pytest.mark.asyncio
    async def test_blowup_parameters(self):
        """The reference case returns exact fractions."""
        info = payload(await server.call_tool("mcflow_blowup_parameters", {"n": 2, "p": 2, "q": 4}))
        assert info["regime"] == "supercritical"
        assert info["eps0"] == "1/2"
        assert info["alpha0"] == "15/32"
        assert info["integrability_threshold"] == "7/16"

    @pytest.mark.asyncio
    async def test_subcritical_has_no_family(self):
        """Subcritical exponents report only their regime."""
        info = payload(await server.call_tool("mcflow_blowup_parameters", {"n": 1, "p": "inf", "q": "inf"}))
        assert info["regime"] == "subcritical"
        assert "alpha0" not in info

    @pytest.mark.asyncio
    async def test_missing_arguments(self):
        """Missing arguments give an error message."""
        response = await server.call_tool("mcflow_blowup_parameters", {"n": 2, "p": 2})
        assert response[0].text == "Error: n, p and q are required"

    @pytest.mark.asyncio
    async def test_scaling_exponent(self):
        """alpha = 15/32 with n = p = 2 gives -1/8 and -3/64."""
        info = payload(
            await server.call_tool("mcflow_scaling_exponent", {"n": 2, "p": 2, "alpha": "15/32"})
        )
        assert info["scaling_exponent"] == "-1/8"
        assert info["asymptotic_exponent"] == "-3/64"

    @pytest.mark.asyncio
    async def test_infinite_alpha(self):
        """alpha must be finite."""
        response = await server.call_tool("mcflow_scaling_exponent", {"n": 1, "p": 2, "alpha": "inf"})
        assert response[0].text == "Error: alpha must be finite"

    @pytest.mark.asyncio
    async def test_bad_exponent(self):
        """Library errors are reported as experiment errors."""
        response = await server.call_tool("mcflow_blowup_parameters", {"n": 1, "p": "1/2", "q": 2})
        assert response[0].text.startswith("Experiment error:")


class TestRunTools:
    """Tests for the experiment tools."""

    @pytest.mark.asyncio
    async def test_run_experiment(self, sandbox):
        """A flat run inside the allowlist passes."""
        path = sandbox / "flat.yaml"
        path.write_text(FLAT_RUN)
        result = payload(
            await server.call_tool(
                "mcflow_run_experiment", {"config_path": str(path), "output_dir": str(sandbox / "out")}
            )
        )
        assert result["exit_code"] == 0
        assert result["results"][0].startswith("PASS 6 comparison-bound")
        assert (sandbox / "out" / "report.txt").exists()

    @pytest.mark.asyncio
    async def test_access_denied(self, sandbox):
        """Configs outside the allowlist are refused."""
        response = await server.call_tool("mcflow_run_experiment", {"config_path": "/etc/passwd"})
        assert response[0].text.startswith("Access denied:")

    @pytest.mark.asyncio
    async def test_invalid_config(self, sandbox):
        """Validation errors are reported as such."""
        path = sandbox / "bad.yaml"
        path.write_text("solver:\n  timestep: 0.1\n")
        response = await server.call_tool("mcflow_run_experiment", {"config_path": str(path)})
        assert response[0].text.startswith("Invalid configuration:")
        assert "solver.timestep" in response[0].text

    @pytest.mark.asyncio
    async def test_run_requires_path(self):
        """config_path is required."""
        response = await server.call_tool("mcflow_run_experiment", {})
        assert response[0].text == "Error: config_path is required"

    @pytest.mark.asyncio
    async def test_verify_empty_directory(self, sandbox, monkeypatch):
        """An empty directory verifies with no criteria."""
        monkeypatch.setenv("MCFLOW_OUTPUT_ROOT", str(sandbox / "runs"))
        (sandbox / "configs").mkdir()
        result = payload(
            await server.call_tool("mcflow_verify_suite", {"directory": str(sandbox / "configs")})
        )
        assert result["exit_code"] == 0
        assert result["criteria_checked"] == 0
