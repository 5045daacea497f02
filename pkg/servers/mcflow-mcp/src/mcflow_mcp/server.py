"""
Mean curvature flow MCP Server - run flow experiments as tools.

Exposes the batch experiment driver over MCP stdio: single runs, suite
verification, and the exact exponent arithmetic of the blow-up family.

Usage:
    # Run as standalone server
    python -m mcflow_mcp.server

    # Or via the installed script
    mcflow-mcp
"""

import asyncio
import json
import logging
import sys
from fractions import Fraction
from typing import Any

from mcp.server import Server
from mcp.server.stdio import stdio_server
from mcp.types import TextContent, Tool

from .config import load_config, log_level
from .diagnostics import NormExponents, parse_exponent
from .errors import ConfigInvalid, McflowError
from .experiment import exponents_summary, run_experiment, verify_suite
from .manufactured import asymptotic_norm_exponent, integrability_threshold, scaling_exponent
from .security import PathFilter, RunLimiter

# Configure logging
logging.basicConfig(
    level=getattr(logging, log_level(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)

# Initialize the MCP server
server = Server("mcflow-mcp")

# Lazy-initialized path filter and run limiter
_path_filter: PathFilter | None = None
_run_limiter: RunLimiter | None = None


def get_path_filter() -> PathFilter:
    """Get or create the path allowlist."""
    global _path_filter
    if _path_filter is None:
        _path_filter = PathFilter()
    return _path_filter


def get_run_limiter() -> RunLimiter:
    """Get or create the limiter serialising experiment runs."""
    global _run_limiter
    if _run_limiter is None:
        _run_limiter = RunLimiter()
    return _run_limiter


def format_response(data: Any) -> str:
    """Format response data as readable JSON."""
    return json.dumps(data, indent=2, default=str)


def handle_error(error: Exception) -> list[TextContent]:
    """Handle errors and return appropriate MCP response."""
    if isinstance(error, ConfigInvalid):
        return [TextContent(type="text", text=f"Invalid configuration: {error}")]
    if isinstance(error, McflowError):
        return [TextContent(type="text", text=f"Experiment error: {error}")]
    if isinstance(error, PermissionError):
        return [TextContent(type="text", text=f"Access denied: {error}")]
    logger.error("Unexpected error: %s", error, exc_info=True)
    return [TextContent(type="text", text=f"Unexpected error: {error}")]


# =============================================================================
# Tool Definitions
# =============================================================================


@server.list_tools()
async def list_tools() -> list[Tool]:
    """List available experiment tools."""
    return [
        Tool(
            name="mcflow_run_experiment",
            description="Run one YAML run configuration and return its report and summary",
            inputSchema={
                "type": "object",
                "properties": {
                    "config_path": {
                        "type": "string",
                        "description": "Path of the YAML run configuration",
                    },
                    "output_dir": {
                        "type": "string",
                        "description": "Optional output directory (default <root>/<name>)",
                    },
                },
                "required": ["config_path"],
            },
        ),
        Tool(
            name="mcflow_verify_suite",
            description="Run every configuration in a directory and aggregate PASS/FAIL lines",
            inputSchema={
                "type": "object",
                "properties": {
                    "directory": {
                        "type": "string",
                        "description": "Directory of YAML run configurations",
                    },
                    "jobs": {
                        "type": "integer",
                        "description": "Worker processes (default MCFLOW_JOBS or 1)",
                    },
                },
                "required": ["directory"],
            },
        ),
        Tool(
            name="mcflow_blowup_parameters",
            description="Exact eps0, alpha0, integrability threshold and regime of (n, p, q)",
            inputSchema={
                "type": "object",
                "properties": {
                    "n": {"type": "integer", "description": "Base dimension (1 or 2)"},
                    "p": {"type": ["number", "string"], "description": "Spatial exponent or 'inf'"},
                    "q": {"type": ["number", "string"], "description": "Temporal exponent or 'inf'"},
                },
                "required": ["n", "p", "q"],
            },
        ),
        Tool(
            name="mcflow_scaling_exponent",
            description="Closed-form and asymptotic exponents of the self-similar inner norm",
            inputSchema={
                "type": "object",
                "properties": {
                    "n": {"type": "integer", "description": "Base dimension"},
                    "p": {"type": ["number", "string"], "description": "Spatial exponent or 'inf'"},
                    "alpha": {
                        "type": ["number", "string"],
                        "description": "Self-similar exponent, e.g. '15/32'",
                    },
                },
                "required": ["n", "p", "alpha"],
            },
        ),
    ]


# =============================================================================
# Tool Handlers
# =============================================================================


@server.call_tool()
async def call_tool(name: str, arguments: dict[str, Any]) -> list[TextContent]:
    """Handle tool calls."""
    logger.info(f"Tool call: {name}")

    try:
        if name == "mcflow_run_experiment":
            return await handle_run_experiment(arguments)
        elif name == "mcflow_verify_suite":
            return await handle_verify_suite(arguments)
        elif name == "mcflow_blowup_parameters":
            return await handle_blowup_parameters(arguments)
        elif name == "mcflow_scaling_exponent":
            return await handle_scaling_exponent(arguments)
        else:
            return [TextContent(type="text", text=f"Unknown tool: {name}")]
    except Exception as e:
        return handle_error(e)


async def handle_run_experiment(arguments: dict[str, Any]) -> list[TextContent]:
    """Handle mcflow_run_experiment tool."""
    config_path = arguments.get("config_path")
    output_dir = arguments.get("output_dir")

    if not config_path:
        return [TextContent(type="text", text="Error: config_path is required")]

    paths = get_path_filter()
    cfg = load_config(paths.check(config_path))
    out = paths.check(output_dir) if output_dir else None

    async with get_run_limiter():
        result = await asyncio.to_thread(run_experiment, cfg, out)

    return [TextContent(type="text", text=format_response(result.as_dict()))]


async def handle_verify_suite(arguments: dict[str, Any]) -> list[TextContent]:
    """Handle mcflow_verify_suite tool."""
    directory = arguments.get("directory")
    jobs = arguments.get("jobs")

    if not directory:
        return [TextContent(type="text", text="Error: directory is required")]

    resolved = get_path_filter().check(directory)
    async with get_run_limiter():
        suite = await asyncio.to_thread(verify_suite, resolved, jobs)

    return [TextContent(type="text", text=format_response(suite.as_dict()))]


async def handle_blowup_parameters(arguments: dict[str, Any]) -> list[TextContent]:
    """Handle mcflow_blowup_parameters tool."""
    if any(arguments.get(k) is None for k in ("n", "p", "q")):
        return [TextContent(type="text", text="Error: n, p and q are required")]

    info = exponents_summary(int(arguments["n"]), arguments["p"], arguments["q"])
    if info["regime"] == "supercritical":
        info["integrability_threshold"] = str(
            integrability_threshold(NormExponents(int(arguments["n"]), arguments["p"], arguments["q"]))
        )
    return [TextContent(type="text", text=format_response(info))]


async def handle_scaling_exponent(arguments: dict[str, Any]) -> list[TextContent]:
    """Handle mcflow_scaling_exponent tool."""
    if any(arguments.get(k) is None for k in ("n", "p", "alpha")):
        return [TextContent(type="text", text="Error: n, p and alpha are required")]

    exps = NormExponents(int(arguments["n"]), arguments["p"], 1)
    alpha = parse_exponent(arguments["alpha"])
    if not isinstance(alpha, Fraction):
        return [TextContent(type="text", text="Error: alpha must be finite")]

    return [
        TextContent(
            type="text",
            text=format_response({
                "n": exps.n,
                "p": str(exps.p),
                "alpha": str(alpha),
                "scaling_exponent": str(scaling_exponent(exps, alpha)),
                "asymptotic_exponent": str(asymptotic_norm_exponent(exps, alpha)),
            }),
        )
    ]


# =============================================================================
# Main Entry Point
# =============================================================================


async def run_server() -> None:
    """Run the MCP server."""
    logger.info("Starting mean curvature flow MCP Server...")

    async with stdio_server() as (read_stream, write_stream):
        await server.run(
            read_stream,
            write_stream,
            server.create_initialization_options(),
        )


def main() -> None:
    """Main entry point."""
    asyncio.run(run_server())


if __name__ == "__main__":
    main()
