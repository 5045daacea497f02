#!/usr/bin/env python3
"""
Generate the mcpServers entry for the mcflow tool server.

Writes generated/mcp-servers.json and, with --merge, updates the
mcpServers section of an existing client configuration file.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import yaml

MCP_HUB_DIR = Path(__file__).parent.parent
SERVER_DIR = MCP_HUB_DIR / "servers" / "mcflow-mcp"
ACCEPTANCE_DIR = MCP_HUB_DIR / "configs" / "acceptance"
OUTPUT_FILE = MCP_HUB_DIR / "generated" / "mcp-servers.json"


def count_configs() -> int:
    """Count acceptance configs that parse as YAML mappings."""
    count = 0
    for path in sorted(ACCEPTANCE_DIR.glob("*.yaml")):
        with open(path) as f:
            if isinstance(yaml.safe_load(f), dict):
                count += 1
            else:
                print(f"  Warning: {path.name} is not a mapping")
    return count


def build_server_config(python: str, output_root: str, log_level: str) -> dict:
    """Build the stdio server entry."""
    roots = ",".join([str(MCP_HUB_DIR / "configs"), output_root])
    return {
        "type": "stdio",
        "command": python,
        "args": ["-m", "mcflow_mcp.server"],
        "cwd": str(SERVER_DIR),
        "env": {
            "MCFLOW_ALLOWED_ROOTS": roots,
            "MCFLOW_OUTPUT_ROOT": output_root,
            "MCFLOW_LOG_LEVEL": log_level,
        },
    }


def merge_into(path: Path, mcp_config: dict) -> None:
    """Replace the mcflow-mcp entry of an existing client configuration."""
    if path.exists():
        with open(path) as f:
            client_config = json.load(f)
    else:
        client_config = {}

    client_config.setdefault("mcpServers", {}).update(mcp_config["mcpServers"])

    with open(path, "w") as f:
        json.dump(client_config, f, indent=2)

    print(f"\n✓ Updated {path}")


def main():
    parser = argparse.ArgumentParser(description="Generate the mcflow-mcp server entry")
    parser.add_argument("--python", default=sys.executable, help="Interpreter running the server")
    parser.add_argument(
        "--output-root",
        default=os.environ.get("MCFLOW_OUTPUT_ROOT", str(MCP_HUB_DIR / "runs")),
        help="Root directory for run outputs",
    )
    parser.add_argument("--log-level", default=os.environ.get("MCFLOW_LOG_LEVEL", "INFO"))
    parser.add_argument("--merge", type=Path, help="Client configuration file to update")
    args = parser.parse_args()

    print("Generating mcflow MCP configuration...\n")

    mcp_config = {
        "mcpServers": {"mcflow-mcp": build_server_config(args.python, args.output_root, args.log_level)}
    }

    OUTPUT_FILE.parent.mkdir(parents=True, exist_ok=True)
    with open(OUTPUT_FILE, "w") as f:
        json.dump(mcp_config, f, indent=2)
    print(f"✓ Saved to {OUTPUT_FILE}")

    if args.merge:
        merge_into(args.merge, mcp_config)

    print(f"\nSummary: {count_configs()} acceptance configs under {ACCEPTANCE_DIR}")


if __name__ == "__main__":
    try:
        main()
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)
