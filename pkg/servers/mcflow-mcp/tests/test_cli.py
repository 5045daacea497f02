"""Tests for the mcflow command line."""

import pytest

from mcflow_mcp.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_RUNTIME, main

FLAT_RUN = """\
criteria: [6]
solver:
  final_time: 0.1
  dt: 0.05
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "flat.yaml"
    path.write_text(FLAT_RUN)
    return path


class TestRun:
    """Tests for mcflow run."""

    def test_passing_run(self, config, tmp_path, capsys):
        """A passing run prints its lines and exits 0."""
        code = main(["run", str(config), "--output", str(tmp_path / "out")])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert out.startswith("PASS 6 comparison-bound")
        assert f"Artifacts in {tmp_path / 'out'}" in out

    def test_override(self, config, tmp_path):
        """--set overrides dotted keys before validation."""
        code = main(["run", str(config), "--output", str(tmp_path / "out"), "--set", "criteria=[6, 9]"])
        assert code == EXIT_FAILED
        assert "FAIL 9 not-exercised" in (tmp_path / "out" / "report.txt").read_text()

    def test_config_error(self, config, capsys):
        """Invalid values exit with 2 and a CONFIG ERROR line."""
        code = main(["run", str(config), "--set", "solver.dt=-0.1"])
        assert code == EXIT_CONFIG
        assert "CONFIG ERROR solver.dt" in capsys.readouterr().err

    def test_malformed_override(self, config):
        """Overrides without '=' are configuration errors."""
        assert main(["run", str(config), "--set", "solver.dt"]) == EXIT_CONFIG

    def test_runtime_error(self, config, tmp_path):
        """Recorded diagnostic errors exit with 3."""
        code = main(
            [
                "run",
                str(config),
                "--output",
                str(tmp_path / "out"),
                "--set",
                "diagnostics=[{tag: transport_norm, params: {tau: 5.0}}]",
            ]
        )
        assert code == EXIT_RUNTIME


class TestVerifyAndSweep:
    """Tests for mcflow verify and mcflow sweep."""

    def test_verify(self, config, tmp_path, capsys):
        """verify prints prefixed lines and the criteria count."""
        code = main(["verify", str(config.parent), "--output", str(tmp_path / "runs")])
        out = capsys.readouterr().out.splitlines()
        assert code == EXIT_OK
        assert out[0].startswith("flat: PASS 6")
        assert out[-1] == "1 criteria checked"

    def test_verify_missing_directory(self, tmp_path):
        """A missing directory is a configuration error."""
        assert main(["verify", str(tmp_path / "none")]) == EXIT_CONFIG

    def test_sweep(self, config, tmp_path, capsys):
        """Each swept value is one experiment."""
        code = main(
            ["sweep", str(config), "--param", "solver.dt=0.05,0.025", "--output", str(tmp_path / "runs")]
        )
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert out.strip().endswith("2 criteria checked")

    def test_verb_required(self):
        """argparse rejects a missing verb."""
        with pytest.raises(SystemExit):
            main([])
