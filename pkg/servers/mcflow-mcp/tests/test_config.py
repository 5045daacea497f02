"""Tests for run configuration loading and validation."""

from unittest.mock import patch

import pytest

from mcflow_mcp.config import (
    apply_override,
    default_jobs,
    load_config,
    log_level,
    output_root,
    parse_config,
    parse_sweep,
)
from mcflow_mcp.domain import DomainKind
from mcflow_mcp.errors import ConfigInvalid
from mcflow_mcp.solver import Scheme


class TestParseConfig:
    """Tests for parse_config."""

    def test_defaults(self):
        """A bare name gives an interval trajectory run."""
        cfg = parse_config({"name": "bare"})
        assert cfg.study.kind == "trajectory"
        assert cfg.domain.kind == "interval"
        assert cfg.solver.scheme is Scheme.SEMI_IMPLICIT
        assert cfg.exponents().regime == "subcritical"

    def test_rejects_unknown_keys(self):
        """Unknown keys are reported by their dotted path."""
        with pytest.raises(ConfigInvalid) as exc:
            parse_config({"name": "x", "solver": {"timestep": 0.1}})
        assert exc.value.key == "solver.timestep"

    def test_rejects_small_exponent(self):
        """Lebesgue exponents below 1 are invalid."""
        with pytest.raises(ConfigInvalid) as exc:
            parse_config({"name": "x", "transport": {"p": 0.5}})
        assert exc.value.key.startswith("transport.p")

    def test_rejects_non_mapping(self):
        """The document must be a mapping."""
        with pytest.raises(ConfigInvalid):
            parse_config(["name", "x"])

    def test_subcritical_tag_needs_subcritical_exponents(self):
        """A subcritical run with 1 - n/p - 2/q <= 0 is a configuration error."""
        data = {
            "name": "x",
            "regime": "subcritical",
            "domain": {"kind": "disk", "resolution": 32},
            "transport": {"p": 2, "q": 4},
        }
        with pytest.raises(ConfigInvalid) as exc:
            parse_config(data)
        assert exc.value.key == "regime"
        data["transport"] = {"p": "inf", "q": "inf"}
        assert parse_config(data).regime == "subcritical"

    def test_supercritical_blowup_study(self):
        """Blow-up studies check their own exponents against the tag."""
        cfg = parse_config(
            {
                "name": "x",
                "regime": "supercritical",
                "domain": {"kind": "disk"},
                "study": {"kind": "blowup", "p": 2, "q": 4},
            }
        )
        assert cfg.study.ladder == [64, 128]
        with pytest.raises(ConfigInvalid):
            parse_config(
                {"name": "x", "regime": "supercritical", "study": {"kind": "blowup", "p": "inf", "q": "inf"}}
            )

    def test_unknown_study_kind(self):
        """The study discriminator must name a known study."""
        with pytest.raises(ConfigInvalid):
            parse_config({"name": "x", "study": {"kind": "montecarlo"}})

    def test_builders(self):
        """Sections build domains and solver configs."""
        cfg = parse_config(
            {"name": "x", "domain": {"kind": "disk", "radius": 2.0, "resolution": 24}, "solver": {"dt": 0.01}}
        )
        domain = cfg.domain.build()
        assert domain.kind is DomainKind.DISK
        assert domain.radius == 2.0
        assert cfg.domain.build(resolution=32).resolution == 32
        solver = cfg.solver.build(final_time=0.5)
        assert solver.dt == 0.01
        assert solver.final_time == 0.5


class TestLoading:
    """Tests for YAML files and overrides."""

    def test_name_defaults_to_file_stem(self, tmp_path):
        """A config without a name is named after its file."""
        path = tmp_path / "flat_run.yaml"
        path.write_text("solver:\n  final_time: 0.2\n")
        cfg = load_config(path)
        assert cfg.name == "flat_run"
        assert cfg.solver.final_time == 0.2

    def test_malformed_yaml(self, tmp_path):
        """YAML syntax errors are configuration errors."""
        path = tmp_path / "bad.yaml"
        path.write_text("solver: [unclosed\n")
        with pytest.raises(ConfigInvalid, match="Malformed"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        """Unreadable files are configuration errors."""
        with pytest.raises(ConfigInvalid, match="Cannot read"):
            load_config(tmp_path / "missing.yaml")

    def test_apply_override(self):
        """Overrides create sections and leave the input untouched."""
        data = {"name": "x", "solver": {"dt": 0.1}}
        out = apply_override(data, "solver.dt", 0.05)
        out = apply_override(out, "domain.kind", "disk")
        assert out == {"name": "x", "solver": {"dt": 0.05}, "domain": {"kind": "disk"}}
        assert data["solver"]["dt"] == 0.1

    def test_override_through_scalar(self):
        """A dotted key cannot descend into a scalar."""
        with pytest.raises(ConfigInvalid):
            apply_override({"name": "x"}, "name.first", 1)

    def test_parse_sweep(self):
        """Sweep values are parsed as YAML scalars."""
        assert parse_sweep("solver.dt=0.01, 0.005") == ("solver.dt", [0.01, 0.005])
        assert parse_sweep("solver.scheme=explicit,picard") == ("solver.scheme", ["explicit", "picard"])
        for bad in ("solver.dt", "=1,2", "solver.dt="):
            with pytest.raises(ConfigInvalid):
                parse_sweep(bad)


class TestEnvironment:
    """Tests for environment settings."""

    def test_defaults(self):
        """Without variables the defaults apply."""
        with patch.dict("os.environ", {}, clear=True):
            assert str(output_root()) == "runs"
            assert log_level() == "INFO"
            assert default_jobs() == 1

    def test_overrides(self):
        """Variables override the defaults."""
        env = {"MCFLOW_OUTPUT_ROOT": "/tmp/out", "MCFLOW_LOG_LEVEL": "debug", "MCFLOW_JOBS": "4"}
        with patch.dict("os.environ", env):
            assert str(output_root()) == "/tmp/out"
            assert log_level() == "DEBUG"
            assert default_jobs() == 4

    def test_bad_jobs(self):
        """A non-integer job count falls back to one worker."""
        with patch.dict("os.environ", {"MCFLOW_JOBS": "many"}):
            assert default_jobs() == 1

    def test_output_dir(self):
        """Runs write under the output root unless a directory is given."""
        with patch.dict("os.environ", {"MCFLOW_OUTPUT_ROOT": "/tmp/out"}):
            assert str(parse_config({"name": "a"}).output_dir()) == "/tmp/out/a"
            cfg = parse_config({"name": "a", "output": {"directory": "/tmp/elsewhere"}})
            assert str(cfg.output_dir()) == "/tmp/elsewhere"
