"""Run configuration.

YAML files validated by pydantic models. Every section rejects unknown
keys, and every numeric field states its unit in its description. Time
and length are in the nondimensional units of the equation.

Environment:
    MCFLOW_OUTPUT_ROOT: Root directory for run outputs (default "runs").
    MCFLOW_LOG_LEVEL: Logging level (default "INFO").
    MCFLOW_JOBS: Default worker count of verify (default 1).
"""

import copy
import logging
import os
from pathlib import Path
from typing import Annotated, Any, Literal

import yaml
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError

from .diagnostics import NormExponents, parse_exponent
from .domain import Domain
from .errors import ConfigInvalid
from .solver import Scheme, SolverConfig

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_ROOT = "runs"


def output_root() -> Path:
    return Path(os.environ.get("MCFLOW_OUTPUT_ROOT", DEFAULT_OUTPUT_ROOT))


def log_level() -> str:
    return os.environ.get("MCFLOW_LOG_LEVEL", "INFO").upper()


def default_jobs() -> int:
    raw = os.environ.get("MCFLOW_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring MCFLOW_JOBS={raw!r}; using 1 worker")
        return 1


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _check_exponent(value: Any) -> Any:
    if parse_exponent(value) < 1:
        raise ValueError(f"Lebesgue exponent must be at least 1, got {value}")
    return value


Exponent = Annotated[float | int | str, AfterValidator(_check_exponent)]


# =============================================================================
# Sections
# =============================================================================


class DomainSection(Section):
    kind: Literal["interval", "disk"] = "interval"
    resolution: int = Field(64, ge=2, description="Grid cells per axis (count)")
    a: float = Field(0.0, description="Left endpoint of the interval (length)")
    b: float = Field(1.0, description="Right endpoint of the interval (length)")
    radius: float = Field(1.0, gt=0, description="Disk radius (length)")
    reflection_radius: float | None = Field(
        None, gt=0, description="Surrogate boundary curvature radius R of the interval (length)"
    )

    def build(self, resolution: int | None = None) -> Domain:
        n = self.resolution if resolution is None else resolution
        if self.kind == "interval":
            return Domain.interval(self.a, self.b, n, self.reflection_radius)
        return Domain.disk(self.radius, n)

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2


class InitialSection(Section):
    name: str = Field("zero", description="Catalogue entry of the initial datum")
    params: dict[str, Any] = Field(default_factory=dict, description="Entry parameters")


class TransportSection(Section):
    name: str = Field("zero", description="Catalogue entry of the transport field")
    params: dict[str, Any] = Field(default_factory=dict, description="Entry parameters")
    truncate_at: float | None = Field(
        None, ge=0, description="Switch the field off after this time (time)"
    )
    p: Exponent = Field("inf", description="Spatial Lebesgue exponent of the norm (dimensionless)")
    q: Exponent = Field("inf", description="Temporal Lebesgue exponent of the norm (dimensionless)")

    def exponents(self, n: int) -> NormExponents:
        return NormExponents(n, self.p, self.q)


class SolverSection(Section):
    scheme: Scheme = Scheme.SEMI_IMPLICIT
    final_time: float = Field(0.1, ge=0, description="Final time T (time)")
    dt: float | None = Field(None, gt=0, description="Time step (time); default by scheme")
    picard_tol: float = Field(1e-10, gt=0, description="Picard increment tolerance (height)")
    picard_max_iter: int = Field(50, ge=1, description="Picard iteration cap (count)")
    cfl_safety: float = Field(1.0, gt=0, description="Explicit-step safety factor (dimensionless)")
    blowup_ceiling: float = Field(1e3, gt=0, description="sup|du| ceiling (slope, dimensionless)")
    output_interval: int = Field(1, ge=1, description="Steps between snapshots (count)")
    strict_blowup: bool = Field(False, description="Raise instead of recording BlowupDetected")

    def build(self, **overrides) -> SolverConfig:
        fields = self.model_dump() | overrides
        return SolverConfig(**fields)


class DiagnosticRequest(Section):
    tag: Literal[
        "sup_v",
        "comparison",
        "transport_norm",
        "inner_norm",
        "monotonicity",
        "weighted",
        "evolution_residual",
        "boundary_sign",
        "boundary_flux",
        "holder",
        "area",
        "interaction",
        "sup_gradient",
    ]
    params: dict[str, Any] = Field(default_factory=dict, description="Diagnostic parameters")


class OutputSection(Section):
    directory: str | None = Field(None, description="Output directory; default <root>/<name>")
    snapshots: bool = Field(True, description="Write snapshot CSVs")


# =============================================================================
# Studies
# =============================================================================


class TrajectoryStudy(Section):
    kind: Literal["trajectory"] = "trajectory"


class ConvergenceStudy(Section):
    kind: Literal["convergence"] = "convergence"
    alpha: float = Field(1.0, ge=0, description="Self-similar exponent (dimensionless)")
    amplitude: float = Field(1.0, description="Profile amplitude (height)")
    fraction: float = Field(0.5, gt=0, lt=1, description="Support radius over inradius")
    resolutions: list[int] = Field(default_factory=lambda: [32, 64, 128], description="Cells per axis")
    steps: list[float] | None = Field(None, description="Time steps (time); default dt_factor h^2")
    dt_factor: float = Field(0.5, gt=0, description="dt / h^2 when steps are omitted")
    mode: Literal["space", "time"] = "space"
    min_order: float = Field(1.8, description="Required fitted order (dimensionless)")


class BlowupStudy(Section):
    kind: Literal["blowup"] = "blowup"
    p: Exponent = Field(2, description="Spatial exponent (dimensionless)")
    q: Exponent = Field(4, description="Temporal exponent (dimensionless)")
    ladder: list[int] = Field(
        default_factory=lambda: [64, 128], min_length=1, description="Cells per axis"
    )
    deltas: list[float] = Field(
        default_factory=lambda: [1e-1, 1e-2, 1e-3], description="Distances to t = 1 (time)"
    )
    amplitude: float = Field(1.0, description="Profile amplitude (height)")
    dt_factor: float = Field(0.25, gt=0, description="dt / (h (1 - t)) per halving segment")
    companion_cut: float = Field(0.5, gt=0, lt=1, description="Truncation time (time)")
    agreement: float = Field(0.01, gt=0, description="Relative solver-exact agreement")
    fraction: float = Field(0.5, gt=0, lt=1, description="Profile support / inradius")
    resolve_cells: float = Field(
        32.0, gt=0, description="Cells across the support radius at the last fitted time"
    )


class KernelChecksStudy(Section):
    kind: Literal["kernel_checks"] = "kernel_checks"
    samples: int = Field(1000, ge=1, description="Random samples per check (count)")
    checks: list[Literal["identity", "reflection", "derivatives", "neumann", "fit"]] = Field(
        default_factory=lambda: ["identity", "reflection", "derivatives", "neumann"]
    )
    fd_step: float = Field(1e-5, gt=0, description="Finite-difference step (length)")


class ScalingStudy(Section):
    kind: Literal["scaling"] = "scaling"
    lam: float = Field(2.0, gt=0, description="Parabolic scale factor (dimensionless)")
    tolerance_factor: float = Field(2.0, gt=0, description="Multiple of the discretisation error")


class EvolutionResidualStudy(Section):
    kind: Literal["evolution_residual"] = "evolution_residual"
    alpha: float = Field(1.0, ge=0, description="Self-similar exponent (dimensionless)")
    amplitude: float = Field(1.0, description="Profile amplitude (height)")
    fraction: float = Field(0.8, gt=0, lt=1, description="Support radius over inradius")
    start: float = Field(0.1, ge=0, lt=1, description="Time of the first exact snapshot (time)")
    resolutions: list[int] = Field(default_factory=lambda: [32, 64, 128], description="Cells per axis")
    dt_factor: float = Field(0.5, gt=0, description="dt / h^2")
    snapshots: int = Field(5, ge=3, description="Exact snapshots per level (count)")
    min_order: float = Field(0.8, description="Required fitted order (dimensionless)")


Study = Annotated[
    TrajectoryStudy
    | ConvergenceStudy
    | BlowupStudy
    | KernelChecksStudy
    | ScalingStudy
    | EvolutionResidualStudy,
    Field(discriminator="kind"),
]


class RunConfig(Section):
    """One experiment."""

    name: str
    criteria: list[int] = Field(default_factory=list, description="Acceptance criteria checked")
    regime: Literal["subcritical", "supercritical", "any"] = "any"
    seed: int = Field(0, description="Sampling seed")
    domain: DomainSection = Field(default_factory=DomainSection)
    initial: InitialSection = Field(default_factory=InitialSection)
    transport: TransportSection = Field(default_factory=TransportSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    diagnostics: list[DiagnosticRequest] = Field(default_factory=list)
    output: OutputSection = Field(default_factory=OutputSection)
    study: Study = Field(default_factory=TrajectoryStudy)

    def output_dir(self) -> Path:
        if self.output.directory is not None:
            return Path(self.output.directory)
        return output_root() / self.name

    def exponents(self) -> NormExponents:
        return self.transport.exponents(self.domain.dim)

    def check_regime(self) -> None:
        """Subcritical runs need a subcritical (p, q); supercritical runs the opposite.

        Raises:
            ConfigInvalid: With key "regime" when the exponents contradict the tag.
        """
        if self.regime == "any":
            return
        if self.study.kind == "blowup":
            exps = NormExponents(self.domain.dim, self.study.p, self.study.q)
        else:
            exps = self.exponents()
        if self.regime == "subcritical" and not exps.gap > 0:
            raise ConfigInvalid(
                f"Run '{self.name}' is tagged subcritical but 1 - n/p - 2/q = {exps.gap} <= 0",
                key="regime",
            )
        if self.regime == "supercritical" and not exps.gap < 0:
            raise ConfigInvalid(
                f"Run '{self.name}' is tagged supercritical but 1 - n/p - 2/q = {exps.gap} >= 0",
                key="regime",
            )


# =============================================================================
# Loading
# =============================================================================


def _dotted(loc: tuple) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(data: Any, source: str = "<config>") -> RunConfig:
    """Validate a mapping as a RunConfig.

    Raises:
        ConfigInvalid: Naming the first offending dotted key.
    """
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{source}: configuration must be a mapping")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = _dotted(first["loc"])
        raise ConfigInvalid(f"{source}: {first['msg']}", key=key) from e
    cfg.check_regime()
    return cfg


def read_config_data(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigInvalid(f"Cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigInvalid(f"Malformed YAML in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: configuration must be a mapping")
    data.setdefault("name", path.stem)
    return data


def load_config(path: str | Path) -> RunConfig:
    return parse_config(read_config_data(path), str(path))


def apply_override(data: dict[str, Any], key: str, value: Any) -> dict[str, Any]:
    """Copy of ``data`` with the dotted ``key`` set to ``value``."""
    out = copy.deepcopy(data)
    node = out
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigInvalid(f"Cannot override '{key}': '{part}' is not a section", key=key)
        node = child
    node[parts[-1]] = value
    return out


def parse_sweep(spec: str) -> tuple[str, list[Any]]:
    """'solver.dt=0.01,0.005' -> ('solver.dt', [0.01, 0.005])."""
    if "=" not in spec:
        raise ConfigInvalid(f"Sweep parameter must look like key=v1,v2: {spec!r}")
    key, raw = spec.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigInvalid(f"Sweep parameter has an empty key: {spec!r}")
    values = [yaml.safe_load(item.strip()) for item in raw.split(",") if item.strip()]
    if not values:
        raise ConfigInvalid(f"Sweep parameter has no values: {spec!r}", key=key)
    return key, values
