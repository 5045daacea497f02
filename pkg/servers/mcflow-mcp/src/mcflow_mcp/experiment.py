"""Experiment pipelines behind the CLI and the tool server.

A run configuration selects a study; the study runs the solver and the
requested diagnostics, writes CSV artifacts and emits PASS/FAIL lines
keyed to acceptance-criterion numbers.
"""

import itertools
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .artifacts import (
    CriterionResult,
    write_csv,
    write_json,
    write_kernel_sweep,
    write_quantity,
    write_report,
    write_snapshots,
    write_summary,
)
from .catalog import build_initial, build_transport
from .config import (
    RunConfig,
    apply_override,
    default_jobs,
    load_config,
    output_root,
    parse_config,
    parse_sweep,
    read_config_data,
)
from .diagnostics import (
    MonitoredQuantity,
    NormExponents,
    QuantityTag,
    Weight,
    area_series,
    boundary_flux_series,
    boundary_sign_check,
    evolution_residual,
    fit_order,
    gradient_bound_monitor,
    holder_constant_estimate,
    inner_norm_series,
    interaction_terms,
    monotonicity_quantity,
    sample_pairs,
    transport_norm,
    weighted_quantity,
)
from .domain import Domain, DomainKind, verify_Q_properties
from .errors import ConfigInvalid, McflowError
from .graph import GridFunction
from .kernels import (
    KernelSpec,
    eval_rho_tilde,
    eval_truncated,
    fit_reflection_constant,
    huisken_identity_residual,
    identity_scale,
)
from .manufactured import (
    BlowupParameters,
    SelfSimilarSolution,
    blowup_experiment,
    convergence_study,
    fitted_norm_slope,
    oracle_trajectory,
    scaling_exponent,
    transport_field,
)
from .solver import (
    SolutionTrajectory,
    TransportField,
    comparison_bound_check,
    compare_rescaled,
    rescale_config,
    rescale_problem,
    run,
    sup_gradient,
)

logger = logging.getLogger(__name__)

# Acceptance tolerances
IDENTITY_TOL = 1e-10
REFLECTION_TOL = 1e-12
GRADIENT_FD_TOL = 1e-6
HESSIAN_FD_TOL = 1e-4
NEUMANN_TOL = 1e-10
FLAT_SLOPE_TOL = 0.02


@dataclass
class ExperimentResult:
    """Outcome of one configuration."""

    name: str
    output_dir: Path
    results: list[CriterionResult] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    invalid: bool = False

    @property
    def passed(self) -> bool:
        return not self.errors and all(r.passed for r in self.results)

    @property
    def exit_code(self) -> int:
        if self.invalid:
            return 2
        if self.errors:
            return 3
        return 0 if self.passed else 1

    @property
    def criteria(self) -> set[int]:
        return {r.criterion for r in self.results}

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "output_dir": str(self.output_dir),
            "exit_code": self.exit_code,
            "results": [r.line() for r in self.results],
            "errors": list(self.errors),
            "summary": self.summary,
        }


class _Run:
    """Collects lines, errors and summary values while a study runs."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.result = ExperimentResult(cfg.name, out)

    def check(self, criterion: int, name: str, passed: bool, **details) -> None:
        self.result.results.append(CriterionResult(criterion, name, bool(passed), details))
        logger.info(f"{'PASS' if passed else 'FAIL'} {criterion} {name}")

    def record(self, key: str, value: Any) -> None:
        self.result.summary[key] = value

    def quantity(self, name: str, quantity: MonitoredQuantity) -> None:
        write_quantity(self.out / f"{name}.csv", quantity)


def _options(tag: str, params: dict[str, Any], defaults: dict[str, Any]) -> dict[str, Any]:
    unknown = set(params) - set(defaults)
    if unknown:
        key = f"{tag}.{sorted(unknown)[0]}"
        raise ConfigInvalid("Unknown diagnostic parameter", key=key)
    return defaults | params


# =============================================================================
# Shared pieces
# =============================================================================


def _transport(cfg: RunConfig, domain: Domain) -> TransportField:
    f = build_transport(domain, cfg.transport.name, cfg.transport.params)
    if cfg.transport.truncate_at is not None:
        f = f.truncated(cfg.transport.truncate_at)
    return f


def _base_center(domain: Domain) -> list[float]:
    if domain.kind is DomainKind.INTERVAL:
        return [(domain.a + domain.b) / 2]
    return [0.0, 0.0]


def _kernel_spec(cfg: RunConfig, domain: Domain, options: dict[str, Any]) -> KernelSpec:
    pole = options["pole"] if options["pole"] is not None else _base_center(domain) + [0.0]
    s = options["s"] if options["s"] is not None else cfg.solver.final_time + 0.05
    radius = options["cutoff_radius"] if options["cutoff_radius"] is not None else domain.R
    return KernelSpec(
        np.asarray(pole, dtype=float),
        float(s),
        float(radius),
        float(options["inner_fraction"]),
        float(options["outer_fraction"]),
    )


KERNEL_DEFAULTS = {
    "pole": None,
    "s": None,
    "cutoff_radius": None,
    "inner_fraction": 1 / 16,
    "outer_fraction": 1 / 8,
}


# =============================================================================
# Diagnostics of a trajectory
# =============================================================================


@dataclass
class _Trajectory:
    cfg: RunConfig
    domain: Domain
    u0: GridFunction
    f: TransportField
    traj: SolutionTrajectory


def _diag_sup_v(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    _options("sup_v", params, {})
    report = gradient_bound_monitor(data.traj, data.u0)
    run_.quantity("sup_v", report.as_quantity())
    run_.quantity(
        "running_max_v",
        MonitoredQuantity(QuantityTag.RUNNING_MAX_V, report.times, report.running_max),
    )
    certified = report.certified_time - data.traj.times[0]
    run_.check(
        7,
        "gradient-bound",
        certified > 0,
        bound=report.bound,
        certified_time=report.certified_time,
        first_violation=report.first_violation,
    )


def _diag_transport_norm(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    options = _options("transport_norm", params, {"tau": None})
    tau = data.traj.final.t if options["tau"] is None else float(options["tau"])
    exps = data.cfg.exponents()
    value = transport_norm(data.traj, data.f, exps, tau)
    run_.record("transport_norm", value)
    run_.quantity("transport_inner_norm", inner_norm_series(data.traj, data.f, exps))


def _diag_inner_norm(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    _options("inner_norm", params, {})
    run_.quantity("inner_norm", inner_norm_series(data.traj, data.f, data.cfg.exponents()))


def _diag_monotonicity(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    options = _options(
        "monotonicity",
        params,
        KERNEL_DEFAULTS | {"weight": "v", "refine": True, "tolerance_constant": 1.0},
    )
    spec = _kernel_spec(data.cfg, data.domain, options)
    quantity = monotonicity_quantity(data.traj, spec, Weight(options["weight"]), options["refine"])
    run_.quantity("monotonicity", quantity)
    tolerance = options["tolerance_constant"] * (data.domain.spacing + data.traj.dt)
    start = float(quantity.times[0])
    plateau = spec.inner_fraction * spec.cutoff_radius
    covered = plateau >= 6 * math.sqrt(spec.s - start)
    increase = quantity.max_increase()
    run_.check(
        8,
        "monotonicity",
        covered and increase <= tolerance,
        max_increase=increase,
        tolerance=tolerance,
        plateau_covered=covered,
    )


def _diag_weighted(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    options = _options("weighted", params, KERNEL_DEFAULTS | {"c13": 1.0, "refine": True})
    spec = _kernel_spec(data.cfg, data.domain, options)
    run_.quantity("weighted", weighted_quantity(data.traj, spec, options["c13"], options["refine"]))


def _diag_evolution_residual(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    options = _options("evolution_residual", params, {"interior_only": False})
    residual = evolution_residual(data.traj, data.f, options["interior_only"])
    run_.quantity("evolution_residual", residual.as_quantity())


def _diag_boundary_sign(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    options = _options("boundary_sign", params, {"tolerance_constant": 1.0})
    report = boundary_sign_check(data.traj, options["tolerance_constant"])
    run_.quantity("boundary_sign", report.as_quantity())
    run_.check(
        9,
        "boundary-sign",
        report.passed,
        direct_max=float(np.max(report.direct_max)),
        identity_max=float(np.max(report.identity_max)),
        disagreement=float(np.max(report.disagreement)),
        tolerance=report.tolerance,
    )


def _diag_boundary_flux(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    spec = _kernel_spec(data.cfg, data.domain, _options("boundary_flux", params, KERNEL_DEFAULTS))
    run_.quantity("boundary_flux", boundary_flux_series(data.traj, spec))


def _diag_holder(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    options = _options(
        "holder",
        params,
        {"alpha": 1.0, "count": 2000, "separation": None, "heights": [-1.0, 1.0]},
    )
    rng = np.random.default_rng(data.cfg.seed)
    pairs = sample_pairs(
        rng,
        data.domain,
        int(options["count"]),
        heights=tuple(options["heights"]),
        times=(float(data.traj.times[0]), float(data.traj.times[-1])),
        separation=options["separation"],
    )
    value = holder_constant_estimate(data.f, pairs, float(options["alpha"]))
    run_.record("holder_estimate", value)


def _diag_area(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    _options("area", params, {})
    run_.quantity("area", area_series(data.traj))


def _diag_interaction(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    spec = _kernel_spec(data.cfg, data.domain, _options("interaction", params, KERNEL_DEFAULTS))
    for term, quantity in interaction_terms(data.traj, data.f, spec).items():
        run_.quantity(f"interaction_{term}", quantity)


def _diag_sup_gradient(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    _options("sup_gradient", params, {})
    values = [sup_gradient(u) for u in data.traj]
    run_.quantity(
        "sup_gradient", MonitoredQuantity(QuantityTag.SUP_GRADIENT, data.traj.times, values)
    )


def _diag_comparison(run_: _Run, data: _Trajectory, params: dict[str, Any]) -> None:
    # comparison runs on every trajectory; the request only tunes it
    _options("comparison", params, {"tolerance_constant": 1.0})


DIAGNOSTICS: dict[str, Callable[[_Run, _Trajectory, dict[str, Any]], None]] = {
    "sup_v": _diag_sup_v,
    "comparison": _diag_comparison,
    "transport_norm": _diag_transport_norm,
    "inner_norm": _diag_inner_norm,
    "monotonicity": _diag_monotonicity,
    "weighted": _diag_weighted,
    "evolution_residual": _diag_evolution_residual,
    "boundary_sign": _diag_boundary_sign,
    "boundary_flux": _diag_boundary_flux,
    "holder": _diag_holder,
    "area": _diag_area,
    "interaction": _diag_interaction,
    "sup_gradient": _diag_sup_gradient,
}


def _comparison(run_: _Run, data: _Trajectory) -> None:
    constant = 1.0
    for request in data.cfg.diagnostics:
        if request.tag == "comparison":
            constant = float(request.params.get("tolerance_constant", constant))
    report = comparison_bound_check(data.traj, data.f, data.u0, constant)
    run_.quantity(
        "comparison",
        MonitoredQuantity(QuantityTag.COMPARISON, report.times, report.slack),
    )
    run_.check(
        6,
        "comparison-bound",
        report.passed,
        min_slack=report.min_slack,
        sup_transport=report.sup_transport,
        tolerance=report.tolerance,
    )


# =============================================================================
# Studies
# =============================================================================


def _trajectory_study(run_: _Run) -> None:
    cfg = run_.cfg
    domain = cfg.domain.build()
    u0 = build_initial(domain, cfg.initial.name, cfg.initial.params)
    f = _transport(cfg, domain)
    traj = run(u0, f, cfg.solver.build())
    run_.record("terminal_state", traj.terminal_state.value)
    run_.record("steps", traj.steps)
    run_.record("dt", traj.dt)
    run_.record("final_time", traj.final.t)
    if cfg.output.snapshots:
        write_snapshots(run_.out, traj)
    data = _Trajectory(cfg, domain, u0, f, traj)
    _comparison(run_, data)
    for request in cfg.diagnostics:
        try:
            DIAGNOSTICS[request.tag](run_, data, request.params)
        except ConfigInvalid:
            raise
        except McflowError as e:
            run_.result.errors.append(f"{request.tag}: {e}")
            logger.error(f"Diagnostic {request.tag} failed: {e}")


def _convergence_study(run_: _Run) -> None:
    cfg = run_.cfg
    study = cfg.study
    domain = cfg.domain.build()
    sol = SelfSimilarSolution.centred_in(domain, study.alpha, study.amplitude, study.fraction)
    result = convergence_study(
        sol,
        domain,
        study.resolutions,
        steps=study.steps,
        scheme=cfg.solver.scheme,
        final_time=cfg.solver.final_time,
        dt_factor=study.dt_factor,
        mode=study.mode,
    )
    rows = [(r["resolution"], r["h"], r["dt"], r["error"]) for r in result.rows()]
    write_csv(run_.out / "convergence.csv", ("resolution", "h", "dt", "error"), rows)
    order = result.order
    run_.record(f"{study.mode}_order", order)
    run_.check(
        5,
        f"convergence-{study.mode}",
        order >= study.min_order,
        order=order,
        min_order=study.min_order,
        finest_error=result.errors[-1],
    )


def _blowup_study(run_: _Run) -> None:
    cfg = run_.cfg
    study = cfg.study
    domain = cfg.domain.build()
    params = BlowupParameters.of(domain.dim, study.p, study.q)
    report = blowup_experiment(
        params,
        domain,
        ladder=study.ladder,
        deltas=study.deltas,
        amplitude=study.amplitude,
        scheme=cfg.solver.scheme,
        dt_factor=study.dt_factor,
        agreement=study.agreement,
        companion_cut=study.companion_cut,
        fraction=study.fraction,
        resolve_cells=study.resolve_cells,
    )
    exps = params.exponents
    flat = SelfSimilarSolution.centred_in(domain, 0.5, study.amplitude, study.fraction)
    flat_slope = fitted_norm_slope(flat, exps, np.logspace(-1, -3, 8))
    flat_prediction = float(scaling_exponent(exps, Fraction(1, 2)))

    run_.result.summary.update(report.as_dict())
    write_summary(run_.out / "summary.csv", [report.as_dict()])
    write_csv(
        run_.out / "partial_norms.csv",
        ("delta", "norm"),
        sorted(report.partial_norms.items(), reverse=True),
    )
    run_.check(
        11,
        "blowup-exponents",
        params.eps0 > 0 and params.threshold < params.alpha0 < 0.5,
        eps0=str(params.eps0),
        alpha0=str(params.alpha0),
        threshold=str(params.threshold),
    )
    run_.check(
        11,
        "blowup-norm-slope",
        abs(flat_slope - flat_prediction) <= FLAT_SLOPE_TOL,
        flat_slope=flat_slope,
        flat_prediction=flat_prediction,
        alpha0_slope=report.fitted_norm_slope,
        closed_form=report.closed_form_exponent,
        asymptotic=report.asymptotic_exponent,
    )
    run_.check(
        11,
        "blowup-growth",
        report.growth_source == "solver" and report.growth_matches,
        fitted=report.growth_exponent,
        predicted=report.predicted_growth,
        source=report.growth_source,
        oracle=report.oracle_growth,
    )
    run_.check(11, "blowup-norm-cauchy", report.norm_is_cauchy)
    run_.check(
        11,
        "blowup-detected",
        report.classification == "BlowupDetected"
        and (report.growth_source == "solver" or report.solver_terminal_state == "BlowupDetected"),
        status=report.classification,
        solver_state=report.solver_terminal_state,
        source=report.growth_source,
    )
    run_.check(11, "blowup-companion-bound", report.companion_certified)


def _identity_check(run_: _Run, rng: np.random.Generator, samples: int) -> list[dict[str, Any]]:
    worst = 0.0
    rows = []
    for n in (1, 2):
        pole = rng.normal(size=n + 1)
        spec = KernelSpec(pole, 1.0, 1.0)
        t = rng.uniform(0.0, 0.9, size=samples)
        worst_n = 0.0
        for k in range(samples):
            tau = spec.s - t[k]
            X = pole + 2 * math.sqrt(tau) * rng.normal(size=n + 1)
            w = rng.normal(size=n + 1)
            w /= np.linalg.norm(w)
            residual = float(huisken_identity_residual(spec, X, t[k], w))
            scale = float(identity_scale(spec, X, t[k]))
            relative = abs(residual) / scale if scale > 0 else 0.0
            worst_n = max(worst_n, relative)
            if k < 20:
                rows.append(
                    {
                        "x": X[0],
                        "y": X[1] if n == 2 else None,
                        "z": X[-1],
                        "t": t[k],
                        "s": spec.s,
                        "value": relative,
                        "quantity": f"identity_residual_n{n}",
                    }
                )
        worst = max(worst, worst_n)
    run_.check(1, "kernel-identity", worst < IDENTITY_TOL, max_relative=worst, samples=2 * samples)
    return rows


def _disk_for_checks(cfg: RunConfig) -> Domain:
    radius = cfg.domain.radius if cfg.domain.kind == "disk" else 1.0
    return Domain.disk(radius, max(cfg.domain.resolution, 16))


def _reflection_check(run_: _Run, rng: np.random.Generator, disk: Domain, samples: int, fd: float):
    report = verify_Q_properties(disk, disk.sample_tube(rng, samples), fd_step=fd)
    run_.check(2, "reflection-properties", report.passed(REFLECTION_TOL), **report.as_dict())


def _derivative_check(run_: _Run, rng: np.random.Generator, disk: Domain, samples: int, fd: float):
    R = disk.R
    points = disk.sample_tube(rng, samples, depth=R / 2 - 4 * fd)
    points = points[disk.dist_to_boundary(points) > 4 * fd]
    base = disk.sample_tube(rng, 1, depth=R / 8)[0]
    spec = KernelSpec(np.append(base, 0.0), 1.0, R)
    t = 0.9
    X = np.column_stack([points, rng.normal(scale=0.2, size=len(points))])
    analytic = eval_rho_tilde(spec, disk, X, t)
    n1 = X.shape[1]
    fd_grad = np.zeros_like(analytic.grad)
    fd_hess = np.zeros_like(analytic.hess)
    for j in range(n1):
        step = np.zeros(n1)
        step[j] = fd
        forward = eval_rho_tilde(spec, disk, X + step, t)
        backward = eval_rho_tilde(spec, disk, X - step, t)
        fd_grad[..., j] = (forward.value - backward.value) / (2 * fd)
        fd_hess[..., :, j] = (forward.grad - backward.grad) / (2 * fd)
    dt_step = fd
    fd_dt = (
        eval_rho_tilde(spec, disk, X, t + dt_step).value
        - eval_rho_tilde(spec, disk, X, t - dt_step).value
    ) / (2 * dt_step)

    def relative(approx, exact):
        scale = float(np.max(np.abs(exact)))
        return float(np.max(np.abs(approx - exact))) / scale if scale > 0 else 0.0

    grad_err = relative(fd_grad, analytic.grad)
    hess_err = relative(fd_hess, analytic.hess)
    dt_err = relative(fd_dt, analytic.dt)
    run_.check(
        3,
        "reflected-derivatives",
        grad_err <= GRADIENT_FD_TOL and dt_err <= GRADIENT_FD_TOL and hess_err <= HESSIAN_FD_TOL,
        gradient=grad_err,
        hessian=hess_err,
        time=dt_err,
        samples=len(points),
    )


def _neumann_check(run_: _Run, rng: np.random.Generator, disk: Domain, samples: int) -> None:
    R = disk.R
    r = disk.radius
    worst = 0.0
    for _ in range(samples):
        base = disk.sample_tube(rng, 1, depth=R / 32)[0]
        tau = rng.uniform(1e-3, 1e-2) * R * R
        spec = KernelSpec(np.append(base, rng.normal(scale=0.1)), 1.0, R)
        angle = math.atan2(base[1], base[0]) + rng.uniform(-1, 1) * (R / 16) / r
        normal = np.array([math.cos(angle), math.sin(angle)])
        X = np.append(r * normal, spec.pole[-1] + math.sqrt(tau) * rng.normal())
        total = eval_truncated(spec, disk, X, spec.s - tau).total
        scale = max(float(np.linalg.norm(total.grad)), float(total.value) / math.sqrt(tau))
        flux = abs(float(np.dot(total.grad[:2], normal)))
        if scale > 0:
            worst = max(worst, flux / scale)
    run_.check(4, "kernel-neumann", worst <= NEUMANN_TOL, max_relative=worst, samples=samples)


def _fit_check(run_: _Run, rng: np.random.Generator, disk: Domain, samples: int) -> None:
    base = disk.sample_tube(rng, 1, depth=disk.R / 8)[0]
    spec = KernelSpec(np.append(base, 0.0), 1.0, disk.R)
    points = np.column_stack(
        [disk.sample_tube(rng, samples), rng.normal(scale=0.1, size=samples)]
    )
    fit = fit_reflection_constant(spec, disk, points, taus=(1e-2, 1e-1, 0.5))
    run_.record("reflection_constant", fit.c8)


def _kernel_checks_study(run_: _Run) -> None:
    cfg = run_.cfg
    study = cfg.study
    rng = np.random.default_rng(cfg.seed)
    disk = _disk_for_checks(cfg)
    rows: list[dict[str, Any]] = []
    if "identity" in study.checks:
        rows.extend(_identity_check(run_, rng, study.samples))
    if "reflection" in study.checks:
        _reflection_check(run_, rng, disk, study.samples, study.fd_step)
    if "derivatives" in study.checks:
        _derivative_check(run_, rng, disk, study.samples, study.fd_step)
    if "neumann" in study.checks:
        _neumann_check(run_, rng, disk, min(study.samples, 100))
    if "fit" in study.checks:
        _fit_check(run_, rng, disk, study.samples)
    write_kernel_sweep(run_.out / "kernel_sweep.csv", rows)


def _scaling_study(run_: _Run) -> None:
    cfg = run_.cfg
    study = cfg.study
    domain = cfg.domain.build()
    u0 = build_initial(domain, cfg.initial.name, cfg.initial.params)
    f = _transport(cfg, domain)
    scfg = cfg.solver.build()
    traj = run(u0, f, scfg)

    scaled_domain, w0, f_scaled = rescale_problem(domain, u0, f, study.lam)
    scaled = run(w0, f_scaled, rescale_config(scfg, domain.grid, study.lam))
    defect = float(np.max(compare_rescaled(traj, scaled, study.lam)))

    fine_domain = replace(domain, resolution=2 * domain.resolution)
    fine_u0 = build_initial(fine_domain, cfg.initial.name, cfg.initial.params)
    fine_cfg = replace(
        scfg,
        dt=scfg.time_step(domain.grid) / 4,
        output_interval=4 * scfg.output_interval,
    )
    fine = run(fine_u0, f, fine_cfg)
    if len(fine) == len(traj):
        coarse_values = np.array([sup_gradient(u) for u in traj])
        fine_values = np.array([sup_gradient(u) for u in fine])
    else:
        coarse_values = np.array([sup_gradient(traj.final)])
        fine_values = np.array([sup_gradient(fine.final)])
    discretisation = float(np.max(np.abs(coarse_values - fine_values)))
    allowed = study.tolerance_factor * max(discretisation, 1e-12)
    run_.record("scaling_defect", defect)
    run_.record("discretisation_error", discretisation)
    run_.check(
        12,
        "scaling-covariance",
        defect <= allowed,
        defect=defect,
        discretisation=discretisation,
        lam=study.lam,
    )


def _evolution_residual_study(run_: _Run) -> None:
    cfg = run_.cfg
    study = cfg.study
    domain = cfg.domain.build()
    rows = []
    for n in study.resolutions:
        level = replace(domain, resolution=int(n))
        sol = SelfSimilarSolution.centred_in(level, study.alpha, study.amplitude, study.fraction)
        h = level.spacing
        dt = study.dt_factor * h * h
        times = [study.start + k * dt for k in range(study.snapshots)]
        traj = oracle_trajectory(sol, level, times)
        residual = evolution_residual(traj, transport_field(sol))
        rows.append((int(n), h, dt, float(np.max(residual.sup))))
    write_csv(run_.out / "evolution_residual.csv", ("resolution", "h", "dt", "sup_residual"), rows)
    steps = [h + dt for _, h, dt, _ in rows]
    order = fit_order(steps, [r[3] for r in rows])
    run_.record("evolution_residual_order", order)
    run_.check(
        10,
        "evolution-residual",
        order >= study.min_order,
        order=order,
        finest_residual=rows[-1][3],
    )


STUDIES: dict[str, Callable[[_Run], None]] = {
    "trajectory": _trajectory_study,
    "convergence": _convergence_study,
    "blowup": _blowup_study,
    "kernel_checks": _kernel_checks_study,
    "scaling": _scaling_study,
    "evolution_residual": _evolution_residual_study,
}


# =============================================================================
# Entry points
# =============================================================================


def run_experiment(cfg: RunConfig, output_dir: str | Path | None = None) -> ExperimentResult:
    """Run one configuration and write its artifacts.

    Solver and diagnostic errors are recorded in the report (exit code 3);
    ConfigInvalid propagates.
    """
    out = Path(output_dir) if output_dir is not None else cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    run_ = _Run(cfg, out)
    logger.info(f"Experiment '{cfg.name}' ({cfg.study.kind}) -> {out}")
    try:
        STUDIES[cfg.study.kind](run_)
    except ConfigInvalid:
        raise
    except McflowError as e:
        run_.result.errors.append(f"{cfg.study.kind}: {e}")
        logger.error(f"Experiment '{cfg.name}' failed: {e}")

    checked = run_.result.criteria
    for criterion in cfg.criteria:
        if criterion not in checked and not run_.result.errors:
            run_.check(criterion, "not-exercised", False)
    write_report(out / "report.txt", run_.result.results, run_.result.errors)
    write_json(out / "summary.json", run_.result.summary)
    logger.info(f"Experiment '{cfg.name}' finished with exit code {run_.result.exit_code}")
    return run_.result


def run_config_file(path: str | Path, output_dir: str | Path | None = None) -> ExperimentResult:
    return run_experiment(load_config(path), output_dir)


@dataclass
class SuiteResult:
    """Aggregate of a directory of configurations."""

    experiments: list[ExperimentResult] = field(default_factory=list)
    config_errors: list[str] = field(default_factory=list)

    @property
    def criteria_checked(self) -> int:
        return sum(len(e.results) for e in self.experiments)

    @property
    def exit_code(self) -> int:
        if self.config_errors or any(e.invalid for e in self.experiments):
            return 2
        if any(e.errors for e in self.experiments):
            return 3
        return 0 if all(e.passed for e in self.experiments) else 1

    def lines(self) -> list[str]:
        out = []
        for experiment in self.experiments:
            out.extend(f"{experiment.name}: {r.line()}" for r in experiment.results)
            out.extend(f"{experiment.name}: ERROR {message}" for message in experiment.errors)
        out.extend(f"CONFIG {message}" for message in self.config_errors)
        return out

    def as_dict(self) -> dict[str, Any]:
        return {
            "exit_code": self.exit_code,
            "criteria_checked": self.criteria_checked,
            "experiments": [e.as_dict() for e in self.experiments],
            "config_errors": list(self.config_errors),
        }


def _run_isolated(cfg: RunConfig, output_dir: Path | None) -> ExperimentResult:
    try:
        return run_experiment(cfg, output_dir)
    except ConfigInvalid as e:
        result = ExperimentResult(cfg.name, output_dir or cfg.output_dir(), invalid=True)
        result.errors.append(str(e))
        return result


def _run_all(
    configs: Sequence[tuple[RunConfig, Path | None]], jobs: int
) -> list[ExperimentResult]:
    if jobs <= 1 or len(configs) <= 1:
        return [_run_isolated(cfg, out) for cfg, out in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_isolated, cfg, out) for cfg, out in configs]
        return [future.result() for future in futures]


def _write_suite_report(suite: SuiteResult, root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    (root / "suite_report.txt").write_text("\n".join(suite.lines()) + "\n")


def verify_suite(
    directory: str | Path, jobs: int | None = None, output_dir: str | Path | None = None
) -> SuiteResult:
    """Run every *.yaml configuration in a directory and aggregate the reports.

    Configurations are validated up front; invalid ones are reported and
    skipped. Experiments may run concurrently, aggregation is in file order.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigInvalid(f"Not a directory: {directory}")
    jobs = default_jobs() if jobs is None else max(1, jobs)
    suite = SuiteResult()
    configs: list[tuple[RunConfig, Path | None]] = []
    for path in sorted(directory.glob("*.yaml")) + sorted(directory.glob("*.yml")):
        try:
            cfg = load_config(path)
        except ConfigInvalid as e:
            suite.config_errors.append(f"{path.name}: {e}")
            logger.error(f"Invalid configuration {path}: {e}")
            continue
        out = Path(output_dir) / cfg.name if output_dir is not None else None
        configs.append((cfg, out))

    suite.experiments = _run_all(configs, jobs)
    if suite.criteria_checked == 0:
        logger.warning("0 criteria checked")
    root = Path(output_dir) if output_dir is not None else output_root()
    _write_suite_report(suite, root)
    return suite


def sweep(
    path: str | Path,
    params: Sequence[str],
    jobs: int | None = None,
    output_dir: str | Path | None = None,
) -> SuiteResult:
    """Run a configuration over the cartesian product of dotted-key overrides."""
    base = read_config_data(path)
    axes = [parse_sweep(p) for p in params]
    suite = SuiteResult()
    configs: list[tuple[RunConfig, Path | None]] = []
    for combination in itertools.product(*[values for _, values in axes]):
        data = base
        labels = []
        for (key, _), value in zip(axes, combination):
            data = apply_override(data, key, value)
            labels.append(f"{key}={value}")
        name = "__".join([str(base["name"])] + labels) if labels else str(base["name"])
        data = apply_override(data, "name", name)
        try:
            cfg = parse_config(data, f"{path} [{', '.join(labels)}]")
        except ConfigInvalid as e:
            suite.config_errors.append(str(e))
            continue
        out = Path(output_dir) / name if output_dir is not None else None
        configs.append((cfg, out))
    suite.experiments = _run_all(configs, default_jobs() if jobs is None else max(1, jobs))
    root = Path(output_dir) if output_dir is not None else output_root()
    _write_suite_report(suite, root)
    return suite


def exponents_summary(n: int, p, q) -> dict[str, Any]:
    """Regime, eps0, alpha0 and threshold of (n, p, q) in exact arithmetic."""
    exps = NormExponents(n, p, q)
    info: dict[str, Any] = exps.describe() | {"regime": exps.regime}
    if exps.regime == "supercritical":
        info |= BlowupParameters(exps).describe()
    return info
