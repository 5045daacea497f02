"""Self-similar exact solutions and the blow-up family.

For a compactly supported profile phi and alpha >= 0,

    u(x, t) = (1 - t)^alpha phi((x - c) / sqrt(1 - t))

solves the flow exactly with the vertical transport f = (0, ..., 0, g)
obtained by substituting u into the equation. The profile is the smooth
bump phi(xi) = A (1 - |xi|^2 / r^2)^4 on |xi| < r, so u satisfies the
Neumann condition as long as its support stays inside the domain.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .diagnostics import (
    INFINITY,
    NormExponents,
    fit_loglog_slope,
    fit_order,
    gradient_bound_monitor,
    reciprocal,
)
from .domain import Domain, DomainKind
from .errors import McflowError, TimeAtSingularity
from .graph import GridFunction
from .solver import (
    Scheme,
    SolutionTrajectory,
    SolverConfig,
    TerminalState,
    TransportField,
    run,
    sup_gradient,
)

logger = logging.getLogger(__name__)

# Quadrature points per axis across the profile support
PROFILE_QUADRATURE = 200

# Log-spaced time samples for the outer time integral
OUTER_SAMPLES = 400

# Growth fits need this many tracking samples spanning this ratio of 1 - t
MIN_FIT_SAMPLES = 3
FIT_SPAN = 10.0

# Stored snapshots per halving of 1 - t in tracked runs
SAMPLES_PER_SEGMENT = 16


@dataclass(frozen=True)
class BumpProfile:
    """phi(xi) = A (1 - |xi|^2 / r^2)^4 on |xi| < r, zero outside."""

    radius: float = 0.25
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise McflowError(f"Profile radius must be positive, got {self.radius}")

    def evaluate(self, xi: NDArray[np.float64]):
        """phi, d phi and d^2 phi at points xi of shape (..., n)."""
        r2 = self.radius**2
        n = xi.shape[-1]
        s = np.maximum(1.0 - np.sum(xi * xi, axis=-1) / r2, 0.0)
        A = self.amplitude
        phi = A * s**4
        dphi = (-8.0 * A / r2) * (s**3)[..., None] * xi
        outer = xi[..., :, None] * xi[..., None, :]
        d2phi = (-8.0 * A / r2) * (
            (s**3)[..., None, None] * np.eye(n) - (6.0 / r2) * (s**2)[..., None, None] * outer
        )
        return phi, dphi, d2phi


@dataclass(frozen=True)
class SelfSimilarSolution:
    """u = (1 - t)^alpha phi((x - c) / sqrt(1 - t)) with singular time 1."""

    alpha: float
    profile: BumpProfile = field(default_factory=BumpProfile)
    center: NDArray[np.float64] = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        if not float(self.alpha) >= 0:
            raise McflowError(f"Self-similar exponent must be nonnegative, got {self.alpha}")
        object.__setattr__(self, "center", np.array(self.center, dtype=float).reshape(-1))

    @property
    def n(self) -> int:
        return self.center.size

    @classmethod
    def centred_in(
        cls, domain: Domain, alpha: float, amplitude: float = 1.0, fraction: float = 0.5
    ) -> "SelfSimilarSolution":
        """Solution centred in the domain with support radius ``fraction`` of the inradius."""
        if domain.kind is DomainKind.INTERVAL:
            center = np.array([(domain.a + domain.b) / 2])
            inradius = (domain.b - domain.a) / 2
        else:
            center = np.zeros(2)
            inradius = domain.radius
        return cls(float(alpha), BumpProfile(fraction * inradius, amplitude), center)

    def check_support(self, domain: Domain) -> None:
        """Raise unless the support ball stays strictly inside the domain for t in [0, 1)."""
        if self.n != domain.dim:
            raise McflowError(f"Solution lives in dimension {self.n}, domain in {domain.dim}")
        depth = float(domain.dist_to_boundary(self.center))
        if not depth > self.profile.radius:
            raise McflowError(
                f"Profile support of radius {self.profile.radius} is not inside the domain"
            )

    def tag(self) -> str:
        return f"self-similar(alpha={float(self.alpha):g},r={self.profile.radius:g})"


@dataclass(frozen=True)
class ExactFields:
    u: NDArray[np.float64]
    du: NDArray[np.float64]
    d2u: NDArray[np.float64]
    dt_u: NDArray[np.float64]


def _tau(t: float) -> float:
    if t >= 1:
        raise TimeAtSingularity(f"Self-similar solution is singular at t = {t} >= 1")
    return 1.0 - t


def _profile_terms(sol: SelfSimilarSolution, points, t: float):
    x = np.asarray(points, dtype=float)
    if x.shape[-1] != sol.n:
        x = x[..., None]
    tau = _tau(t)
    xi = (x - sol.center) / math.sqrt(tau)
    phi, dphi, d2phi = sol.profile.evaluate(xi)
    return tau, xi, phi, dphi, d2phi


def exact_fields(sol: SelfSimilarSolution, points, t: float) -> ExactFields:
    """u, du, d^2 u and d_t u at points of shape (..., n).

    Raises:
        TimeAtSingularity: If t >= 1.
    """
    a = float(sol.alpha)
    tau, xi, phi, dphi, d2phi = _profile_terms(sol, points, t)
    u = tau**a * phi
    du = tau ** (a - 0.5) * dphi
    d2u = tau ** (a - 1.0) * d2phi
    dt_u = tau ** (a - 1.0) * (-a * phi + 0.5 * np.sum(dphi * xi, axis=-1))
    return ExactFields(u, du, d2u, dt_u)


def exact_transport(sol: SelfSimilarSolution, points, t: float) -> NDArray[np.float64]:
    """Vertical transport (0, ..., 0, g) making the solution exact.

    g = tau^(a-1) (-a phi + 1/2 dphi . xi - Lap phi)
        + tau^(3a-2) d^2phi : (dphi dphi) / (1 + tau^(2a-1) |dphi|^2)
    """
    a = float(sol.alpha)
    tau, xi, phi, dphi, d2phi = _profile_terms(sol, points, t)
    lap = np.trace(d2phi, axis1=-2, axis2=-1)
    quadratic = np.einsum("...i,...ij,...j->...", dphi, d2phi, dphi)
    slope2 = np.sum(dphi * dphi, axis=-1)
    g = tau ** (a - 1.0) * (-a * phi + 0.5 * np.sum(dphi * xi, axis=-1) - lap) + tau ** (
        3 * a - 2
    ) * quadratic / (1.0 + tau ** (2 * a - 1) * slope2)
    out = np.zeros(g.shape + (sol.n + 1,))
    out[..., -1] = g
    return out


def transport_field(sol: SelfSimilarSolution) -> TransportField:
    """The exact transport as a solver field; it ignores the height."""

    def evaluator(points, heights, t):
        return exact_transport(sol, points, t)

    return TransportField(evaluator, tag=sol.tag())


def exact_snapshot(sol: SelfSimilarSolution, domain: Domain, t: float) -> GridFunction:
    pts = domain.grid.points()
    return GridFunction(domain, exact_fields(sol, pts, t).u, t)


def oracle_trajectory(
    sol: SelfSimilarSolution, domain: Domain, times: Sequence[float]
) -> SolutionTrajectory:
    """Exact solution sampled at ``times`` as a trajectory."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise McflowError("Oracle trajectory needs at least one time")
    step = float(np.min(np.diff(times))) if times.size > 1 else 1.0
    cfg = SolverConfig(final_time=float(times[-1]), dt=step)
    traj = SolutionTrajectory(domain=domain, config=cfg, dt=step)
    pts = domain.grid.points()
    for k, t in enumerate(times):
        fields = exact_fields(sol, pts, float(t))
        traj.append(GridFunction(domain, fields.u, float(t)), None if k == 0 else fields.dt_u)
    return traj


# =============================================================================
# Exponents of the blow-up family
# =============================================================================


@dataclass(frozen=True)
class BlowupParameters:
    """eps0 and alpha0 for supercritical (n, p, q), in exact arithmetic.

    n/p + 2/q = 1 + eps0 with eps0 > 0,
    alpha0 = 1/2 - (eps0 / 4) / (3 + 2/p).
    """

    exponents: NormExponents

    def __post_init__(self):
        if not self.eps0 > 0:
            raise McflowError(
                f"(n, p, q) = ({self.exponents.n}, {self.exponents.p}, {self.exponents.q}) "
                "is not supercritical"
            )

    @classmethod
    def of(cls, n: int, p, q) -> "BlowupParameters":
        return cls(NormExponents(n, p, q))

    @property
    def eps0(self) -> Fraction:
        return -self.exponents.gap

    @property
    def _denominator(self) -> Fraction:
        return 3 + 2 * reciprocal(self.exponents.p)

    @property
    def alpha0(self) -> Fraction:
        return Fraction(1, 2) - (self.eps0 / 4) / self._denominator

    @property
    def threshold(self) -> Fraction:
        """Smallest alpha for which the transport keeps a finite norm."""
        return Fraction(1, 2) - (self.eps0 / 2) / self._denominator

    def describe(self) -> dict[str, str]:
        return self.exponents.describe() | {
            "eps0": str(self.eps0),
            "alpha0": str(self.alpha0),
            "threshold": str(self.threshold),
        }


def _as_exact(alpha):
    return Fraction(alpha) if isinstance(alpha, (int, Fraction)) else float(alpha)


def scaling_exponent(exps: NormExponents, alpha):
    """Closed-form exponent 3a - 2 + n/(2p) + (2a - 1)/p of the inner norm in (1 - t).

    Exact (a Fraction) for Fraction or integer alpha.
    """
    a = _as_exact(alpha)
    rp = reciprocal(exps.p)
    if isinstance(a, float):
        rp = float(rp)
    return 3 * a - 2 + exps.n * rp / 2 + (2 * a - 1) * rp


def asymptotic_norm_exponent(exps: NormExponents, alpha):
    """Exponent a - 1 + n/(2p) + (2a - 1)/(2p) of the inner norm as t -> 1.

    Coincides with :func:`scaling_exponent` at alpha = 1/2.
    """
    a = _as_exact(alpha)
    rp = reciprocal(exps.p)
    if isinstance(a, float):
        rp = float(rp)
    return a - 1 + exps.n * rp / 2 + (2 * a - 1) * rp / 2


def integrability_threshold(exps: NormExponents):
    """alpha at which scaling_exponent * q = -1 (scaling_exponent = 0 for q = inf)."""
    rp = reciprocal(exps.p)
    rq = reciprocal(exps.q)
    return (2 - exps.n * rp / 2 + rp - rq) / (3 + 2 * rp)


# =============================================================================
# Oracle norms
# =============================================================================


def _xi_grid(sol: SelfSimilarSolution, resolution: int):
    r = sol.profile.radius
    ticks = -r + (np.arange(resolution) + 0.5) * (2 * r / resolution)
    mesh = np.meshgrid(*([ticks] * sol.n), indexing="ij")
    xi = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    inside = np.sum(xi * xi, axis=-1) < r * r
    return xi[inside], (2 * r / resolution) ** sol.n


def self_similar_inner_norm(
    sol: SelfSimilarSolution, exps: NormExponents, t: float, resolution: int = PROFILE_QUADRATURE
) -> float:
    """Inner L^p norm of the exact transport over the exact graph.

    Integrates in the self-similar variable, so it stays accurate however
    small the support is; outside the support the transport vanishes.
    """
    a = float(sol.alpha)
    tau = _tau(t)
    xi, cell = _xi_grid(sol, resolution)
    x = sol.center + math.sqrt(tau) * xi
    g = exact_transport(sol, x, t)[..., -1]
    if exps.p == INFINITY:
        return float(np.max(np.abs(g)))
    _, dphi, _ = sol.profile.evaluate(xi)
    v = np.sqrt(1.0 + tau ** (2 * a - 1) * np.sum(dphi * dphi, axis=-1))
    p = float(exps.p)
    integral = tau ** (sol.n / 2) * cell * np.sum(np.abs(g) ** p * v)
    return float(integral ** (1 / p))


def self_similar_transport_norm(
    sol: SelfSimilarSolution,
    exps: NormExponents,
    upper: float,
    samples: int = OUTER_SAMPLES,
    resolution: int = PROFILE_QUADRATURE,
) -> float:
    """(int_0^upper ||g(t)||^q dt)^{1/q} with the outer integral in sigma = -log(1 - t)."""
    if not 0 < upper < 1:
        raise McflowError(f"Upper time must lie in (0, 1), got {upper}")
    sigma = np.linspace(0.0, -math.log1p(-upper), samples)
    times = -np.expm1(-sigma)
    inner = np.array([self_similar_inner_norm(sol, exps, t, resolution) for t in times])
    if exps.q == INFINITY:
        return float(np.max(inner))
    q = float(exps.q)
    integrand = inner**q * (1.0 - times)
    return float(np.sum((integrand[1:] + integrand[:-1]) * np.diff(sigma)) / 2) ** (1 / q)


def fitted_norm_slope(
    sol: SelfSimilarSolution, exps: NormExponents, deltas: Sequence[float]
) -> float:
    """Slope of log ||g(1 - delta)||_p against log delta."""
    values = [self_similar_inner_norm(sol, exps, 1.0 - d) for d in deltas]
    return fit_loglog_slope(deltas, values)


# =============================================================================
# Convergence
# =============================================================================


@dataclass(frozen=True)
class ConvergenceStudy:
    """Final-time sup errors against the exact solution along a refinement ladder."""

    mode: str
    resolutions: tuple[int, ...]
    spacings: tuple[float, ...]
    steps: tuple[float, ...]
    errors: tuple[float, ...]

    @property
    def order(self) -> float:
        refinement = self.steps if self.mode == "time" else self.spacings
        return fit_order(refinement, self.errors)

    def rows(self) -> list[dict[str, Any]]:
        return [
            {"resolution": n, "h": h, "dt": dt, "error": e}
            for n, h, dt, e in zip(self.resolutions, self.spacings, self.steps, self.errors)
        ]


def final_error(sol: SelfSimilarSolution, traj: SolutionTrajectory) -> float:
    exact = exact_snapshot(sol, traj.domain, traj.final.t)
    return float(np.max(np.abs(traj.final.values - exact.values)))


def convergence_study(
    sol: SelfSimilarSolution,
    domain: Domain,
    resolutions: Sequence[int],
    steps: Sequence[float] | None = None,
    scheme: Scheme | str = Scheme.SEMI_IMPLICIT,
    final_time: float = 0.1,
    dt_factor: float = 0.5,
    mode: str = "space",
) -> ConvergenceStudy:
    """Run the exact problem along a ladder and fit the convergence order.

    Args:
        resolutions: Grid resolutions; one entry with several ``steps``
            gives a time study.
        steps: Time steps; defaults to dt_factor * h^2 per level.
        mode: "space" fits against h, "time" against dt.
    """
    if mode not in {"space", "time"}:
        raise McflowError(f"Unknown convergence mode: {mode}")
    sol.check_support(domain)
    f = transport_field(sol)
    if steps is None:
        levels = [(n, None) for n in resolutions]
    elif len(resolutions) == 1:
        levels = [(resolutions[0], dt) for dt in steps]
    else:
        levels = list(zip(resolutions, steps))

    used_n, used_h, used_dt, errors = [], [], [], []
    for n, dt in levels:
        level = replace(domain, resolution=int(n))
        h = level.spacing
        dt = dt_factor * h * h if dt is None else float(dt)
        cfg = SolverConfig(scheme=scheme, final_time=final_time, dt=dt, output_interval=10**9)
        traj = run(exact_snapshot(sol, level, 0.0), f, cfg)
        err = final_error(sol, traj)
        logger.info(f"Convergence level N = {n}, dt = {dt:.3g}: error {err:.3e}")
        used_n.append(int(n))
        used_h.append(h)
        used_dt.append(dt)
        errors.append(err)
    return ConvergenceStudy(mode, tuple(used_n), tuple(used_h), tuple(used_dt), tuple(errors))


# =============================================================================
# Blow-up experiment
# =============================================================================


@dataclass
class BlowupReport:
    """Outcome of a supercritical blow-up experiment.

    ``growth_exponent`` and ``classification`` come from solver snapshots
    only. ``oracle_growth`` is the closed-form exponent of the profile and
    is reported for comparison.
    """

    parameters: BlowupParameters
    alpha: float
    partial_norms: dict[float, float]
    norm_is_cauchy: bool
    fitted_norm_slope: float
    closed_form_exponent: float
    asymptotic_exponent: float
    growth_exponent: float
    growth_source: str
    predicted_growth: float
    oracle_growth: float
    classification: str
    solver_terminal_state: str
    companion_certified: bool
    ladder: dict[int, float] = field(default_factory=dict)
    level_growth: dict[int, float] = field(default_factory=dict)

    @property
    def status(self) -> str:
        return self.classification

    @property
    def growth_matches(self) -> bool:
        """Solver-fitted exponent within 10% of alpha - 1/2."""
        if self.growth_source != "solver":
            return False
        predicted = self.predicted_growth
        if predicted == 0:
            return abs(self.growth_exponent) <= 0.02
        return abs(self.growth_exponent - predicted) <= 0.10 * abs(predicted)

    def as_dict(self) -> dict[str, Any]:
        return self.parameters.describe() | {
            "alpha": self.alpha,
            "partial_norms": {str(k): v for k, v in self.partial_norms.items()},
            "norm_is_cauchy": self.norm_is_cauchy,
            "fitted_norm_slope": self.fitted_norm_slope,
            "closed_form_exponent": self.closed_form_exponent,
            "asymptotic_exponent": self.asymptotic_exponent,
            "growth_exponent": self.growth_exponent,
            "growth_source": self.growth_source,
            "predicted_growth": self.predicted_growth,
            "oracle_growth": self.oracle_growth,
            "classification": self.classification,
            "solver_terminal_state": self.solver_terminal_state,
            "companion_certified": self.companion_certified,
            "level_growth": {str(k): v for k, v in self.level_growth.items()},
        }


@dataclass
class GrowthSamples:
    """sup|du| of a solver run and of the exact solution at the same times."""

    taus: list[float] = field(default_factory=list)
    solver: list[float] = field(default_factory=list)
    exact: list[float] = field(default_factory=list)
    terminal_state: TerminalState = TerminalState.COMPLETED
    final_error: float = math.nan


def fit_solver_growth(taus, solver_values, exact_values, agreement: float) -> tuple[float, str]:
    """Exponent of the solver's sup|du| in 1 - t.

    Only samples within ``agreement`` (relative) of the exact values are
    used. Fewer than three of them, or a span of 1 - t under a decade,
    gives (nan, "unresolved").
    """
    taus = np.asarray(taus, dtype=float)
    solver_values = np.asarray(solver_values, dtype=float)
    exact_values = np.asarray(exact_values, dtype=float)
    usable = (
        np.isfinite(solver_values)
        & (exact_values > 0)
        & (np.abs(solver_values - exact_values) <= agreement * exact_values)
    )
    if usable.sum() < MIN_FIT_SAMPLES:
        return math.nan, "unresolved"
    window = taus[usable]
    if window.max() / window.min() < FIT_SPAN:
        return math.nan, "unresolved"
    return fit_loglog_slope(window, solver_values[usable]), "solver"


def resolved_tau(sol: SelfSimilarSolution, domain: Domain, resolve_cells: float) -> float:
    """Smallest 1 - t at which the support radius still spans ``resolve_cells`` cells."""
    return (resolve_cells * domain.spacing / sol.profile.radius) ** 2


def _oracle_growth(sol: SelfSimilarSolution) -> float:
    ladder = np.logspace(-1, -4, 16)
    return fit_loglog_slope(ladder, _profile_sup_gradient(sol, ladder))


def _profile_sup_gradient(sol: SelfSimilarSolution, taus) -> list[float]:
    """sup|du| = tau^(alpha - 1/2) max|dphi|, resolved in the self-similar variable."""
    xi, _ = _xi_grid(sol, PROFILE_QUADRATURE)
    _, dphi, _ = sol.profile.evaluate(xi)
    peak = float(np.max(np.linalg.norm(dphi, axis=-1)))
    if peak == 0:
        raise McflowError("Profile has zero amplitude")
    return [float(t) ** (float(sol.alpha) - 0.5) * peak for t in taus]


def tracked_run(
    sol: SelfSimilarSolution,
    level: Domain,
    tau_end: float,
    scheme: Scheme | str = Scheme.SEMI_IMPLICIT,
    dt_factor: float = 0.25,
) -> GrowthSamples:
    """Run the exact problem from t = 0 to t = 1 - tau_end and sample sup|du|.

    1 - t is halved per segment and each segment steps with
    dt = dt_factor * h * (1 - t) taken at its start.
    """
    f = transport_field(sol)
    pts = level.grid.points()
    samples = GrowthSamples()

    def sample(u: GridFunction) -> None:
        samples.taus.append(1.0 - u.t)
        samples.solver.append(sup_gradient(u))
        exact = exact_fields(sol, pts, u.t).du
        samples.exact.append(float(np.max(np.linalg.norm(exact, axis=-1))))

    u = exact_snapshot(sol, level, 0.0)
    sample(u)
    tau = 1.0
    while True:
        target = max(tau / 2, tau_end)
        dt = dt_factor * level.spacing * tau
        steps = max(1, math.ceil((tau - target) / dt - 1e-9))
        cfg = SolverConfig(
            scheme=scheme,
            final_time=1.0 - target,
            dt=dt,
            output_interval=max(1, steps // SAMPLES_PER_SEGMENT),
        )
        traj = run(u, f, cfg)
        for snapshot in list(traj)[1:]:
            sample(snapshot)
        u = traj.final
        if traj.terminal_state is TerminalState.BLOWUP_DETECTED:
            samples.terminal_state = traj.terminal_state
            break
        if target <= tau_end:
            break
        tau = 1.0 - u.t
    samples.final_error = final_error(sol, traj)
    return samples


def blowup_experiment(
    params: BlowupParameters,
    domain: Domain,
    ladder: Sequence[int] = (64, 128),
    deltas: Sequence[float] = (1e-1, 1e-2, 1e-3),
    alpha: float | None = None,
    amplitude: float = 1.0,
    scheme: Scheme | str = Scheme.SEMI_IMPLICIT,
    dt_factor: float = 0.25,
    agreement: float = 0.01,
    companion_cut: float = 0.5,
    fraction: float = 0.5,
    resolve_cells: float = 32.0,
) -> BlowupReport:
    """Run the supercritical family with alpha = alpha0 (or ``alpha``).

    Each ladder level runs the solver up to 1 - t = max(delta_min, resolved
    floor) and fits the growth of sup|du| in 1 - t from its own snapshots.
    Levels whose window spans less than a decade are skipped. The growth
    exponent is the finest solver fit; without one the report is
    "unresolved". BlowupDetected needs solver evidence: the ceiling was hit,
    or the solver-fitted exponent is negative.

    Raises:
        McflowError: Dimension mismatch or an empty ladder.
    """
    exps = params.exponents
    if domain.dim != exps.n:
        raise McflowError(f"Parameters are for n = {exps.n}, domain has dimension {domain.dim}")
    if not ladder:
        raise McflowError("Blow-up ladder is empty")
    chosen = params.alpha0 if alpha is None else _as_exact(alpha)
    sol = SelfSimilarSolution.centred_in(domain, float(chosen), amplitude, fraction)
    sol.check_support(domain)
    f = transport_field(sol)

    deltas = sorted(float(d) for d in deltas)[::-1]
    partial = {d: self_similar_transport_norm(sol, exps, 1.0 - d) for d in deltas}
    values = [partial[d] for d in deltas]
    increments = np.diff(values)
    cauchy = bool(
        np.all(np.isfinite(values))
        and np.all(increments >= 0)
        and np.all(increments[1:] < increments[:-1])
    )
    slope_deltas = np.logspace(math.log10(deltas[0]), math.log10(deltas[-1]), 8)
    slope = fitted_norm_slope(sol, exps, slope_deltas)

    terminal = TerminalState.COMPLETED
    growth, source = math.nan, "unresolved"
    errors: dict[int, float] = {}
    level_growth: dict[int, float] = {}
    for n in sorted(int(n) for n in ladder):
        level = replace(domain, resolution=n)
        tau_end = max(deltas[-1], resolved_tau(sol, level, resolve_cells))
        if tau_end * FIT_SPAN > 1.0:
            logger.warning(
                f"Level N = {n} resolves the profile only down to 1 - t = {tau_end:.3g}; skipped"
            )
            continue
        samples = tracked_run(sol, level, tau_end, scheme, dt_factor)
        errors[n] = samples.final_error
        if samples.terminal_state is TerminalState.BLOWUP_DETECTED:
            terminal = samples.terminal_state
        level_fit, level_source = fit_solver_growth(
            samples.taus, samples.solver, samples.exact, agreement
        )
        level_growth[n] = level_fit
        if level_source == "solver":
            growth, source = level_fit, level_source
        logger.info(f"Level N = {n}: growth {level_fit:.4f} ({level_source}) to 1 - t = {tau_end:.3g}")

    if terminal is TerminalState.BLOWUP_DETECTED or (source == "solver" and growth < 0):
        classification = TerminalState.BLOWUP_DETECTED.value
    elif source == "solver":
        classification = "bounded"
    else:
        classification = "unresolved"

    companion_level = replace(domain, resolution=int(min(ladder)))
    companion_cfg = SolverConfig(
        scheme=scheme, final_time=companion_cut, dt=dt_factor * companion_level.spacing
    )
    u0 = exact_snapshot(sol, companion_level, 0.0)
    companion = run(u0, f.truncated(companion_cut), companion_cfg)
    certified = gradient_bound_monitor(companion, u0).holds

    predicted = float(chosen) - 0.5
    logger.info(
        f"Blow-up experiment eps0 = {params.eps0}, alpha = {chosen}: growth {growth:.4f} "
        f"({source}), predicted {predicted:.4f}, classification {classification}"
    )
    return BlowupReport(
        parameters=params,
        alpha=float(chosen),
        partial_norms=partial,
        norm_is_cauchy=cauchy,
        fitted_norm_slope=slope,
        closed_form_exponent=float(scaling_exponent(exps, chosen)),
        asymptotic_exponent=float(asymptotic_norm_exponent(exps, chosen)),
        growth_exponent=growth,
        growth_source=source,
        predicted_growth=predicted,
        oracle_growth=_oracle_growth(sol),
        classification=classification,
        solver_terminal_state=terminal.value,
        companion_certified=certified,
        ladder=errors,
        level_growth=level_growth,
    )


def parabolic_rescaling_defect(sol: SelfSimilarSolution, points, t: float, lam: float):
    """lam^-1 u(c + lam y, 1 - lam^2 (1 - t)) - lam^(2 alpha - 1) u(c + y, t).

    Vanishes identically: the family is invariant under parabolic
    rescaling centred at (c, 1) up to the factor lam^(2 alpha - 1).
    """
    y = np.asarray(points, dtype=float)
    if y.shape[-1] != sol.n:
        y = y[..., None]
    scaled = exact_fields(sol, sol.center + lam * y, 1.0 - lam**2 * (1.0 - t)).u / lam
    direct = lam ** (2 * float(sol.alpha) - 1) * exact_fields(sol, sol.center + y, t).u
    return scaled - direct
