"""Monitored quantities of a run.

Transport norms on the moving graph, the gradient bound, kernel-weighted
monotonicity integrals, the evolution-of-v residual, the boundary sign of
the tangential gradient of v and empirical Hoelder constants. Quantities
whose inequalities carry unnamed constants are emitted as time series and
checked only for their structural properties.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from .domain import Domain, DomainKind
from .errors import (
    DegenerateSample,
    EmptyInterval,
    InsufficientSnapshots,
    McflowError,
    PoleNotCovered,
)
from .graph import (
    GridFunction,
    boundary_weights,
    central_first,
    compute_quantities,
    gradient,
    laplace_beltrami,
    surface_integral,
)
from .kernels import KernelSpec, eval_truncated
from .solver import SolutionTrajectory, TransportField

logger = logging.getLogger(__name__)

# Sub-samples per axis inside a node's cell near the pole
REFINE_PER_AXIS = 4

# Radius of the refined region in units of sqrt(s - t)
REFINE_RADIUS = 4.0


class QuantityTag(str, Enum):
    """Names of monitored series (also the CSV ``tag`` column)."""

    SUP_V = "sup_v"
    RUNNING_MAX_V = "running_max_v"
    TRANSPORT_NORM = "transport_norm"
    INNER_NORM = "inner_norm"
    MONOTONICITY = "monotonicity"
    WEIGHTED = "weighted"
    EVOLUTION_RESIDUAL = "evolution_residual"
    BOUNDARY_SIGN = "boundary_sign"
    BOUNDARY_FLUX = "boundary_flux"
    HOLDER = "holder"
    COMPARISON = "comparison_slack"
    AREA = "area"
    INTERACTION = "interaction"
    SUP_GRADIENT = "sup_gradient"


class Weight(str, Enum):
    """Weight phi in the monotonicity integral."""

    ONE = "1"
    V = "v"


INFINITY = math.inf


def parse_exponent(value: Any) -> Fraction | float:
    """Exponent as an exact Fraction, or math.inf for "inf"."""
    if isinstance(value, str) and value.strip().lower() in {"inf", "infinity", "oo"}:
        return INFINITY
    if isinstance(value, float) and math.isinf(value):
        return INFINITY
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def reciprocal(value: Fraction | float) -> Fraction:
    return Fraction(0) if value == INFINITY else 1 / Fraction(value)


@dataclass(frozen=True)
class NormExponents:
    """Exponents (p, q) of the iterated L^q_t L^p_x norm in dimension n.

    gap = 1 - n/p - 2/q is exact; gap > 0 is the subcritical regime.
    """

    n: int
    p: Fraction | float
    q: Fraction | float

    def __post_init__(self):
        p = parse_exponent(self.p)
        q = parse_exponent(self.q)
        if p < 1 or q < 1:
            raise McflowError(f"Exponents must satisfy p, q >= 1, got p = {p}, q = {q}")
        if self.n < 1:
            raise McflowError(f"Dimension must be positive, got {self.n}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def gap(self) -> Fraction:
        return 1 - self.n * reciprocal(self.p) - 2 * reciprocal(self.q)

    @property
    def regime(self) -> str:
        if self.gap > 0:
            return "subcritical"
        if self.gap == 0:
            return "critical"
        return "supercritical"

    def describe(self) -> dict[str, str]:
        return {"n": str(self.n), "p": str(self.p), "q": str(self.q), "gap": str(self.gap)}


@dataclass
class MonitoredQuantity:
    """A (t, value) series with its tag and metadata (pole, s, p, q, ...)."""

    tag: QuantityTag
    times: NDArray[np.float64]
    values: NDArray[np.float64]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise McflowError("Monitored quantity has mismatched times and values")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise McflowError(f"Times of {self.tag.value} must increase strictly")
        if not np.all(np.isfinite(self.values)):
            raise McflowError(f"Monitored quantity {self.tag.value} has non-finite values")

    def is_nonincreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))

    def max_increase(self) -> float:
        return float(np.max(np.diff(self.values), initial=-np.inf))


# =============================================================================
# Fitting helpers
# =============================================================================


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        raise McflowError("Need at least two positive points to fit a slope")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def fit_order(steps, errors) -> float:
    """Convergence order: slope of log error against log step size."""
    return fit_loglog_slope(steps, errors)


# =============================================================================
# Transport norms
# =============================================================================


def inner_norm(u: GridFunction, f: TransportField, exps: NormExponents) -> float:
    """(integral over the graph of |f(x, u, t)|^p)^{1/p}, max for p = inf."""
    F = f(u.grid.points(), u.values, u.t)
    size = np.linalg.norm(F, axis=-1)
    if exps.p == INFINITY:
        return float(np.max(size))
    p = float(exps.p)
    return surface_integral(u, size**p) ** (1 / p)


def inner_norm_series(
    traj: SolutionTrajectory, f: TransportField, exps: NormExponents
) -> MonitoredQuantity:
    values = [inner_norm(u, f, exps) for u in traj]
    return MonitoredQuantity(
        QuantityTag.INNER_NORM, traj.times, values, {"p": str(exps.p), "q": str(exps.q)}
    )


def transport_norm(
    traj: SolutionTrajectory, f: TransportField, exps: NormExponents, tau: float
) -> float:
    """Iterated norm (int_0^tau (int_Gamma |f|^p)^{q/p} dt)^{1/q}.

    Inner integrals use the graph quadrature, the outer one the trapezoid
    rule over snapshot times; infinite exponents become maxima.

    Raises:
        EmptyInterval: If [0, tau] holds fewer than two snapshots or tau
            lies past the trajectory.
    """
    times = traj.times
    slack = 1e-12 * max(1.0, abs(tau))
    if tau > times[-1] + slack:
        raise EmptyInterval(f"tau = {tau} lies past the last snapshot at t = {times[-1]}")
    chosen = [u for u in traj if u.t <= tau + slack]
    if len(chosen) < 2:
        raise EmptyInterval(f"Interval [0, {tau}] contains fewer than two snapshots")
    inner = np.array([inner_norm(u, f, exps) for u in chosen])
    t = np.array([u.t for u in chosen])
    if exps.q == INFINITY:
        return float(np.max(inner))
    q = float(exps.q)
    return float(trapezoid(inner**q, t) ** (1 / q))


# =============================================================================
# Gradient bound
# =============================================================================


@dataclass(frozen=True)
class GradientBoundReport:
    """sup v against 4 (1 + ||du0||^2) along a run."""

    bound: float
    times: NDArray[np.float64]
    sup_v: NDArray[np.float64]
    first_violation: float | None
    certified_time: float

    @property
    def running_max(self) -> NDArray[np.float64]:
        """M_T: running maximum of sup v."""
        return np.maximum.accumulate(self.sup_v)

    @property
    def holds(self) -> bool:
        return self.first_violation is None

    def as_quantity(self) -> MonitoredQuantity:
        return MonitoredQuantity(QuantityTag.SUP_V, self.times, self.sup_v, {"bound": self.bound})


def sup_v(u: GridFunction) -> float:
    return float(np.max(compute_quantities(u).active("v")))


def gradient_bound_monitor(traj: SolutionTrajectory, u0: GridFunction) -> GradientBoundReport:
    """Track sup v and report where 4 (1 + ||du0||_inf^2) first fails."""
    du0 = compute_quantities(u0).active("du")
    bound = 4.0 * (1.0 + float(np.max(np.sum(du0 * du0, axis=-1))))
    times = traj.times
    values = np.array([sup_v(u) for u in traj])
    violated = np.flatnonzero(values > bound)
    if violated.size:
        first = float(times[violated[0]])
        certified = float(times[violated[0] - 1]) if violated[0] > 0 else float(times[0])
        logger.info(f"Gradient bound {bound:.4g} first exceeded at t = {first:.6g}")
    else:
        first = None
        certified = float(times[-1])
    return GradientBoundReport(bound, times, values, first, certified)


# =============================================================================
# Kernel-weighted integrals on the graph
# =============================================================================


def _interpolator(grid, values: NDArray[np.float64]) -> RegularGridInterpolator:
    if grid.dim == 1:
        axes = (grid.coords[0],)
    else:
        axes = (grid.coords[0][:, 0], grid.coords[1][0, :])
    return RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=np.nan)


def _sub_offsets(dim: int, h: float) -> NDArray[np.float64]:
    ticks = ((np.arange(REFINE_PER_AXIS) + 0.5) / REFINE_PER_AXIS - 0.5) * h
    mesh = np.meshgrid(*([ticks] * dim), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def graph_kernel_integral(
    spec: KernelSpec,
    u: GridFunction,
    t: float,
    fields: tuple[NDArray[np.float64], ...] = (),
    refine: bool = True,
) -> float:
    """Integral over the graph of (rho_1 + rho_2) times the product of ``fields``.

    ``fields`` are padded arrays on the grid. Nodes within
    4 sqrt(s - t) of the pole are re-integrated on a 4^n sub-sample of
    their cells with linear interpolation of u, v and the fields.
    """
    grid = u.grid
    domain = u.domain
    q = compute_quantities(u)
    points = grid.points()
    v = q.active("v")
    weights = grid.weights.flat[grid.active_flat]
    product = np.ones(grid.n_active)
    for fld in fields:
        product = product * np.asarray(fld).flat[grid.active_flat]
    X = np.column_stack([points, u.values])
    rho = eval_truncated(spec, domain, X, t, deep="zero").total.value
    contributions = weights * rho * v * product

    if refine:
        tau = spec.s - t
        near = np.linalg.norm(points - spec.base_pole, axis=-1) < REFINE_RADIUS * math.sqrt(tau)
        if np.any(near):
            contributions[near] = weights[near] * _refined_mean(
                spec, u, t, points[near], q.v, fields
            )
    return float(np.sum(contributions))


def _refined_mean(spec, u, t, centres, v_padded, fields) -> NDArray[np.float64]:
    grid = u.grid
    domain = u.domain
    offsets = _sub_offsets(grid.dim, grid.h)
    sub = centres[:, None, :] + offsets[None, :, :]
    flat = sub.reshape(-1, grid.dim)
    heights = _interpolator(grid, u.padded)(flat)
    v = _interpolator(grid, v_padded)(flat)
    product = np.ones(len(flat))
    for fld in fields:
        product = product * _interpolator(grid, np.asarray(fld))(flat)
    inside = domain.contains(flat) & np.isfinite(heights) & np.isfinite(v) & np.isfinite(product)

    values = np.zeros(len(flat))
    if np.any(inside):
        X = np.column_stack([flat[inside], heights[inside]])
        rho = eval_truncated(spec, domain, X, t, deep="zero").total.value
        values[inside] = rho * v[inside] * product[inside]
    values = values.reshape(sub.shape[:2])
    counts = inside.reshape(sub.shape[:2]).sum(axis=1)
    return np.divide(values.sum(axis=1), counts, out=np.zeros(len(centres)), where=counts > 0)


def _covered(traj: SolutionTrajectory, spec: KernelSpec) -> list[GridFunction]:
    before = [u for u in traj if u.t < spec.s]
    if not before:
        raise PoleNotCovered(f"No snapshot before the pole time s = {spec.s}")
    return before


def _pole_metadata(spec: KernelSpec) -> dict[str, Any]:
    return {"pole": spec.pole.tolist(), "s": spec.s, "cutoff_radius": spec.cutoff_radius}


def monotonicity_quantity(
    traj: SolutionTrajectory, spec: KernelSpec, weight: Weight | str = Weight.V, refine: bool = True
) -> MonitoredQuantity:
    """Series of the integral over the graph of phi (rho_1 + rho_2), phi in {1, v}.

    Raises:
        PoleNotCovered: If no snapshot precedes s.
    """
    weight = Weight(weight)
    times, values = [], []
    for u in _covered(traj, spec):
        fields = (compute_quantities(u).v,) if weight is Weight.V else ()
        times.append(u.t)
        values.append(graph_kernel_integral(spec, u, u.t, fields, refine))
    meta = _pole_metadata(spec) | {"weight": weight.value}
    return MonitoredQuantity(QuantityTag.MONOTONICITY, times, values, meta)


def eta_weight(s: float, t, c13: float):
    """exp(-c13 (s^{1/4} - (s - t)^{1/4}))."""
    t = np.asarray(t, dtype=float)
    return np.exp(-c13 * (s**0.25 - np.maximum(s - t, 0.0) ** 0.25))


def weighted_quantity(
    traj: SolutionTrajectory, spec: KernelSpec, c13: float, refine: bool = True
) -> MonitoredQuantity:
    """eta(t) times the monotonicity integral with phi = v."""
    base = monotonicity_quantity(traj, spec, Weight.V, refine)
    values = eta_weight(spec.s, base.times, c13) * base.values
    meta = dict(base.metadata) | {"c13": c13}
    return MonitoredQuantity(QuantityTag.WEIGHTED, base.times, values, meta)


def kernel_lp_integral(
    spec: KernelSpec, u: GridFunction, t: float, p_prime: float
) -> tuple[float, float]:
    """Integrals over the graph of (rho_1 + rho_2)^{p'} and |D(rho_1 + rho_2)|^{p'}."""
    grid = u.grid
    X = np.column_stack([grid.points(), u.values])
    total = eval_truncated(spec, u.domain, X, t, deep="zero").total
    value = surface_integral(u, total.value**p_prime)
    grad = surface_integral(u, np.linalg.norm(total.grad, axis=-1) ** p_prime)
    return value, grad


def interaction_terms(
    traj: SolutionTrajectory, f: TransportField, spec: KernelSpec
) -> dict[str, MonitoredQuantity]:
    """Series of the four integrals of the transport-interaction estimate.

    transport: int rho du . d(f . n); normal_square: 1/4 int v rho (f . n)^2;
    curvature: 1/2 int rho |A|^2 v; tangential: int rho |D_Gamma v|^2 / v.
    """
    names = ("transport", "normal_square", "curvature", "tangential")
    series: dict[str, list[float]] = {name: [] for name in names}
    times = []
    for u in _covered(traj, spec):
        grid = u.grid
        q = compute_quantities(u)
        X = np.column_stack([grid.points(), u.values])
        rho = eval_truncated(spec, u.domain, X, u.t, deep="zero").total.value
        du = q.active("du")
        v = q.active("v")
        normal = q.active("normal")
        F = f(grid.points(), u.values, u.t)
        fn = np.sum(F * normal, axis=-1)
        dfn = gradient(u.derived(fn)).reshape(-1, grid.dim)[grid.active_flat]
        dv = gradient(u.derived(v)).reshape(-1, grid.dim)[grid.active_flat]
        tangential = np.sum(dv * dv, axis=-1) - np.sum(du * dv, axis=-1) ** 2 / v**2
        series["transport"].append(surface_integral(u, rho * np.sum(du * dfn, axis=-1)))
        series["normal_square"].append(0.25 * surface_integral(u, v * rho * fn**2))
        series["curvature"].append(0.5 * surface_integral(u, rho * q.active("A2") * v))
        series["tangential"].append(surface_integral(u, rho * tangential / v))
        times.append(u.t)
    meta = _pole_metadata(spec)
    return {
        name: MonitoredQuantity(QuantityTag.INTERACTION, times, values, meta | {"term": name})
        for name, values in series.items()
    }


def area_series(traj: SolutionTrajectory) -> MonitoredQuantity:
    """H^n of the graph at each snapshot."""
    return MonitoredQuantity(
        QuantityTag.AREA, traj.times, [surface_integral(u, 1.0) for u in traj]
    )


# =============================================================================
# Evolution of v
# =============================================================================


@dataclass(frozen=True)
class EvolutionResidual:
    """Per-node residual of the evolution equation of v at interior snapshots."""

    times: NDArray[np.float64]
    fields: list[NDArray[np.float64]]

    @property
    def sup(self) -> NDArray[np.float64]:
        return np.array([float(np.max(np.abs(r))) for r in self.fields])

    def as_quantity(self) -> MonitoredQuantity:
        return MonitoredQuantity(QuantityTag.EVOLUTION_RESIDUAL, self.times, self.sup)


def evolution_residual(
    traj: SolutionTrajectory, f: TransportField, interior_only: bool = False
) -> EvolutionResidual:
    """Residual of d_t v = Lap_Gamma v + (du/v . dv)(d_t u / v) - |A|^2 v
    - 2 |D_Gamma v|^2 / v + du . d(f . n) with centred time differences.

    Args:
        interior_only: Restrict the sup to nodes off the boundary.

    Raises:
        InsufficientSnapshots: With fewer than three snapshots.
    """
    snaps = traj.snapshots
    if len(snaps) < 3:
        raise InsufficientSnapshots(f"Need at least 3 snapshots, got {len(snaps)}")
    grid = snaps[0].grid
    keep = ~grid.boundary.flat[grid.active_flat] if interior_only else np.ones(grid.n_active, bool)
    quantities = [compute_quantities(u) for u in snaps]
    v_all = [q.active("v") for q in quantities]

    times, fields = [], []
    for k in range(1, len(snaps) - 1):
        u = snaps[k]
        q = quantities[k]
        span = snaps[k + 1].t - snaps[k - 1].t
        dt_v = (v_all[k + 1] - v_all[k - 1]) / span
        dt_u = (snaps[k + 1].values - snaps[k - 1].values) / span
        v = v_all[k]
        du = q.active("du")
        V = u.derived(v)
        dv = gradient(V).reshape(-1, grid.dim)[grid.active_flat]
        lap = laplace_beltrami(u, V).values
        tangential = np.sum(dv * dv, axis=-1) - np.sum(du * dv, axis=-1) ** 2 / v**2
        F = f(grid.points(), u.values, u.t)
        fn = np.sum(F * q.active("normal"), axis=-1)
        dfn = gradient(u.derived(fn)).reshape(-1, grid.dim)[grid.active_flat]
        residual = (
            dt_v
            - lap
            - np.sum(du * dv, axis=-1) / v * dt_u / v
            + q.active("A2") * v
            + 2 * tangential / v
            - np.sum(du * dfn, axis=-1)
        )
        times.append(u.t)
        fields.append(residual[keep])
    return EvolutionResidual(np.array(times), fields)


# =============================================================================
# Boundary sign
# =============================================================================


@dataclass(frozen=True)
class BoundarySignReport:
    """D_Gamma v . nu at boundary nodes, directly and via B(du, du) / v."""

    times: NDArray[np.float64]
    direct_max: NDArray[np.float64]
    identity_max: NDArray[np.float64]
    disagreement: NDArray[np.float64]
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(
            np.all(self.direct_max <= self.tolerance)
            and np.all(self.identity_max <= self.tolerance)
            and np.all(self.disagreement <= self.tolerance)
        )

    def as_quantity(self) -> MonitoredQuantity:
        return MonitoredQuantity(
            QuantityTag.BOUNDARY_SIGN, self.times, np.maximum(self.direct_max, self.identity_max)
        )


def _boundary_terms(u: GridFunction):
    """Direct D_Gamma v . nu, B(du, du) / v and the normals at boundary nodes."""
    grid = u.grid
    domain = u.domain
    idx = np.flatnonzero(grid.boundary)
    q = compute_quantities(u)
    n = grid.dim
    du = q.du.reshape(-1, n)[idx]
    v = q.v.flat[idx]
    dv = np.stack([central_first(q.v, i, grid.h).flat[idx] for i in range(n)], axis=-1)
    pts = np.stack([c.flat[idx] for c in grid.coords], axis=-1)
    if domain.kind is DomainKind.INTERVAL:
        normal = np.where(pts[:, :1] < (domain.a + domain.b) / 2, -1.0, 1.0)
    else:
        normal = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    direct = np.sum(dv * normal, axis=-1) - np.sum(dv * du, axis=-1) * np.sum(
        du * normal, axis=-1
    ) / v**2
    B = domain.second_form(normal)
    tangential = du - np.sum(du * normal, axis=-1, keepdims=True) * normal
    identity = np.einsum("ki,kij,kj->k", tangential, np.broadcast_to(B, (len(idx), n, n)), tangential) / v
    return direct, identity, normal, idx


def boundary_sign_check(traj: SolutionTrajectory, tolerance_constant: float = 1.0) -> BoundarySignReport:
    """D_Gamma v . nu <= 0 on the boundary of a convex domain, checked two ways.

    The direct value uses v from the Neumann-closed graph; the identity
    value is B(du, du) / v. Both must be <= 1e-8 + C h and agree to that
    tolerance.
    """
    times, direct_max, identity_max, disagreement = [], [], [], []
    h = traj.domain.spacing
    for u in traj:
        direct, identity, _, _ = _boundary_terms(u)
        times.append(u.t)
        direct_max.append(float(np.max(direct)))
        identity_max.append(float(np.max(identity)))
        disagreement.append(float(np.max(np.abs(direct - identity))))
    return BoundarySignReport(
        np.array(times),
        np.array(direct_max),
        np.array(identity_max),
        np.array(disagreement),
        1e-8 + tolerance_constant * h,
    )


def boundary_flux_series(traj: SolutionTrajectory, spec: KernelSpec) -> MonitoredQuantity:
    """Integral over the graph's boundary of (rho_1 + rho_2)(D_Gamma v . nu), no sign asserted."""
    times, values = [], []
    for u in _covered(traj, spec):
        direct, _, _, idx = _boundary_terms(u)
        grid = u.grid
        pts = np.stack([c.flat[idx] for c in grid.coords], axis=-1)
        heights = u.padded.flat[idx]
        rho = eval_truncated(
            spec, u.domain, np.column_stack([pts, heights]), u.t, deep="zero"
        ).total.value
        times.append(u.t)
        values.append(float(np.sum(boundary_weights(u) * rho * direct)))
    return MonitoredQuantity(QuantityTag.BOUNDARY_FLUX, times, values, _pole_metadata(spec))


# =============================================================================
# Hoelder constant
# =============================================================================


@dataclass(frozen=True)
class HolderSample:
    """Pairs ((X, t), (Y, s)) with X, Y in R^{n+1}."""

    first: NDArray[np.float64]
    first_times: NDArray[np.float64]
    second: NDArray[np.float64]
    second_times: NDArray[np.float64]


def sample_pairs(
    rng: np.random.Generator,
    domain: Domain,
    count: int,
    heights: tuple[float, float] = (-1.0, 1.0),
    times: tuple[float, float] = (0.0, 1.0),
    separation: float | None = None,
    equal_time_fraction: float = 0.5,
    box: tuple[NDArray[np.float64], NDArray[np.float64]] | None = None,
) -> HolderSample:
    """Random space-time pairs in the run's box.

    The first point is uniform in the box (the domain by default); the
    second is offset by at most ``separation`` (default: unrestricted
    second uniform point). A fraction of pairs share their time.
    """
    n = domain.dim
    if box is None:
        base = domain.sample_interior(rng, count)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        base = rng.uniform(lo, hi, size=(count, n))
    first = np.column_stack([base, rng.uniform(*heights, size=count)])
    t1 = rng.uniform(*times, size=count)
    if separation is None:
        other = domain.sample_interior(rng, count) if box is None else rng.uniform(lo, hi, size=(count, n))
        second = np.column_stack([other, rng.uniform(*heights, size=count)])
        t2 = rng.uniform(*times, size=count)
    else:
        direction = rng.normal(size=(count, n + 1))
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        second = first + direction * rng.uniform(0, separation, size=(count, 1))
        t2 = np.clip(t1 + rng.uniform(-separation**2, separation**2, size=count), *times)
    same = rng.random(count) < equal_time_fraction
    t2 = np.where(same, t1, t2)
    return HolderSample(first, t1, second, t2)


def _evaluate_grouped(f: TransportField, X: NDArray[np.float64], t: NDArray[np.float64]):
    out = np.empty((len(X), X.shape[-1]))
    for value in np.unique(t):
        sel = t == value
        out[sel] = f(X[sel, :-1], X[sel, -1], float(value))
    return out


def distinct_pairs(denominator: NDArray[np.float64]) -> NDArray[np.bool_]:
    """Mask of pairs with a nonzero Hoelder denominator.

    Raises DegenerateSample when every pair is coincident.
    """
    distinct = denominator != 0
    if not np.any(distinct):
        raise DegenerateSample(f"All {distinct.size} pairs are coincident")
    return distinct


def holder_constant_estimate(f: TransportField, pairs: HolderSample, alpha: float) -> float:
    """Max of |f(X,t) - f(Y,s)| / (|X-Y|^alpha + |t-s|^{alpha/2}) over the pairs.

    A lower bound for the Hoelder constant K. Coincident pairs carry no
    quotient and are skipped; a sample with no distinct pair estimates 0.
    """
    if not 0 < alpha <= 1:
        raise McflowError(f"Hoelder exponent must lie in (0, 1], got {alpha}")
    fx = _evaluate_grouped(f, pairs.first, pairs.first_times)
    fy = _evaluate_grouped(f, pairs.second, pairs.second_times)
    spatial = np.linalg.norm(pairs.first - pairs.second, axis=-1)
    temporal = np.abs(pairs.first_times - pairs.second_times)
    denominator = spatial**alpha + temporal ** (alpha / 2)
    try:
        distinct = distinct_pairs(denominator)
    except DegenerateSample as e:
        logger.warning(f"No usable Hoelder pair: {e}")
        return 0.0
    if not np.all(distinct):
        logger.debug(f"Skipping {int((~distinct).sum())} coincident pairs")
    numerator = np.linalg.norm(fx - fy, axis=-1)
    quotient = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=distinct)
    return float(np.max(quotient, initial=0.0))
