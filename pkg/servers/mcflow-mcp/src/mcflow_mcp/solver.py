"""Time integration of graphical mean curvature flow with transport.

The PDE is advanced in non-divergence form

    d_t u = a_ij(du) d_ij u + f(x, u, t) . (-du, 1),
    a_ij(r) = delta_ij - r_i r_j / (1 + |r|^2),

with du . nu = 0 on the boundary imposed through the Neumann ghost
closure. Three steppers are available: forward Euler, a frozen-coefficient
semi-implicit step and a Picard iteration of frozen-coefficient backward
Euler solves.
"""

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .domain import Domain, GhostPolicy, Grid
from .errors import (
    BlowupDetected,
    CflViolation,
    LinearSolveFailure,
    McflowError,
    NonFiniteInput,
    PicardDivergence,
)
from .graph import GridFunction, central_first

logger = logging.getLogger(__name__)

# Defaults
DEFAULT_EXPLICIT_FACTOR = 0.25  # dt = factor * h^2
DEFAULT_BLOWUP_CEILING = 1e3
DEFAULT_LINEAR_RTOL = 1e-10

# (points (m, n), heights (m,), t) -> (m, n + 1)
Evaluator = Callable[[NDArray[np.float64], NDArray[np.float64], float], NDArray[np.float64]]


class Scheme(str, Enum):
    """Time-stepping schemes."""

    EXPLICIT = "explicit"
    SEMI_IMPLICIT = "semi-implicit-frozen"
    PICARD = "picard"


class TerminalState(str, Enum):
    """How a run ended."""

    COMPLETED = "completed"
    BLOWUP_DETECTED = "BlowupDetected"


@dataclass(frozen=True)
class TransportField:
    """Ambient vector field f(x, x_{n+1}, t) in R^{n+1}.

    Attributes:
        evaluator: Vectorised callable (points, heights, t) -> (m, n + 1).
        tag: Catalogue name used in reports.
        kind: "closed-form" or "table-backed".
        holder_constant: Optional estimate of the Hoelder constant K.
    """

    evaluator: Evaluator
    tag: str = "custom"
    kind: str = "closed-form"
    holder_constant: float | None = None

    def __call__(self, points, heights, t: float) -> NDArray[np.float64]:
        points = np.asarray(points, dtype=float)
        heights = np.asarray(heights, dtype=float)
        values = np.asarray(self.evaluator(points, heights, float(t)), dtype=float)
        expected = heights.shape + (points.shape[-1] + 1,)
        values = np.broadcast_to(values, expected)
        if not np.all(np.isfinite(values)):
            raise NonFiniteInput(f"Transport '{self.tag}' is not finite at t = {t}")
        return values

    def truncated(self, t_cut: float) -> "TransportField":
        """The same field switched off for t > t_cut."""
        inner = self.evaluator

        def evaluator(points, heights, t):
            if t > t_cut:
                return np.zeros(np.shape(heights) + (np.shape(points)[-1] + 1,))
            return inner(points, heights, t)

        return replace(self, evaluator=evaluator, tag=f"{self.tag}|t<={t_cut:g}")

    @classmethod
    def zero(cls) -> "TransportField":
        return cls(
            lambda points, heights, t: np.zeros(np.shape(heights) + (np.shape(points)[-1] + 1,)),
            tag="zero",
        )

    @classmethod
    def constant_vertical(cls, c: float) -> "TransportField":
        def evaluator(points, heights, t):
            out = np.zeros(np.shape(heights) + (np.shape(points)[-1] + 1,))
            out[..., -1] = c
            return out

        return cls(evaluator, tag=f"vertical({c:g})", holder_constant=0.0)


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters.

    ``dt`` of None selects 0.25 h^2 for the explicit scheme and h otherwise.
    """

    scheme: Scheme = Scheme.SEMI_IMPLICIT
    final_time: float = 0.1
    dt: float | None = None
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    cfl_safety: float = 1.0
    blowup_ceiling: float = DEFAULT_BLOWUP_CEILING
    output_interval: int = 1
    linear_rtol: float = DEFAULT_LINEAR_RTOL
    horizon: float = math.inf
    strict_blowup: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.dt is not None and not self.dt > 0:
            raise McflowError(f"Time step must be positive, got {self.dt}")
        if self.final_time < 0:
            raise McflowError(f"Final time must be nonnegative, got {self.final_time}")
        if self.output_interval < 1:
            raise McflowError("output_interval must be at least 1")
        if self.picard_max_iter < 1:
            raise McflowError("picard_max_iter must be at least 1")

    def time_step(self, grid: Grid) -> float:
        if self.dt is not None:
            return self.dt
        if self.scheme is Scheme.EXPLICIT:
            return DEFAULT_EXPLICIT_FACTOR * grid.h * grid.h
        return grid.h


@dataclass
class SolutionTrajectory:
    """Snapshots of a run at its output times.

    ``rates`` holds the scheme's own d_t u for the step that produced each
    snapshot (None for the initial one). ``hook_results`` maps each hook
    name to its (t, value) series.
    """

    domain: Domain
    config: SolverConfig
    dt: float
    snapshots: list[GridFunction] = field(default_factory=list)
    rates: list[NDArray[np.float64] | None] = field(default_factory=list)
    hook_results: dict[str, list[tuple[float, Any]]] = field(default_factory=dict)
    terminal_state: TerminalState = TerminalState.COMPLETED
    blowup_time: float | None = None
    steps: int = 0

    def append(self, u: GridFunction, rate: NDArray[np.float64] | None = None) -> None:
        if self.snapshots and not u.t > self.snapshots[-1].t:
            raise McflowError(
                f"Snapshot times must increase strictly: {u.t} after {self.snapshots[-1].t}"
            )
        self.snapshots.append(u)
        self.rates.append(rate)

    @property
    def times(self) -> NDArray[np.float64]:
        return np.array([u.t for u in self.snapshots])

    @property
    def final(self) -> GridFunction:
        return self.snapshots[-1]

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)


# =============================================================================
# Discrete operators
# =============================================================================


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Sparse centred stencils acting on active values with the Neumann closure.

    ``first[i]`` approximates d_i and ``second[i][j]`` approximates d_ij,
    both as (n_active x n_active) matrices.
    """

    grid: Grid
    first: tuple[sparse.csr_matrix, ...]
    second: tuple[tuple[sparse.csr_matrix, ...], ...]

    def gradient(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.stack([D @ values for D in self.first], axis=-1)

    def hessian(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        n = self.grid.dim
        out = np.empty((values.size, n, n))
        for i in range(n):
            for j in range(n):
                out[:, i, j] = self.second[i][j] @ values
        return out

    def diffusion(self, a: NDArray[np.float64]) -> sparse.csr_matrix:
        """Sum_ij diag(a_ij) D_ij."""
        n = self.grid.dim
        total = None
        for i in range(n):
            for j in range(n):
                term = sparse.diags(a[:, i, j]) @ self.second[i][j]
                total = term if total is None else total + term
        return total.tocsr()

    def advection(self, F: NDArray[np.float64]) -> sparse.csr_matrix:
        """-Sum_i diag(F_i) D_i."""
        n = self.grid.dim
        total = None
        for i in range(n):
            term = -sparse.diags(F[:, i]) @ self.first[i]
            total = term if total is None else total + term
        return total.tocsr()


def _stencil(grid: Grid, entries: dict[tuple[int, ...], float]) -> sparse.csr_matrix:
    strides = [int(np.prod(grid.shape[k + 1 :])) for k in range(grid.dim)]
    total = int(np.prod(grid.shape))
    rows, cols, vals = [], [], []
    for offset, coeff in entries.items():
        shift = sum(o * s for o, s in zip(offset, strides))
        rows.append(np.arange(grid.n_active))
        cols.append(grid.active_flat + shift)
        vals.append(np.full(grid.n_active, coeff))
    S = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_active, total),
    )
    return (S @ grid.embedding(GhostPolicy.NEUMANN)).tocsr()


def _unit(n: int, axis: int, step: int) -> tuple[int, ...]:
    offset = [0] * n
    offset[axis] = step
    return tuple(offset)


@lru_cache(maxsize=16)
def operators(domain: Domain) -> DiscreteOperators:
    """Centred first and second derivative matrices of a domain's grid."""
    grid = domain.grid
    n, h = grid.dim, grid.h
    first = tuple(
        _stencil(grid, {_unit(n, i, 1): 1 / (2 * h), _unit(n, i, -1): -1 / (2 * h)})
        for i in range(n)
    )
    diag = [
        _stencil(
            grid,
            {_unit(n, i, 1): 1 / h**2, _unit(n, i, 0): -2 / h**2, _unit(n, i, -1): 1 / h**2},
        )
        for i in range(n)
    ]
    if n == 1:
        second = ((diag[0],),)
    else:
        c = 1 / (4 * h * h)
        mixed = _stencil(grid, {(1, 1): c, (1, -1): -c, (-1, 1): -c, (-1, -1): c})
        second = ((diag[0], mixed), (mixed, diag[1]))
    return DiscreteOperators(grid=grid, first=first, second=second)


# =============================================================================
# Operations
# =============================================================================


def coefficients(du) -> NDArray[np.float64]:
    """a_ij(r) = delta_ij - r_i r_j / (1 + |r|^2) per node.

    Eigenvalues lie in [1 / (1 + |r|^2), 1]; the small one belongs to r / |r|.

    Raises:
        NonFiniteInput: If du is not finite.
    """
    du = np.asarray(du, dtype=float)
    if du.ndim == 0:
        du = du[np.newaxis]
    if not np.all(np.isfinite(du)):
        raise NonFiniteInput("Gradient passed to coefficients is not finite")
    n = du.shape[-1]
    denom = 1.0 + np.sum(du * du, axis=-1)
    return np.eye(n) - du[..., :, None] * du[..., None, :] / denom[..., None, None]


def transport_term(
    f: TransportField, u: GridFunction, du: NDArray[np.float64], t: float
) -> NDArray[np.float64]:
    """f(x, u, t) . (-du, 1) on active nodes."""
    F = f(u.grid.points(), u.values, t)
    return F[:, -1] - np.sum(F[:, :-1] * du, axis=-1)


def discrete_operator(u: GridFunction, f: TransportField, t: float | None = None) -> NDArray[np.float64]:
    """Right-hand side a_ij(du) d_ij u + f . (-du, 1) on active nodes."""
    ops = operators(u.domain)
    du = ops.gradient(u.values)
    a = coefficients(du)
    hess = ops.hessian(u.values)
    t = u.t if t is None else t
    return np.einsum("kij,kij->k", a, hess) + transport_term(f, u, du, t)


def divergence_operator(u: GridFunction, f: TransportField, t: float | None = None) -> NDArray[np.float64]:
    """v div(du / v) + f . (-du, 1) in flux form, the consistency cross-check.

    Fluxes du_i / v live on half nodes; transverse derivatives there are
    averages of centred differences at the two neighbouring nodes.
    """
    grid = u.grid
    nd, h = grid.dim, grid.h
    P = u.padded
    centred = [central_first(P, j, h) for j in range(nd)]
    total = np.zeros(grid.shape)
    for i in range(nd):
        hi = tuple(slice(1, None) if k == i else slice(None) for k in range(nd))
        lo = tuple(slice(None, -1) if k == i else slice(None) for k in range(nd))
        along = (P[hi] - P[lo]) / h
        sq = along * along
        for j in range(nd):
            if j != i:
                trans = (centred[j][hi] + centred[j][lo]) / 2
                sq = sq + trans * trans
        flux = along / np.sqrt(1.0 + sq)
        div = np.full(grid.shape, np.nan)
        inner = tuple(slice(1, -1) if k == i else slice(None) for k in range(nd))
        div[inner] = (flux[hi] - flux[lo]) / h
        total = total + div
    du = np.stack([c.flat[grid.active_flat] for c in centred], axis=-1)
    v = np.sqrt(1.0 + np.sum(du * du, axis=-1))
    t = u.t if t is None else t
    return v * total.flat[grid.active_flat] + transport_term(f, u, du, t)


def _solve(matrix: sparse.csr_matrix, rhs: NDArray[np.float64], guess, cfg: SolverConfig, dim: int):
    """Banded direct solve in 1-D, Jacobi-preconditioned BiCGSTAB in 2-D."""
    if dim == 1:
        coo = matrix.tocoo()
        offsets = coo.row - coo.col
        if np.all(np.abs(offsets) <= 1):
            ab = np.zeros((3, matrix.shape[0]))
            np.add.at(ab, (1 + offsets, coo.col), coo.data)
            try:
                x = linalg.solve_banded((1, 1), ab, rhs)
            except (linalg.LinAlgError, ValueError) as e:
                raise LinearSolveFailure(f"Banded solve failed: {e}") from e
        else:
            x = splinalg.spsolve(matrix.tocsc(), rhs)
    else:
        diag = matrix.diagonal()
        if np.any(diag == 0):
            raise LinearSolveFailure("Zero on the diagonal of the implicit operator")
        precond = splinalg.LinearOperator(matrix.shape, matvec=lambda r: r / diag)
        x, info = splinalg.bicgstab(
            matrix,
            rhs,
            x0=guess,
            rtol=cfg.linear_rtol,
            atol=0.0,
            maxiter=10 * matrix.shape[0],
            M=precond,
        )
        if info != 0:
            raise LinearSolveFailure(f"BiCGSTAB did not converge (info = {info})")
    if not np.all(np.isfinite(x)):
        raise LinearSolveFailure("Linear solve produced non-finite values")
    return x


def step(u: GridFunction, f: TransportField, cfg: SolverConfig, dt: float | None = None) -> GridFunction:
    """Advance u by one time step.

    Raises:
        CflViolation: Explicit step larger than cfl_safety * h^2 / (2n max a_ii).
        PicardDivergence: Picard iteration did not converge.
        LinearSolveFailure: Implicit solve failed.
    """
    grid = u.grid
    ops = operators(u.domain)
    dt = cfg.time_step(grid) if dt is None else dt
    t_next = u.t + dt
    du = ops.gradient(u.values)
    a = coefficients(du)
    n = grid.dim

    if cfg.scheme is Scheme.EXPLICIT:
        max_aii = float(np.max(np.einsum("kii->ki", a)))
        limit = cfg.cfl_safety * grid.h**2 / (2 * n * max_aii)
        if dt > limit * (1 + 1e-12):
            raise CflViolation(f"dt = {dt:.6g} exceeds the explicit limit {limit:.6g}")
        rhs = np.einsum("kij,kij->k", a, ops.hessian(u.values)) + transport_term(f, u, du, u.t)
        values = u.values + dt * rhs

    elif cfg.scheme is Scheme.SEMI_IMPLICIT:
        identity = sparse.identity(grid.n_active, format="csr")
        matrix = identity - dt * ops.diffusion(a)
        rhs = u.values + dt * transport_term(f, u, du, u.t)
        values = _solve(matrix, rhs, u.values, cfg, n)

    else:
        values = _picard(u, f, cfg, dt, ops)

    return GridFunction(u.domain, values, t_next, u.ghost_policy)


def _picard(
    u: GridFunction, f: TransportField, cfg: SolverConfig, dt: float, ops: DiscreteOperators
) -> NDArray[np.float64]:
    """Iterate w -> u_w: backward Euler with coefficients and transport frozen at w."""
    grid = u.grid
    identity = sparse.identity(grid.n_active, format="csr")
    points = grid.points()
    t_next = u.t + dt
    w = u.values
    increment = math.inf
    for iteration in range(1, cfg.picard_max_iter + 1):
        a = coefficients(ops.gradient(w))
        F = f(points, w, t_next)
        matrix = identity - dt * (ops.diffusion(a) + ops.advection(F[:, :-1]))
        rhs = u.values + dt * F[:, -1]
        new = _solve(matrix, rhs, w, cfg, grid.dim)
        increment = float(np.max(np.abs(new - w)))
        w = new
        if increment < cfg.picard_tol:
            logger.debug(f"Picard converged in {iteration} iterations at t = {t_next:.6g}")
            return w
    raise PicardDivergence(
        f"Picard iteration did not converge in {cfg.picard_max_iter} iterations "
        f"(last increment {increment:.3g}) at t = {t_next:.6g}"
    )


def backward_euler_residual(
    previous: GridFunction, current: GridFunction, f: TransportField
) -> NDArray[np.float64]:
    """u^{k+1} - u^k - dt * (a(du^{k+1}) d2 u^{k+1} + f(x, u^{k+1}, t_{k+1}) . (-du^{k+1}, 1))."""
    dt = current.t - previous.t
    return current.values - previous.values - dt * discrete_operator(current, f, current.t)


def sup_gradient(u: GridFunction) -> float:
    """sup over active nodes of |du|."""
    du = operators(u.domain).gradient(u.values)
    return float(np.max(np.linalg.norm(du, axis=-1)))


Hook = Callable[[GridFunction], Any]


def run(
    u0: GridFunction,
    f: TransportField,
    cfg: SolverConfig,
    hooks: Mapping[str, Hook] | None = None,
) -> SolutionTrajectory:
    """Integrate from u0 up to cfg.final_time.

    Hooks are called at every output time (including t = 0). The run ends
    early with terminal state BlowupDetected once sup|du| exceeds the
    ceiling; with ``strict_blowup`` the BlowupDetected error is raised.
    """
    hooks = dict(hooks or {})
    T = cfg.final_time
    if T > cfg.horizon:
        raise McflowError(f"Final time {T} exceeds the configured horizon {cfg.horizon}")
    dt = cfg.time_step(u0.grid)
    traj = SolutionTrajectory(domain=u0.domain, config=cfg, dt=dt)
    start = u0.t

    def record(u: GridFunction, rate):
        traj.append(u, rate)
        for name, hook in hooks.items():
            traj.hook_results.setdefault(name, []).append((u.t, hook(u)))

    record(u0, None)
    n_steps = 0 if T <= start else max(1, math.ceil((T - start) / dt - 1e-9))
    logger.info(
        f"Running {cfg.scheme.value} scheme: {n_steps} steps of dt = {dt:.6g} "
        f"to T = {T:.6g} on {u0.domain.kind.value} (N = {u0.domain.resolution})"
    )

    u = u0
    for k in range(n_steps):
        t_next = T if k == n_steps - 1 else start + (k + 1) * dt
        new = step(u, f, cfg, dt=t_next - u.t)
        new = GridFunction(new.domain, new.values, t_next, new.ghost_policy)
        rate = (new.values - u.values) / (t_next - u.t)
        traj.steps = k + 1
        gradient_size = sup_gradient(new)
        if gradient_size > cfg.blowup_ceiling:
            traj.terminal_state = TerminalState.BLOWUP_DETECTED
            traj.blowup_time = t_next
            record(new, rate)
            logger.info(f"Blow-up detected at t = {t_next:.6g}: sup|du| = {gradient_size:.6g}")
            if cfg.strict_blowup:
                raise BlowupDetected(t_next, gradient_size)
            return traj
        if (k + 1) % cfg.output_interval == 0 or k == n_steps - 1:
            record(new, rate)
        u = new
        logger.debug(f"step {k + 1}/{n_steps} t = {t_next:.6g} sup|du| = {gradient_size:.6g}")

    logger.info(f"Run completed at t = {traj.final.t:.6g} with {len(traj)} snapshots")
    return traj


# =============================================================================
# Comparison bound
# =============================================================================


@dataclass(frozen=True)
class ComparisonReport:
    """sup|u(t)| against sup|f| t + sup|u0| at every snapshot."""

    sup_transport: float
    sup_initial: float
    tolerance: float
    times: NDArray[np.float64]
    sup_u: NDArray[np.float64]
    bounds: NDArray[np.float64]

    @property
    def slack(self) -> NDArray[np.float64]:
        return self.bounds + self.tolerance - self.sup_u

    @property
    def max_slack(self) -> float:
        return float(np.max(self.slack))

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.slack >= 0))


def comparison_bound_check(
    traj: SolutionTrajectory,
    f: TransportField,
    u0: GridFunction,
    tolerance_constant: float = 1.0,
) -> ComparisonReport:
    """Check sup|u| <= sup|f| t + sup|u0| + tol with tol = 1e-8 + C h.

    sup|f| is taken over the graph nodes of every snapshot.
    """
    grid = u0.grid
    points = grid.points()
    sup_f = 0.0
    for u in traj:
        F = f(points, u.values, u.t)
        sup_f = max(sup_f, float(np.max(np.linalg.norm(F, axis=-1))))
    times = traj.times
    sup_u = np.array([u.sup_abs() for u in traj])
    sup0 = u0.sup_abs()
    elapsed = times - u0.t
    return ComparisonReport(
        sup_transport=sup_f,
        sup_initial=sup0,
        tolerance=1e-8 + tolerance_constant * grid.h,
        times=times,
        sup_u=sup_u,
        bounds=sup_f * elapsed + sup0,
    )


# =============================================================================
# Parabolic rescaling
# =============================================================================


def rescale_problem(
    domain: Domain, u0: GridFunction, f: TransportField, lam: float
) -> tuple[Domain, GridFunction, TransportField]:
    """Transform (Omega, u0, f) under x = lam y, t = lam^2 s.

    Returns lam^-1 Omega, w0(y) = u0(lam y) / lam and
    f_lam(y, w, s) = lam f(lam y, lam w, lam^2 s).
    """
    scaled = domain.scaled(lam)
    w0 = GridFunction(scaled, u0.values / lam, u0.t / lam**2, u0.ghost_policy)
    inner = f.evaluator

    def evaluator(points, heights, s):
        return lam * np.asarray(inner(lam * np.asarray(points), lam * np.asarray(heights), lam**2 * s))

    return scaled, w0, replace(f, evaluator=evaluator, tag=f"{f.tag}|scaled({lam:g})")


def rescale_config(cfg: SolverConfig, grid: Grid, lam: float) -> SolverConfig:
    """Solver configuration whose steps map onto the original ones."""
    return replace(cfg, dt=cfg.time_step(grid) / lam**2, final_time=cfg.final_time / lam**2)


def compare_rescaled(
    traj: SolutionTrajectory, scaled: SolutionTrajectory, lam: float
) -> NDArray[np.float64]:
    """|sup|dw(s)| - sup|du(lam^2 s)|| at corresponding snapshots."""
    if len(traj) != len(scaled):
        raise McflowError("Trajectories have different numbers of snapshots")
    original = np.array([sup_gradient(u) for u in traj])
    rescaled = np.array([sup_gradient(w) for w in scaled])
    mismatch = np.abs(scaled.times * lam**2 - traj.times)
    if np.any(mismatch > 1e-9 * max(1.0, float(traj.times[-1]))):
        raise McflowError("Snapshot times do not correspond under the rescaling")
    return np.abs(rescaled - original)
