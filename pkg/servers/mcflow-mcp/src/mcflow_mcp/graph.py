"""Discrete differential geometry of the graph of u.

All operators work on the padded grid arrays of the domain: ghost values
are filled by the GridFunction's closure before any stencil is applied,
and results are meaningful on active nodes (NaN where a stencil would
reach past the second ghost ring).
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .domain import Domain, DomainKind, GhostPolicy, Grid
from .errors import GridMismatch, NonFiniteInput

logger = logging.getLogger(__name__)

# Ambient gradient of a scalar field: (points (m, n), heights (m,)) -> (m, n + 1)
AmbientGradient = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Scalar field on the active nodes of a domain's grid at time t.

    ``values`` holds one entry per active node (in the grid's flat active
    order). The padded view with ghost values filled by ``ghost_policy``
    is available as :attr:`padded`.
    """

    domain: Domain
    values: NDArray[np.float64]
    t: float = 0.0
    ghost_policy: GhostPolicy = GhostPolicy.NEUMANN

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size != self.domain.grid.n_active:
            raise GridMismatch(
                f"Expected {self.domain.grid.n_active} node values, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteInput(f"Grid function has non-finite values at t = {self.t}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ghost_policy", GhostPolicy(self.ghost_policy))

    @classmethod
    def from_function(
        cls,
        domain: Domain,
        func: Callable[..., NDArray[np.float64]],
        t: float = 0.0,
        ghost_policy: GhostPolicy = GhostPolicy.NEUMANN,
    ) -> "GridFunction":
        """Sample func(x1[, x2]) on the active nodes."""
        pts = domain.grid.points()
        values = np.broadcast_to(func(*pts.T), (len(pts),))
        return cls(domain, values, t, ghost_policy)

    @classmethod
    def constant(cls, domain: Domain, value: float, t: float = 0.0) -> "GridFunction":
        return cls(domain, np.full(domain.grid.n_active, float(value)), t)

    @property
    def grid(self) -> Grid:
        return self.domain.grid

    @cached_property
    def padded(self) -> NDArray[np.float64]:
        grid = self.grid
        full = (grid.embedding(self.ghost_policy) @ self.values).reshape(grid.shape)
        full[~(grid.active | grid.ghost)] = np.nan
        return full

    def with_values(self, values: NDArray[np.float64], t: float | None = None) -> "GridFunction":
        return GridFunction(self.domain, values, self.t if t is None else t, self.ghost_policy)

    def derived(self, values: NDArray[np.float64]) -> "GridFunction":
        """A field living on this function's graph with extrapolated ghosts."""
        return GridFunction(self.domain, values, self.t, GhostPolicy.EXTRAPOLATE)

    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def check_same_grid(self, other: "GridFunction") -> None:
        if other.domain != self.domain:
            raise GridMismatch("Grid functions live on different domains or resolutions")


@dataclass(frozen=True, eq=False)
class GraphQuantities:
    """Geometric quantities of the graph on the padded grid.

    Vector and matrix quantities carry their components on trailing axes:
    ``du`` is (*shape, n), ``d2u`` is (*shape, n, n), ``normal`` is
    (*shape, n + 1). ``h`` is the scalar mean curvature -div(du / v).
    """

    grid: Grid
    du: NDArray[np.float64]
    d2u: NDArray[np.float64]
    v: NDArray[np.float64]
    h: NDArray[np.float64]
    normal: NDArray[np.float64]
    A2: NDArray[np.float64]

    @property
    def area_element(self) -> NDArray[np.float64]:
        return self.v

    @property
    def inverse_metric(self) -> NDArray[np.float64]:
        """g^{ij} = delta_ij - u_i u_j / v^2."""
        return _inverse_metric(self.du, self.v)

    def active(self, name: str) -> NDArray[np.float64]:
        """Values of a quantity on active nodes, components last."""
        arr = getattr(self, name)
        flat = arr.reshape((-1,) + arr.shape[self.grid.dim :])
        return flat[self.grid.active_flat]


# =============================================================================
# Stencils
# =============================================================================


def _slab(ndim: int, axis: int, start: int | None, stop: int | None) -> tuple[slice, ...]:
    index = [slice(None)] * ndim
    index[axis] = slice(start, stop)
    return tuple(index)


def central_first(arr: NDArray[np.float64], axis: int, h: float) -> NDArray[np.float64]:
    """(a[k+1] - a[k-1]) / 2h along an axis, NaN on the outermost layer."""
    out = np.full(arr.shape, np.nan)
    nd = arr.ndim
    out[_slab(nd, axis, 1, -1)] = (
        arr[_slab(nd, axis, 2, None)] - arr[_slab(nd, axis, None, -2)]
    ) / (2 * h)
    return out


def central_second(arr: NDArray[np.float64], axis: int, h: float) -> NDArray[np.float64]:
    """(a[k+1] - 2a[k] + a[k-1]) / h^2 along an axis."""
    out = np.full(arr.shape, np.nan)
    nd = arr.ndim
    out[_slab(nd, axis, 1, -1)] = (
        arr[_slab(nd, axis, 2, None)]
        - 2 * arr[_slab(nd, axis, 1, -1)]
        + arr[_slab(nd, axis, None, -2)]
    ) / (h * h)
    return out


def central_mixed(arr: NDArray[np.float64], h: float) -> NDArray[np.float64]:
    """Four-point centred mixed derivative d_12 on a 2-D array."""
    out = np.full(arr.shape, np.nan)
    out[1:-1, 1:-1] = (arr[2:, 2:] - arr[2:, :-2] - arr[:-2, 2:] + arr[:-2, :-2]) / (4 * h * h)
    return out


def gradient(phi: GridFunction) -> NDArray[np.float64]:
    """Centred gradient of a closed field, shape (*shape, n)."""
    grid = phi.grid
    return np.stack([central_first(phi.padded, i, grid.h) for i in range(grid.dim)], axis=-1)


def hessian(phi: GridFunction) -> NDArray[np.float64]:
    """Centred Hessian of a closed field, shape (*shape, n, n)."""
    grid = phi.grid
    n = grid.dim
    out = np.empty(grid.shape + (n, n))
    for i in range(n):
        out[..., i, i] = central_second(phi.padded, i, grid.h)
    if n == 2:
        mixed = central_mixed(phi.padded, grid.h)
        out[..., 0, 1] = mixed
        out[..., 1, 0] = mixed
    return out


def _inverse_metric(du: NDArray[np.float64], v: NDArray[np.float64]) -> NDArray[np.float64]:
    n = du.shape[-1]
    return np.eye(n) - du[..., :, None] * du[..., None, :] / (v * v)[..., None, None]


# =============================================================================
# Operations
# =============================================================================


def compute_quantities(u: GridFunction) -> GraphQuantities:
    """v, h, unit normal and |A|^2 of the graph of u.

    |A|^2 = g^{ik} g^{jl} u_ij u_kl / v^2 and h = -g^{ij} u_ij / v, the
    non-divergence form of -div(du / v).

    Raises:
        NonFiniteInput: If a derivative is not finite on an active node.
    """
    grid = u.grid
    du = gradient(u)
    d2u = hessian(u)
    v = np.sqrt(1.0 + np.sum(du * du, axis=-1))
    ginv = _inverse_metric(du, v)
    h = -np.einsum("...ij,...ij->...", ginv, d2u) / v
    GU = np.einsum("...ik,...kl->...il", ginv, d2u)
    A2 = np.einsum("...ij,...ji->...", GU, GU) / (v * v)
    normal = np.concatenate([-du, np.ones(grid.shape + (1,))], axis=-1) / v[..., None]

    if not np.all(np.isfinite(v.flat[grid.active_flat])) or not np.all(
        np.isfinite(A2.flat[grid.active_flat])
    ):
        raise NonFiniteInput(f"Non-finite graph quantities at t = {u.t}")
    return GraphQuantities(grid=grid, du=du, d2u=d2u, v=v, h=h, normal=normal, A2=A2)


def laplace_beltrami(u: GridFunction, phi: GridFunction) -> GridFunction:
    """Laplace-Beltrami operator of the graph of u applied to phi.

    Flux form (1/v) d_i (v g^{ij} d_j phi): diagonal fluxes live on half
    nodes with averaged coefficients, so constants are annihilated exactly.

    Raises:
        GridMismatch: If u and phi live on different grids.
    """
    u.check_same_grid(phi)
    grid = u.grid
    h = grid.h
    nd = grid.dim
    q = compute_quantities(u)
    coeff = q.v[..., None, None] * q.inverse_metric
    P = phi.padded

    total = np.zeros(grid.shape)
    for i in range(nd):
        c = coeff[..., i, i]
        half = (c[_slab(nd, i, 1, None)] + c[_slab(nd, i, None, -1)]) / 2
        flux = half * (P[_slab(nd, i, 1, None)] - P[_slab(nd, i, None, -1)]) / h
        div = np.full(grid.shape, np.nan)
        div[_slab(nd, i, 1, -1)] = (flux[_slab(nd, i, 1, None)] - flux[_slab(nd, i, None, -1)]) / h
        total = total + div
        for j in range(nd):
            if j != i:
                cross = coeff[..., i, j] * central_first(P, j, h)
                total = total + central_first(cross, i, h)
    result = total / q.v
    return phi.derived(result.flat[grid.active_flat])


def lift_gradient(dphi: NDArray[np.float64]) -> NDArray[np.float64]:
    """(d phi, 0): a gradient on the base domain seen as an ambient gradient."""
    return np.concatenate([dphi, np.zeros(dphi.shape[:-1] + (1,))], axis=-1)


def tangential_gradient(
    u: GridFunction, ambient: AmbientGradient | NDArray[np.float64]
) -> NDArray[np.float64]:
    """D_Gamma phi = D phi - (D phi . n) n on the active nodes.

    Args:
        u: The graph.
        ambient: Either a callable returning D phi at (points, heights), or
            an (n_active, n + 1) array of ambient gradients.

    Returns:
        (n_active, n + 1) array.

    Raises:
        NonFiniteInput: If the ambient gradient is not finite.
    """
    q = compute_quantities(u)
    if callable(ambient):
        Dphi = np.asarray(ambient(u.grid.points(), u.values), dtype=float)
    else:
        Dphi = np.asarray(ambient, dtype=float)
    if not np.all(np.isfinite(Dphi)):
        raise NonFiniteInput("Ambient gradient has non-finite entries")
    normal = q.active("normal")
    return Dphi - np.sum(Dphi * normal, axis=-1, keepdims=True) * normal


def surface_integral(u: GridFunction, integrand) -> float:
    """Integral over the graph of u: sum of weight * integrand * v over active nodes.

    Disk weights are cut-cell areas, so boundary cells count only their part
    inside the disk.
    """
    grid = u.grid
    q = compute_quantities(u)
    values = np.asarray(integrand, dtype=float)
    if values.shape == grid.shape:
        values = values.flat[grid.active_flat]
    values = np.broadcast_to(values, (grid.n_active,))
    weights = grid.weights.flat[grid.active_flat]
    return float(np.sum(weights * values * q.active("v")))


def area(u: GridFunction) -> float:
    """H^n of the graph."""
    return surface_integral(u, 1.0)


def boundary_weights(u: GridFunction) -> NDArray[np.float64]:
    """Quadrature weights of the graph's boundary on the grid's boundary nodes.

    The interval boundary is two points (counting measure). On the disk the
    boundary nodes are ordered by angle and weighted by arclength times the
    tangential stretch sqrt(1 + |du_tan|^2).
    """
    grid = u.grid
    idx = np.flatnonzero(grid.boundary)
    if u.domain.kind is DomainKind.INTERVAL:
        return np.ones(idx.size)
    pts = np.stack([c.flat[idx] for c in grid.coords], axis=-1)
    theta = np.arctan2(pts[:, 1], pts[:, 0])
    order = np.argsort(theta)
    sorted_theta = theta[order]
    nxt = np.roll(sorted_theta, -1)
    nxt[-1] += 2 * np.pi
    prv = np.roll(sorted_theta, 1)
    prv[0] -= 2 * np.pi
    arc = np.empty(idx.size)
    arc[order] = u.domain.radius * (nxt - prv) / 2
    q = compute_quantities(u)
    du = q.du.reshape(-1, 2)[idx]
    normal = pts / np.linalg.norm(pts, axis=-1, keepdims=True)
    tangential = du - np.sum(du * normal, axis=-1, keepdims=True) * normal
    return arc * np.sqrt(1.0 + np.sum(tangential * tangential, axis=-1))


def boundary_integral(u: GridFunction, values: NDArray[np.float64]) -> float:
    """Integral over the boundary of the graph of per-boundary-node values."""
    return float(np.sum(boundary_weights(u) * np.asarray(values, dtype=float)))
