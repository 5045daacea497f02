"""Geometry of the convex base domain.

Two domains are supported: an interval (a, b) in one dimension and a disk
of radius r centred at the origin in two dimensions. Both have closed
forms for the nearest-point projection zeta, the outward normal nu, the
reflection x~ = 2 zeta(x) - x and the matrix Q = D zeta - (I - nu nu).

Each domain owns a padded node grid with two ghost rings; the ghost rings
are filled from active nodes through sparse closure matrices so that every
centred stencil can be applied uniformly.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.spatial import KDTree

from .errors import McflowError, OutsideDomain, PointTooDeep

logger = logging.getLogger(__name__)

# Ghost rings around the active region
GHOST_LAYERS = 2

# Relative slack for points sitting on the boundary
BOUNDARY_TOL = 1e-12

# Normal sampling depths (in grid spacings) for disk ghost closures
NEUMANN_DEPTHS = (2.0, 3.0)
EXTRAPOLATE_DEPTHS = (2.0, 3.0, 4.0)

# Smallest disk resolution for which the normal samples stay inside
MIN_DISK_RESOLUTION = 16

# Sub-samples per axis in a disk cell crossed by the circle
CUT_CELL_SAMPLES = 16


class DomainKind(str, Enum):
    """Supported base domains."""

    INTERVAL = "interval"
    DISK = "disk"


class GhostPolicy(str, Enum):
    """How ghost values are obtained from active values.

    NEUMANN enforces du . nu = 0 at the boundary. EXTRAPOLATE continues the
    field quadratically along the normal and is used for derived fields
    that carry no boundary condition.
    """

    NEUMANN = "neumann"
    EXTRAPOLATE = "extrapolate"


@dataclass(frozen=True)
class BoundaryPoint:
    """A point of the boundary with its outward normal and second fundamental form.

    ``second_form`` is an n x n matrix B with B(w, w) = w . B w for tangent
    w; B is negative semi-definite on convex domains.
    """

    position: NDArray[np.float64]
    normal: NDArray[np.float64]
    second_form: NDArray[np.float64]

    def evaluate(self, w: NDArray[np.float64]) -> float:
        """B(w, w) for the tangential part of w."""
        w = np.asarray(w, dtype=float)
        tangential = w - np.dot(w, self.normal) * self.normal
        return float(tangential @ self.second_form @ tangential)


@dataclass(frozen=True)
class ReflectionData:
    """Projection, reflection and the Q matrix at one point of the tube."""

    point: NDArray[np.float64]
    zeta: NDArray[np.float64]
    reflected: NDArray[np.float64]
    distance: float
    normal: NDArray[np.float64]
    Q: NDArray[np.float64]


@dataclass(frozen=True)
class ReflectionArrays:
    """Vectorised reflection data for a batch of points of shape (..., n).

    Attributes:
        reflected: x~ with shape (..., n).
        normal: nu(zeta(x)) with shape (..., n).
        Q: shape (..., n, n).
        dnormal: dnormal[..., i, j] = d_j nu_i.
        dQ: dQ[..., i, k, j] = d_j Q_ik.
        distance: dist(x, boundary) with shape (...).
    """

    reflected: NDArray[np.float64]
    normal: NDArray[np.float64]
    Q: NDArray[np.float64]
    dnormal: NDArray[np.float64]
    dQ: NDArray[np.float64]
    distance: NDArray[np.float64]


@dataclass(frozen=True)
class QPropertyReport:
    """Largest violation of each Q property over a sample."""

    symmetry: float
    annihilates_normal: float
    annihilates_vertical: float
    norm_margin: float
    derivative_bound: float
    derivative_mismatch: float
    sample_size: int

    def passed(self, tol: float = 1e-12) -> bool:
        """True when symmetry/annihilation hold to tol and |Q| <= 2d holds."""
        return (
            self.symmetry <= tol
            and self.annihilates_normal <= tol
            and self.annihilates_vertical <= tol
            and self.norm_margin <= tol
            and math.isfinite(self.derivative_bound)
        )

    def as_dict(self) -> dict[str, float]:
        return {
            "symmetry": self.symmetry,
            "annihilates_normal": self.annihilates_normal,
            "annihilates_vertical": self.annihilates_vertical,
            "norm_margin": self.norm_margin,
            "derivative_bound": self.derivative_bound,
            "derivative_mismatch": self.derivative_mismatch,
            "sample_size": float(self.sample_size),
        }


@dataclass(frozen=True)
class Domain:
    """Convex base domain with its grid.

    Use :meth:`interval` or :meth:`disk` to construct one. The interval has
    a flat boundary, so R is the configured surrogate ``reflection_radius``
    (default (b - a) / 2); the disk uses R = radius.
    """

    kind: DomainKind
    resolution: int
    a: float = 0.0
    b: float = 1.0
    radius: float = 1.0
    reflection_radius: float | None = None

    def __post_init__(self):
        if isinstance(self.kind, str) and not isinstance(self.kind, DomainKind):
            object.__setattr__(self, "kind", DomainKind(self.kind))
        if self.resolution < 2:
            raise McflowError(f"Grid resolution must be at least 2, got {self.resolution}")
        if self.kind is DomainKind.INTERVAL:
            if not self.a < self.b:
                raise McflowError(f"Interval endpoints must satisfy a < b, got ({self.a}, {self.b})")
            if self.reflection_radius is not None and not (
                0 < self.reflection_radius < math.inf
            ):
                raise McflowError("reflection_radius must be positive and finite")
        else:
            if not self.radius > 0:
                raise McflowError(f"Disk radius must be positive, got {self.radius}")
            if self.resolution < MIN_DISK_RESOLUTION:
                raise McflowError(
                    f"Disk resolution must be at least {MIN_DISK_RESOLUTION}, got {self.resolution}"
                )

    @classmethod
    def interval(
        cls, a: float, b: float, resolution: int, reflection_radius: float | None = None
    ) -> "Domain":
        return cls(
            DomainKind.INTERVAL,
            resolution,
            a=float(a),
            b=float(b),
            reflection_radius=reflection_radius,
        )

    @classmethod
    def disk(cls, radius: float, resolution: int) -> "Domain":
        return cls(DomainKind.DISK, resolution, radius=float(radius))

    # -------------------------------------------------------------------------
    # Scalars
    # -------------------------------------------------------------------------

    @property
    def dim(self) -> int:
        return 1 if self.kind is DomainKind.INTERVAL else 2

    @property
    def R(self) -> float:
        """Principal-curvature radius, or the configured surrogate for the interval."""
        if self.kind is DomainKind.DISK:
            return self.radius
        if self.reflection_radius is not None:
            return self.reflection_radius
        return (self.b - self.a) / 2

    @property
    def spacing(self) -> float:
        if self.kind is DomainKind.INTERVAL:
            return (self.b - self.a) / self.resolution
        return 2 * self.radius / self.resolution

    @property
    def length_scale(self) -> float:
        return self.b - self.a if self.kind is DomainKind.INTERVAL else 2 * self.radius

    def scaled(self, lam: float) -> "Domain":
        """The domain lam^-1 Omega on a grid of the same resolution."""
        if lam <= 0:
            raise McflowError(f"Scale factor must be positive, got {lam}")
        if self.kind is DomainKind.INTERVAL:
            surrogate = None if self.reflection_radius is None else self.reflection_radius / lam
            return Domain.interval(self.a / lam, self.b / lam, self.resolution, surrogate)
        return Domain.disk(self.radius / lam, self.resolution)

    def describe(self) -> dict[str, float | str | int]:
        info: dict[str, float | str | int] = {
            "kind": self.kind.value,
            "resolution": self.resolution,
            "spacing": self.spacing,
            "R": self.R,
        }
        if self.kind is DomainKind.INTERVAL:
            info.update(a=self.a, b=self.b)
        else:
            info.update(radius=self.radius)
        return info

    # -------------------------------------------------------------------------
    # Pointwise geometry
    # -------------------------------------------------------------------------

    def as_points(self, x) -> NDArray[np.float64]:
        """Coerce input to an array of points with trailing axis of length n."""
        arr = np.asarray(x, dtype=float)
        if self.dim == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
            arr = arr[..., np.newaxis]
        if arr.shape[-1] != self.dim:
            raise McflowError(f"Expected points with {self.dim} coordinates, got shape {arr.shape}")
        return arr

    def dist_to_boundary(self, x) -> NDArray[np.float64]:
        """Signed distance to the boundary, positive inside."""
        pts = self.as_points(x)
        if self.kind is DomainKind.INTERVAL:
            s = pts[..., 0]
            return np.minimum(s - self.a, self.b - s)
        return self.radius - np.linalg.norm(pts, axis=-1)

    def contains(self, x, tol: float = BOUNDARY_TOL) -> NDArray[np.bool_]:
        return self.dist_to_boundary(x) >= -tol * self.length_scale

    def _check_tube(self, pts: NDArray[np.float64]) -> NDArray[np.float64]:
        dist = self.dist_to_boundary(pts)
        if np.any(~np.isfinite(dist)):
            raise OutsideDomain("Point has non-finite coordinates")
        if np.any(dist < -BOUNDARY_TOL * self.length_scale):
            worst = pts.reshape(-1, self.dim)[np.argmin(dist)]
            raise OutsideDomain(f"Point {np.asarray(worst).tolist()} lies outside the domain")
        if np.any(dist >= self.R / 2):
            raise PointTooDeep(
                f"Point at distance {float(np.max(dist)):.6g} from the boundary; "
                f"projection requires distance < R/2 = {self.R / 2:.6g}"
            )
        return np.maximum(dist, 0.0)

    def reflection_arrays(self, x) -> ReflectionArrays:
        """Vectorised x~, nu, Q and their derivatives for points in N_{R/2}."""
        pts = self.as_points(x)
        dist = self._check_tube(pts)
        n = self.dim
        batch = pts.shape[:-1]
        if self.kind is DomainKind.INTERVAL:
            s = pts[..., 0]
            left = (s - self.a) <= (self.b - s)
            zeta = np.where(left, self.a, self.b)
            normal = np.where(left, -1.0, 1.0)[..., np.newaxis]
            reflected = (2 * zeta - s)[..., np.newaxis]
            zeros2 = np.zeros(batch + (n, n))
            return ReflectionArrays(
                reflected=reflected,
                normal=normal,
                Q=zeros2,
                dnormal=zeros2.copy(),
                dQ=np.zeros(batch + (n, n, n)),
                distance=dist,
            )

        r = self.radius
        norm = np.linalg.norm(pts, axis=-1)
        xhat = pts / norm[..., np.newaxis]
        eye = np.eye(n)
        P = eye - xhat[..., :, np.newaxis] * xhat[..., np.newaxis, :]
        scale = r / norm - 1.0
        Q = scale[..., np.newaxis, np.newaxis] * P
        reflected = (2 * r / norm - 1.0)[..., np.newaxis] * pts
        # d_j nu_i = P_ij / |x|
        dnormal = P / norm[..., np.newaxis, np.newaxis]
        # d_j P_ik = -(P_ij xhat_k + xhat_i P_kj) / |x|
        dP = -(
            P[..., :, np.newaxis, :] * xhat[..., np.newaxis, :, np.newaxis]
            + xhat[..., :, np.newaxis, np.newaxis] * P[..., np.newaxis, :, :]
        ) / norm[..., np.newaxis, np.newaxis, np.newaxis]
        dscale = -r * xhat / (norm**2)[..., np.newaxis]
        dQ = (
            dscale[..., np.newaxis, np.newaxis, :] * P[..., :, :, np.newaxis]
            + scale[..., np.newaxis, np.newaxis, np.newaxis] * dP
        )
        return ReflectionArrays(
            reflected=reflected,
            normal=xhat,
            Q=Q,
            dnormal=dnormal,
            dQ=dQ,
            distance=dist,
        )

    def project_to_boundary(self, x) -> BoundaryPoint:
        """Unique nearest boundary point of x in N_{R/2}.

        Raises:
            PointTooDeep: If dist(x, boundary) >= R/2.
            OutsideDomain: If x is outside the closed domain.
        """
        pts = self.as_points(x)
        if pts.ndim != 1:
            raise McflowError("project_to_boundary takes a single point")
        data = self.reflection_arrays(pts)
        normal = data.normal
        position = (pts + data.reflected) / 2
        return BoundaryPoint(position=position, normal=normal, second_form=self.second_form(normal))

    def second_form(self, normal: NDArray[np.float64]) -> NDArray[np.float64]:
        """Second fundamental form at the boundary point with this normal."""
        n = self.dim
        if self.kind is DomainKind.INTERVAL:
            return np.zeros((n, n))
        normal = np.asarray(normal, dtype=float)
        P = np.eye(n) - normal[..., :, np.newaxis] * normal[..., np.newaxis, :]
        return -P / self.radius

    def reflect(self, x) -> ReflectionData:
        """Reflection of x across the boundary with distance and Q populated."""
        pts = self.as_points(x)
        if pts.ndim != 1:
            raise McflowError("reflect takes a single point")
        data = self.reflection_arrays(pts)
        zeta = (pts + data.reflected) / 2
        return ReflectionData(
            point=pts,
            zeta=zeta,
            reflected=data.reflected,
            distance=float(data.distance),
            normal=data.normal,
            Q=data.Q,
        )

    def boundary_point_at(self, normal) -> NDArray[np.float64]:
        """Boundary position whose outward normal is ``normal``."""
        normal = np.asarray(normal, dtype=float)
        if self.kind is DomainKind.INTERVAL:
            return np.where(normal < 0, self.a, self.b)
        return self.radius * normal

    # -------------------------------------------------------------------------
    # Sampling
    # -------------------------------------------------------------------------

    def sample_tube(
        self, rng: np.random.Generator, count: int, depth: float | None = None
    ) -> NDArray[np.float64]:
        """Random points at distance < depth from the boundary (default R/2)."""
        depth = self.R / 2 if depth is None else depth
        depth = min(depth, self.R / 2) * (1 - 1e-9)
        if self.kind is DomainKind.INTERVAL:
            depth = min(depth, (self.b - self.a) / 2)
            d = rng.uniform(0.0, depth, size=count)
            left = rng.random(count) < 0.5
            s = np.where(left, self.a + d, self.b - d)
            return s[:, np.newaxis]
        radii = self.radius - rng.uniform(0.0, depth, size=count)
        theta = rng.uniform(0.0, 2 * np.pi, size=count)
        return np.stack([radii * np.cos(theta), radii * np.sin(theta)], axis=-1)

    def sample_interior(self, rng: np.random.Generator, count: int) -> NDArray[np.float64]:
        """Uniform random points of the domain."""
        if self.kind is DomainKind.INTERVAL:
            return rng.uniform(self.a, self.b, size=(count, 1))
        radii = self.radius * np.sqrt(rng.random(count))
        theta = rng.uniform(0.0, 2 * np.pi, size=count)
        return np.stack([radii * np.cos(theta), radii * np.sin(theta)], axis=-1)

    def sample_boundary(self, rng: np.random.Generator, count: int) -> NDArray[np.float64]:
        if self.kind is DomainKind.INTERVAL:
            return np.where(rng.random(count) < 0.5, self.a, self.b)[:, np.newaxis]
        theta = rng.uniform(0.0, 2 * np.pi, size=count)
        return self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    # -------------------------------------------------------------------------
    # Grid
    # -------------------------------------------------------------------------

    @cached_property
    def grid(self) -> "Grid":
        return Grid.build(self)


def convexity_margin(domain: Domain, x, y) -> NDArray[np.float64]:
    """|x~ - y| - |x - y| for x in N_{R/2} and y in the domain (>= 0 when convex)."""
    xs = domain.as_points(x)
    ys = domain.as_points(y)
    reflected = domain.reflection_arrays(xs).reflected
    return np.linalg.norm(reflected - ys, axis=-1) - np.linalg.norm(xs - ys, axis=-1)


def verify_Q_properties(domain: Domain, sample, fd_step: float = 1e-6) -> QPropertyReport:
    """Check the structural properties of Q on a sample of tube points.

    Returns the largest violation of: symmetry, Q nu = 0, the lifted Q
    annihilating e_{n+1}, |Q| - 2 dist (should be <= 0), and the
    finite-difference size of DQ together with its mismatch against the
    closed form.
    """
    pts = domain.as_points(sample)
    if pts.ndim == 1:
        pts = pts[np.newaxis, :]
    data = domain.reflection_arrays(pts)
    Q = data.Q
    n = domain.dim

    symmetry = float(np.max(np.abs(Q - np.swapaxes(Q, -1, -2)), initial=0.0))
    annihilates = float(np.max(np.abs(np.einsum("...ij,...j->...i", Q, data.normal)), initial=0.0))
    lifted = lift_matrix(Q, pad=0.0)
    vertical = np.zeros(n + 1)
    vertical[-1] = 1.0
    annihilates_vertical = float(np.max(np.abs(lifted @ vertical), initial=0.0))
    spectral = np.max(np.abs(np.linalg.eigvalsh(Q)), axis=-1)
    norm_margin = float(np.max(spectral - 2 * data.distance, initial=-np.inf))

    # Central differences of Q, only where both stencil points stay in the tube
    inner = (data.distance > 2 * fd_step) & (data.distance < domain.R / 2 - 2 * fd_step)
    centres = pts[inner]
    fd = np.zeros((len(centres), n, n, n))
    for j in range(n):
        step = np.zeros(n)
        step[j] = fd_step
        forward = domain.reflection_arrays(centres + step).Q
        backward = domain.reflection_arrays(centres - step).Q
        fd[..., j] = (forward - backward) / (2 * fd_step)
    derivative_bound = float(np.max(np.linalg.norm(fd.reshape(len(centres), -1), axis=-1), initial=0.0))
    derivative_mismatch = float(np.max(np.abs(fd - data.dQ[inner]), initial=0.0))

    return QPropertyReport(
        symmetry=symmetry,
        annihilates_normal=annihilates,
        annihilates_vertical=annihilates_vertical,
        norm_margin=norm_margin,
        derivative_bound=derivative_bound,
        derivative_mismatch=derivative_mismatch,
        sample_size=len(pts),
    )


def lift_matrix(M: NDArray[np.float64], pad: float) -> NDArray[np.float64]:
    """Embed (..., n, n) into (..., n+1, n+1) with ``pad`` on the last diagonal entry."""
    n = M.shape[-1]
    out = np.zeros(M.shape[:-2] + (n + 1, n + 1))
    out[..., :n, :n] = M
    out[..., n, n] = pad
    return out


@dataclass(eq=False)
class Grid:
    """Padded node grid of a domain.

    Arrays are stored on the padded shape (N + 1 + 2 * GHOST_LAYERS per
    axis, ``indexing="ij"``). ``active`` marks nodes of the closed domain,
    ``ghost`` the two rings outside it that the closure fills, ``boundary``
    the active nodes adjacent to the outside.
    """

    domain: Domain
    h: float
    shape: tuple[int, ...]
    coords: tuple[NDArray[np.float64], ...]
    active: NDArray[np.bool_]
    ghost: NDArray[np.bool_]
    boundary: NDArray[np.bool_]
    weights: NDArray[np.float64]
    active_flat: NDArray[np.intp] = field(init=False)
    ghost_flat: NDArray[np.intp] = field(init=False)
    _closures: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        self.active_flat = np.flatnonzero(self.active)
        self.ghost_flat = np.flatnonzero(self.ghost)

    @classmethod
    def build(cls, domain: Domain) -> "Grid":
        N = domain.resolution
        h = domain.spacing
        size = N + 1 + 2 * GHOST_LAYERS
        if domain.kind is DomainKind.INTERVAL:
            x = domain.a + (np.arange(size) - GHOST_LAYERS) * h
            # Pin the endpoint nodes exactly.
            x[GHOST_LAYERS] = domain.a
            x[GHOST_LAYERS + N] = domain.b
            active = np.zeros(size, dtype=bool)
            active[GHOST_LAYERS : GHOST_LAYERS + N + 1] = True
            ghost = np.zeros(size, dtype=bool)
            ghost[:GHOST_LAYERS] = True
            ghost[GHOST_LAYERS + N + 1 :] = True
            boundary = np.zeros(size, dtype=bool)
            boundary[[GHOST_LAYERS, GHOST_LAYERS + N]] = True
            weights = np.where(active, h, 0.0)
            weights[[GHOST_LAYERS, GHOST_LAYERS + N]] = h / 2
            grid = cls(domain, h, (size,), (x,), active, ghost, boundary, weights)
        else:
            axis = -domain.radius + (np.arange(size) - GHOST_LAYERS) * h
            X1, X2 = np.meshgrid(axis, axis, indexing="ij")
            radius = np.hypot(X1, X2)
            active = radius <= domain.radius * (1 + 1e-9)
            near = np.zeros_like(active)
            for di in range(-GHOST_LAYERS, GHOST_LAYERS + 1):
                for dj in range(-GHOST_LAYERS, GHOST_LAYERS + 1):
                    near |= _shift(active, (di, dj))
            ghost = near & ~active
            outside_neighbour = np.zeros_like(active)
            for offset in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                outside_neighbour |= _shift(~active, offset)
            boundary = active & outside_neighbour
            weights = _disk_cell_weights(X1, X2, active, h, domain.radius)
            grid = cls(domain, h, (size, size), (X1, X2), active, ghost, boundary, weights)
        logger.debug(
            f"Built {domain.kind.value} grid: {int(grid.active.sum())} active, "
            f"{int(grid.ghost.sum())} ghost nodes, h = {h:.6g}"
        )
        return grid

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_active(self) -> int:
        return int(self.active_flat.size)

    def points(self, mask: NDArray[np.bool_] | None = None) -> NDArray[np.float64]:
        """Coordinates of masked nodes as an (m, n) array (active nodes by default)."""
        mask = self.active if mask is None else mask
        return np.stack([c[mask] for c in self.coords], axis=-1)

    def empty(self) -> NDArray[np.float64]:
        return np.full(self.shape, np.nan)

    def from_active(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        """Padded array holding ``values`` on active nodes and NaN elsewhere."""
        out = self.empty()
        out.flat[self.active_flat] = values
        return out

    def closure(self, policy: GhostPolicy) -> sparse.csr_matrix:
        """Sparse map from active values to ghost values for a policy."""
        policy = GhostPolicy(policy)
        if policy not in self._closures:
            if self.domain.kind is DomainKind.INTERVAL:
                matrix = self._interval_closure(policy)
            else:
                matrix = self._disk_closure(policy)
            self._closures[policy] = matrix
        return self._closures[policy]

    def embedding(self, policy: GhostPolicy) -> sparse.csr_matrix:
        """Sparse map from active values to all padded nodes (zero rows elsewhere)."""
        key = ("embedding", GhostPolicy(policy))
        if key not in self._closures:
            total = int(np.prod(self.shape))
            eye = sparse.coo_matrix(
                (np.ones(self.n_active), (self.active_flat, np.arange(self.n_active))),
                shape=(total, self.n_active),
            )
            closure = self.closure(policy).tocoo()
            ghost_part = sparse.coo_matrix(
                (closure.data, (self.ghost_flat[closure.row], closure.col)),
                shape=(total, self.n_active),
            )
            self._closures[key] = (eye + ghost_part).tocsr()
        return self._closures[key]

    def _active_position(self) -> NDArray[np.intp]:
        position = np.full(int(np.prod(self.shape)), -1, dtype=np.intp)
        position[self.active_flat] = np.arange(self.n_active)
        return position

    def _interval_closure(self, policy: GhostPolicy) -> sparse.csr_matrix:
        N = self.domain.resolution
        first, last = GHOST_LAYERS, GHOST_LAYERS + N
        position = self._active_position()
        rows, cols, vals = [], [], []
        for row, g in enumerate(self.ghost_flat):
            if g < first:
                k, anchor, inward = first - g, first, 1
            else:
                k, anchor, inward = g - last, last, -1
            if policy is GhostPolicy.NEUMANN:
                entries = [(anchor + inward * k, 1.0)]
            else:
                # Quadratic through the three outermost active nodes.
                weights = ((k + 1) * (k + 2) / 2, -k * (k + 2), k * (k + 1) / 2)
                entries = [(anchor + inward * m, w) for m, w in enumerate(weights)]
            for node, w in entries:
                rows.append(row)
                cols.append(position[node])
                vals.append(w)
        return sparse.csr_matrix(
            (vals, (rows, cols)), shape=(self.ghost_flat.size, self.n_active)
        )

    def _disk_closure(self, policy: GhostPolicy) -> sparse.csr_matrix:
        r = self.domain.radius
        h = self.h
        origin = self.coords[0][0, 0]
        position = self._active_position().reshape(self.shape)
        gx = self.coords[0].flat[self.ghost_flat]
        gy = self.coords[1].flat[self.ghost_flat]
        gnorm = np.hypot(gx, gy)
        normal = np.stack([gx / gnorm, gy / gnorm], axis=-1)
        outward = (gnorm - r) / h

        depths = NEUMANN_DEPTHS if policy is GhostPolicy.NEUMANN else EXTRAPOLATE_DEPTHS
        if policy is GhostPolicy.NEUMANN:
            # u(s) = c0 + c2 s^2 through the samples at s = -2h, -3h.
            sigma = (outward**2 - 4.0) / 5.0
            line_weights = [1.0 - sigma, sigma]
        else:
            t = outward
            line_weights = [
                (t + 3) * (t + 4) / 2,
                -(t + 2) * (t + 4),
                (t + 2) * (t + 3) / 2,
            ]

        rows, cols, vals = [], [], []
        for depth, lw in zip(depths, line_weights):
            sample = r * normal - depth * h * normal
            fi = (sample[:, 0] - origin) / h
            fj = (sample[:, 1] - origin) / h
            i0 = np.floor(fi).astype(int)
            j0 = np.floor(fj).astype(int)
            ti = fi - i0
            tj = fj - j0
            for di, dj, w in (
                (0, 0, (1 - ti) * (1 - tj)),
                (1, 0, ti * (1 - tj)),
                (0, 1, (1 - ti) * tj),
                (1, 1, ti * tj),
            ):
                cols_here = position[i0 + di, j0 + dj]
                if np.any(cols_here < 0):
                    raise McflowError(
                        "Disk grid too coarse for the ghost closure; increase the resolution"
                    )
                rows.append(np.arange(self.ghost_flat.size))
                cols.append(cols_here)
                vals.append(lw * w)
        matrix = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.ghost_flat.size, self.n_active),
        )
        matrix.sum_duplicates()
        return matrix


def _disk_cell_weights(
    X1: NDArray[np.float64],
    X2: NDArray[np.float64],
    active: NDArray[np.bool_],
    h: float,
    radius: float,
) -> NDArray[np.float64]:
    """Cut-cell quadrature weights for the disk.

    Interior cells carry h^2. Each h x h cell crossing the circle is
    sub-sampled on a CUT_CELL_SAMPLES^2 midpoint lattice; the part inside
    the disk goes to the nearest active node.
    """
    node_radius = np.hypot(X1, X2)
    half_diagonal = h / math.sqrt(2.0)
    interior = node_radius <= radius - half_diagonal
    weights = np.where(interior, h * h, 0.0)
    cut = ~interior & (node_radius <= radius + half_diagonal)
    S = CUT_CELL_SAMPLES
    ticks = ((np.arange(S) + 0.5) / S - 0.5) * h
    d1, d2 = np.meshgrid(ticks, ticks, indexing="ij")
    centres = np.column_stack([X1[cut], X2[cut]])
    sub = (centres[:, None, :] + np.stack([d1.ravel(), d2.ravel()], axis=-1)[None]).reshape(-1, 2)
    sub = sub[np.hypot(sub[:, 0], sub[:, 1]) <= radius]
    active_flat = np.flatnonzero(active)
    tree = KDTree(np.column_stack([X1.flat[active_flat], X2.flat[active_flat]]))
    _, nearest = tree.query(sub)
    flat = weights.reshape(-1)
    np.add.at(flat, active_flat[nearest], (h / S) ** 2)
    return flat.reshape(X1.shape)


def _shift(mask: NDArray[np.bool_], offset: tuple[int, int]) -> NDArray[np.bool_]:
    """mask shifted so that out[i, j] = mask[i - di, j - dj], padded with False."""
    out = np.zeros_like(mask)
    di, dj = offset
    src = mask[
        max(0, -di) : mask.shape[0] - max(0, di),
        max(0, -dj) : mask.shape[1] - max(0, dj),
    ]
    out[
        max(0, di) : mask.shape[0] - max(0, -di),
        max(0, dj) : mask.shape[1] - max(0, -dj),
    ] = src
    return out
