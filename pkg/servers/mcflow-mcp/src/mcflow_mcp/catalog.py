"""Named initial data and transport fields.

Every entry is looked up by name with a dict of parameters, which is how
run configurations refer to them.
"""

import logging
import math
from collections.abc import Callable, Mapping
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import RegularGridInterpolator

from .domain import Domain, DomainKind
from .errors import ConfigInvalid
from .graph import GridFunction
from .manufactured import (
    BumpProfile,
    SelfSimilarSolution,
    exact_snapshot,
    transport_field,
)
from .solver import TransportField

logger = logging.getLogger(__name__)


# =============================================================================
# Initial data
# =============================================================================


def _center(domain: Domain) -> NDArray[np.float64]:
    if domain.kind is DomainKind.INTERVAL:
        return np.array([(domain.a + domain.b) / 2])
    return np.zeros(2)


def _coords(domain: Domain) -> NDArray[np.float64]:
    return domain.grid.points()


def initial_zero(domain: Domain) -> GridFunction:
    return GridFunction.constant(domain, 0.0)


def initial_constant(domain: Domain, value: float = 0.0) -> GridFunction:
    return GridFunction.constant(domain, value)


def initial_cosine(domain: Domain, amplitude: float = 0.1, mode: int = 1) -> GridFunction:
    """a cos(k pi (x - a) / (b - a)) on the interval; a cos(k pi |x| / r) on the disk.

    Both satisfy the Neumann condition exactly.
    """
    pts = _coords(domain)
    if domain.kind is DomainKind.INTERVAL:
        phase = mode * math.pi * (pts[:, 0] - domain.a) / (domain.b - domain.a)
    else:
        phase = mode * math.pi * np.linalg.norm(pts, axis=-1) / domain.radius
    return GridFunction(domain, amplitude * np.cos(phase))


def initial_bump(
    domain: Domain, amplitude: float = 1.0, radius: float | None = None, center=None
) -> GridFunction:
    """Smooth bump A (1 - |x - c|^2 / r^2)^4 supported inside the domain."""
    c = _center(domain) if center is None else np.asarray(center, dtype=float).reshape(-1)
    if radius is None:
        inradius = (domain.b - domain.a) / 2 if domain.kind is DomainKind.INTERVAL else domain.radius
        radius = inradius / 2
    phi, _, _ = BumpProfile(radius, amplitude).evaluate(_coords(domain) - c)
    return GridFunction(domain, phi)


def initial_linear(domain: Domain, slope: float = 0.1) -> GridFunction:
    """slope * x_1; its Neumann closure differs from the function near the boundary."""
    return GridFunction(domain, slope * _coords(domain)[:, 0])


def initial_table(domain: Domain, path: str) -> GridFunction:
    """Values read from a CSV with columns x[, y], u, interpolated to the grid."""
    interpolate = _table_interpolator(Path(path), domain.dim, value_columns=1)
    return GridFunction(domain, interpolate(_coords(domain))[:, 0])


def initial_self_similar(
    domain: Domain, alpha: float = 0.5, amplitude: float = 1.0, fraction: float = 0.5
) -> GridFunction:
    sol = SelfSimilarSolution.centred_in(domain, alpha, amplitude, fraction)
    sol.check_support(domain)
    return exact_snapshot(sol, domain, 0.0)


INITIAL_DATA: dict[str, Callable[..., GridFunction]] = {
    "zero": initial_zero,
    "constant": initial_constant,
    "cosine": initial_cosine,
    "bump": initial_bump,
    "linear": initial_linear,
    "table": initial_table,
    "self_similar": initial_self_similar,
}


# =============================================================================
# Transport fields
# =============================================================================


def _zeros(points, heights):
    return np.zeros(np.shape(heights) + (np.shape(points)[-1] + 1,))


def transport_zero() -> TransportField:
    return TransportField.zero()


def transport_vertical(value: float = 1.0) -> TransportField:
    return TransportField.constant_vertical(value)


def transport_tilted(slope: float = 1.0) -> TransportField:
    """(0, ..., 0, slope * x_1): Hoelder constant |slope| for exponent 1."""

    def evaluator(points, heights, t):
        out = _zeros(points, heights)
        out[..., -1] = slope * np.asarray(points)[..., 0]
        return out

    return TransportField(evaluator, tag=f"tilted({slope:g})", holder_constant=abs(slope))


def transport_rotating(speed: float = 1.0, scale: float = 1.0) -> TransportField:
    """Bounded smooth field turning in the (x_1, x_{n+1}) plane with time."""

    def evaluator(points, heights, t):
        out = _zeros(points, heights)
        x1 = np.asarray(points)[..., 0]
        envelope = np.exp(-(x1 * x1 + np.asarray(heights) ** 2) / (scale * scale))
        out[..., 0] = speed * envelope * math.sin(t)
        out[..., -1] = speed * envelope * math.cos(t)
        return out

    return TransportField(evaluator, tag=f"rotating({speed:g})")


def transport_cosine(amplitude: float = 1.0, frequency: float = 1.0) -> TransportField:
    """Vertical a cos(omega t)."""

    def evaluator(points, heights, t):
        out = _zeros(points, heights)
        out[..., -1] = amplitude * math.cos(frequency * t)
        return out

    return TransportField(evaluator, tag=f"cosine({amplitude:g},{frequency:g})")


def transport_table(path: str) -> TransportField:
    """Field read from a CSV with columns x[, y], z, t, f_1, ..., f_{n+1}.

    Values are interpolated linearly on the tensor grid of the columns.
    """
    table = _load_table(Path(path))
    n_value = None
    # base coordinates, height and time, then n + 1 components
    for dim in (1, 2):
        if table.shape[1] == (dim + 2) + (dim + 1):
            n_value = dim
    if n_value is None:
        raise ConfigInvalid(f"Transport table {path} has {table.shape[1]} columns", key="transport.path")
    interpolate = _grid_interpolator(table, n_value + 2, n_value + 1, path)

    def evaluator(points, heights, t):
        points = np.asarray(points, dtype=float)
        heights = np.asarray(heights, dtype=float)
        query = np.column_stack(
            [points.reshape(-1, n_value), heights.reshape(-1), np.full(heights.size, t)]
        )
        return interpolate(query).reshape(heights.shape + (n_value + 1,))

    return TransportField(evaluator, tag=f"table({Path(path).name})", kind="table-backed")


TRANSPORTS: dict[str, Callable[..., TransportField]] = {
    "zero": transport_zero,
    "vertical": transport_vertical,
    "tilted": transport_tilted,
    "rotating": transport_rotating,
    "cosine": transport_cosine,
    "table": transport_table,
}


# =============================================================================
# Tables
# =============================================================================


def _load_table(path: Path) -> NDArray[np.float64]:
    if not path.exists():
        raise ConfigInvalid(f"Table file not found: {path}", key="path")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if not np.all(np.isfinite(data)):
        raise ConfigInvalid(f"Table {path} has non-finite entries", key="path")
    return data


def _grid_interpolator(
    table: NDArray[np.float64], n_axes: int, n_values: int, path
) -> RegularGridInterpolator:
    axes = [np.unique(table[:, k]) for k in range(n_axes)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != len(table):
        raise ConfigInvalid(f"Table {path} is not a full tensor grid", key="path")
    order = np.lexsort(tuple(table[:, k] for k in reversed(range(n_axes))))
    values = table[order, n_axes : n_axes + n_values].reshape(shape + (n_values,))
    return RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=None)


def _table_interpolator(path: Path, dim: int, value_columns: int) -> Callable:
    table = _load_table(path)
    if table.shape[1] != dim + value_columns:
        raise ConfigInvalid(
            f"Table {path} has {table.shape[1]} columns, expected {dim + value_columns}",
            key="initial.path",
        )
    interpolator = _grid_interpolator(table, dim, value_columns, path)
    return lambda pts: interpolator(np.asarray(pts).reshape(-1, dim))


# =============================================================================
# Lookup
# =============================================================================


def build_initial(domain: Domain, name: str, params: Mapping[str, Any]) -> GridFunction:
    """Initial datum by catalogue name.

    Raises:
        ConfigInvalid: For an unknown name or parameters it does not accept.
    """
    if name not in INITIAL_DATA:
        raise ConfigInvalid(f"Unknown initial datum '{name}'", key="initial.name")
    try:
        return INITIAL_DATA[name](domain, **params)
    except TypeError as e:
        raise ConfigInvalid(f"Bad parameters for initial datum '{name}': {e}", key="initial.params")


def build_transport(domain: Domain, name: str, params: Mapping[str, Any]) -> TransportField:
    """Transport field by catalogue name; "self_similar" is centred in the domain."""
    if name == "self_similar":
        params = dict(params)
        fraction = params.pop("fraction", 0.5)
        alpha = params.pop("alpha", 0.5)
        amplitude = params.pop("amplitude", 1.0)
        if params:
            raise ConfigInvalid(
                f"Bad parameters for transport 'self_similar': {sorted(params)}",
                key="transport.params",
            )
        sol = SelfSimilarSolution.centred_in(domain, alpha, amplitude, fraction)
        sol.check_support(domain)
        return transport_field(sol)
    if name not in TRANSPORTS:
        raise ConfigInvalid(f"Unknown transport '{name}'", key="transport.name")
    try:
        return TRANSPORTS[name](**params)
    except TypeError as e:
        raise ConfigInvalid(f"Bad parameters for transport '{name}': {e}", key="transport.params")
