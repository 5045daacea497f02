"""Tests for grid functions and graph geometry."""

import numpy as np
import pytest
from scipy.integrate import quad

from mcflow_mcp.domain import Domain, GhostPolicy
from mcflow_mcp.errors import GridMismatch, NonFiniteInput
from mcflow_mcp.graph import (
    GridFunction,
    area,
    boundary_integral,
    boundary_weights,
    compute_quantities,
    gradient,
    laplace_beltrami,
    surface_integral,
    tangential_gradient,
)


@pytest.fixture
def interval():
    return Domain.interval(0, 1, 64)


@pytest.fixture
def cosine(interval):
    return GridFunction.from_function(interval, lambda x: 0.3 * np.cos(np.pi * x))


class TestGridFunction:
    """Tests for GridFunction construction."""

    def test_rejects_wrong_size(self, interval):
        """Values must match the active node count."""
        with pytest.raises(GridMismatch):
            GridFunction(interval, np.zeros(10))

    def test_rejects_nan(self, interval):
        """Non-finite values are rejected."""
        values = np.zeros(interval.grid.n_active)
        values[3] = np.nan
        with pytest.raises(NonFiniteInput):
            GridFunction(interval, values)

    def test_values_are_read_only(self, interval):
        """Stored values cannot be mutated in place."""
        u = GridFunction.constant(interval, 1.0)
        with pytest.raises(ValueError):
            u.values[0] = 2.0

    def test_derived_uses_extrapolation(self, cosine):
        """derived() keeps domain and time but extrapolates ghosts."""
        w = cosine.derived(np.ones(cosine.grid.n_active))
        assert w.ghost_policy is GhostPolicy.EXTRAPOLATE
        assert w.t == cosine.t

    def test_check_same_grid(self, interval):
        """Functions on different resolutions do not mix."""
        u = GridFunction.constant(interval, 0.0)
        other = GridFunction.constant(Domain.interval(0, 1, 32), 0.0)
        with pytest.raises(GridMismatch):
            laplace_beltrami(u, other)


class TestGraphQuantities:
    """Tests for v, h, |A|^2 and the normal."""

    def test_flat_graph(self):
        """A constant graph has v = 1 and no curvature."""
        u = GridFunction.constant(Domain.disk(1.0, 24), 0.5)
        q = compute_quantities(u)
        np.testing.assert_allclose(q.active("v"), 1.0)
        np.testing.assert_allclose(q.active("h"), 0.0, atol=1e-12)
        np.testing.assert_allclose(q.active("A2"), 0.0, atol=1e-12)
        np.testing.assert_allclose(q.active("normal")[:, -1], 1.0)

    def test_gradient_vanishes_at_neumann_boundary(self, cosine):
        """Even reflection makes the centred gradient zero at the endpoints."""
        du = gradient(cosine).reshape(-1)[cosine.grid.active_flat]
        assert abs(du[0]) < 1e-14
        assert abs(du[-1]) < 1e-14

    def test_curve_quantities(self, cosine):
        """v and h match the closed forms of a cosine curve."""
        x = cosine.grid.points()[:, 0]
        slope = -0.3 * np.pi * np.sin(np.pi * x)
        second = -0.3 * np.pi**2 * np.cos(np.pi * x)
        v = np.sqrt(1 + slope**2)
        q = compute_quantities(cosine)
        np.testing.assert_allclose(q.active("v"), v, atol=1e-3)
        np.testing.assert_allclose(q.active("h"), -second / v**3, atol=5e-3)
        np.testing.assert_allclose(q.active("A2"), second**2 / v**6, atol=1e-2)

    def test_normal_is_unit(self, cosine):
        """The upward normal has unit length."""
        normal = compute_quantities(cosine).active("normal")
        np.testing.assert_allclose(np.linalg.norm(normal, axis=-1), 1.0)


class TestIntegrals:
    """Tests for surface and boundary integrals."""

    def test_interval_length(self, interval):
        """A flat graph over [0, 1] has length 1."""
        assert area(GridFunction.constant(interval, 2.0)) == pytest.approx(1.0)

    def test_curve_length(self, cosine):
        """Arclength of the cosine curve matches quadrature."""
        exact, _ = quad(lambda x: np.sqrt(1 + (0.3 * np.pi * np.sin(np.pi * x)) ** 2), 0, 1)
        assert area(cosine) == pytest.approx(exact, rel=1e-3)

    def test_disk_area(self):
        """A flat graph over the disk has area pi up to the cut-cell quadrature error."""
        u = GridFunction.constant(Domain.disk(1.0, 64), 0.0)
        assert surface_integral(u, 1.0) == pytest.approx(np.pi, abs=2e-3)

    def test_interval_boundary_is_two_points(self, interval):
        """Boundary integrals on the interval sum the endpoint values."""
        u = GridFunction.constant(interval, 0.0)
        assert boundary_integral(u, np.array([2.0, 3.0])) == pytest.approx(5.0)

    def test_disk_boundary_length(self):
        """Flat boundary weights add up to the circumference."""
        u = GridFunction.constant(Domain.disk(1.0, 64), 0.0)
        assert boundary_weights(u).sum() == pytest.approx(2 * np.pi, rel=1e-6)


class TestLaplaceBeltrami:
    """Tests for the Laplace-Beltrami operator."""

    def test_annihilates_constants(self, cosine):
        """Constants are in the kernel exactly."""
        phi = cosine.derived(np.full(cosine.grid.n_active, 3.0))
        np.testing.assert_allclose(laplace_beltrami(cosine, phi).values, 0.0, atol=1e-10)

    def test_flat_graph_is_laplacian(self, interval):
        """On a flat graph the operator is the Laplacian."""
        flat = GridFunction.constant(interval, 0.0)
        phi = GridFunction.from_function(interval, lambda x: np.cos(np.pi * x))
        x = interval.grid.points()[:, 0]
        result = laplace_beltrami(flat, phi).values
        np.testing.assert_allclose(result, -np.pi**2 * np.cos(np.pi * x), atol=0.05)


class TestTangentialGradient:
    """Tests for tangential projection."""

    def test_vertical_gradient_on_flat_graph(self):
        """The height gradient is normal to a flat graph."""
        u = GridFunction.constant(Domain.disk(1.0, 16), 0.0)
        vertical = np.zeros((u.grid.n_active, 3))
        vertical[:, -1] = 1.0
        np.testing.assert_allclose(tangential_gradient(u, vertical), 0.0, atol=1e-15)

    def test_projection_is_orthogonal_to_normal(self, cosine):
        """D_Gamma phi . n vanishes."""
        normal = compute_quantities(cosine).active("normal")
        tangent = tangential_gradient(cosine, lambda pts, heights: np.column_stack([pts, heights]))
        np.testing.assert_allclose(np.sum(tangent * normal, axis=-1), 0.0, atol=1e-12)

    def test_rejects_non_finite(self, cosine):
        """Non-finite ambient gradients are rejected."""
        bad = np.full((cosine.grid.n_active, 2), np.inf)
        with pytest.raises(NonFiniteInput):
            tangential_gradient(cosine, bad)
