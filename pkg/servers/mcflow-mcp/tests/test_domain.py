"""Tests for base domains, reflection and grids."""

import numpy as np
import pytest

from mcflow_mcp.domain import (
    GHOST_LAYERS,
    Domain,
    DomainKind,
    GhostPolicy,
    convexity_margin,
    verify_Q_properties,
)
from mcflow_mcp.errors import McflowError, OutsideDomain, PointTooDeep


class TestDomainConstruction:
    """Tests for Domain validation and scalars."""

    def test_interval_defaults(self):
        """Interval R defaults to half the length."""
        domain = Domain.interval(0, 2, 20)
        assert domain.kind is DomainKind.INTERVAL
        assert domain.dim == 1
        assert domain.R == pytest.approx(1.0)
        assert domain.spacing == pytest.approx(0.1)

    def test_interval_surrogate_radius(self):
        """A configured reflection radius replaces the default R."""
        assert Domain.interval(0, 1, 10, reflection_radius=3.0).R == 3.0

    def test_disk_uses_radius(self):
        """Disk R is its radius and spacing is the diameter over N."""
        domain = Domain.disk(2.0, 32)
        assert domain.R == 2.0
        assert domain.spacing == pytest.approx(0.125)

    def test_rejects_reversed_interval(self):
        """a >= b is rejected."""
        with pytest.raises(McflowError):
            Domain.interval(1, 0, 10)

    def test_rejects_coarse_disk(self):
        """Disk grids need at least 16 cells across."""
        with pytest.raises(McflowError, match="at least 16"):
            Domain.disk(1.0, 8)

    def test_kind_accepts_string(self):
        """A string kind is coerced to the enum."""
        assert Domain("disk", 16).kind is DomainKind.DISK

    def test_scaled_domain(self):
        """scaled(lam) divides lengths and keeps the resolution."""
        domain = Domain.interval(0, 2, 20, reflection_radius=4.0).scaled(2.0)
        assert (domain.a, domain.b, domain.resolution) == (0.0, 1.0, 20)
        assert domain.R == pytest.approx(2.0)
        assert Domain.disk(3.0, 16).scaled(3.0).radius == pytest.approx(1.0)

    def test_describe(self):
        """describe() reports the kind-specific fields."""
        info = Domain.disk(1.0, 16).describe()
        assert info["kind"] == "disk"
        assert info["radius"] == 1.0
        assert "a" not in info


class TestReflection:
    """Tests for projection, reflection and Q."""

    def test_interval_reflection(self):
        """Points near an endpoint reflect across it with outward normal."""
        domain = Domain.interval(0, 1, 10)
        data = domain.reflection_arrays([0.1, 0.95])
        np.testing.assert_allclose(data.reflected[:, 0], [-0.1, 1.05])
        np.testing.assert_allclose(data.normal[:, 0], [-1.0, 1.0])
        assert np.all(data.Q == 0)

    def test_disk_reflection(self):
        """x~ = (2r/|x| - 1) x and Q = (r/|x| - 1) P on the disk."""
        domain = Domain.disk(1.0, 16)
        data = domain.reflect([0.8, 0.0])
        np.testing.assert_allclose(data.reflected, [1.2, 0.0])
        np.testing.assert_allclose(data.zeta, [1.0, 0.0])
        np.testing.assert_allclose(data.Q, [[0.0, 0.0], [0.0, 0.25]], atol=1e-15)
        assert data.distance == pytest.approx(0.2)

    def test_boundary_point_reflects_to_itself(self):
        """Q vanishes and x~ = x on the boundary."""
        domain = Domain.disk(1.0, 16)
        data = domain.reflection_arrays([[0.6, 0.8]])
        np.testing.assert_allclose(data.reflected, [[0.6, 0.8]])
        np.testing.assert_allclose(data.Q, 0.0, atol=1e-15)

    def test_too_deep(self):
        """Points at distance >= R/2 cannot be projected."""
        with pytest.raises(PointTooDeep):
            Domain.disk(1.0, 16).reflect([0.1, 0.0])

    def test_outside(self):
        """Points outside the closed domain are rejected."""
        with pytest.raises(OutsideDomain):
            Domain.interval(0, 1, 10).reflection_arrays([1.5])

    def test_project_to_boundary(self):
        """The nearest boundary point carries the disk's second form."""
        domain = Domain.disk(2.0, 16)
        point = domain.project_to_boundary([0.0, 1.5])
        np.testing.assert_allclose(point.position, [0.0, 2.0])
        np.testing.assert_allclose(point.normal, [0.0, 1.0])
        assert point.evaluate(np.array([1.0, 0.0])) == pytest.approx(-0.5)

    def test_convexity_margin_nonnegative(self):
        """|x~ - y| >= |x - y| on a convex domain."""
        domain = Domain.disk(1.0, 16)
        rng = np.random.default_rng(0)
        x = domain.sample_tube(rng, 200)
        y = domain.sample_interior(rng, 200)
        assert np.all(convexity_margin(domain, x, y) >= -1e-12)

    def test_q_properties_on_unit_disk(self):
        """Q is symmetric, kills nu and e_{n+1}, and |Q| <= 2 dist."""
        domain = Domain.disk(1.0, 16)
        sample = domain.sample_tube(np.random.default_rng(1), 300)
        report = verify_Q_properties(domain, sample)
        assert report.passed(1e-12)
        assert report.derivative_mismatch < 1e-6
        assert report.sample_size == 300

    def test_q_properties_on_interval(self):
        """Q is identically zero on the interval."""
        domain = Domain.interval(0, 1, 10)
        report = verify_Q_properties(domain, domain.sample_tube(np.random.default_rng(2), 50))
        assert report.passed()
        assert report.derivative_bound == 0.0

    def test_sample_tube_depth(self):
        """Tube samples stay within R/2 of the boundary."""
        domain = Domain.disk(1.0, 16)
        pts = domain.sample_tube(np.random.default_rng(3), 500)
        dist = domain.dist_to_boundary(pts)
        assert np.all(dist >= -1e-12)
        assert np.all(dist < 0.5)


class TestGrid:
    """Tests for the padded grid and ghost closures."""

    def test_interval_grid(self):
        """N + 1 active nodes with exact endpoints and trapezoid weights."""
        grid = Domain.interval(0, 1, 10).grid
        assert grid.n_active == 11
        pts = grid.points()[:, 0]
        assert pts[0] == 0.0 and pts[-1] == 1.0
        assert grid.weights.sum() == pytest.approx(1.0)
        assert grid.boundary.sum() == 2

    def test_disk_grid_area(self):
        """Cut-cell weights sum to the disk area and vanish off the disk."""
        grid = Domain.disk(1.0, 64).grid
        assert grid.weights.sum() == pytest.approx(np.pi, abs=2e-3)
        assert np.all(grid.weights[~grid.active] == 0.0)
        assert np.all(np.hypot(*grid.points().T) <= 1.0 + 1e-9)

    def test_disk_cut_cells_are_partial(self):
        """Cells crossed by the circle carry less than h^2, interior cells exactly h^2."""
        grid = Domain.disk(1.0, 32).grid
        centre = grid.weights[grid.shape[0] // 2, grid.shape[1] // 2]
        assert centre == pytest.approx(grid.h**2)
        pole = grid.weights[grid.shape[0] - 1 - GHOST_LAYERS, grid.shape[1] // 2]
        assert 0.0 < pole < grid.h**2

    def test_disk_second_moment(self):
        """Cut-cell weights integrate x^2 over the unit disk to pi / 4."""
        grid = Domain.disk(1.0, 64).grid
        integral = np.sum(grid.weights * grid.coords[0] ** 2)
        assert integral == pytest.approx(np.pi / 4, abs=1e-2)

    def test_interval_neumann_is_even_reflection(self):
        """Neumann ghosts mirror the active values."""
        grid = Domain.interval(0, 1, 4).grid
        values = np.arange(5.0)
        ghosts = grid.closure(GhostPolicy.NEUMANN) @ values
        padded = np.full(grid.shape, np.nan)
        padded.flat[grid.active_flat] = values
        padded.flat[grid.ghost_flat] = ghosts
        np.testing.assert_allclose(padded, [2, 1, 0, 1, 2, 3, 4, 3, 2])

    def test_extrapolation_reproduces_quadratics(self):
        """Extrapolated ghosts are exact for quadratics."""
        grid = Domain.interval(0, 1, 8).grid
        x = grid.points()[:, 0]
        ghost_x = grid.points(grid.ghost)[:, 0]
        ghosts = grid.closure(GhostPolicy.EXTRAPOLATE) @ (1.0 + x + x**2)
        np.testing.assert_allclose(ghosts, 1.0 + ghost_x + ghost_x**2, atol=1e-10)

    def test_disk_neumann_preserves_constants(self):
        """Closure rows sum to one so constants stay constant."""
        grid = Domain.disk(1.0, 24).grid
        ghosts = grid.closure(GhostPolicy.NEUMANN) @ np.ones(grid.n_active)
        np.testing.assert_allclose(ghosts, 1.0, atol=1e-12)
