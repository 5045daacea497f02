"""Tests for backward heat kernels and their reflections."""

import numpy as np
import pytest

from mcflow_mcp.domain import Domain
from mcflow_mcp.errors import McflowError, PointTooDeep, TimeOrderViolation
from mcflow_mcp.kernels import (
    KernelSpec,
    cutoff,
    eval_rho,
    eval_rho_tilde,
    eval_truncated,
    fit_reflection_constant,
    huisken_identity_residual,
    identity_scale,
    reflected_inequality_margin,
)


@pytest.fixture
def disk():
    return Domain.disk(1.0, 16)


@pytest.fixture
def disk_spec():
    return KernelSpec(pole=[0.9, 0.0, 0.0], s=1.0, cutoff_radius=1.0)


@pytest.fixture
def wide_spec():
    return KernelSpec(pole=[0.9, 0.0, 0.0], s=1.0, cutoff_radius=8.0)


def finite_difference_gradient(func, X, step=1e-5):
    X = np.asarray(X, dtype=float)
    out = np.zeros(X.shape[-1])
    for i in range(X.shape[-1]):
        e = np.zeros_like(X)
        e[i] = step
        out[i] = (func(X + e) - func(X - e)) / (2 * step)
    return out


class TestKernelSpec:
    """Tests for KernelSpec validation."""

    def test_rejects_nonpositive_time(self):
        """The pole time must be positive."""
        with pytest.raises(McflowError):
            KernelSpec(pole=[0.0, 0.0], s=0.0, cutoff_radius=1.0)

    def test_rejects_bad_fractions(self):
        """The plateau must sit inside the support."""
        with pytest.raises(McflowError):
            KernelSpec(pole=[0.0, 0.0], s=1.0, cutoff_radius=1.0, inner_fraction=0.5, outer_fraction=0.25)

    def test_dimension(self, disk_spec):
        """n counts base coordinates."""
        assert disk_spec.n == 2
        np.testing.assert_allclose(disk_spec.base_pole, [0.9, 0.0])


class TestCutoff:
    """Tests for the smooth cutoff."""

    def test_plateau_and_support(self):
        """eta is 1 on the inner ball and 0 outside the outer one."""
        spec = KernelSpec(pole=[0.0, 0.0], s=1.0, cutoff_radius=16.0)
        eta, deta, _ = cutoff(spec, np.array([0.0, 0.99, 4.0, 9.0]))
        np.testing.assert_allclose(eta, [1.0, 1.0, 0.0, 0.0])
        np.testing.assert_allclose(deta, 0.0)

    def test_monotone_between(self):
        """eta decreases across the transition."""
        spec = KernelSpec(pole=[0.0, 0.0], s=1.0, cutoff_radius=16.0)
        eta, deta, _ = cutoff(spec, np.linspace(1.0, 4.0, 50))
        assert np.all(np.diff(eta) <= 0)
        assert np.all(deta <= 0)


class TestBackwardHeatKernel:
    """Tests for rho."""

    def test_value_at_pole(self):
        """rho(Y, t) = (4 pi (s - t))^{-n/2}."""
        spec = KernelSpec(pole=[0.3, 0.1], s=1.0, cutoff_radius=1.0)
        assert eval_rho(spec, [0.3, 0.1], 0.75).value == pytest.approx(1 / np.sqrt(np.pi))

    def test_time_order(self):
        """Evaluation at t >= s is refused unless floored."""
        spec = KernelSpec(pole=[0.0, 0.0], s=1.0, cutoff_radius=1.0)
        with pytest.raises(TimeOrderViolation):
            eval_rho(spec, [0.1, 0.0], 1.0)
        assert np.isfinite(eval_rho(spec, [0.1, 0.0], 1.0, floor=True).value)

    def test_huisken_identity(self):
        """The identity holds to round-off for every unit direction."""
        spec = KernelSpec(pole=[0.2, -0.1, 0.3], s=0.5, cutoff_radius=1.0)
        rng = np.random.default_rng(4)
        X = rng.normal(scale=0.3, size=(200, 3))
        w = rng.normal(size=(200, 3))
        w /= np.linalg.norm(w, axis=-1, keepdims=True)
        residual = huisken_identity_residual(spec, X, 0.3, w)
        assert np.all(np.abs(residual) <= 1e-10 * identity_scale(spec, X, 0.3))

    def test_identity_requires_unit_direction(self):
        """Non-unit directions are rejected."""
        spec = KernelSpec(pole=[0.0, 0.0], s=1.0, cutoff_radius=1.0)
        with pytest.raises(McflowError, match="unit"):
            huisken_identity_residual(spec, [0.1, 0.1], 0.5, [1.0, 1.0])


class TestReflectedKernel:
    """Tests for rho~ and the truncated pair."""

    def test_interval_reflection_is_mirror(self):
        """On the interval rho~ is rho at the mirrored point."""
        domain = Domain.interval(0, 1, 10)
        spec = KernelSpec(pole=[0.05, 0.2], s=1.0, cutoff_radius=1.0)
        X = np.array([0.1, 0.3])
        mirrored = eval_rho(spec, [-0.1, 0.3], 0.8)
        reflected = eval_rho_tilde(spec, domain, X, 0.8)
        assert reflected.value == pytest.approx(mirrored.value)
        assert reflected.grad[0] == pytest.approx(-mirrored.grad[0])
        assert reflected.grad[1] == pytest.approx(mirrored.grad[1])

    def test_disk_gradient_matches_finite_differences(self, disk, disk_spec):
        """Analytic D rho~ agrees with central differences."""
        X = np.array([0.8, 0.1, 0.2])
        analytic = eval_rho_tilde(disk_spec, disk, X, 0.9).grad
        numeric = finite_difference_gradient(lambda Z: eval_rho_tilde(disk_spec, disk, Z, 0.9).value, X)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8 * np.abs(analytic).max())

    def test_disk_hessian_matches_finite_differences(self, disk, disk_spec):
        """Analytic D^2 rho~ agrees with differences of the gradient."""
        X = np.array([0.8, 0.1, 0.2])
        analytic = eval_rho_tilde(disk_spec, disk, X, 0.9).hess
        numeric = np.stack(
            [
                finite_difference_gradient(
                    lambda Z, i=i: eval_rho_tilde(disk_spec, disk, Z, 0.9).grad[i], X
                )
                for i in range(3)
            ]
        )
        np.testing.assert_allclose(analytic, numeric, atol=1e-5 * np.abs(analytic).max())

    def test_disk_time_derivative(self, disk, disk_spec):
        """Analytic d_t rho~ agrees with a central difference in t."""
        X = np.array([0.8, 0.1, 0.2])
        step = 1e-6
        numeric = (
            eval_rho_tilde(disk_spec, disk, X, 0.9 + step).value
            - eval_rho_tilde(disk_spec, disk, X, 0.9 - step).value
        ) / (2 * step)
        assert eval_rho_tilde(disk_spec, disk, X, 0.9).dt == pytest.approx(numeric, rel=1e-5)

    def test_neumann_condition_on_boundary(self, disk, wide_spec):
        """D(rho_1 + rho_2) has no normal component on the boundary."""
        theta = np.linspace(-0.5, 0.5, 21)
        X = np.stack([np.cos(theta), np.sin(theta), 0.1 * np.ones_like(theta)], axis=-1)
        total = eval_truncated(wide_spec, disk, X, 0.95).total
        normal = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)
        flux = np.sum(total.grad * normal, axis=-1)
        scale = np.linalg.norm(total.grad, axis=-1).max()
        assert np.all(np.abs(flux) <= 1e-10 * scale)

    def test_deep_points(self, disk, wide_spec):
        """Deep points raise by default and give rho_2 = 0 when asked."""
        X = np.array([[0.0, 0.0, 0.0], [0.95, 0.0, 0.0]])
        with pytest.raises(PointTooDeep):
            eval_truncated(wide_spec, disk, X, 0.9)
        values = eval_truncated(wide_spec, disk, X, 0.9, deep="zero")
        assert values.rho2.value[0] == 0.0
        assert values.rho2.value[1] > 0.0

    def test_unknown_deep_policy(self, disk, disk_spec):
        """Only raise and zero are accepted."""
        with pytest.raises(McflowError, match="deep-point"):
            eval_truncated(disk_spec, disk, [[0.9, 0.0, 0.0]], 0.5, deep="clip")


class TestReflectionConstant:
    """Tests for fitting the reflected-kernel constant."""

    def test_interval_needs_no_constant(self):
        """A flat boundary reflects the identity exactly."""
        domain = Domain.interval(0, 1, 10)
        spec = KernelSpec(pole=[0.1, 0.0], s=1.0, cutoff_radius=1.0)
        points = np.column_stack([np.linspace(0.0, 0.2, 15), np.linspace(-0.2, 0.2, 15)])
        fit = fit_reflection_constant(spec, domain, points, [0.05, 0.2, 0.8])
        assert fit.c8 == 0.0
        assert sorted(fit.per_tau) == [0.05, 0.2, 0.8]

    def test_fitted_constant_bounds_margin(self, disk, disk_spec):
        """With the fitted constant the margin is nonpositive on the sample."""
        rng = np.random.default_rng(5)
        base = disk.sample_tube(rng, 100, depth=0.3)
        points = np.column_stack([base, rng.uniform(-0.2, 0.2, size=100)])
        fit = fit_reflection_constant(disk_spec, disk, points, [0.1])
        assert 0.0 <= fit.c8 < np.inf
        w = rng.normal(size=(100, 3))
        w /= np.linalg.norm(w, axis=-1, keepdims=True)
        margin = reflected_inequality_margin(disk_spec, disk, points, 0.9, w, fit.c8)
        kernel = eval_rho_tilde(disk_spec, disk, points, 0.9)
        assert np.all(margin <= 1e-8 * kernel.value * (2 / 0.1 + 1 / 0.01))
