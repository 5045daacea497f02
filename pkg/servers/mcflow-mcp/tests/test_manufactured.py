"""Tests for the self-similar family and its exponents."""

import math
from fractions import Fraction

import numpy as np
import pytest

from mcflow_mcp.diagnostics import NormExponents
from mcflow_mcp.domain import Domain
from mcflow_mcp.errors import McflowError, TimeAtSingularity
from mcflow_mcp.manufactured import (
    BlowupParameters,
    BumpProfile,
    SelfSimilarSolution,
    asymptotic_norm_exponent,
    blowup_experiment,
    convergence_study,
    exact_fields,
    exact_snapshot,
    exact_transport,
    fit_solver_growth,
    fitted_norm_slope,
    integrability_threshold,
    parabolic_rescaling_defect,
    resolved_tau,
    scaling_exponent,
    self_similar_inner_norm,
)


@pytest.fixture
def curve():
    return SelfSimilarSolution(Fraction(15, 32), BumpProfile(0.4, 0.3), np.array([0.1]))


@pytest.fixture
def surface():
    return SelfSimilarSolution(0.75, BumpProfile(0.5, 0.2), np.array([0.1, -0.1]))


class TestBlowupParameters:
    """Tests for eps0, alpha0 and the integrability threshold."""

    def test_reference_case(self):
        """n = 2, p = 2, q = 4 gives eps0 = 1/2 and alpha0 = 15/32."""
        params = BlowupParameters.of(2, 2, 4)
        assert params.eps0 == Fraction(1, 2)
        assert params.alpha0 == Fraction(15, 32)
        assert params.threshold == Fraction(7, 16)

    def test_threshold_matches_integrability(self):
        """The threshold is where the transport norm stops being finite."""
        for n, p, q in [(2, 2, 4), (1, 1, 2), (2, 1, 4)]:
            params = BlowupParameters.of(n, p, q)
            assert params.threshold == integrability_threshold(params.exponents)

    def test_alpha0_below_half(self):
        """alpha0 sits strictly between the threshold and 1/2."""
        params = BlowupParameters.of(1, 1, 2)
        assert params.threshold < params.alpha0 < Fraction(1, 2)

    def test_rejects_subcritical(self):
        """Only supercritical exponents have a blow-up family."""
        with pytest.raises(McflowError, match="not supercritical"):
            BlowupParameters.of(1, "inf", "inf")

    def test_describe(self):
        """describe() adds the exact parameters as strings."""
        info = BlowupParameters.of(2, 2, 4).describe()
        assert info["eps0"] == "1/2"
        assert info["alpha0"] == "15/32"
        assert info["gap"] == "-1/2"


class TestExponents:
    """Tests for the exponents of the inner norm."""

    def test_exact_values(self):
        """Fractions in, fractions out."""
        exps = NormExponents(2, 2, 4)
        assert scaling_exponent(exps, Fraction(15, 32)) == Fraction(-1, 8)
        assert asymptotic_norm_exponent(exps, Fraction(15, 32)) == Fraction(-3, 64)

    def test_coincide_at_half(self):
        """Both exponents agree at alpha = 1/2."""
        for n, p in [(1, 2), (2, 2), (2, 5)]:
            exps = NormExponents(n, p, 2)
            half = Fraction(1, 2)
            assert scaling_exponent(exps, half) == asymptotic_norm_exponent(exps, half)

    def test_float_alpha(self):
        """Float alphas give float exponents."""
        assert isinstance(scaling_exponent(NormExponents(1, 2, 2), 0.3), float)


class TestExactSolution:
    """Tests for the closed-form solution and its transport."""

    def test_profile_vanishes_outside(self):
        """The bump and its derivatives are zero off the support."""
        phi, dphi, d2phi = BumpProfile(0.5).evaluate(np.array([[0.6], [0.0]]))
        assert phi[0] == 0.0 and np.all(dphi[0] == 0) and np.all(d2phi[0] == 0)
        assert phi[1] == 1.0

    def test_time_derivative(self, curve):
        """d_t u matches a central difference in t."""
        x = np.linspace(-0.2, 0.4, 7)
        step = 1e-6
        numeric = (exact_fields(curve, x, 0.3 + step).u - exact_fields(curve, x, 0.3 - step).u) / (2 * step)
        np.testing.assert_allclose(exact_fields(curve, x, 0.3).dt_u, numeric, atol=1e-6)

    def test_space_derivatives(self, surface):
        """du and d^2 u match central differences."""
        x = np.array([[0.2, 0.0], [-0.1, 0.1], [0.15, -0.3]])
        step = 1e-6
        fields = exact_fields(surface, x, 0.5)
        for j in range(2):
            e = np.zeros(2)
            e[j] = step
            plus = exact_fields(surface, x + e, 0.5)
            minus = exact_fields(surface, x - e, 0.5)
            np.testing.assert_allclose(fields.du[:, j], (plus.u - minus.u) / (2 * step), atol=1e-6)
            np.testing.assert_allclose(fields.d2u[:, :, j], (plus.du - minus.du) / (2 * step), atol=1e-5)

    @pytest.mark.parametrize("fixture", ["curve", "surface"])
    def test_transport_makes_it_exact(self, fixture, request):
        """u_t = a_ij(du) u_ij + g pointwise."""
        sol = request.getfixturevalue(fixture)
        rng = np.random.default_rng(10)
        x = sol.center + rng.uniform(-0.3, 0.3, size=(50, sol.n))
        t = 0.4
        fields = exact_fields(sol, x, t)
        du = fields.du
        a = np.eye(sol.n) - du[:, :, None] * du[:, None, :] / (1 + np.sum(du * du, axis=-1))[:, None, None]
        g = exact_transport(sol, x, t)
        assert np.all(g[:, :-1] == 0)
        residual = fields.dt_u - np.einsum("kij,kij->k", a, fields.d2u) - g[:, -1]
        np.testing.assert_allclose(residual, 0.0, atol=1e-10)

    def test_singular_time(self, curve):
        """Evaluation at t >= 1 is refused."""
        with pytest.raises(TimeAtSingularity):
            exact_fields(curve, [0.0], 1.0)

    def test_parabolic_invariance(self, curve):
        """The family is invariant under parabolic rescaling about (c, 1)."""
        y = np.linspace(-0.3, 0.3, 11)
        for lam in (0.5, 2.0):
            np.testing.assert_allclose(parabolic_rescaling_defect(curve, y, 0.9, lam), 0.0, atol=1e-12)

    def test_support_check(self):
        """A support reaching the boundary is rejected."""
        domain = Domain.interval(0, 1, 32)
        with pytest.raises(McflowError):
            SelfSimilarSolution.centred_in(domain, 1.0, fraction=1.0).check_support(domain)
        SelfSimilarSolution.centred_in(domain, 1.0, fraction=0.8).check_support(domain)

    def test_snapshot_on_disk(self):
        """exact_snapshot samples every active node."""
        domain = Domain.disk(1.0, 16)
        sol = SelfSimilarSolution.centred_in(domain, 0.5)
        u = exact_snapshot(sol, domain, 0.0)
        assert u.values.size == domain.grid.n_active
        assert 0.0 < u.sup_abs() <= 1.0


class TestOracleNorms:
    """Tests for the self-similar transport norms."""

    def test_flat_slope_at_half(self):
        """At alpha = 1/2 with n = p = 2 the inner norm is scale invariant."""
        domain = Domain.disk(1.0, 16)
        sol = SelfSimilarSolution.centred_in(domain, 0.5, amplitude=0.3)
        slope = fitted_norm_slope(sol, NormExponents(2, 2, 4), np.logspace(-1, -3, 5))
        assert abs(slope) <= 0.02

    def test_sup_norm_grows(self, curve):
        """Below 1/2 the sup of the transport grows towards t = 1."""
        exps = NormExponents(1, "inf", 2)
        assert self_similar_inner_norm(curve, exps, 0.99) > self_similar_inner_norm(curve, exps, 0.5)


class TestConvergence:
    """Tests for the refinement study."""

    @pytest.mark.slow
    def test_space_order(self):
        """The semi-implicit scheme converges at second order in h with dt ~ h^2."""
        domain = Domain.interval(0, 1, 32)
        sol = SelfSimilarSolution.centred_in(domain, 1.0, amplitude=0.5, fraction=0.8)
        study = convergence_study(sol, domain, [32, 64, 128], final_time=0.02)
        assert study.order >= 1.5
        assert [row["resolution"] for row in study.rows()] == [32, 64, 128]
        assert study.errors[-1] < study.errors[0]

    def test_unknown_mode(self):
        """Only space and time studies exist."""
        domain = Domain.interval(0, 1, 32)
        sol = SelfSimilarSolution.centred_in(domain, 1.0)
        with pytest.raises(McflowError):
            convergence_study(sol, domain, [32], mode="both")


class TestFitSolverGrowth:
    """Tests for the solver-only growth fit."""

    def test_tracking_samples(self):
        """Samples that follow the exact values give their slope."""
        taus = np.logspace(0, -2, 9)
        values = 2.0 * taus**-0.05
        growth, source = fit_solver_growth(taus, values, values, agreement=0.01)
        assert source == "solver"
        assert growth == pytest.approx(-0.05)

    def test_disagreeing_samples(self):
        """A run that misses the exact values by 10% gives no exponent."""
        taus = np.logspace(0, -2, 9)
        exact = 2.0 * taus**-0.05
        growth, source = fit_solver_growth(taus, 1.1 * exact, exact, agreement=0.01)
        assert source == "unresolved"
        assert math.isnan(growth)

    def test_window_under_a_decade(self):
        """Tracking samples must span a factor of ten in 1 - t."""
        taus = np.logspace(0, -0.5, 5)
        values = taus**-0.05
        assert fit_solver_growth(taus, values, values, agreement=0.01)[1] == "unresolved"

    def test_too_few_tracking_samples(self):
        """Two agreeing samples are not enough."""
        taus = np.array([1.0, 0.5, 0.1, 0.01])
        exact = taus**-0.05
        solver = exact * np.array([1.0, 1.0, 1.5, 1.5])
        assert fit_solver_growth(taus, solver, exact, agreement=0.01)[1] == "unresolved"


class TestBlowupExperiment:
    """Tests for the supercritical experiment."""

    @pytest.mark.slow
    def test_curve_family(self):
        """n = 1, p = 1, q = 2: the solver's sup|du| grows like (1 - t)^(-1/20)."""
        params = BlowupParameters.of(1, 1, 2)
        report = blowup_experiment(
            params,
            Domain.interval(-1, 1, 1024),
            ladder=(1024,),
            deltas=(1e-1, 5e-2),
            amplitude=0.3,
        )
        assert report.alpha == pytest.approx(float(Fraction(9, 20)))
        assert report.growth_source == "solver"
        assert report.growth_exponent == pytest.approx(-0.05, abs=0.005)
        assert report.growth_matches
        assert report.classification == "BlowupDetected"
        assert report.solver_terminal_state == "completed"
        assert set(report.level_growth) == {1024}
        assert report.norm_is_cauchy
        assert report.predicted_growth == pytest.approx(-0.05)
        assert set(report.partial_norms) == {0.1, 0.05}
        assert report.as_dict()["alpha0"] == "9/20"

    @pytest.mark.slow
    def test_unresolved_grid_is_not_blowup(self):
        """A grid too coarse to follow the profile gives no verdict from the exact solution."""
        report = blowup_experiment(
            BlowupParameters.of(2, 2, 4),
            Domain.disk(1.0, 16),
            ladder=(16,),
            deltas=(1e-1, 5e-2),
        )
        assert report.growth_source == "unresolved"
        assert math.isnan(report.growth_exponent)
        assert not report.growth_matches
        assert report.classification == "unresolved"
        assert report.level_growth == {}
        assert report.oracle_growth == pytest.approx(-1 / 32, abs=1e-9)

    def test_empty_ladder(self):
        """At least one resolution is needed."""
        with pytest.raises(McflowError, match="ladder is empty"):
            blowup_experiment(BlowupParameters.of(1, 1, 2), Domain.interval(-1, 1, 32), ladder=())

    def test_dimension_mismatch(self):
        """Parameters for n = 2 need a disk."""
        with pytest.raises(McflowError):
            blowup_experiment(BlowupParameters.of(2, 2, 4), Domain.interval(0, 1, 32))


class TestResolvedTau:
    """Tests for the resolution floor of blow-up runs."""

    def test_floor(self):
        """The support radius r sqrt(1 - t) spans the requested cells at the floor."""
        domain = Domain.interval(-1, 1, 100)
        sol = SelfSimilarSolution.centred_in(domain, 0.45)
        tau = resolved_tau(sol, domain, 10)
        assert sol.profile.radius * math.sqrt(tau) == pytest.approx(10 * domain.spacing)
