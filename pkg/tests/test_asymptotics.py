import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from psiq import (
    ModelParams,
    StationaryDistribution,
    asymptotic_point,
    decay_H,
    decay_K,
    gaussian_limit,
    gen_fun_asymptotic,
    generating_function,
    laplace_expand,
    log_marginal_asymptotic,
    log_sharp_density,
    log_sharp_permanent,
    marginal_asymptotics,
    marginals,
    params_from_scale,
    permanent_ps_log_pmf,
    phi,
    prefactor_g,
    psi,
    sharp_density,
    sharp_permanent,
    solve_stationary,
)

P_HALF = params_from_scale(A=100.0, rho=0.5)  # mu = nu = theta = 1, alpha = 0.5

from functools import lru_cache


@lru_cache(maxsize=None)
def solved_half(A: float):
    """Memoized exact solve at rho = 0.5 (shared across the slow tests)."""
    return solve_stationary(params_from_scale(A=A, rho=0.5), tol=1e-10)


class TestPhiPsi:
    @pytest.mark.parametrize("rho", [0.2, 0.5, 0.9])
    def test_phi_zero_at_fluid_point(self, rho):
        assert phi(rho / (1 - rho), rho) == pytest.approx(0.0, abs=1e-14)

    def test_phi_at_origin(self):
        assert phi(0.0, 0.5) == pytest.approx(math.log(2), rel=1e-14)

    def test_phi_at_three(self):
        # 3*log(6) - 4*log(4) + log(2) = 3*log(3) - 4*log(2)
        assert phi(3.0, 0.5) == pytest.approx(3 * math.log(3) - 4 * math.log(2), rel=1e-13)

    def test_phi_rejects_bad_rho(self):
        for rho in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                phi(1.0, rho)

    def test_phi_rejects_negative_x(self):
        with pytest.raises(ValueError):
            phi(-0.1, 0.5)

    def test_psi_values(self):
        assert psi(1.0) == 0.0
        assert psi(0.0) == 1.0
        assert psi(3.0) == pytest.approx(3 * math.log(3) - 2, rel=1e-14)

    def test_vectorized(self):
        x = np.array([0.0, 0.5, 1.0, 2.0])
        np.testing.assert_allclose(phi(x, 0.5), [phi(v, 0.5) for v in x], rtol=1e-14)
        np.testing.assert_allclose(psi(x), [psi(v) for v in x], rtol=1e-14)

    def test_phi_derivative_identity(self):
        # exp(phi'(x)) = x / (rho*(x+1)), checked by central differences
        rho = 0.35
        h = 1e-7
        for x in np.linspace(0.05, 6.0, 40):
            deriv = (phi(x + h, rho) - phi(x - h, rho)) / (2 * h)
            assert math.exp(deriv) == pytest.approx(x / (rho * (x + 1)), rel=1e-6)

    def test_stationarity_of_minima(self):
        rho = 0.5
        h = 1e-7
        x_star = rho / (1 - rho)
        assert (phi(x_star + h, rho) - phi(x_star - h, rho)) / (2 * h) == pytest.approx(0.0, abs=1e-6)
        assert (psi(1 + h) - psi(1 - h)) / (2 * h) == pytest.approx(0.0, abs=1e-6)

    def test_psi_curvature(self):
        h = 1e-5
        for y in (0.3, 1.0, 2.5):
            second = (psi(y + h) - 2 * psi(y) + psi(y - h)) / h**2
            assert second == pytest.approx(1.0 / y, rel=1e-4)


class TestDecayH:
    def test_figure_anchors(self):
        assert decay_H(0.0, 0.0, 0.5) == pytest.approx(1.69, abs=0.01)
        assert decay_H(3.0, 0.0, 0.5) == pytest.approx(1.52, abs=0.01)
        assert decay_H(0.0, 3.0, 0.5) == pytest.approx(1.99, abs=0.01)

    def test_closed_form_at_origin(self):
        for rho in (0.2, 0.5, 0.8):
            assert decay_H(0.0, 0.0, rho) == pytest.approx(1 - math.log1p(-rho), rel=1e-14)

    def test_nonnegative_with_unique_zero(self):
        rho = 0.5
        xs = np.linspace(0.0, 5.0, 101)
        ys = np.linspace(0.0, 5.0, 101)
        vals = decay_H(xs[:, None], ys[None, :], rho)
        assert vals.min() >= -1e-12
        zero = np.argwhere(vals < 1e-12)
        assert zero.shape == (1, 2)
        assert (xs[zero[0, 0]], ys[zero[0, 1]]) == (1.0, 1.0)


class TestDecayK:
    def test_reduces_to_phi_at_y_one(self):
        xs = np.linspace(1e-3, 8.0, 300)
        for rho in (0.3, 0.5, 0.8):
            assert np.abs(decay_K(xs, 1.0, rho) - phi(xs, rho)).max() < 1e-12

    def test_zero_locus(self):
        ys = np.linspace(0.05, 6.0, 200)
        for rho in (0.3, 0.5, 0.8):
            assert np.abs(decay_K(rho * ys / (1 - rho), ys, rho)).max() < 1e-12

    def test_convex_in_x_with_min_on_locus(self):
        rho, y = 0.5, 2.0
        h = 1e-4
        xs = np.linspace(0.2, 6.0, 50)
        second = (decay_K(xs + h, y, rho) - 2 * decay_K(xs, y, rho) + decay_K(xs - h, y, rho)) / h**2
        assert np.all(second > 0)
        fine = np.linspace(1.5, 2.5, 20001)
        x_min = fine[np.argmin(decay_K(fine, y, rho))]
        assert x_min == pytest.approx(rho * y / (1 - rho), abs=1e-3)

    def test_limit_at_x_zero(self):
        assert decay_K(0.0, 2.0, 0.5) == pytest.approx(-2.0 * math.log(0.5), rel=1e-14)

    def test_rejects_nonpositive_y(self):
        with pytest.raises(ValueError):
            decay_K(1.0, 0.0, 0.5)


def g_reference(x, y, params):
    """Double-entry transcription of the prefactor formula."""
    rho = params.alpha / params.mu
    x_star = rho / (1 - rho)
    c = params.nu / params.theta
    m = params.mu / params.theta
    k = m * (1 - rho) * (x - x_star) / (x + 1)
    tilt = lambda t: (c + 1 - m * (1 - rho)) / (t + 1) + m / (2 * (t + 1) ** 2)
    return (
        (1 - rho)
        * math.sqrt((x + 1) / (x * y))
        * ((x + 1) / (x + y)) ** (c - k)
        * math.exp(tilt(x) - tilt(x_star))
    )


class TestPrefactor:
    def test_value_at_fluid_point(self):
        # all coupling factors collapse at (x*, 1): g = (1-rho)*sqrt((x*+1)/x*)
        assert prefactor_g(1.0, 1.0, P_HALF) == pytest.approx(0.5 * math.sqrt(2), rel=1e-14)

    def test_exponent_vanishes_at_x_star(self):
        # at x = x* the exponential factor is 1 regardless of y
        params = params_from_scale(A=10.0, rho=0.5, mu=7.0, nu=2.0, theta=0.5)
        x_star = 1.0
        for y in (0.4, 1.0, 2.7):
            expected = (
                0.5 * math.sqrt(2.0 / y) * (2.0 / (x_star + y)) ** (2.0 / 0.5)
            )
            assert prefactor_g(x_star, y, params) == pytest.approx(expected, rel=1e-13)

    @pytest.mark.parametrize("x,y", [(0.3, 0.7), (1.0, 2.0), (4.2, 0.4), (2.5, 2.5)])
    @pytest.mark.parametrize("pars", [
        P_HALF,
        params_from_scale(A=5.0, rho=0.3, mu=2.0, nu=0.7, theta=1.3),
        params_from_scale(A=50.0, rho=0.8, mu=1.0, nu=0.0, theta=2.0),
    ])
    def test_double_entry_oracle(self, x, y, pars):
        assert prefactor_g(x, y, pars) == pytest.approx(g_reference(x, y, pars), rel=1e-12)

    def test_boundary_rejected(self):
        for x, y in ((0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)):
            with pytest.raises(ValueError):
                prefactor_g(x, y, P_HALF)

    @pytest.mark.parametrize("x,y", [(0.5, 1.0), (1.5, 1.0), (1.5, 1.3), (0.75, 0.8)])
    def test_exact_engine_confirms_prefactor_off_center(self, x, y):
        # the decisive oracle: exact/sharp must converge to 1 away from the
        # fluid point, where the prefactor's x-profile actually matters
        errs = []
        for A in (40.0, 80.0):
            dist = solved_half(A)
            n, m = int(round(A * x)), int(round(A * y))
            sharp = sharp_density(n / A, m / A, A, dist.params)
            errs.append(abs(float(dist.pmf[n, m]) / sharp - 1.0))
        assert errs[1] < errs[0]
        assert errs[1] < 0.03


class TestSharpDensity:
    def test_value_at_fluid_point(self):
        expected = 0.5 * math.sqrt(2) / (200 * math.pi)  # ~1.125e-3
        assert sharp_density(1.0, 1.0, 100.0, P_HALF) == pytest.approx(expected, rel=1e-13)
        assert expected == pytest.approx(1.125e-3, abs=2e-6)

    def test_monotone_decay_in_A_off_minimum(self):
        vals = [sharp_density(2.0, 0.5, A, P_HALF) for A in (10, 20, 40, 80)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_log_space_no_underflow(self):
        # A*H ~ 5e5: linear value underflows but the log stays exact
        params = params_from_scale(A=1e4, rho=0.5)
        val = log_sharp_density(12.0, 12.0, 1e4, params)
        assert math.isfinite(val)
        assert decay_H(12.0, 12.0, 0.5) < 50.0
        assert sharp_density(12.0, 12.0, 1e4, params) == 0.0  # documented underflow in linear space

    def test_asymptotic_point_bundle(self):
        pt = asymptotic_point(1.0, 1.0, 100.0, P_HALF)
        assert pt.H_value == pytest.approx(0.0, abs=1e-14)
        assert pt.g_value == pytest.approx(0.5 * math.sqrt(2), rel=1e-13)
        assert pt.density_estimate == pytest.approx(pt.g_value / (200 * math.pi), rel=1e-13)


class TestMarginalAsymptotics:
    def test_n_branch_at_fluid_point(self):
        val = marginal_asymptotics("N", 1.0, 100.0, P_HALF)
        assert val == pytest.approx(0.5 * math.sqrt(2) / math.sqrt(200 * math.pi), rel=1e-13)

    def test_m_branch_decoupled_when_nu_zero(self):
        params = params_from_scale(A=100.0, rho=0.5, nu=0.0)  # c = 0
        assert marginal_asymptotics("M", 1.0, 100.0, params) == pytest.approx(
            1.0 / math.sqrt(200 * math.pi), rel=1e-13
        )

    def test_m_branch_closed_form(self):
        val = marginal_asymptotics("M", 2.0, 50.0, P_HALF)
        expected = math.exp(-50.0 * psi(2.0)) / (
            math.sqrt(2 * math.pi * 50.0 * 2.0) * 0.5 * (1.0 + 2.0)
        )
        assert val == pytest.approx(expected, rel=1e-13)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            marginal_asymptotics("N", 0.0, 100.0, P_HALF)
        with pytest.raises(ValueError):
            marginal_asymptotics("Q", 1.0, 100.0, P_HALF)

    def test_ratio_to_exact_improves_with_A(self):
        errs = []
        for A in (40.0, 80.0):
            dist = solved_half(A)
            pn, _ = marginals(dist)
            exact = pn[int(A)]  # x = x* = 1
            approx = marginal_asymptotics("N", 1.0, A, dist.params)
            errs.append(abs(exact / approx - 1.0))
        assert errs[1] < errs[0] < 0.3

    def test_n_branch_tracks_exact_off_center(self):
        # the tilt profile matters at x != x*; exact marginal confirms it
        errs = []
        for A in (40.0, 80.0):
            dist = solved_half(A)
            pn, _ = marginals(dist)
            n = int(round(1.5 * A))
            approx = marginal_asymptotics("N", n / A, A, dist.params)
            errs.append(abs(pn[n] / approx - 1.0))
        assert errs[1] < errs[0]
        assert errs[1] < 0.03


class TestSharpPermanent:
    def test_gaussian_profile_at_center(self):
        # at x = x*, y = 1 the estimate collapses to (1-rho)/sqrt(rho*2*pi*A)
        for rho, A in ((0.5, 100.0), (0.3, 64.0)):
            x_star = rho / (1 - rho)
            val = sharp_permanent(x_star, 1.0, A, rho)
            assert val == pytest.approx(
                (1 - rho) / math.sqrt(rho) / math.sqrt(2 * math.pi * A), rel=1e-12
            )

    def test_exponent_free_on_zero_locus(self):
        rho, A = 0.4, 30.0
        for y in (0.5, 1.0, 3.0):
            x = rho * y / (1 - rho)
            expected = (1 - rho) / math.sqrt(2 * math.pi * A) * math.sqrt((x + y) / (x * y))
            assert sharp_permanent(x, y, A, rho) == pytest.approx(expected, rel=1e-12)

    def test_ratio_to_exact_pmf_tends_to_one(self):
        rho, x, y = 0.5, 0.8, 1.3
        errs = []
        for A in (50, 200, 800):
            n = int(round(A * x))
            m = int(round(A * y))
            log_exact = permanent_ps_log_pmf(m, rho, n_max=n)[n]
            log_est = log_sharp_permanent(n / A, m / A, A, rho)
            errs.append(abs(math.exp(log_exact - log_est) - 1.0))
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < 0.01


class TestGaussianLimit:
    def test_covariance_structure(self):
        lim = gaussian_limit(P_HALF)
        assert lim.var_xi == pytest.approx(2.0, rel=1e-14)
        assert lim.var_eta == 1.0
        assert lim.cov == 0.0
        assert lim.center == (1.0, 1.0)

    def test_variance_vanishes_with_load(self):
        lim = gaussian_limit(params_from_scale(A=10.0, rho=1e-8))
        assert lim.var_xi == pytest.approx(1e-8, rel=1e-6)

    def test_cov_zero_for_any_params(self):
        for rho in (0.1, 0.5, 0.95):
            assert gaussian_limit(params_from_scale(A=3.0, rho=rho)).cov == 0.0


class TestGenFunAsymptotic:
    def test_exact_one_at_unit_point(self):
        assert gen_fun_asymptotic(1.0, 1.0, 100.0, P_HALF) == complex(1.0, 0.0)

    def test_gaussian_characteristic_function_arc(self):
        # on |u| = |v| = 1 arcs the modulus matches the limit law exactly
        A, rho = 400.0, 0.5
        params = params_from_scale(A=A, rho=rho)
        for sigma, tau in ((0.5, 0.0), (0.0, 1.0), (0.8, -0.6)):
            u = cmath.exp(1j * sigma / math.sqrt(A))
            v = cmath.exp(1j * tau / math.sqrt(A))
            val = gen_fun_asymptotic(u, v, A, params)
            expected_mod = math.exp(-0.5 * (rho * sigma**2 / (1 - rho) ** 2 + tau**2))
            assert abs(val) == pytest.approx(expected_mod, rel=1e-10)
            x_star = rho / (1 - rho)
            expected_phase = math.sqrt(A) * (x_star * sigma + tau)
            assert cmath.phase(val * cmath.exp(-1j * expected_phase)) == pytest.approx(
                0.0, abs=1e-8
            )

    def test_real_points_against_exact(self):
        A = 80.0
        dist = solved_half(A)
        for u, v in ((1.05, 0.95), (0.9, 1.05)):
            exact = generating_function(dist, u, v).real
            approx = gen_fun_asymptotic(u, v, A, dist.params).real
            assert abs(exact / approx - 1.0) < 0.02

    def test_domain_rejections(self):
        with pytest.raises(ValueError):
            gen_fun_asymptotic(-0.5, 1.0, 10.0, P_HALF)  # u on the cut
        with pytest.raises(ValueError):
            gen_fun_asymptotic(1.0, -2.0, 10.0, P_HALF)  # v on the cut
        with pytest.raises(ValueError):
            gen_fun_asymptotic(2.5, 1.0, 10.0, P_HALF)  # |u| beyond 1/rho = 2

    def test_large_s_inside_domain_is_fine(self):
        val = gen_fun_asymptotic(0.5, 3.0, 10.0, P_HALF)
        assert math.isfinite(abs(val))


class TestLaplaceExpand:
    def test_gaussian_integral_exact(self):
        for A in (10.0, 1000.0):
            val = laplace_expand(lambda r: 0.5 * (r - 1.0) ** 2, lambda r: 1.0, (-6.0, 8.0), A)
            assert val.imag == 0.0
            assert val.real == pytest.approx(math.sqrt(2 * math.pi / A), rel=1e-8)

    @pytest.mark.parametrize("A", [10.0, 100.0])
    def test_stirling_vs_log_gamma(self, A):
        # int_0^inf r^A exp(-A r) dr = Gamma(A+1)/A^{A+1}
        val = laplace_expand(lambda r: r - math.log(r), lambda r: 1.0, (1e-12, math.inf), A)
        exact = math.exp(gammaln(A + 1.0) - (A + 1.0) * math.log(A))
        rel = abs(val.real / math.exp(-A) - exact / math.exp(-A)) / (exact / math.exp(-A))
        assert rel < 1.0 / (10.0 * A)

    def test_oscillatory_gaussian_oracle(self):
        # int exp(-A(r-1)^2/2 + i A zeta r) dr = sqrt(2 pi/A) e^{iA zeta} e^{-A zeta^2/2}
        A, zeta = 30.0, 0.2
        val = laplace_expand(lambda r: 0.5 * (r - 1.0) ** 2, lambda r: 1.0, (-6.0, 8.0), A, zeta)
        expected = math.sqrt(2 * math.pi / A) * cmath.exp(1j * A * zeta) * math.exp(
            -A * zeta**2 / 2
        )
        assert abs(val - expected) / abs(expected) < 1e-8

    def test_error_trend_in_A(self):
        # h shifted so min(h) = 0: same Stirling comparison, no underflow at A = 1000
        errs = []
        for A in (10.0, 100.0, 1000.0):
            val = laplace_expand(lambda r: r - math.log(r) - 1.0, lambda r: 1.0,
                                 (1e-12, math.inf), A)
            exact = math.exp(gammaln(A + 1.0) - (A + 1.0) * math.log(A) + A)
            errs.append(abs(val.real - exact) / exact)
        assert errs[2] < errs[1] < errs[0]

    def test_weight_function_applied(self):
        # peak value g(r*) multiplies the Gaussian width
        val = laplace_expand(lambda r: 0.5 * r**2, lambda r: 3.0 + r, (-5.0, 5.0), 50.0)
        assert val.real == pytest.approx(3.0 * math.sqrt(2 * math.pi / 50.0), rel=1e-7)

    def test_no_interior_minimum(self):
        with pytest.raises(ValueError, match="minim"):
            laplace_expand(lambda r: r, lambda r: 1.0, (0.0, 1.0), 10.0)
        with pytest.raises(ValueError, match="minim"):
            laplace_expand(lambda r: 1.0, lambda r: 1.0, (0.0, 1.0), 10.0)

    def test_empty_interval(self):
        with pytest.raises(ValueError):
            laplace_expand(lambda r: r * r, lambda r: 1.0, (2.0, 2.0), 10.0)


@settings(max_examples=100, deadline=None)
@given(
    x=st.floats(0.05, 8.0),
    y=st.floats(0.05, 8.0),
    rho=st.floats(0.05, 0.95),
)
def test_H_nonnegative_everywhere(x, y, rho):
    assert decay_H(x, y, rho) >= -1e-12
