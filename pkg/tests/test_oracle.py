import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdeirrev.estimate import make_stream, merge_chains, run_chain
from sdeirrev.model import ContractError, DiffusionModel, LangevinSpec, ModelSpec, PotentialModel
from sdeirrev.oracle import (QuadratureError, TheoryRef, ep_constant_multiplicative, ep_langevin_theory,
                             ep_transfer_operator, gaussian_moment, gibbs_expectation, langevin_coefficient,
                             theory_for)

from conftest import sigma_eps

HALF_SQ = lambda x: 0.5 * x * x  # noqa: E731

# c for sigma_eps with V = x^2/2; cross-checked against scipy.integrate.quad on (-inf, inf)
C_EPS = {1.0: 0.2582403431859011, 0.5: 0.13029279506452784, 0.25: 0.05784519869526508,
         0.1: 0.015996292874498396}


class TestGibbs:
    @pytest.mark.parametrize("f, expected", [(lambda x: np.ones_like(x), 1.0), (lambda x: x ** 2, 1.0),
                                             (lambda x: x ** 4, 3.0), (lambda x: x ** 6, 15.0)])
    def test_gaussian_moments(self, f, expected):
        assert gibbs_expectation(f, HALF_SQ) == pytest.approx(expected, rel=1e-8)

    def test_shifted_mean(self):
        assert gibbs_expectation(lambda x: x, lambda x: 0.5 * (x - 1.5) ** 2) == pytest.approx(1.5, rel=1e-8)

    def test_quartic_ratio(self):
        # E[x^4] = 1/(4 beta) for exp(-beta x^4), independent of quadrature by the Gamma-function identity
        beta = 3.0
        got = gibbs_expectation(lambda x: x ** 4, lambda x: beta * x ** 4)
        assert got == pytest.approx(1 / (4 * beta), rel=1e-8)

    @pytest.mark.parametrize("bounds", [(-10.0, 10.0), (-15.0, 15.0), (-2.0, 2.0), (-3.0, 7.0)])
    def test_bound_stability(self, bounds):
        ref = gibbs_expectation(lambda x: x ** 2, HALF_SQ)
        assert gibbs_expectation(lambda x: x ** 2, HALF_SQ, bounds) == pytest.approx(ref, rel=1e-10)

    def test_bound_stability_c(self):
        m = sigma_eps(1.0)
        assert ep_constant_multiplicative(m, bounds=(-15.0, 15.0)) == pytest.approx(C_EPS[1.0], rel=1e-10)

    def test_bad_bounds(self):
        with pytest.raises(ContractError):
            gibbs_expectation(np.ones_like, HALF_SQ, (1.0, 1.0))

    def test_tail_failure(self):
        with pytest.raises(QuadratureError) as info:
            gibbs_expectation(np.ones_like, lambda x: 1e-3 * np.abs(x), (-1.0, 1.0), max_widenings=2)
        assert "bounds" in info.value.diagnostics

    def test_refinement_failure(self):
        with pytest.raises(QuadratureError) as info:
            gibbs_expectation(lambda x: np.abs(np.sin(400 * x)) + (x > 0.3), HALF_SQ, n_points=8, max_doublings=2)
        assert "change" in info.value.diagnostics


class TestGaussianMoment:
    @pytest.mark.parametrize("nu, dt, expected", [((1,), 0.3, 0.0), ((2,), 0.3, 0.3), ((4,), 0.3, 3 * 0.09),
                                                  ((6,), 1.0, 15.0), ((8,), 2.0, 105.0 * 16),
                                                  ((2, 2), 1.0, 1.0), ((1, 1), 1.0, 0.0), ((3, 1), 1.0, 0.0)])
    def test_identity_cov(self, nu, dt, expected):
        assert gaussian_moment(nu, dt=dt) == pytest.approx(expected, rel=1e-14)

    def test_correlated(self):
        C = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert gaussian_moment((1, 1), C) == pytest.approx(0.5)
        # E[X^2 Y^2] = C11 C22 + 2 C12^2
        assert gaussian_moment((2, 2), C) == pytest.approx(2.0 + 0.5)
        # E[X^3 Y] = 3 C11 C12
        assert gaussian_moment((3, 1), C) == pytest.approx(3.0)

    def test_errors(self):
        with pytest.raises(ContractError):
            gaussian_moment((10,))
        with pytest.raises(ContractError):
            gaussian_moment((5, 5))
        with pytest.raises(ContractError):
            gaussian_moment((-1, 3))
        with pytest.raises(ContractError):
            gaussian_moment((2, 2), np.eye(3))

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=3), st.floats(0.01, 4.0))
    @settings(max_examples=60, deadline=None)
    def test_dt_scaling(self, nu, dt):
        order = sum(nu)
        if order > 8:
            return
        assert gaussian_moment(nu, dt=dt) == pytest.approx(gaussian_moment(nu) * dt ** (order / 2), rel=1e-12)

    @pytest.mark.parametrize("nu", [(2,), (4,), (1, 1), (2, 2), (3, 1), (2, 2, 2), (4, 2)])
    def test_monte_carlo(self, nu):
        rng = make_stream(77, len(nu) * 10 + sum(nu))
        C = np.array([[1.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 0.8]])[: len(nu), : len(nu)]
        X = rng.multivariate_normal(np.zeros(len(nu)), C, size=1_000_000)
        vals = np.prod(X ** np.array(nu), axis=1)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - gaussian_moment(nu, C)) <= 4 * se


class TestMultiplicativeConstant:
    @pytest.mark.parametrize("eps", sorted(C_EPS))
    def test_values(self, eps):
        assert ep_constant_multiplicative(sigma_eps(eps)) == pytest.approx(C_EPS[eps], rel=1e-9)

    def test_monotone_to_zero(self):
        vals = [ep_constant_multiplicative(sigma_eps(e)) for e in (1.0, 0.5, 0.25, 0.1, 0.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] == 0.0

    def test_additive_is_zero(self, quad_additive):
        assert ep_constant_multiplicative(quad_additive) == 0.0

    def test_sign_flip_invariant(self):
        def model(sign):
            return ModelSpec.overdamped(PotentialModel.quadratic(1), DiffusionModel.multiplicative(
                lambda x: sign / math.sqrt(1 + x * x),
                lambda x: -sign * x * (1 + x * x) ** -1.5,
                lambda x: sign * (2 * x * x - 1) * (1 + x * x) ** -2.5))
        plus, minus = (ep_constant_multiplicative(model(s)) for s in (1.0, -1.0))
        assert plus == minus
        assert plus == pytest.approx(C_EPS[1.0], rel=1e-9)

    def test_needs_1d_overdamped(self, harmonic_langevin, quartic_torus):
        for m in (harmonic_langevin, quartic_torus):
            with pytest.raises(ContractError):
                ep_constant_multiplicative(m)


class TestLangevin:
    def test_example(self):
        assert ep_langevin_theory(5, 1.0, 1.0, 0.01) == pytest.approx(0.05 / 2.01, rel=1e-14)
        assert ep_langevin_theory(5, 1.0, 1.0, 0.01) == pytest.approx(0.0248756, abs=1e-7)

    def test_no_friction(self):
        assert ep_langevin_theory(5, 0.0, 1.0, 0.01) == 0.0

    @pytest.mark.parametrize("N, gamma, m", [(5, 1.0, 1.0), (3, 4.0, 2.0), (1, 0.5, 0.25)])
    def test_small_dt_slope(self, N, gamma, m):
        dt = 1e-9
        assert ep_langevin_theory(N, gamma, m, dt) / dt == pytest.approx(langevin_coefficient(N, gamma, m), rel=1e-8)

    @given(st.integers(1, 20), st.floats(0.01, 10), st.floats(0.1, 10), st.floats(1e-4, 1.0))
    def test_below_linear(self, N, gamma, m, dt):
        assert 0 < ep_langevin_theory(N, gamma, m, dt) <= langevin_coefficient(N, gamma, m) * dt * (1 + 1e-12)

    @pytest.mark.parametrize("args", [(-1, 1.0, 1.0, 0.1), (5, -1.0, 1.0, 0.1), (5, 1.0, 0.0, 0.1), (5, 1.0, 1.0, 0.0)])
    def test_errors(self, args):
        with pytest.raises(ContractError):
            ep_langevin_theory(*args)


class TestTheoryFor:
    def test_kinds(self, quad_additive, sigma_eps_model, quartic_torus, harmonic_langevin):
        assert theory_for("em", quad_additive) is None
        assert theory_for("em", quartic_torus).kind == "em_additive_order2"
        ref = theory_for("em", sigma_eps_model)
        assert ref.kind == "em_multiplicative_constant" and ref.value == pytest.approx(C_EPS[1.0])
        assert theory_for("milstein", sigma_eps_model).order == 1.0
        assert theory_for("milstein", quad_additive) is None
        bbk = theory_for("bbk", harmonic_langevin)
        assert bbk.kind == "bbk_linear" and bbk.value == pytest.approx(5 * 16 / 2)

    def test_bbk_non_quadratic(self):
        spec = LangevinSpec(n_particles=2, dim=1, mass=1.0, gamma=1.0, sigma=1.0)
        m = ModelSpec.langevin_model(PotentialModel.quartic_radial(1.0, 2), spec)
        assert theory_for("bbk", m) is None

    def test_ref_contract(self):
        with pytest.raises(ContractError):
            TheoryRef("em_cubic")
        with pytest.raises(ContractError):
            TheoryRef("bbk_linear", -1.0)


class TestTransferOperator:
    def test_quadratic_additive_zero(self, quad_additive):
        r = ep_transfer_operator("em", quad_additive, 0.05)
        assert abs(r.ep) < 1e-8 and r.unreachable_mass == 0.0

    def test_stationary_is_probability(self, sigma_eps_model):
        r = ep_transfer_operator("em", sigma_eps_model, 0.04)
        assert r.stationary.sum() == pytest.approx(1.0) and r.stationary.min() > -1e-12
        assert r.stationary.size == r.n_grid

    def test_em_matches_simulation(self, sigma_eps_model):
        r = ep_transfer_operator("em", sigma_eps_model, 0.04)
        est = merge_chains([run_chain("em", sigma_eps_model, 0.04, 1_000_000, seed=4, chain=k) for k in range(4)])
        assert abs(r.ep - est.ep) <= 3 * est.stderr

    def test_em_approaches_c(self, sigma_eps_model):
        coarse = ep_transfer_operator("em", sigma_eps_model, 0.04).ep
        fine = ep_transfer_operator("em", sigma_eps_model, 0.01).ep
        c = C_EPS[1.0]
        assert abs(fine - c) < abs(coarse - c) < 0.05 * c

    def test_milstein_matches_simulation(self, sigma_eps_model):
        r = ep_transfer_operator("milstein", sigma_eps_model, 0.04)
        est = merge_chains([run_chain("milstein", sigma_eps_model, 0.04, 1_000_000, seed=4, chain=k)
                            for k in range(4)])
        assert r.unreachable_mass < 1e-9
        assert abs(r.ep - est.ep) <= 3 * est.stderr

    def test_contracts(self, sigma_eps_model, quartic_torus):
        with pytest.raises(ContractError):
            ep_transfer_operator("bbk", sigma_eps_model, 0.04)
        with pytest.raises(ContractError):
            ep_transfer_operator("em", quartic_torus, 0.04)
