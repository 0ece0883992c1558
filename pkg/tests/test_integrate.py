import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdeirrev.estimate import make_stream
from sdeirrev.gc import milstein_z
from sdeirrev.integrate import (PhaseState, apply_domain, bbk_step, em_step, initial_state, milstein_drift,
                                milstein_step)
from sdeirrev.model import ContractError, DiffusionModel, Domain, LangevinSpec, ModelSpec, PotentialModel

from conftest import sigma_eps


def additive_1d(sigma):
    return ModelSpec.overdamped(PotentialModel.quadratic(1), DiffusionModel.additive(sigma, 1))


def langevin(gamma=1.0, beta=1.0, n=1, potential=None, domain=Domain()):
    spec = LangevinSpec(n, 1, 1.0, gamma, beta=beta)
    return ModelSpec.langevin_model(potential or PotentialModel.quadratic(n), spec, domain)


class TestEmStep:
    def test_zero_noise_drift(self):
        rec = em_step(additive_1d(math.sqrt(2.0)), [1.0], 0.1, noise=[0.0])
        assert rec.x_next[0] == pytest.approx(0.9, abs=1e-15)

    def test_fixed_point(self):
        rec = em_step(sigma_eps(), [0.0], 0.1, noise=[0.0])
        assert rec.x_next[0] == 0.0

    def test_sigma_eps_substitution(self):
        rec = em_step(sigma_eps(), [1.0], 0.1, noise=[0.2])
        expected = 1 - 0.5 * 0.5 * 1 * 0.1 + 0.5 * (-0.5) * 0.1 + 0.2 / math.sqrt(2)
        assert rec.x_next[0] == pytest.approx(expected, abs=1e-15)

    def test_record_contents(self, sigma_eps_model):
        rec = em_step(sigma_eps_model, [0.4], 0.05, noise=[0.1])
        assert rec.dt == 0.05 and rec.noise[0][0] == 0.1 and not rec.wrapped
        np.testing.assert_array_equal(rec.x_next, rec.x_prev + rec.dx_raw)

    def test_needs_positive_dt(self, quad_additive):
        with pytest.raises(ContractError):
            em_step(quad_additive, [0.0], 0.0, noise=[0.0])

    def test_needs_noise_source(self, quad_additive):
        with pytest.raises(ContractError):
            em_step(quad_additive, [0.0], 0.1)

    def test_draw_consumption(self, quad_additive):
        a, b = make_stream(3), make_stream(3)
        rec = em_step(quad_additive, [0.2], 0.04, rng=a)
        assert rec.noise[0][0] == b.standard_normal() * 0.2


class TestMilsteinStep:
    def test_fixed_point(self):
        assert milstein_step(sigma_eps(), [0.0], 0.1, noise=[0.0]).x_next[0] == 0.0

    def test_sigma_eps_substitution(self):
        # x - 1/2 Sigma V' dt + 1/2 Sigma' dt + sigma dW + 1/2 sigma sigma' (dW^2 - dt)
        x, dt, dw = 1.0, 0.1, 0.2
        S, dS = 0.5, -0.5
        s = math.sqrt(S)
        ds = dS / (2 * s)
        expected = x - 0.5 * S * x * dt + 0.5 * dS * dt + s * dw + 0.5 * s * ds * (dw * dw - dt)
        rec = milstein_step(sigma_eps(), [x], dt, noise=[dw])
        assert rec.x_next[0] == pytest.approx(expected, abs=1e-15)
        assert milstein_drift(sigma_eps(), np.array([x])) == pytest.approx(-0.5 * S * x + 0.25 * dS)

    @given(st.floats(-3, 3), st.floats(-1, 1), st.floats(1e-3, 0.2))
    @settings(max_examples=100, deadline=None)
    def test_coincides_with_em_for_additive(self, x, dw, dt):
        m = additive_1d(0.8)
        a = em_step(m, [x], dt, noise=[dw]).x_next
        b = milstein_step(m, [x], dt, noise=[dw]).x_next
        np.testing.assert_array_equal(a, b)

    @given(st.floats(-4, 4), st.floats(-1, 1), st.floats(1e-3, 0.1), st.floats(0.1, 3))
    @settings(max_examples=200, deadline=None)
    def test_forward_z_is_a_square(self, x, dw, dt, eps):
        m = sigma_eps(eps)
        rec = milstein_step(m, [x], dt, noise=[dw])
        s, S, dS, _ = m.diffusion.scalar_terms(x)
        z = milstein_z(m, [x], rec.dx_raw, dt)
        target = (s + 0.5 * dS * dw) ** 2
        assert z == pytest.approx(target, rel=1e-10, abs=1e-14)

    def test_rejects_2d(self, quartic_torus):
        with pytest.raises(ContractError):
            milstein_step(quartic_torus, [1.0, 0.0], 0.1, noise=[0.0])


class TestBbkStep:
    def test_free_flight(self):
        m = langevin(gamma=0.0, beta=1.0, n=3,
                     potential=PotentialModel.custom(lambda q: 0.0, lambda q: np.zeros(3), 3))
        s = PhaseState([0.0, 1.0, -1.0], [0.5, -0.2, 0.3])
        z = np.zeros(3)
        rec = bbk_step(m, s, 0.1, noise=(z, z))
        np.testing.assert_allclose(rec.x_next.q, s.q + s.p * 0.1, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(rec.x_next.p, s.p)

    def test_equilibrium_fixed_point(self):
        m = langevin(n=2)
        s = PhaseState(np.zeros(2), np.zeros(2))
        rec = bbk_step(m, s, 0.1, noise=(np.zeros(2), np.zeros(2)))
        np.testing.assert_array_equal(rec.x_next.q, 0.0)
        np.testing.assert_array_equal(rec.x_next.p, 0.0)

    def test_quadratic_substitution(self):
        rec = bbk_step(langevin(gamma=1.0), PhaseState([1.0], [0.0]), 0.1, noise=([0.0], [0.0]))
        assert rec.x_next.q[0] == pytest.approx(0.995, abs=1e-15)
        assert rec.x_next.p[0] == pytest.approx((-0.05 - 0.04975) / 1.05, abs=1e-15)
        assert rec.x_next.p[0] == pytest.approx(-0.0950, abs=5e-5)

    def test_noise_order(self, harmonic_langevin):
        a, b = make_stream(9), make_stream(9)
        s = initial_state(harmonic_langevin, None)
        rec = bbk_step(harmonic_langevin, s, 0.02, rng=a)
        w1 = b.standard_normal(5) * math.sqrt(0.01)
        w2 = b.standard_normal(5) * math.sqrt(0.01)
        np.testing.assert_array_equal(rec.noise[0], w1)
        np.testing.assert_array_equal(rec.noise[1], w2)

    def test_needs_langevin(self, quad_additive):
        with pytest.raises(ContractError):
            bbk_step(quad_additive, PhaseState([0.0], [0.0]), 0.1, noise=([0.0], [0.0]))

    def test_non_finite_state(self):
        with pytest.raises(ContractError):
            PhaseState([math.inf], [0.0])


class TestApplyDomain:
    @pytest.mark.parametrize("x, out, flag", [(3.9, 3.9, False), (4.1, -3.9, True), (-4.0, -4.0, False),
                                              (4.0, -4.0, True), (-4.5, 3.5, True), (12.5, -3.5, True)])
    def test_torus(self, x, out, flag):
        y, w = apply_domain(Domain.torus(4.0), [x])
        assert y[0] == pytest.approx(out, abs=1e-12) and w is flag

    def test_euclidean_identity(self):
        y, w = apply_domain(Domain(), [1e9])
        assert y[0] == 1e9 and not w

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=4), st.floats(0.5, 10))
    @settings(max_examples=200)
    def test_range_and_idempotence(self, x, L):
        dom = Domain.torus(L)
        y, _ = apply_domain(dom, x)
        assert np.all(y >= -L) and np.all(y < L)
        z, again = apply_domain(dom, y)
        np.testing.assert_array_equal(y, z)
        assert not again

    def test_wrap_in_step(self, quartic_torus):
        rec = em_step(quartic_torus, [3.95, 0.0], 0.01, noise=[2.0, 0.0])
        assert rec.wrapped
        assert rec.dx_raw[0] == pytest.approx(rec.x_next[0] + 8.0 - 3.95)


class TestInitialState:
    def test_quartic_attraction_point(self, quartic_torus):
        np.testing.assert_array_equal(initial_state(quartic_torus, make_stream(0)), [1.0, 0.0])

    def test_quadratic_gibbs_draw(self, quad_additive):
        x = np.array([initial_state(quad_additive, make_stream(0, k))[0] for k in range(4000)])
        assert abs(x.mean()) < 4 / math.sqrt(4000)
        assert x.var() == pytest.approx(1.0, abs=0.1)

    def test_langevin_draws(self, harmonic_langevin):
        s = initial_state(harmonic_langevin, make_stream(1))
        assert s.q.shape == (5,) and s.p.shape == (5,)
        assert np.all(np.abs(s.p) < 6 * math.sqrt(1 / 800))


def test_determinism():
    m = sigma_eps()

    def path(seed):
        rng, x = make_stream(seed, 4), np.array([0.3])
        out = []
        for _ in range(200):
            x = em_step(m, x, 0.01, rng=rng).x_next
            out.append(x[0])
        return out

    assert path(11) == path(11)
    assert path(11) != path(12)


def test_stationary_second_moment():
    # EM for dX = -X/2 dt + dB has stationary variance 1 / (1 - dt/4); the
    # boundary-dropped increments telescope, so x_k^2 = x_0^2 - 2 sum w
    from sdeirrev.kernels import draw_noise, make_chain

    dt, n = 0.01, 1_000_000
    m = additive_1d(1.0)
    rng = make_stream(5)
    ch = make_chain("em", m, dt, initial_state(m, rng))
    x0 = ch.state[0]
    w = np.empty(n)
    ch.advance(draw_noise(rng, "em", m, n, dt), w)
    sq = x0 * x0 - 2.0 * np.cumsum(w)
    assert sq[-1] == pytest.approx(ch.state[0] ** 2, abs=1e-8)
    target = 1.0 / (1.0 - dt / 4)
    b = sq.reshape(100, -1).mean(axis=1)
    se = b.std(ddof=1) / 10
    assert abs(sq.mean() - target) <= 5 * se
    assert abs(target - 1.0) < 0.01
