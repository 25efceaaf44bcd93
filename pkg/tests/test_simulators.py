"""Simulator tests against independent reimplementations and known values."""

import numpy as np
import pytest

from simcal.priors import BoxUniform
from simcal.rng import substream
from simcal.sampling import MHConfig
from simcal.simulators import (BrockHommes, CountingSimulator, FrankeWesterhoff,
                               MultivariateGBM, bh_parameter_set, fw_experiment,
                               get_experiment, ground_truth_posterior,
                               mvgbm_experiment)
from simcal.simulators._kernels import bh_path, fw_path
from simcal.simulators.bh import BHConfig
from simcal.simulators.fw import FWConfig
from simcal.simulators.mvgbm import MvGBMConfig


def bh_reference(noise, g, b, beta, r_gross, sigma):
    """Straightforward transcription of the coupled equations (test oracle)."""
    t_len = noise.size + 2
    xs = np.zeros(t_len + 1)
    for t in range(2, t_len):
        u = beta * (xs[t] - r_gross * xs[t - 1]) * (
            g * xs[t - 2] + b - r_gross * xs[t - 1])
        w = np.exp(u - u.max())
        w /= w.sum()
        xs[t + 1] = (w @ (g * xs[t] + b) + sigma * noise[t - 2]) / r_gross
    return xs[1:]


def fw_reference(noise_f, noise_c, mu, beta, phi, chi, a0, sf, aw, eta, sc):
    """Direct transcription of the seven coupled equations (test oracle)."""
    t_len = noise_f.size - 1
    p = np.zeros(t_len + 1)
    df = np.zeros(t_len + 1)
    d_c = np.zeros(t_len + 1)
    a = np.full(t_len + 1, a0)
    nf = np.zeros(t_len + 1)
    wf = np.zeros(t_len + 1)
    wc = np.zeros(t_len + 1)
    df[0] = sf * noise_f[0]
    d_c[0] = sc * noise_c[0]
    nf[0] = 1.0 / (1.0 + np.exp(-beta * a0))
    r = np.zeros(t_len)
    for t in range(1, t_len + 1):
        p_t = p[t - 1] + mu * (nf[t - 1] * df[t - 1] + (1 - nf[t - 1]) * d_c[t - 1])
        p[t] = p_t
        nf[t] = 1.0 / (1.0 + np.exp(-beta * a[t - 1]))
        df[t] = phi * (0.0 - p_t) + sf * noise_f[t]
        d_c[t] = chi * (p_t - p[t - 1]) + sc * noise_c[t]
        gain = np.exp(p[t]) - np.exp(p[t - 1])
        gf = gain * (df[t - 2] if t >= 2 else 0.0)
        gc = gain * (d_c[t - 2] if t >= 2 else 0.0)
        wf[t] = eta * wf[t - 1] + (1 - eta) * gf
        wc[t] = eta * wc[t - 1] + (1 - eta) * gc
        a[t] = aw * (wf[t] - wc[t]) + a0
        r[t - 1] = p[t] - p[t - 1]
    return r


class TestBrockHommes:
    def test_paper_configuration_simulates_valid_series(self):
        sim, prior, theta_star = bh_parameter_set(1)
        assert np.array_equal(theta_star, [0.9, 0.2, 0.9, -0.2])
        assert sim.config.beta_intensity == 120.0
        y = sim.simulate(theta_star, substream(0, "bh"))
        assert y.shape == (100, 1)
        assert np.all(np.isfinite(y))

    def test_matches_reference_implementation(self):
        sim, _, _ = bh_parameter_set(2)
        rng = np.random.default_rng(7)
        for _ in range(5):
            theta = rng.uniform(-1, 1, 4)
            noise = rng.standard_normal(98)
            g = np.array([0.0, theta[0], theta[2], 1.01])
            b = np.array([0.0, theta[1], theta[3], 0.0])
            mine = bh_path(noise, g, b, 10.0, 1.0, 0.04)
            ref = bh_reference(noise, g, b, 10.0, 1.0, 0.04)
            assert np.allclose(mine, ref, atol=1e-12)

    def test_noise_free_zero_bias_fixed_point(self):
        cfg = BHConfig(beta_intensity=120.0, sigma_noise=0.0)
        sim = BrockHommes(cfg, series_length=50)
        y = sim.simulate([0.5, 0.0, 0.3, 0.0], substream(1, "bh0"))
        assert np.all(y == 0.0)

    def test_transition_mean_frozen_value(self):
        # All fitness terms vanish when y_t = R y_{t-1}: weights are 1/4 and
        # f = ((g2+g3+1.01) y_t + b2+b3) / 4 = 0.7025 at parameter set 1.
        sim, _, theta_star = bh_parameter_set(1)
        f = sim.transition_mean([1.0, 1.0, 1.0], theta_star)
        assert f == pytest.approx(0.7025, abs=1e-12)

    def test_transition_mean_zero_case(self):
        sim, _, _ = bh_parameter_set(1)
        assert sim.transition_mean([0.0, 0.0, 0.0], np.zeros(4)) == 0.0

    def test_softmax_weights_sum_to_one(self):
        sim, _, _ = bh_parameter_set(1)
        rng = np.random.default_rng(3)
        c = sim.config
        for _ in range(20):
            hist = rng.uniform(-1, 1, 3)
            theta = rng.uniform(-1, 1, 4)
            g = np.array([c.g1, theta[0], theta[2], c.g4])
            b = np.array([c.b1, theta[1], theta[3], c.b4])
            u = c.beta_intensity * (hist[2] - hist[1]) * (g * hist[0] + b - hist[1])
            w = np.exp(u - u.max())
            w /= w.sum()
            assert w.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(w >= 0)
            expect = w @ (g * hist[2] + b)
            assert sim.transition_mean(hist, theta) == pytest.approx(expect, rel=1e-12)

    def test_exact_loglik_matches_manual_transition_product(self):
        sim, _, theta_star = bh_parameter_set(1)
        y = sim.simulate(theta_star, substream(5, "bh-ll"))[:, 0]
        sd = sim.config.sigma_noise / sim.config.r_gross
        manual = 0.0
        for t in range(2, y.size - 1):
            f = sim.transition_mean(y[t - 2:t + 1], theta_star)
            manual += -0.5 * np.log(2 * np.pi) - np.log(sd) \
                - 0.5 * ((y[t + 1] - f) / sd) ** 2
        assert sim.exact_loglik(y, theta_star) == pytest.approx(manual, rel=1e-12)

    def test_sample_mean_stable_across_seeds(self):
        sim, _, theta_star = bh_parameter_set(1)
        means = []
        for seed in (0, 1):
            rng = substream(seed, "bh-mc")
            means.append(np.mean([sim.simulate(theta_star, rng).mean()
                                  for _ in range(10_000)]))
        assert np.all(np.isfinite(means))
        assert abs(means[0] - means[1]) < 0.02

    def test_bit_reproducible(self):
        sim, _, theta_star = bh_parameter_set(1)
        a = sim.simulate(theta_star, substream(9, "bh-rep"))
        b = sim.simulate(theta_star, substream(9, "bh-rep"))
        assert np.array_equal(a, b)


class TestMvGBM:
    def test_gamma_from_paper_sigma(self):
        sim, _, _ = mvgbm_experiment()
        assert np.allclose(sim.config.gamma, [0.13, 0.05, 0.02], atol=1e-15)

    def test_near_zero_volatility_keeps_state_constant(self):
        cfg = MvGBMConfig(sigma=1e-9 * np.eye(3))
        sim = MultivariateGBM(cfg, series_length=50)
        x = sim.simulate(cfg.gamma, substream(2, "gbm0"))
        assert np.abs(x).max() < 1e-6

    def test_per_step_covariance_matches_analytic(self):
        sim, _, theta_star = mvgbm_experiment()
        rng = substream(3, "gbm-cov")
        big = MultivariateGBM(sim.config, series_length=100_001, dt=sim.dt)
        x = big.simulate(theta_star, rng)
        inc = np.diff(x, axis=0)
        emp = np.cov(inc.T)
        target = sim.config.sigma @ sim.config.sigma.T * sim.dt
        assert np.abs(emp - target).max() / np.abs(target).max() < 0.05

    def test_transition_logpdf_peak_value(self):
        sim, _, theta_star = mvgbm_experiment()
        x = np.array([0.1, -0.2, 0.3])
        mean = x + (theta_star - sim.config.gamma) * sim.dt
        cov = sim.config.sigma @ sim.config.sigma.T * sim.dt
        expect = -0.5 * np.log((2 * np.pi) ** 3 * np.linalg.det(cov))
        assert sim.transition_logpdf(mean, x, theta_star) == pytest.approx(expect)

    def test_transition_logpdf_symmetry(self):
        sim, _, theta_star = mvgbm_experiment()
        x = np.zeros(3)
        mean = x + (theta_star - sim.config.gamma) * sim.dt
        delta = np.array([0.01, -0.02, 0.005])
        a = sim.transition_logpdf(mean + delta, x, theta_star)
        b = sim.transition_logpdf(mean - delta, x, theta_star)
        assert a == pytest.approx(b, rel=1e-12)

    def test_transition_density_2d_slice_quadrature(self):
        # Integrating the density over (x1, x2) at fixed x3 must equal the
        # analytic Gaussian marginal at that x3.
        sim, _, theta_star = mvgbm_experiment()
        x = np.zeros(3)
        mean = x + (theta_star - sim.config.gamma) * sim.dt
        cov = sim.config.sigma @ sim.config.sigma.T * sim.dt
        x3 = mean[2] + 0.3 * np.sqrt(cov[2, 2])
        lim1 = 6 * np.sqrt(cov[0, 0])
        lim2 = 6 * np.sqrt(cov[1, 1])
        g1 = np.linspace(mean[0] - lim1, mean[0] + lim1, 181)
        g2 = np.linspace(mean[1] - lim2, mean[1] + lim2, 181)
        vals = np.empty((g1.size, g2.size))
        for i, a in enumerate(g1):
            for j, b in enumerate(g2):
                vals[i, j] = np.exp(sim.transition_logpdf([a, b, x3], x, theta_star))
        integral = np.trapezoid(np.trapezoid(vals, g2, axis=1), g1)
        marginal = np.exp(-0.5 * (x3 - mean[2]) ** 2 / cov[2, 2]) / np.sqrt(
            2 * np.pi * cov[2, 2])
        assert integral == pytest.approx(marginal, rel=1e-3)

    def test_exact_loglik_consistent_with_transition_logpdf(self):
        sim, _, theta_star = mvgbm_experiment()
        y = sim.simulate(theta_star, substream(4, "gbm-ll"))
        manual = sum(sim.transition_logpdf(y[t + 1], y[t], theta_star)
                     for t in range(y.shape[0] - 1))
        assert sim.exact_loglik(y, theta_star) == pytest.approx(manual, rel=1e-10)

    def test_simulation_and_logpdf_mutually_consistent(self):
        # Mean transition log-density ~ negative differential entropy.
        sim, _, theta_star = mvgbm_experiment()
        y = MultivariateGBM(sim.config, series_length=20_001,
                            dt=sim.dt).simulate(theta_star, substream(5, "gbm-ent"))
        cov = sim.config.sigma @ sim.config.sigma.T * sim.dt
        entropy = 0.5 * np.log((2 * np.pi * np.e) ** 3 * np.linalg.det(cov))
        avg = sim.exact_loglik(y, theta_star) / (y.shape[0] - 1)
        assert avg == pytest.approx(-entropy, abs=0.05)

    def test_singular_sigma_rejected(self):
        with pytest.raises(ValueError, match="singular"):
            MultivariateGBM(MvGBMConfig(sigma=np.zeros((3, 3))))


class TestFrankeWesterhoff:
    def test_paper_fixed_parameters_verbatim(self):
        cfg = FWConfig()
        assert (cfg.mu, cfg.beta, cfg.phi_f, cfg.chi, cfg.alpha_0, cfg.sigma_f) == \
            (0.01, 1.0, 1.0, 0.9, 2.1, 0.752)

    def test_matches_reference_implementation(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            aw, eta, sc = rng.uniform(0, 5000), rng.uniform(0, 1), rng.uniform(0, 3)
            nf = rng.standard_normal(101)
            nc = rng.standard_normal(101)
            mine = fw_path(nf, nc, 0.01, 1.0, 1.0, 0.9, 2.1, 0.752, aw, eta, sc)
            ref = fw_reference(nf, nc, 0.01, 1.0, 1.0, 0.9, 2.1, 0.752, aw, eta, sc)
            assert np.allclose(mine, ref, atol=1e-12)

    def test_noise_free_fixed_point(self):
        sim = FrankeWesterhoff(FWConfig(sigma_f=0.0), series_length=60)
        r = sim.simulate([3000.0, 0.5, 0.0], substream(1, "fw0"))
        assert np.all(r == 0.0)

    def test_eta_one_freezes_wealth(self):
        # With eta = 1 wealth never updates from 0, so the predisposition
        # index stays at alpha_0 and alpha_w cannot matter.
        sim = FrankeWesterhoff()
        a = sim.simulate([10.0, 1.0, 2.0], substream(8, "fw-eta"))
        b = sim.simulate([14000.0, 1.0, 2.0], substream(8, "fw-eta"))
        assert np.array_equal(a, b)

    def test_eta_zero_wealth_tracks_current_gain(self):
        # eta = 0 makes w_t = g_t; verified against the reference recursion.
        rng = np.random.default_rng(21)
        nf = rng.standard_normal(51)
        nc = rng.standard_normal(51)
        mine = fw_path(nf, nc, 0.01, 1.0, 1.0, 0.9, 2.1, 0.752, 500.0, 0.0, 1.5)
        ref = fw_reference(nf, nc, 0.01, 1.0, 1.0, 0.9, 2.1, 0.752, 500.0, 0.0, 1.5)
        assert np.allclose(mine, ref, atol=1e-12)

    def test_extreme_predisposition_does_not_overflow(self):
        sim = FrankeWesterhoff()
        r = sim.simulate([15000.0, 0.0, 5.0], substream(3, "fw-ex"))
        assert np.all(np.isfinite(r))

    def test_prior_bounds(self):
        _, prior, theta_star = fw_experiment()
        assert theta_star is None
        assert np.array_equal(prior.lower, [0.0, 0.0, 0.0])
        assert np.array_equal(prior.upper, [15000.0, 1.0, 5.0])


class TestGroundTruth:
    def test_flat_likelihood_recovers_prior(self):
        # Volatility so large the data barely constrain the drift.
        cfg = MvGBMConfig(sigma=50.0 * np.eye(3))
        sim = MultivariateGBM(cfg, series_length=50)
        prior = BoxUniform([-1, -1, -1], [1, 1, 1])
        y = sim.simulate([0.2, -0.5, 0.0], substream(1, "flat"))
        res = ground_truth_posterior(
            sim, y, prior, np.zeros(3), substream(2, "flat-mh"),
            MHConfig(pilot_steps=2000, main_steps=20_000, thin=10,
                     pilot_scale=prior.range / 10))
        assert np.abs(res.samples.mean(axis=0) - prior.mean).max() < 0.12
        assert np.abs(res.samples.std(axis=0) - prior.range / np.sqrt(12)).max() < 0.1

    def test_bh_set2_configuration(self):
        sim, prior, theta_star = bh_parameter_set(2)
        assert sim.config.beta_intensity == 10.0
        assert np.array_equal(theta_star, [-0.7, -0.4, 0.5, 0.3])
        assert np.array_equal(prior.lower, [-1, -1, 0, 0])

    def test_requires_tractable_likelihood(self):
        sim, prior, _ = fw_experiment()
        with pytest.raises(TypeError, match="tractable"):
            ground_truth_posterior(sim, np.zeros((10, 1)), prior, prior.mean,
                                   substream(0, "x"))


def test_counting_simulator_counts():
    sim, _, theta_star = mvgbm_experiment()
    counter = CountingSimulator(sim)
    rng = substream(0, "count")
    for _ in range(7):
        counter.simulate(theta_star, rng)
    assert counter.calls == 7
    assert counter.theta_dim == sim.theta_dim


def test_get_experiment_rejects_unknown_model():
    with pytest.raises(ValueError, match="unknown model"):
        get_experiment("nope")
