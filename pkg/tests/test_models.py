from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

import averaging
import distributions
import lie
import models
import sde

coeff = st.floats(min_value=-4., max_value=4., allow_nan=False)


@given(coeff, coeff)
@settings(max_examples=50, deadline=None)
def test_hypoellipticity_certificate(c2, c3):
    assert abs(models.hypoellipticity_certificate(c2, c3) - 2. * (c2 ** 2 + c3 ** 2)) < 1e-10


def test_degenerate_hopf_config_rejected():
    with pytest.raises(ValueError):
        models.HopfConfig(0., 0.)
    with pytest.raises(ValueError):
        models.HopfConfig(mode='sideways')
    with pytest.raises(ValueError):
        models.HopfConfig(fast_start='uniform')


def test_reduced_increment_is_horizontal(milnor, rng):
    theta = rng.uniform(0., 2. * np.pi, 100)
    theta_next = theta + rng.standard_normal(100)
    cfg = models.HopfConfig(0.6, -1.3)
    body = models.hopf_reduced_body(theta, theta_next, cfg.y0, 0.01)
    np.testing.assert_allclose(lie.inner_array(body, milnor[0].entries), 0., atol=1e-15)
    zero = models.hopf_reduced_body(theta, theta_next, np.zeros((2, 2)), 0.01)
    np.testing.assert_array_equal(zero, 0.)


def test_hopf_full_without_noise_is_a_one_parameter_subgroup():
    cfg = models.HopfConfig(1., 0.5, noise=False, fast_start='identity')
    model = models.HopfModel(cfg)
    clock = sde.Clock(0.05, 0.1, slow=False)
    record = sde.integrate_path(model, clock, sde.NoiseStream(0, 0), [0.5, 1.])
    np.testing.assert_allclose(record.states[-1]['u'], lie.expm_array(cfg.y0, lie.SU2), atol=1e-10)
    assert record.observables['g_cos'][-1] == 1.


def test_hopf_starts_at_the_pole():
    model = models.HopfModel(models.HopfConfig())
    state = model.initial_state(3, np.arange(4))
    observed = model.observe(state, ['P1', 'P2'])
    np.testing.assert_allclose(observed['P1'], 1., atol=1e-12)
    np.testing.assert_allclose(observed['P2'], 1., atol=1e-12)
    assert np.ptp(state['theta']) > 0.


def test_hopf_coupled_discrepancy_shrinks_with_step():
    model = models.HopfModel(models.HopfConfig(mode='coupled', fast_start='identity'))
    assert not model.slow

    def terminal(h):
        estimates = sde.integrate_batch(model, 32, sde.Clock(h, 0.1, slow=False), 17, [0.5],
                                        names=['discrepancy'])
        return estimates[0].mean

    coarse, fine = terminal(0.04), terminal(0.005)
    assert fine < coarse / 2.


def test_hopf_coupled_agrees_at_start():
    model = models.HopfModel(models.HopfConfig(mode='coupled'))
    state = model.initial_state(0, np.arange(3))
    np.testing.assert_allclose(model.observe(state, ['discrepancy'])['discrepancy'], 0., atol=1e-15)


def test_heisenberg_zero_increments_keep_origin():
    cfg = models.HeisenbergConfig()
    state = {'q': np.zeros((2, 3)), 'area': np.zeros(2)}
    out = models.heisenberg_step(state, np.zeros((2, 3)), sde.Clock(0.05, 0.1), cfg)
    np.testing.assert_array_equal(out['q'], 0.)
    np.testing.assert_array_equal(out['area'], 0.)


def test_heisenberg_ito_without_fast_motion_tracks_area_exactly():
    model = models.HeisenbergModel(models.HeisenbergConfig(calculus='ito', fast=False))
    clock = sde.Clock(0.05, 0.01, slow=False)
    _, samples = sde.integrate_batch(model, 20, clock, 2, [1.], names=['z', 'area'], return_samples=True)
    np.testing.assert_allclose(samples[0], samples[1], atol=1e-12)


def test_heisenberg_stratonovich_without_fast_motion_tracks_area():
    model = models.HeisenbergModel(models.HeisenbergConfig(fast=False))
    clock = sde.Clock(0.05, 0.01, slow=False)
    _, samples = sde.integrate_batch(model, 50, clock, 2, [1.], names=['z', 'area'], return_samples=True)
    assert np.mean(np.abs(samples[0] - samples[1])) < 0.1


def test_heisenberg_ito_marginal_is_brownian():
    model = models.HeisenbergModel(models.HeisenbergConfig(calculus='ito'))
    estimates = sde.integrate_batch(model, 4000, sde.Clock(0.05, 0.1, slow=False), 31, [1.], names=['x2'],
                                    chunk=1000)
    assert abs(estimates[0].mean - 1.) < 4. * estimates[0].se


def test_heisenberg_stratonovich_marginal_is_ornstein_uhlenbeck():
    model = models.HeisenbergModel(models.HeisenbergConfig())
    estimates = sde.integrate_batch(model, 4000, sde.Clock(0.05, 0.1, slow=False), 32, [1.], names=['x2'],
                                    chunk=1000)
    assert abs(estimates[0].mean - 2. * (1. - np.exp(-0.5))) < 4. * estimates[0].se + 0.02


def test_heisenberg_state_validation():
    with pytest.raises(ValueError):
        models.HeisenbergState(x=np.inf)
    with pytest.raises(ValueError):
        models.HeisenbergConfig(calculus='ito-stratonovich')


def test_ou_geodesic_step_has_unit_speed():
    model = models.OUGeodesicModel(models.OUGeodesicConfig(n=2))
    clock = sde.Clock(0.05, 0.1)
    state = model.initial_state(0, np.arange(64))
    still = model.step(state, np.zeros((64, 1)), clock)
    dt = clock.dt
    np.testing.assert_allclose(model.observe(still, ['speed'])['speed'], 2. * np.sin(dt / 2.) / dt, atol=1e-12)
    moved = model.step(state, sde.gauss_block(0, np.arange(64), 0, 1, 1, dt)[:, 0], clock)
    speed = model.observe(moved, ['speed'])['speed']
    assert abs(np.mean(speed) - 1.) < 0.02
    assert float(np.max(lie.group_defect(moved['R']))) < 1e-12


def test_ou_geodesic_config_validation():
    with pytest.raises(ValueError):
        models.OUGeodesicConfig(n=4)
    with pytest.raises(ValueError):
        models.OUGeodesicConfig(n=2, e0=(1., 1.))
    with pytest.raises(ValueError):
        models.OUGeodesicConfig(n=3, a0=(0., 1.))
    cfg = models.OUGeodesicConfig(n=3)
    assert cfg.e0 == (1., 0., 0.)
    assert cfg.a0 == (0., 0., 0.)


def test_ou_geodesic_keeps_fibre_start():
    model = models.OUGeodesicModel(models.OUGeodesicConfig(n=3))
    state = model.initial_state(4, np.arange(5))
    np.testing.assert_array_equal(state['R'][:, :, 0], np.tile([1., 0., 0., 0.], (5, 1)))
    assert float(np.max(lie.group_defect(state['R']))) < 1e-12


def test_rotinv_without_noise_is_constant():
    model = models.RotInvModel(models.RotInvConfig(n=2, sigma=((0.,),), noise=False))
    record = sde.integrate_path(model, sde.Clock(0.05, 0.5), sde.NoiseStream(1, 0), [0.25, 0.5])
    np.testing.assert_allclose(record.states[-1]['R'], np.eye(3), atol=1e-14)
    np.testing.assert_allclose(record.observables['P1'], 1., atol=1e-14)


def test_rotinv_noise_dimension_and_fields():
    cfg = models.RotInvConfig(n=3, sigma=np.eye(3)[:, :2])
    model = models.RotInvModel(cfg)
    assert model.noise_dim == 5
    np.testing.assert_allclose(cfg.fields, lie.so_basis(3).stack[:2], atol=1e-15)
    with pytest.raises(ValueError):
        models.RotInvConfig(n=3, sigma=np.eye(2))


def test_get_model_dispatch():
    config = SimpleNamespace(model='hopf-reduced', y0=(0., 2.), noise=True, fast_start='haar', timescale='slow')
    model = models.get_model(config)
    assert model.name == 'hopf-reduced'
    assert model.slow
    with pytest.raises(NotImplementedError):
        models.get_model(SimpleNamespace(model='klein-bottle', timescale=None))
    with pytest.raises(NotImplementedError):
        model.observe(model.initial_state(0, [0]), ['x4'])


def _fitted_decay(model, eps, times, seed, paths=4000):
    estimates = sde.integrate_batch(model, paths, sde.Clock(0.05, eps), seed, times, names=['P1'], chunk=1000)
    return distributions.rate_fit(estimates)


def _assert_rate(fit, fit_se, expected):
    assert abs(fit - expected) <= 0.05 * expected + 3. * fit_se


def test_hopf_p1_decays_at_kubo_rate():
    cfg = models.HopfConfig()
    rate = averaging.kubo_effective_rate(cfg)
    assert rate.decay(1) == pytest.approx(8.)
    fit, fit_se = _fitted_decay(models.HopfModel(cfg), 0.05, [0.05, 0.1, 0.15, 0.2], 41)
    _assert_rate(fit, fit_se, rate.decay(1))


def test_ou_geodesic_p1_decays_at_kubo_rate():
    cfg = models.OUGeodesicConfig(n=2)
    rate = averaging.kubo_effective_rate(cfg)
    assert rate.decay(1) == pytest.approx(2.)
    fit, fit_se = _fitted_decay(models.OUGeodesicModel(cfg), 0.05, [0.2, 0.4, 0.6, 0.8], 42, paths=2000)
    _assert_rate(fit, fit_se, rate.decay(1))


@pytest.mark.parametrize('eps', [1., 0.2])
def test_rotinv_p1_decays_at_half_laplacian_rate(eps):
    cfg = models.RotInvConfig(n=2, e0=(0., 0.))
    rate = averaging.kubo_effective_rate(cfg)
    assert rate.decay(1) == pytest.approx(1.)
    fit, fit_se = _fitted_decay(models.RotInvModel(cfg), eps, [0.1, 0.2, 0.3, 0.4, 0.5], 43, paths=2000)
    _assert_rate(fit, fit_se, rate.decay(1))


def _wrapped_normal_cdf(x, sd, terms=4):
    k = np.arange(-terms, terms + 1)[:, None] * 2. * np.pi
    x = np.atleast_1d(x)[None, :]
    return np.sum(stats.norm.cdf((x + k) / sd) - stats.norm.cdf(k / sd), axis=0)


def test_hopf_fast_angle_is_wrapped_normal():
    model = models.HopfModel(models.HopfConfig(fast_start='identity'))
    clock = sde.Clock(0.05, 0.1, slow=False)
    t = 0.1
    _, states = sde.simulate_chunk(model, clock, 44, np.arange(2000), [t], ['g_cos'], keep_states=True)
    wrapped = np.mod(states[-1]['theta'], 2. * np.pi)
    sd = np.sqrt(t / clock.eps)
    assert stats.kstest(wrapped, lambda x: _wrapped_normal_cdf(x, sd)).pvalue > 0.01
