import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

import lie
import models
import sde


def test_block_draws_equal_per_step_draws():
    ids = [0, 3, 17]
    block = sde.gauss_block(99, ids, 2, 5, 6, 0.01)
    for i, sid in enumerate(ids):
        for j in range(5):
            single = sde.gauss_increments(sde.NoiseStream(99, sid, counter=2 + j), 6, 0.01)
            np.testing.assert_array_equal(block[i, j], single)


def test_streams_are_independent_of_each_other():
    a = sde.gauss_increments(sde.NoiseStream(1, 0), 4, 1.)
    b = sde.gauss_increments(sde.NoiseStream(1, 1), 4, 1.)
    c = sde.gauss_increments(sde.NoiseStream(2, 0), 4, 1.)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gaussian_moments():
    draws = sde.gauss_block(5, [0], 0, 20000, 5, 1.).ravel()
    assert abs(np.mean(draws)) < 0.02
    assert abs(np.var(draws) - 1.) < 0.03


def test_noise_stream_validation():
    with pytest.raises(ValueError):
        sde.NoiseStream(-1, 0)
    with pytest.raises(ValueError):
        sde.NoiseStream(0, 0, counter=-1)
    with pytest.raises(ValueError):
        sde.gauss_increments(sde.NoiseStream(0, 0), 2, 0.)
    assert sde.NoiseStream(0, 4).advance(3).counter == 3


def test_clock():
    clock = sde.Clock(0.05, 0.1)
    assert abs(clock.dt - 0.005) < 1e-15
    assert clock.steps_to(1.) == 2000
    assert sde.Clock(0.05, 0.1, slow=False).steps_to(1.) == 200
    assert abs(clock.clock_time(2000) - 1.) < 1e-12
    with pytest.raises(ValueError):
        sde.Clock(0.1, 0.1)
    with pytest.raises(ValueError):
        sde.Clock(0.05, 0.)


def test_sample_steps_must_increase():
    with pytest.raises(ValueError):
        sde.sample_steps(sde.Clock(0.05, 1., slow=False), [0.1, 0.101])


def test_sample_times_must_lie_on_the_step_grid():
    clock = sde.Clock(0.05, 0.5)
    assert sde.sample_steps(clock, [0.05, 0.15000000000000002, 0.2]) == [4, 12, 16]
    with pytest.raises(ValueError):
        clock.steps_to(0.11)
    with pytest.raises(ValueError):
        sde.sample_steps(sde.Clock(0.05, 1., slow=False), [0.1, 0.125])


def test_exp_euler_on_circle_is_exact(milnor):
    x1 = lie.u1_element(1.)
    zero = lie.u1_element(0.)
    g = lie.GroupElement(np.eye(2), lie.U1)
    dw = sde.gauss_block(3, [0], 0, 500, 1, 0.01)[0, :, 0]
    for step in dw:
        g = sde.exp_euler_step(g, zero, [x1], [step], 0.01)
    exact = lie.expm(lie.u1_element(math.fsum(dw)))
    np.testing.assert_allclose(g.entries, exact.entries, atol=1e-12)


def test_exp_euler_checks_coefficients(milnor):
    g = lie.GroupElement(np.eye(2), lie.SU2)
    with pytest.raises(ValueError):
        sde.exp_euler_step(g, lie.AlgebraElement(np.zeros((3, 3)), lie.SO), [], [], 0.1)
    with pytest.raises(ValueError):
        sde.exp_euler_step(g, milnor[0], [milnor[1]], [0.1, 0.2], 0.1)


def test_heun_step_is_weak_order_one():
    """dX = X o dW has E X_1 = exp(1/2); Heun's multiplier is averaged exactly by Gauss-Hermite."""
    nodes, weights = hermegauss(12)
    weights = weights / weights.sum()

    def sigma(x):
        return np.zeros_like(x), x[..., None, :]

    def error(h):
        dw = math.sqrt(h) * nodes[:, None]
        multiplier = sde.heun_step(np.ones((len(nodes), 1)), sigma, dw, h)[:, 0]
        return abs(math.exp(0.5) - float(weights @ multiplier) ** round(1. / h))

    ratio = error(0.01) / error(0.005)
    assert 1.8 < ratio < 2.2


def test_heun_group_step_on_circle(milnor):
    def sigma(u):
        shape = u.shape[:-2]
        return np.zeros(shape + (2, 2), np.complex128), np.broadcast_to(milnor[0].entries, shape + (1, 2, 2))

    g = lie.GroupElement(np.eye(2), lie.SU2)
    out = sde.heun_group_step(g, sigma, [0.3], 0.01)
    np.testing.assert_allclose(out.entries, lie.expm(0.3 * milnor[0]).entries, atol=1e-12)


class Exploding(models.Model):
    name = 'exploding'
    noise_dim = 1
    group_states = {'g': lie.SO}
    suite = ('trace',)
    available = ('trace',)

    def initial_state(self, master_seed, stream_ids):
        return {'g': np.broadcast_to(np.eye(2), (len(stream_ids), 2, 2)).copy(), 'k': 0}

    def step(self, state, dw, clock):
        k = state['k'] + 1
        g = state['g'] * (2. if k == 3 else 1.)
        return {'g': g, 'k': k}

    def _observe(self, state, name):
        return np.trace(state['g'], axis1=-2, axis2=-1)


def test_failure_carries_time_and_partial_record():
    clock = sde.Clock(0.05, 1., slow=False)
    with pytest.raises(sde.SimulationError) as info:
        sde.integrate_batch(Exploding(), 4, clock, 0, [0.05, 0.1, 0.15, 0.2])
    error = info.value
    assert abs(error.failed_at - 0.15) < 1e-12
    assert error.stream_ids == (0, 3)
    assert len(error.record.times) == 2


def test_integrate_path_records_states():
    model = models.HeisenbergModel(models.HeisenbergConfig(calculus='ito'))
    clock = sde.Clock(0.05, 1., slow=False)
    record = sde.integrate_path(model, clock, sde.NoiseStream(4, 2), [0.5, 1.])
    assert list(record.times) == [0.5, 1.]
    assert len(record.states) == 2
    assert record.states[-1]['q'].shape == (3,)
    with pytest.raises(ValueError):
        sde.integrate_path(model, clock, sde.NoiseStream(4, 2, counter=1), [0.5])


def test_batch_matches_single_paths():
    model = models.HeisenbergModel(models.HeisenbergConfig())
    clock = sde.Clock(0.05, 0.5, slow=False)
    _, samples = sde.integrate_batch(model, 5, clock, 8, [0.25, 0.5], names=['x'], chunk=2,
                                     return_samples=True)
    for sid in range(5):
        record = sde.integrate_path(model, clock, sde.NoiseStream(8, sid), [0.25, 0.5], names=['x'])
        np.testing.assert_array_equal(samples[0, :, sid], record.observables['x'])


def test_batch_is_independent_of_workers():
    model = models.HeisenbergModel(models.HeisenbergConfig(calculus='ito'))
    clock = sde.Clock(0.05, 0.5, slow=False)
    one = sde.integrate_batch(model, 12, clock, 21, [0.25, 0.5], chunk=4, workers=1)
    two = sde.integrate_batch(model, 12, clock, 21, [0.25, 0.5], chunk=4, workers=2)
    assert one == two


def test_single_path_has_undefined_se():
    model = models.HeisenbergModel(models.HeisenbergConfig())
    estimates = sde.integrate_batch(model, 1, sde.Clock(0.05, 1., slow=False), 0, [0.1], names=['x2'])
    assert estimates[0].n == 1
    assert math.isnan(estimates[0].se)
