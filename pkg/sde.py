# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

"""Reproducible Stratonovich integration of group-valued multiscale SDEs.

Noise is counter based: the Gaussian increments of path ``stream_id`` at step
``counter`` are a pure function of ``(master_seed, stream_id, counter)``, read
from a Philox-4x64 stream keyed by ``master_seed + 2**64 * stream_id``.

A model handed to the engine provides

    noise_dim                      increments consumed per step
    group_states                   {state key: group tag} checked on record
    suite                          default observable names
    initial_state(seed, ids)       batched state dict
    step(state, dw, clock)         pure batched step, dw has shape (N, noise_dim)
    observe(state, names)          {name: (N,) array}
"""

import logging
import math
import time

import numpy as np
import torch.multiprocessing as mp
from scipy.special import ndtri

import lie
import utils
from distributions import estimate_from_samples

logger = logging.getLogger(__name__)

WORDS_PER_COUNTER = 4
# initial-condition draws live far above any step counter
INIT_COUNTER = 1 << 192
MAX_BASE_STEP = 1. / 20
# relative distance of a sample time from the step grid
GRID_TOL = 1e-9
DEFAULT_BLOCK = 256
DEFAULT_CHUNK = 256


class SimulationError(RuntimeError):

    def __init__(self, message, failed_at=None, stream_ids=None, record=None):
        super(SimulationError, self).__init__(message, failed_at, stream_ids)
        self.message = message
        self.failed_at = failed_at
        self.stream_ids = stream_ids
        self.record = record

    def __str__(self):
        return self.message


def philox_key(master_seed, stream_id):
    if not 0 <= master_seed < 2 ** 64:
        raise ValueError('master seed must be an unsigned 64-bit integer, got {}'.format(master_seed))
    if not 0 <= stream_id < 2 ** 64:
        raise ValueError('stream id out of range: {}'.format(stream_id))
    return int(master_seed) + (int(stream_id) << 64)


def counters_per_step(k):
    return -(-k // WORDS_PER_COUNTER)


def words_to_normal(words):
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2. ** -53
    return ndtri(u)


class NoiseStream(object):

    def __init__(self, master_seed, stream_id, counter=0):
        self.key = philox_key(master_seed, stream_id)
        if counter < 0:
            raise ValueError('counter must be nonnegative, got {}'.format(counter))
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.counter = int(counter)

    def advance(self, steps=1):
        return NoiseStream(self.master_seed, self.stream_id, self.counter + steps)

    def raw(self, first_counter, n_words):
        return np.random.Philox(key=self.key, counter=first_counter).random_raw(n_words)

    def generator(self):
        """numpy Generator for initial-condition draws of this stream."""
        return np.random.Generator(np.random.Philox(key=self.key, counter=INIT_COUNTER + self.counter))

    def __repr__(self):
        return 'NoiseStream(seed={}, stream={}, counter={})'.format(self.master_seed, self.stream_id, self.counter)


def gauss_increments(stream, k, h):
    """k independent N(0, h) draws for step ``stream.counter``."""
    if not h > 0:
        raise ValueError('step must be positive, got {}'.format(h))
    cps = counters_per_step(k)
    words = stream.raw(stream.counter * cps, cps * WORDS_PER_COUNTER)[:k]
    return words_to_normal(words) * math.sqrt(h)


def gauss_block(master_seed, stream_ids, first_step, n_steps, k, h):
    """Increments of shape (len(stream_ids), n_steps, k); bitwise equal to per-step draws."""
    cps = counters_per_step(k)
    width = cps * WORDS_PER_COUNTER
    words = np.empty((len(stream_ids), n_steps, width), dtype=np.uint64)
    for i, sid in enumerate(stream_ids):
        stream = NoiseStream(master_seed, sid)
        words[i] = stream.raw(first_step * cps, n_steps * width).reshape(n_steps, width)
    return words_to_normal(words[..., :k]) * math.sqrt(h)


class Clock(object):
    """Step rule: the effective step h * eps resolves the fast scale."""

    def __init__(self, h, eps, t=0., slow=True):
        if not eps > 0:
            raise ValueError('eps must be positive, got {}'.format(eps))
        if not 0 < h <= MAX_BASE_STEP:
            raise ValueError('base step h = {} violates effective step <= eps/20'.format(h))
        self.h = float(h)
        self.eps = float(eps)
        self.t = float(t)
        self.slow = bool(slow)

    @property
    def dt(self):
        return self.h * self.eps

    def original_time(self, tau):
        return tau / self.eps if self.slow else tau

    def clock_time(self, steps):
        t = steps * self.dt
        return t * self.eps if self.slow else t

    def steps_to(self, tau):
        """Step index that reaches clock time ``tau``; off-grid times raise ValueError."""
        exact = self.original_time(tau) / self.dt
        steps = int(round(exact))
        if abs(exact - steps) > GRID_TOL * max(1., abs(exact)):
            raise ValueError('t = {!r} is not on the step grid of {} ({!r} steps)'.format(tau, self, exact))
        return steps

    def advance(self, steps=1):
        return Clock(self.h, self.eps, self.t + steps * self.dt, self.slow)

    def __repr__(self):
        return 'Clock(h={}, eps={}, dt={}, slow={})'.format(self.h, self.eps, self.dt, self.slow)


class PathRecord(object):

    def __init__(self, times, states, observables, stream, failed_at=None):
        times = np.asarray(times, dtype=np.float64)
        if np.any(np.diff(times) <= 0):
            raise ValueError('record times must be strictly increasing')
        self.times = times
        self.states = states
        self.observables = observables
        self.stream = stream
        self.failed_at = failed_at


def _combine(drift, diffusions, dw, h):
    increment = h * drift
    for k in range(dw.shape[-1]):
        increment = increment + dw[..., k, None, None] * diffusions[..., k, :, :]
    return increment


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise lie.NumericDomainError('non-finite SDE coefficient')


def exp_euler_array(u, drift, diffusions, dw, h, tag):
    """Batched U exp(sum_k A_k dW_k + A_0 h), reprojected."""
    increment = _combine(drift, diffusions, dw, h)
    return lie.reproject_array(u @ lie.expm_array(increment, tag), tag)


def exp_euler_step(u, drift, diffusions, dw, h):
    for a in [drift] + list(diffusions):
        if a.tag != u.tag or a.n != u.n:
            raise ValueError('coefficient in {} does not match group {}'.format(a.tag, u.tag))
    d = u.n
    stack = np.stack([a.entries for a in diffusions]) if diffusions else np.zeros((0, d, d), u.entries.dtype)
    dw = np.asarray(dw, dtype=np.float64).reshape(-1)
    if dw.shape[0] != stack.shape[0]:
        raise ValueError('{} increments for {} diffusion fields'.format(dw.shape[0], stack.shape[0]))
    out = exp_euler_array(u.entries[None], drift.entries, stack, dw[None], h, u.tag)
    return lie.GroupElement(out[0], u.tag)


def heun_group_array(u, sigma, dw, h, tag):
    """Stratonovich Heun step in the body frame; sigma(u) returns (drift, diffusions)."""
    drift, diffusions = sigma(u)
    _check_finite(drift, diffusions)
    predictor = u @ lie.expm_array(_combine(drift, diffusions, dw, h), tag)
    drift_p, diffusions_p = sigma(predictor)
    _check_finite(drift_p, diffusions_p)
    increment = _combine(0.5 * (drift + drift_p), 0.5 * (diffusions + diffusions_p), dw, h)
    return lie.reproject_array(u @ lie.expm_array(increment, tag), tag)


def heun_group_step(u, sigma, dw, h):
    dw = np.asarray(dw, dtype=np.float64).reshape(1, -1)
    out = heun_group_array(u.entries[None], sigma, dw, h, u.tag)
    return lie.GroupElement(out[0], u.tag)


def heun_step(x, sigma, dw, h):
    """Stratonovich Heun step in a flat chart; sigma(x) returns (drift (..., d), diffusions (..., k, d))."""
    drift, diffusions = sigma(x)
    _check_finite(drift, diffusions)
    predictor = x + h * drift + np.sum(dw[..., :, None] * diffusions, axis=-2)
    drift_p, diffusions_p = sigma(predictor)
    _check_finite(drift_p, diffusions_p)
    return (x + 0.5 * h * (drift + drift_p)
            + np.sum(dw[..., :, None] * (0.5 * (diffusions + diffusions_p)), axis=-2))


def _check_groups(model, state):
    for key, tag in model.group_states.items():
        defect = float(np.max(lie.group_defect(state[key])))
        if defect > lie.GROUP_TOL:
            raise lie.DriftError('{} left the {} group (defect {:.3e})'.format(key, tag, defect))


def sample_steps(clock, times):
    targets = [clock.steps_to(t) for t in times]
    if any(t < 0 for t in targets) or any(b <= a for a, b in zip(targets, targets[1:])):
        raise ValueError('sample times {} do not map to increasing steps of {}'.format(list(times), clock))
    return targets


def simulate_chunk(model, clock, master_seed, stream_ids, times, names, keep_states=False, block=DEFAULT_BLOCK):
    """Run one batch of paths; returns (values[name, time, path], states per sample)."""
    stream_ids = np.asarray(stream_ids, dtype=np.int64)
    targets = sample_steps(clock, times)
    values = np.empty((len(names), len(targets), len(stream_ids)))
    states = []
    state = model.initial_state(master_seed, stream_ids)
    step, k = 0, 0

    def record():
        _check_groups(model, state)
        observed = model.observe(state, names)
        for i, name in enumerate(names):
            if not np.all(np.isfinite(observed[name])):
                raise lie.NumericDomainError('non-finite {} observed'.format(name))
            values[i, k] = observed[name]
        if keep_states:
            states.append({key: np.array(v) for key, v in state.items()})

    try:
        while k < len(targets) and targets[k] == step:
            record()
            k += 1
        while step < targets[-1]:
            n = min(block, targets[-1] - step)
            dw = gauss_block(master_seed, stream_ids, step, n, model.noise_dim, clock.dt)
            for j in range(n):
                state = model.step(state, dw[:, j], clock)
                step += 1
                while k < len(targets) and targets[k] == step:
                    record()
                    k += 1
    except (ArithmeticError, ValueError) as e:
        failed_at = clock.clock_time(step)
        partial = PathRecord(times[:k], states, values[:, :k], stream_ids, failed_at=failed_at)
        raise SimulationError('{} failed at t = {!r} on streams {}..{}: {}'.format(
            model.name, failed_at, stream_ids[0], stream_ids[-1], e),
            failed_at, (int(stream_ids[0]), int(stream_ids[-1])), partial) from e
    return values, states


def integrate_path(model, clock, stream, times, names=None):
    names = tuple(names or model.suite)
    if stream.counter != 0:
        raise ValueError('paths start at counter 0, got {}'.format(stream.counter))
    values, states = simulate_chunk(model, clock, stream.master_seed, [stream.stream_id], times, names,
                                    keep_states=True)
    observables = {name: values[i, :, 0] for i, name in enumerate(names)}
    path_states = [{key: v[0] for key, v in s.items()} for s in states]
    return PathRecord(times, path_states, observables, stream)


def _run_job(job):
    model, clock, master_seed, stream_ids, times, names = job
    start = time.time()
    values, _ = simulate_chunk(model, clock, master_seed, stream_ids, times, names)
    return values, time.time() - start


def integrate_batch(model, n_paths, clock, master_seed, times, names=None, workers=1,
                    chunk=DEFAULT_CHUNK, first_stream=0, return_samples=False):
    """Monte Carlo estimates ordered by (time, observable).

    Paths are cut into chunks of fixed size, so every path sees the same
    arithmetic for any worker count, and reduction is an exact fsum in path order.
    """
    if n_paths < 1:
        raise ValueError('need at least one path, got {}'.format(n_paths))
    if workers < 1 or chunk < 1:
        raise ValueError('workers and chunk must be positive')
    names = tuple(names or model.suite)
    jobs = [(model, clock, master_seed, np.arange(s, min(s + chunk, n_paths)) + first_stream, times, names)
            for s in range(0, n_paths, chunk)]
    meter = utils.AverageMeter()
    results = []
    if workers > 1 and len(jobs) > 1:
        with mp.Pool(processes=min(workers, len(jobs))) as pool:
            for values, seconds in pool.imap(_run_job, jobs):
                results.append(values)
                meter.update(seconds)
    else:
        for job in jobs:
            values, seconds = _run_job(job)
            results.append(values)
            meter.update(seconds)
    logger.info('%s eps=%g: %d paths in %d chunks, %.2fs per chunk', model.name, clock.eps, n_paths,
                len(jobs), meter.avg)
    samples = np.concatenate(results, axis=-1)
    estimates = [estimate_from_samples(name, t, samples[i, j])
                 for j, t in enumerate(times) for i, name in enumerate(names)]
    if return_samples:
        return estimates, samples
    return estimates
