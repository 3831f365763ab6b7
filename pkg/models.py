# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

"""The slow/fast systems as pure batched step functions.

Step functions take a state dict of arrays with a leading path axis, the
increments dw of shape (N, noise_dim) and a Clock, and return a new dict.
Slow-clock models are observed at t / eps.
"""

import logging
from dataclasses import dataclass

import numpy as np

import bundles
import lie
import sde
from distributions import HEISENBERG_CALCULI, sphere_harmonic

logger = logging.getLogger(__name__)

MODELS = ('hopf-full', 'hopf-reduced', 'hopf-coupled', 'heisenberg', 'ou-geodesic', 'rotinv')
HOPF_MODES = ('full', 'reduced', 'coupled')
FAST_STARTS = ('haar', 'identity')

SPHERE_SUITE = ('P1', 'P2')
HEISENBERG_SUITE = ('x', 'y', 'z', 'x2', 'y2', 'xy', 'x4', 'y4', 'area', 'area2')

_MILNOR = lie.milnor_basis()
X1, X2, X3 = (e.entries for e in _MILNOR)


def hypoellipticity_certificate(c2, c3):
    """det of the Milnor coordinates of X_1, Y_0 and [Y_0, X_1]; zero iff the span is degenerate."""
    y0 = lie.AlgebraElement(c2 * X2 + c3 * X3, lie.SU2)
    columns = [_MILNOR.coordinates(v) for v in (_MILNOR[0], y0, lie.bracket(y0, _MILNOR[0]))]
    return float(np.linalg.det(np.stack(columns, axis=1)))


def _check_fast_start(fast_start):
    if fast_start not in FAST_STARTS:
        raise ValueError('fast_start must be one of {}, got {!r}'.format(FAST_STARTS, fast_start))


@dataclass(frozen=True)
class HopfConfig:
    c2: float = 1.
    c3: float = 0.
    mode: str = 'full'
    noise: bool = True
    fast_start: str = 'haar'

    def __post_init__(self):
        if self.mode not in HOPF_MODES:
            raise ValueError('hopf mode must be one of {}, got {!r}'.format(HOPF_MODES, self.mode))
        _check_fast_start(self.fast_start)
        if abs(hypoellipticity_certificate(self.c2, self.c3)) < 1e-12:
            raise ValueError('Y0 = c2 X2 + c3 X3 must be nonzero: span(X1, Y0, [Y0, X1]) is degenerate')

    @property
    def y0(self):
        return self.c2 * X2 + self.c3 * X3

    @property
    def y0_norm(self):
        return float(np.hypot(self.c2, self.c3))


@dataclass
class HeisenbergState:
    x: float = 0.
    y: float = 0.
    z: float = 0.

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise ValueError('Heisenberg coordinates must be finite')

    def as_array(self):
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class HeisenbergConfig:
    calculus: str = 'stratonovich'
    fast: bool = True
    noise: bool = True

    def __post_init__(self):
        if self.calculus not in HEISENBERG_CALCULI:
            raise ValueError('calculus must be one of {}, got {!r}'.format(HEISENBERG_CALCULI, self.calculus))


def _vector(values, n, name):
    values = np.array(values, dtype=np.float64).reshape(-1)
    if values.shape != (n,):
        raise ValueError('{} needs {} entries, got {}'.format(name, n, values.shape[0]))
    return values


@dataclass(frozen=True)
class OUGeodesicConfig:
    n: int = 2
    e0: tuple = None
    a0: tuple = None
    noise: bool = True
    fast_start: str = 'haar'

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError('ou-geodesic runs on S^2 or S^3, got n = {}'.format(self.n))
        _check_fast_start(self.fast_start)
        e0 = np.eye(self.n)[0] if self.e0 is None else _vector(self.e0, self.n, 'e0')
        if abs(np.linalg.norm(e0) - 1.) > 1e-12:
            raise ValueError('e0 must be a unit vector, |e0| = {!r}'.format(np.linalg.norm(e0)))
        k = self.n * (self.n - 1) // 2
        a0 = np.zeros(k) if self.a0 is None else _vector(self.a0, k, 'a0')
        object.__setattr__(self, 'e0', tuple(e0))
        object.__setattr__(self, 'a0', tuple(a0))

    @property
    def basis(self):
        return lie.so_basis(self.n)

    @property
    def a0_matrix(self):
        return self.basis.combine(np.array(self.a0))


@dataclass(frozen=True)
class RotInvConfig:
    n: int = 2
    e0: tuple = None
    sigma: tuple = None
    noise: bool = True
    fast_start: str = 'haar'

    def __post_init__(self):
        if self.n < 2:
            raise ValueError('rotinv needs n >= 2, got {}'.format(self.n))
        _check_fast_start(self.fast_start)
        k = self.n * (self.n - 1) // 2
        e0 = np.zeros(self.n) if self.e0 is None else _vector(self.e0, self.n, 'e0')
        sigma = np.eye(k) if self.sigma is None else np.array(self.sigma, dtype=np.float64)
        if sigma.ndim != 2 or sigma.shape[0] != k:
            raise ValueError('sigma must have {} rows (one per so({}) basis element), got shape {}'
                             .format(k, self.n, sigma.shape))
        if not np.all(np.isfinite(sigma)):
            raise ValueError('sigma must be finite')
        object.__setattr__(self, 'e0', tuple(e0))
        object.__setattr__(self, 'sigma', tuple(map(tuple, sigma)))

    @property
    def sigma_matrix(self):
        return np.array(self.sigma)

    @property
    def fields(self):
        """B_k = sum_j sigma[j, k] A_j, shape (m, n, n)."""
        return np.tensordot(self.sigma_matrix.T, lie.so_basis(self.n).stack, axes=1)


def circle_array(theta):
    """exp(theta X_1) for a batch of angles."""
    out = np.zeros(np.shape(theta) + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = np.exp(1j * theta)
    out[..., 1, 1] = np.exp(-1j * theta)
    return out


def _fast_angle(state, dw, clock, noise):
    if not noise:
        return state['theta']
    return state['theta'] + dw[:, 0] / np.sqrt(clock.eps)


def hopf_full_step(state, dw, clock, cfg):
    """du = u Y0 g dt + u X1 db / sqrt(eps); g advanced exactly as exp(X1 b / sqrt(eps))."""
    theta = state['theta']
    theta_next = _fast_angle(state, dw, clock, cfg.noise)
    body = clock.dt * (cfg.y0 @ circle_array(theta)) + (theta_next - theta)[:, None, None] * X1
    u = lie.reproject_array(state['u'] @ lie.expm_array(body, lie.SU2), lie.SU2)
    return dict(state, u=u, theta=theta_next)


def hopf_reduced_body(theta, theta_next, y0, dt):
    # g commutes with itself, so the midpoint stays in span(X2, X3)
    return 0.5 * dt * ((circle_array(theta) + circle_array(theta_next)) @ y0)


def hopf_reduced_step(state, dw, clock, cfg):
    """d xt = xt g Y0 dt, one midpoint step with the exact fast angle."""
    theta_next = _fast_angle(state, dw, clock, cfg.noise)
    body = hopf_reduced_body(state['theta'], theta_next, cfg.y0, clock.dt)
    xt = lie.reproject_array(state['xt'] @ lie.expm_array(body, lie.SU2), lie.SU2)
    return dict(state, xt=xt, theta=theta_next)


def hopf_coupled_step(state, dw, clock, cfg):
    full = hopf_full_step(state, dw, clock, cfg)
    reduced = hopf_reduced_step(state, dw, clock, cfg)
    return dict(full, xt=reduced['xt'])


def heisenberg_fields(q, eps, fast=True):
    """Stratonovich coefficients: drift (N, 3) and diffusions (N, 3, 3) over (db1, db2, dw)."""
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    c, s = np.cos(z), np.sin(z)
    drift = np.zeros(q.shape)
    diffusions = np.zeros(q.shape[:-1] + (3, 3))
    diffusions[..., 0, 0] = c
    diffusions[..., 0, 1] = s
    diffusions[..., 0, 2] = 0.5 * (x * s - y * c)
    diffusions[..., 1, 0] = -s
    diffusions[..., 1, 1] = c
    diffusions[..., 1, 2] = 0.5 * (x * c + y * s)
    if fast:
        drift[..., 2] = -z / eps
        diffusions[..., 2, 2] = 1. / np.sqrt(eps)
    return drift, diffusions


def heisenberg_step(state, dw, clock, cfg):
    q = state['q']
    if not cfg.noise:
        dw = np.zeros_like(dw)
    if cfg.calculus == 'stratonovich':
        q_next = sde.heun_step(q, lambda p: heisenberg_fields(p, clock.eps, cfg.fast), dw, clock.dt)
    else:
        # rotation read in the Ito sense: (x, y) is exactly planar Brownian motion
        x, y, z = q[:, 0], q[:, 1], q[:, 2]
        c, s = np.cos(z), np.sin(z)
        dx = c * dw[:, 0] - s * dw[:, 1]
        dy = s * dw[:, 0] + c * dw[:, 1]
        dz = 0.5 * (x * dy - y * dx)
        if cfg.fast:
            dz = dz + dw[:, 2] / np.sqrt(clock.eps) - z * clock.h
        q_next = np.stack([x + dx, y + dy, z + dz], axis=-1)
    area = state['area'] + 0.5 * (q[:, 0] * q_next[:, 1] - q[:, 1] * q_next[:, 0])
    return dict(state, q=q_next, area=area)


def ou_geodesic_step(state, dw, clock, model):
    """du = H(u)(e0) dt + sum_k A_k*(u) o dw_k / sqrt(eps) + A0*(u) dt / eps."""
    if not model.cfg.noise:
        dw = np.zeros_like(dw)
    drift = model.horizontal + model.vertical_drift / clock.eps
    frame = sde.exp_euler_array(state['R'], drift, model.verticals, dw / np.sqrt(clock.eps), clock.dt, lie.SO)
    return dict(state, R=frame, prev=state['R'][..., :, 0])


def rotinv_step(state, dw, clock, model):
    """dxt = sqrt(eps) H(xt)(g o db) + eps H(xt)(g e0) dt with constant vertical coefficients."""
    n = model.cfg.n
    g = state['g']
    db = dw[:, :n] if model.cfg.noise else np.zeros((dw.shape[0], n))
    move = np.sqrt(clock.eps) * (g @ db[..., None])[..., 0] + clock.eps * clock.dt * (g @ model.e0)
    frame = lie.reproject_array(state['R'] @ lie.expm_array(bundles.horizontal_array(move), lie.SO), lie.SO)
    g_next = sde.exp_euler_array(g, model.zero_drift, model.fields, dw[:, n:], clock.dt, lie.SO)
    return dict(state, R=frame, g=g_next)


def _draws(master_seed, stream_ids, draw):
    return np.stack([draw(sde.NoiseStream(master_seed, int(sid)).generator()) for sid in stream_ids])


class Model(object):
    """Engine-facing wrapper around a step function and its observables."""

    name = None
    noise_dim = 0
    group_states = {}
    suite = ()
    available = ()
    slow = True

    def check_names(self, names):
        unknown = [name for name in names if name not in self.available]
        if unknown:
            raise NotImplementedError('{} has no observable(s) {}'.format(self.name, ', '.join(unknown)))

    def observe(self, state, names):
        self.check_names(names)
        return {name: self._observe(state, name) for name in names}


def _sphere_observable(cos, name, n):
    return sphere_harmonic(int(name[1]), n, cos)


class HopfModel(Model):

    noise_dim = 1
    available = SPHERE_SUITE + ('g_cos', 'discrepancy')

    def __init__(self, cfg):
        self.cfg = cfg
        self.name = 'hopf-' + cfg.mode
        self.slow = cfg.mode != 'coupled'
        self.group_states = {'full': {'u': lie.SU2}, 'reduced': {'xt': lie.SU2},
                             'coupled': {'u': lie.SU2, 'xt': lie.SU2}}[cfg.mode]
        self.suite = SPHERE_SUITE + ('g_cos',) + (('discrepancy',) if cfg.mode == 'coupled' else ())
        self._step = {'full': hopf_full_step, 'reduced': hopf_reduced_step,
                      'coupled': hopf_coupled_step}[cfg.mode]

    def initial_state(self, master_seed, stream_ids):
        if self.cfg.fast_start == 'haar' and self.cfg.mode != 'coupled':
            theta = _draws(master_seed, stream_ids, lambda rng: rng.uniform(0., 2. * np.pi))
        else:
            theta = np.zeros(len(stream_ids))
        n = len(stream_ids)
        # u = xt g at time 0
        return {'u': np.broadcast_to(np.eye(2, dtype=np.complex128), (n, 2, 2)).copy(),
                'xt': circle_array(-theta), 'theta': theta}

    def step(self, state, dw, clock):
        return self._step(state, dw, clock, self.cfg)

    def _observe(self, state, name):
        if name == 'g_cos':
            return np.cos(state['theta'])
        if name == 'discrepancy':
            return lie.group_distance(state['u'], state['xt'] @ circle_array(state['theta']))
        frame = state['xt'] if self.cfg.mode == 'reduced' else state['u']
        return _sphere_observable(bundles.hopf_project_array(frame)[..., 2], name, 2)


class HeisenbergModel(Model):

    name = 'heisenberg'
    noise_dim = 3
    slow = False
    suite = HEISENBERG_SUITE
    available = HEISENBERG_SUITE

    def __init__(self, cfg, start=None):
        self.cfg = cfg
        self.start = (start or HeisenbergState()).as_array()

    def initial_state(self, master_seed, stream_ids):
        n = len(stream_ids)
        return {'q': np.tile(self.start, (n, 1)), 'area': np.zeros(n)}

    def step(self, state, dw, clock):
        return heisenberg_step(state, dw, clock, self.cfg)

    def _observe(self, state, name):
        q = state['q']
        x, y = q[:, 0], q[:, 1]
        return {
            'x': lambda: x, 'y': lambda: y, 'z': lambda: q[:, 2],
            'x2': lambda: x ** 2, 'y2': lambda: y ** 2, 'xy': lambda: x * y,
            'x4': lambda: x ** 4, 'y4': lambda: y ** 4,
            'area': lambda: state['area'], 'area2': lambda: state['area'] ** 2,
        }[name]()


def _frame_start(master_seed, stream_ids, n, fast_start):
    frames = np.broadcast_to(np.eye(n + 1), (len(stream_ids), n + 1, n + 1)).copy()
    if fast_start == 'haar':
        frames[:, 1:, 1:] = _draws(master_seed, stream_ids, lambda rng: lie.haar_array(rng, lie.SO, n))
    return frames


class OUGeodesicModel(Model):

    name = 'ou-geodesic'
    group_states = {'R': lie.SO}
    suite = SPHERE_SUITE + ('speed',)
    available = SPHERE_SUITE + ('speed',)

    def __init__(self, cfg):
        self.cfg = cfg
        self.noise_dim = cfg.n * (cfg.n - 1) // 2
        self.horizontal = bundles.horizontal_array(np.array(cfg.e0))
        self.verticals = bundles.vertical_array(cfg.basis.stack)
        self.vertical_drift = bundles.vertical_array(cfg.a0_matrix)

    def initial_state(self, master_seed, stream_ids):
        frames = _frame_start(master_seed, stream_ids, self.cfg.n, self.cfg.fast_start)
        return {'R': frames, 'prev': frames[..., :, 0].copy(), 'dt': np.zeros(len(stream_ids))}

    def step(self, state, dw, clock):
        out = ou_geodesic_step(state, dw, clock, self)
        out['dt'] = np.full(dw.shape[0], clock.dt)
        return out

    def _observe(self, state, name):
        if name == 'speed':
            moved = np.linalg.norm(state['R'][..., :, 0] - state['prev'], axis=-1)
            return np.divide(moved, state['dt'], out=np.zeros_like(moved), where=state['dt'] > 0)
        return _sphere_observable(state['R'][..., 0, 0], name, self.cfg.n)


class RotInvModel(Model):

    name = 'rotinv'
    group_states = {'R': lie.SO, 'g': lie.SO}
    suite = SPHERE_SUITE
    available = SPHERE_SUITE

    def __init__(self, cfg):
        self.cfg = cfg
        self.e0 = np.array(cfg.e0)
        self.fields = cfg.fields
        self.zero_drift = np.zeros((cfg.n, cfg.n))
        self.noise_dim = cfg.n + self.fields.shape[0]

    def initial_state(self, master_seed, stream_ids):
        n, count = self.cfg.n, len(stream_ids)
        if self.cfg.fast_start == 'haar':
            g = _draws(master_seed, stream_ids, lambda rng: lie.haar_array(rng, lie.SO, n))
        else:
            g = np.broadcast_to(np.eye(n), (count, n, n)).copy()
        return {'R': np.broadcast_to(np.eye(n + 1), (count, n + 1, n + 1)).copy(), 'g': g}

    def step(self, state, dw, clock):
        return rotinv_step(state, dw, clock, self)

    def _observe(self, state, name):
        return _sphere_observable(state['R'][..., 0, 0], name, self.cfg.n)


def get_model(config):
    """Build the engine model for an ExperimentConfig."""
    if config.model.startswith('hopf-'):
        mode = config.model[len('hopf-'):]
        model = HopfModel(HopfConfig(c2=config.y0[0], c3=config.y0[1], mode=mode, noise=config.noise,
                                     fast_start=config.fast_start))
    elif config.model == 'heisenberg':
        model = HeisenbergModel(HeisenbergConfig(calculus=config.calculus, fast=config.fast, noise=config.noise))
    elif config.model == 'ou-geodesic':
        model = OUGeodesicModel(OUGeodesicConfig(n=config.n, e0=config.e0, a0=config.a0, noise=config.noise,
                                                 fast_start=config.fast_start))
    elif config.model == 'rotinv':
        model = RotInvModel(RotInvConfig(n=config.n, e0=config.e0, sigma=config.sigma, noise=config.noise,
                                         fast_start=config.fast_start))
    else:
        raise NotImplementedError('unknown model {}'.format(config.model))
    if config.timescale is not None:
        model.slow = config.timescale == 'slow'
    logger.debug('built %s with %d noise dimensions, slow clock %s', model.name, model.noise_dim, model.slow)
    return model
