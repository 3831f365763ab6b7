# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

"""Effective generator constants of the homogenized slow motion.

Three independent sources are kept side by side:

    published   the constants stated with the limit theorems
    kubo        c = (1/dim) int_0^inf tr C(s) ds for the stationary velocity
                autocorrelation C of the fast-modulated drift
    quadrature  Haar averaged coefficients divided by the fast spectral gap

Every rate is the coefficient c of the Laplacian on the unit base sphere,
generator c * Delta, so a degree-l harmonic decays like exp(-c l (l + n - 1) t).
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import trapezoid
from scipy.linalg import orth

import lie
import sde
from distributions import ReferenceDecay
from models import HopfConfig, OUGeodesicConfig, RotInvConfig, circle_array

logger = logging.getLogger(__name__)

SOURCES = ('published', 'kubo', 'quadrature')
KINDS = ('hopf', 'geodesic', 'rotinv')
KUBO_METHODS = ('auto', 'closed', 'monte_carlo')

CIRCLE_NODES = 1024
EULER_NODES = 16
EULER_ANGLE_NODES = 32
HAAR_SAMPLES = 4096
# the Hopf projection doubles horizontal speeds: Delta_H (f o pi) = 4 (Delta f) o pi
HOPF_BASE_SCALE = 4.
TAIL_FRACTION = 0.01


class UnsupportedConfiguration(ValueError):
    pass


class OracleFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class EffectiveRate:
    c: float
    source: str
    n: int
    se: float = 0.

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError('rate source must be one of {}, got {!r}'.format(SOURCES, self.source))
        if not self.c > 0:
            raise ValueError('effective coefficient must be positive, got {!r}'.format(self.c))

    def reference(self, l=1):
        return ReferenceDecay(l, self.n, self.c)

    def decay(self, l):
        return self.reference(l).rate


@dataclass(frozen=True)
class AveragingSpec:
    """Which averaged coefficients to compute.

    kind      hopf: fields g Y0 on span(X2, X3); geodesic: g e0; rotinv: g e_l, l = 1..n
    vector    Y0 coordinates (c2, c3) for hopf, e0 otherwise
    fields    vertical diffusion fields (rotinv); None means the full basis
    measure   invariant measure of the fast process; only 'haar' is supported
    """
    kind: str
    n: int = 2
    vector: tuple = (1., 0.)
    fields: object = None
    measure: str = 'haar'
    seed: int = 0


@dataclass(frozen=True)
class AveragedCoefficients:
    a: np.ndarray
    b: np.ndarray
    se: np.ndarray


def generated_dimension(fields):
    """Dimension of the Lie algebra generated by a stack of matrices."""
    fields = np.asarray(fields, dtype=np.float64)
    if fields.shape[0] == 0:
        return 0
    d = fields.shape[-1]
    span = orth(fields.reshape(len(fields), -1).T, rcond=1e-10)
    while span.shape[1] > 0:
        mats = span.T.reshape(-1, d, d)
        brackets = (mats[:, None] @ mats[None, :] - mats[None, :] @ mats[:, None]).reshape(-1, d * d)
        grown = orth(np.concatenate([span, brackets.T], axis=1), rcond=1e-10)
        if grown.shape[1] == span.shape[1]:
            break
        span = grown
    return span.shape[1]


def _check_haar(spec):
    if spec.measure != 'haar':
        raise UnsupportedConfiguration('only the Haar invariant measure is supported, got {!r}'.format(spec.measure))
    if spec.kind == 'rotinv' and spec.fields is not None:
        k = spec.n * (spec.n - 1) // 2
        if generated_dimension(spec.fields) < k:
            raise UnsupportedConfiguration('vertical fields do not generate so({}); the invariant measure '
                                           'is not Haar'.format(spec.n))


def _circle_weights(nodes):
    # trapezoid on the closed grid is the exact periodic rule
    theta = np.linspace(0., 2. * np.pi, nodes + 1)
    w = np.full(nodes + 1, 2. * np.pi / nodes)
    w[0] = w[-1] = np.pi / nodes
    return theta, w / (2. * np.pi)


def _so3_rule(nodes=EULER_NODES, angle_nodes=EULER_ANGLE_NODES):
    """Haar product rule on SO(3): z-y-z Euler angles, Gauss-Legendre in cos(beta)."""
    x, wx = leggauss(nodes)
    theta, wt = _circle_weights(angle_nodes)
    alpha, cosb, gamma = np.meshgrid(theta, x, theta, indexing='ij')
    weights = (wt[:, None, None] * (0.5 * wx)[None, :, None] * wt[None, None, :]).ravel()

    def rz(t):
        out = np.zeros(t.shape + (3, 3))
        out[..., 0, 0] = out[..., 1, 1] = np.cos(t)
        out[..., 0, 1] = -np.sin(t)
        out[..., 1, 0] = np.sin(t)
        out[..., 2, 2] = 1.
        return out

    beta = np.arccos(cosb)
    ry = np.zeros(beta.shape + (3, 3))
    ry[..., 0, 0] = ry[..., 2, 2] = np.cos(beta)
    ry[..., 0, 2] = np.sin(beta)
    ry[..., 2, 0] = -np.sin(beta)
    ry[..., 1, 1] = 1.
    g = rz(alpha) @ ry @ rz(gamma)
    return g.reshape(-1, 3, 3), weights


def haar_rule(n, seed=0, samples=HAAR_SAMPLES):
    """(nodes, weights, exact) for integrating over SO(n) against Haar measure."""
    if n == 2:
        theta, w = _circle_weights(CIRCLE_NODES)
        c, s = np.cos(theta), np.sin(theta)
        g = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        return g, w, True
    if n == 3:
        g, w = _so3_rule()
        return g, w, True
    rng = sde.NoiseStream(seed, 0).generator()
    return lie.haar_array(rng, lie.SO, n, samples), np.full(samples, 1. / samples), False


def _weighted(values, w, exact):
    """Weighted mean over the leading axis, and its Monte Carlo SE when the rule is not exact."""
    mean = np.tensordot(w, values, axes=1)
    if exact:
        return mean, np.zeros_like(mean)
    count = values.shape[0]
    se = np.std(values, axis=0, ddof=1) / np.sqrt(count)
    return mean, se


def averaged_coefficients(spec):
    """a_jk = int <g-translated field, H_j><., H_k> dg and the drift average b over Haar measure."""
    if spec.kind not in KINDS:
        raise NotImplementedError('unknown averaging kind {}'.format(spec.kind))
    _check_haar(spec)
    if spec.kind == 'hopf':
        basis = lie.milnor_basis()
        y0 = spec.vector[0] * basis[1].entries + spec.vector[1] * basis[2].entries
        theta = np.linspace(0., 2. * np.pi, CIRCLE_NODES + 1)
        coords = np.real(basis.coordinates(circle_array(theta) @ y0))[:, 1:]
        outer = coords[:, :, None] * coords[:, None, :]
        a = trapezoid(outer, theta, axis=0) / (2. * np.pi)
        b = trapezoid(coords, theta, axis=0) / (2. * np.pi)
        return AveragedCoefficients(a, b, np.zeros_like(a))
    g, w, exact = haar_rule(spec.n, spec.seed)
    if spec.kind == 'geodesic':
        e0 = np.array(spec.vector, dtype=np.float64)
        v = g @ e0
        a, se = _weighted(v[:, :, None] * v[:, None, :], w, exact)
        b, _ = _weighted(v, w, exact)
        return AveragedCoefficients(a, b, se)
    # sum_l <g e_l, e_i><g e_l, e_j> = (g g^T)_ij
    a, se = _weighted(g @ np.swapaxes(g, -1, -2), w, exact)
    e0 = np.zeros(spec.n) if spec.vector is None else np.array(spec.vector, dtype=np.float64)
    b, _ = _weighted(g @ e0, w, exact)
    return AveragedCoefficients(a, b, se)


def averaging_spec(config, seed=0):
    if isinstance(config, HopfConfig):
        return AveragingSpec('hopf', 2, (config.c2, config.c3), seed=seed)
    if isinstance(config, OUGeodesicConfig):
        return AveragingSpec('geodesic', config.n, config.e0, seed=seed)
    if isinstance(config, RotInvConfig):
        return AveragingSpec('rotinv', config.n, config.e0, fields=config.fields, seed=seed)
    raise NotImplementedError('no averaging spec for {}'.format(type(config).__name__))


@dataclass(frozen=True)
class FastRepresentation:
    """The fast process acting on the slow velocity: v_s = rho(g_s) y0."""
    fields: np.ndarray
    drift: np.ndarray
    y0: np.ndarray
    n: int
    scale: float

    @property
    def generator(self):
        return 0.5 * np.sum(self.fields @ self.fields, axis=0) + self.drift

    @property
    def abelian(self):
        mats = list(self.fields) + [self.drift]
        return all(np.allclose(a @ b, b @ a, atol=1e-12) for a in mats for b in mats)


def fast_representation(config):
    if isinstance(config, HopfConfig):
        basis = lie.milnor_basis()
        horizontal = [basis[1].entries, basis[2].entries]
        # left multiplication by X1 on span(X2, X3)
        j = np.array([[np.real(lie.inner_array(h, basis[0].entries @ k)) for k in horizontal]
                      for h in horizontal])
        return FastRepresentation(j[None], np.zeros((2, 2)), np.array([config.c2, config.c3]),
                                  2, HOPF_BASE_SCALE)
    if isinstance(config, OUGeodesicConfig):
        return FastRepresentation(np.array(config.basis.stack), config.a0_matrix, np.array(config.e0),
                                  config.n, 1.)
    raise NotImplementedError('no fast representation for {}'.format(type(config).__name__))


def _stable_inverse(m):
    eig = np.linalg.eigvals(m)
    if np.max(np.real(eig)) >= -1e-12:
        raise OracleFailure('fast generator is not stable (max Re eig {:.3e}); '
                            'the velocity correlation does not decay'.format(np.max(np.real(eig))))
    return -float(np.max(np.real(eig)))


def _kubo_closed(rep):
    _stable_inverse(rep.generator)
    integral = float(rep.y0 @ np.linalg.solve(-rep.generator, rep.y0))
    return integral / rep.n, 0.


def _kubo_monte_carlo(rep, seed, paths, ds, horizon):
    gap = _stable_inverse(rep.generator)
    horizon = horizon or 12. / gap
    steps = int(np.ceil(horizon / ds))
    ids = np.arange(paths)
    d = rep.y0.shape[0]
    g = np.stack([lie.haar_array(sde.NoiseStream(seed, int(i)).generator(), lie.SO, d) for i in ids])
    v0 = g @ rep.y0
    corr = np.empty((paths, steps + 1))
    corr[:, 0] = np.sum(v0 * v0, axis=-1)
    k = rep.fields.shape[0]
    first = 0
    while first < steps:
        count = min(sde.DEFAULT_BLOCK, steps - first)
        dw = sde.gauss_block(seed, ids, first, count, k, ds)
        for j in range(count):
            g = sde.exp_euler_array(g, rep.drift, rep.fields, dw[:, j], ds, lie.SO)
            corr[:, first + j + 1] = np.sum(v0 * (g @ rep.y0), axis=-1)
        first += count
    tail = corr[:, -max(steps // 10, 1):].mean(axis=1)
    tail_mean = abs(float(np.mean(tail)))
    tail_se = float(np.std(tail, ddof=1) / np.sqrt(paths))
    c0 = float(np.mean(corr[:, 0]))
    if tail_mean - 3. * tail_se > TAIL_FRACTION * c0:
        raise OracleFailure('velocity correlation tail {:.3e} exceeds {:.0%} of C(0) = {:.3e}'
                            .format(tail_mean, TAIL_FRACTION, c0))
    integrals = trapezoid(corr, dx=ds, axis=1)
    return float(np.mean(integrals)) / rep.n, float(np.std(integrals, ddof=1) / np.sqrt(paths)) / rep.n


def _kubo_white_noise(n, seed, paths):
    # velocity sqrt(eps) g db: C(s) = E[g g^T] delta(s); the eps g e0 drift vanishes in the limit
    g = lie.haar_array(sde.NoiseStream(seed, 0).generator(), lie.SO, n, paths)
    values = 0.5 * np.trace(g @ np.swapaxes(g, -1, -2), axis1=-2, axis2=-1) / n
    return float(np.mean(values)), float(np.std(values, ddof=1) / np.sqrt(paths))


def kubo_effective_rate(config, method='auto', seed=0, paths=2000, ds=0.02, horizon=None):
    """Green-Kubo coefficient of the homogenized base motion, rescaled to the unit sphere."""
    if method not in KUBO_METHODS:
        raise NotImplementedError('unknown kubo method {}'.format(method))
    if isinstance(config, RotInvConfig):
        c, se = _kubo_white_noise(config.n, seed, paths)
        logger.info('kubo %s: c = %.6g (se %.2g) on the unit base sphere', type(config).__name__, c, se)
        return EffectiveRate(c, 'kubo', config.n, se)
    rep = fast_representation(config)
    if method == 'closed' or (method == 'auto' and rep.abelian):
        c, se = _kubo_closed(rep)
    else:
        c, se = _kubo_monte_carlo(rep, seed, paths, ds, horizon)
    logger.info('kubo %s: c = %.6g (se %.2g) on the unit base sphere', type(config).__name__, rep.scale * c,
                rep.scale * se)
    return EffectiveRate(rep.scale * c, 'kubo', rep.n, rep.scale * se)


def spectral_gap(basis):
    """Decay rate of first harmonics under the fast generator (1/2) sum A_l^2."""
    casimir = lie.casimir_sum(basis)
    eig = np.linalg.eigvals(casimir)
    if not np.allclose(eig, eig[0], atol=1e-12):
        raise UnsupportedConfiguration('fast generator does not act by a scalar on first harmonics')
    return -0.5 * float(np.real(eig[0]))


def quadrature_effective_rate(config, seed=0):
    """c = mean diag(a) / kappa with the Haar averaged coefficients a."""
    spec = averaging_spec(config, seed)
    coeffs = averaged_coefficients(spec)
    mean_diag = float(np.mean(np.diag(coeffs.a)))
    se = float(np.mean(np.diag(coeffs.se)))
    if isinstance(config, RotInvConfig):
        return EffectiveRate(0.5 * mean_diag, 'quadrature', config.n, 0.5 * se)
    if isinstance(config, HopfConfig):
        kappa = spectral_gap(lie.OrthonormalBasis([lie.milnor_basis()[0]]))
        scale = HOPF_BASE_SCALE
    else:
        if np.any(np.array(config.a0) != 0):
            raise UnsupportedConfiguration('vertical drift a0 shifts the fast spectrum; use the kubo oracle')
        kappa = spectral_gap(config.basis)
        scale = 1.
    return EffectiveRate(scale * mean_diag / kappa, 'quadrature', spec.n, scale * se / kappa)


def published_effective_rate(config):
    if isinstance(config, HopfConfig):
        # 1/2 |Y0|^2 Delta_H on SU(2) is 2 |Y0|^2 Delta on the unit sphere
        return EffectiveRate(0.5 * HOPF_BASE_SCALE * config.y0_norm ** 2, 'published', 2)
    if isinstance(config, OUGeodesicConfig):
        return EffectiveRate(4. / (config.n * (config.n - 1)), 'published', config.n)
    if isinstance(config, RotInvConfig):
        return EffectiveRate(0.5, 'published', config.n)
    raise NotImplementedError('no published constant for {}'.format(type(config).__name__))


def effective_rates(config, seed=0):
    """All available sources for a model config, keyed by source."""
    rates = {'published': published_effective_rate(config), 'kubo': kubo_effective_rate(config, seed=seed)}
    try:
        rates['quadrature'] = quadrature_effective_rate(config, seed)
    except UnsupportedConfiguration as e:
        logger.info('quadrature rate skipped: %s', e)
    return rates
