# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

"""Reference laws and estimators for weak-convergence checks."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import eval_gegenbauer, eval_legendre

HEISENBERG_CALCULI = ('stratonovich', 'ito')


class FitDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableEstimate:
    name: str
    t: float
    mean: float
    se: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError('estimate needs at least one sample')


def estimate_from_samples(name, t, values):
    """Mean and standard error with exactly rounded sums; a single path has se = nan."""
    values = np.asarray(values, dtype=np.float64).ravel()
    n = values.size
    if n == 0:
        raise ValueError('no samples for {}'.format(name))
    if not np.all(np.isfinite(values)):
        raise ValueError('non-finite samples for {} at t = {}'.format(name, t))
    mean = math.fsum(values) / n
    if n == 1:
        se = float('nan')
    else:
        se = math.sqrt(math.fsum((values - mean) ** 2) / (n - 1) / n)
    return ObservableEstimate(name, float(t), mean, se, n)


@dataclass(frozen=True)
class ReferenceDecay:
    l: int
    n: int
    c: float

    @property
    def rate(self):
        return self.c * self.l * (self.l + self.n - 1)

    def value(self, t):
        return math.exp(-self.rate * t)


def sphere_harmonic(l, n, cos):
    """Zonal harmonic of degree l on S^n, normalised to 1 at the pole."""
    if l not in (1, 2):
        raise ValueError('harmonic degree must be 1 or 2, got {}'.format(l))
    if n < 2:
        raise ValueError('sphere dimension must be >= 2, got {}'.format(n))
    cos = np.clip(cos, -1., 1.)
    if n == 2:
        return eval_legendre(l, cos)
    alpha = 0.5 * (n - 1)
    return eval_gegenbauer(l, alpha, cos) / eval_gegenbauer(l, alpha, 1.)


def legendre_observable(l, x, x0, n):
    x = getattr(x, 'coords', x)
    x0 = getattr(x0, 'coords', x0)
    return float(sphere_harmonic(l, n, float(np.dot(x, x0))))


def sphere_decay_reference(c, l, n, t):
    if not c > 0:
        raise ValueError('generator coefficient must be positive, got {}'.format(c))
    return ReferenceDecay(l, n, c).value(t)


def rate_fit(estimates):
    """Weighted least-squares slope of -log(mean) against t; returns (rate, fit se)."""
    if len(estimates) < 4:
        raise ValueError('rate fit needs at least 4 time points, got {}'.format(len(estimates)))
    t = np.array([e.t for e in estimates])
    mean = np.array([e.mean for e in estimates])
    se = np.array([e.se for e in estimates])
    if np.any(mean <= 0):
        bad = estimates[int(np.argmax(mean <= 0))]
        raise FitDomainError('nonpositive mean {!r} at t = {!r}'.format(bad.mean, bad.t))
    y = -np.log(mean)
    if np.all(se > 0):
        # delta method: sd(log m) = se / m
        coeffs, cov = np.polyfit(t, y, 1, w=mean / se, cov='unscaled')
    else:
        coeffs, cov = np.polyfit(t, y, 1, cov=True)
    return float(coeffs[0]), float(math.sqrt(max(cov[0, 0], 0.)))


def two_sample_z(a, b):
    """Two-sided p-value for equal means."""
    if a.n < 30 or b.n < 30:
        raise ValueError('two-sample z test needs >= 30 samples per side, got {} and {}'.format(a.n, b.n))
    pooled = math.sqrt(a.se ** 2 + b.se ** 2)
    if pooled == 0.:
        return 1. if a.mean == b.mean else 0.
    z = abs(a.mean - b.mean) / pooled
    return float(2. * stats.norm.sf(z))


def bonferroni(alpha, m):
    return alpha / max(m, 1)


def levy_area_moment2(t):
    """E[A_t^2] for A_t = (1/2) int (x dy - y dx) of standard planar Brownian motion."""
    if t < 0:
        raise ValueError('time must be nonnegative, got {}'.format(t))
    return t * t / 4.


def heisenberg_reference(t, calculus='stratonovich'):
    """Second moments of x_t and of the stochastic area for the Heisenberg model.

    Read with Ito rotation, (x, y) is planar Brownian motion. Read literally in
    Stratonovich form the rotation carries an Ito drift -x/4, so (x, y) is a
    planar Ornstein-Uhlenbeck process for every eps.
    """
    if calculus == 'ito':
        return {'x2': t, 'area2': levy_area_moment2(t)}
    if calculus == 'stratonovich':
        var = 2. * (1. - math.exp(-0.5 * t))
        return {'x2': var, 'area2': t - var}
    raise NotImplementedError('unknown calculus {}'.format(calculus))
