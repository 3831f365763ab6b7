# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

"""Experiment files: one ``key = value`` per line, ``#`` starts a comment.

    model = hopf-full
    epsilon = 0.2, 0.1, 0.05
    T = 0.5
    seed = 7

Lists are comma separated, matrix rows (``sigma``) are separated by ``;``,
booleans are ``on``/``off``.
"""

import dataclasses
import re
from dataclasses import dataclass

import models
import sde
import utils


class ParseError(ValueError):

    def __init__(self, message, lineno=0):
        super(ParseError, self).__init__(message, lineno)
        self.message = message
        self.lineno = lineno

    def __str__(self):
        if self.lineno:
            return 'line {}: {}'.format(self.lineno, self.message)
        return self.message


REQUIRED = ('model', 'epsilon', 'T', 'seed')

# key order here is the canonical order
DEFAULTS = {
    'model': None,
    'epsilon': None,
    'T': None,
    'seed': None,
    'h': 0.05,
    'paths': 1000,
    'times': None,
    'observables': None,
    'out': 'results.csv',
    'y0': (1., 0.),
    'mode': None,
    'noise': True,
    'fast_start': 'haar',
    'n': 2,
    'e0': None,
    'a0': None,
    'sigma': None,
    'calculus': 'stratonovich',
    'fast': True,
    'timescale': None,
    'chunk': sde.DEFAULT_CHUNK,
}

TIMESCALES = ('slow', 'original')
ORIGINAL_TIME_MODELS = ('heisenberg', 'hopf-coupled')


def _float(text):
    return float(text)


def _floats(text):
    return tuple(float(v) for v in text.split(','))


def _int(text):
    return int(text, 10)


def _bool(text):
    if text not in ('on', 'off'):
        raise ValueError('expected on or off, got {!r}'.format(text))
    return text == 'on'


def _names(text):
    return tuple(v.strip() for v in text.split(',') if v.strip())


def _matrix(text):
    return tuple(_floats(row) for row in text.split(';'))


PARSERS = {
    'model': str, 'epsilon': _floats, 'T': _float, 'seed': _int, 'h': _float, 'paths': _int,
    'times': _floats, 'observables': _names, 'out': str, 'y0': _floats, 'mode': str, 'noise': _bool,
    'fast_start': str, 'n': _int, 'e0': _floats, 'a0': _floats, 'sigma': _matrix, 'calculus': str,
    'fast': _bool, 'timescale': str, 'chunk': _int,
}


def _format(value):
    if isinstance(value, bool):
        return 'on' if value else 'off'
    if isinstance(value, float):
        return utils.format_float(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return '; '.join(_format(row) for row in value)
        return ', '.join(_format(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    epsilon: tuple
    T: float
    seed: int
    h: float = DEFAULTS['h']
    paths: int = DEFAULTS['paths']
    times: tuple = None
    observables: tuple = None
    out: str = DEFAULTS['out']
    y0: tuple = DEFAULTS['y0']
    mode: str = None
    noise: bool = True
    fast_start: str = 'haar'
    n: int = 2
    e0: tuple = None
    a0: tuple = None
    sigma: tuple = None
    calculus: str = 'stratonovich'
    fast: bool = True
    timescale: str = None
    chunk: int = sde.DEFAULT_CHUNK
    lines: dict = dataclasses.field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        def fail(key, message):
            raise ParseError('{}: {}'.format(key, message), self.lines.get(key, 0))

        def put(key, value):
            object.__setattr__(self, key, value)

        model = self.model
        if model == 'hopf':
            model = 'hopf-' + (self.mode or 'full')
        if model not in models.MODELS:
            fail('model', 'unknown model {!r}, expected one of {}'.format(self.model, ', '.join(models.MODELS)))
        if self.mode is not None:
            if not model.startswith('hopf-'):
                fail('mode', 'only hopf models take a mode')
            if model != 'hopf-' + self.mode:
                fail('mode', 'mode {!r} contradicts model {!r}'.format(self.mode, self.model))
        put('model', model)
        put('mode', model[len('hopf-'):] if model.startswith('hopf-') else None)

        if not self.epsilon or any(not e > 0 for e in self.epsilon):
            fail('epsilon', 'every eps must be positive')
        if not self.T > 0:
            fail('T', 'T must be positive')
        if not 0 <= self.seed < 2 ** 64:
            fail('seed', 'seed must be an unsigned 64-bit integer')
        if not 0 < self.h <= sde.MAX_BASE_STEP:
            fail('h', 'base step must lie in (0, {}]'.format(sde.MAX_BASE_STEP))
        if self.paths < 1:
            fail('paths', 'need at least one path')
        if self.chunk < 1:
            fail('chunk', 'chunk must be positive')
        if len(self.y0) != 2:
            fail('y0', 'y0 takes two coordinates (c2, c3)')

        times = self.times if self.times is not None else tuple(self.T * k / 5. for k in range(1, 6))
        if any(not t > 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
            fail('times', 'times must be positive and strictly increasing')
        if times[-1] > self.T:
            fail('times', 'last time {!r} exceeds T = {!r}'.format(times[-1], self.T))
        put('times', tuple(times))

        timescale = self.timescale or ('original' if model in ORIGINAL_TIME_MODELS else 'slow')
        if timescale not in TIMESCALES:
            fail('timescale', 'timescale must be slow or original')
        put('timescale', timescale)

        try:
            engine_model = models.get_model(self)
        except NotImplementedError as e:
            fail('model', str(e))
        except ValueError as e:
            fail(self._culprit(str(e)), str(e))
        observables = self.observables or engine_model.suite
        try:
            engine_model.check_names(observables)
        except NotImplementedError as e:
            fail('observables', str(e))
        put('observables', tuple(observables))

        for eps in self.epsilon:
            clock = sde.Clock(self.h, eps, slow=timescale == 'slow')
            try:
                sde.sample_steps(clock, self.times)
            except ValueError as e:
                fail('times', 'eps = {!r}: {}'.format(eps, e))

    def _culprit(self, message):
        words = set(re.findall(r'\w+', message.lower()))
        for key in ('e0', 'a0', 'sigma', 'y0', 'n', 'calculus', 'fast_start'):
            if key in words:
                return key
        return 'model'

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def engine_model(self):
        return models.get_model(self)

    def model_config(self):
        return self.engine_model().cfg

    def canonical_text(self):
        lines = []
        for key in DEFAULTS:
            value = getattr(self, key)
            if value is None:
                continue
            lines.append('{} = {}'.format(key, _format(value)))
        return '\n'.join(lines) + '\n'

    @property
    def hash(self):
        return utils.text_hash(self.canonical_text())


def parse_config(text):
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ParseError('expected key = value, got {!r}'.format(raw.strip()), lineno)
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in DEFAULTS:
            raise ParseError('unknown key {!r}'.format(key), lineno)
        if key in values:
            raise ParseError('duplicate key {!r} (first set on line {})'.format(key, lines[key]), lineno)
        if not value:
            raise ParseError('empty value for {!r}'.format(key), lineno)
        try:
            values[key] = PARSERS[key](value)
        except ValueError as e:
            raise ParseError('malformed value for {!r}: {}'.format(key, e), lineno) from e
        lines[key] = lineno
    missing = [key for key in REQUIRED if key not in values]
    if missing:
        raise ParseError('missing required key(s): {}'.format(', '.join(missing)))
    return ExperimentConfig(lines=lines, **values)


def load_config(path):
    with open(path, encoding='utf-8') as f:
        return parse_config(f.read())
