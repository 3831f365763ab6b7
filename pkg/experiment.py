# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

"""Experiment runner: CSV results, JSON sidecar, bit-exact replay, eps sweeps."""

import csv
import itertools
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

import averaging
import config as config_lib
import distributions
import sde
import utils

logger = logging.getLogger(__name__)

CSV_HEADER = ('model', 'epsilon', 't', 'observable', 'mean', 'se', 'n', 'seed', 'config_hash')
FAILED = 'FAILED'
FAMILY_ALPHA = 0.01
RELATIVE_TOL = 0.05
SE_MULTIPLIER = 3.
STEP_HALVINGS = 3
MIN_ORDER = 0.9
# the fast coordinate itself depends on eps
EPS_DEPENDENT = ('z',)


@dataclass(frozen=True)
class ReplayResult:
    ok: bool
    row: int = 0
    expected: str = ''
    actual: str = ''


def _stem(csv_path):
    return os.path.splitext(csv_path)[0]


def sidecar_path(csv_path):
    return _stem(csv_path) + '.json'


def report_path(csv_path):
    return _stem(csv_path) + '.report.json'


def _row(cfg, eps, est):
    fmt = utils.format_float
    return [cfg.model, fmt(eps), fmt(est.t), est.name, fmt(est.mean), fmt(est.se), str(est.n), str(cfg.seed),
            cfg.hash]


def _write_sidecar(cfg, out, failure=None):
    sidecar = {
        'config': cfg.canonical_text(),
        'config_hash': cfg.hash,
        'versions': utils.versions(),
        # common random numbers: every eps reads the same streams
        'streams': {utils.format_float(eps): [0, cfg.paths - 1] for eps in cfg.epsilon},
    }
    if failure is not None:
        sidecar['failure'] = failure
    with open(sidecar_path(out), 'w', encoding='utf-8') as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write('\n')


def run_experiment(cfg, workers=1, logging=None, writer=None, out=None):
    """Run every eps of ``cfg`` and write the result CSV plus its sidecar.

    Returns {eps: [ObservableEstimate ordered by (time, observable)]}.
    """
    log = logging or logger
    out = out or cfg.out
    utils.create_exp_dir(os.path.dirname(out))
    model = cfg.engine_model()
    results = {}
    log.info('%s: %d paths, eps = %s, config %s', cfg.model, cfg.paths, list(cfg.epsilon), cfg.hash[:12])
    with open(out, 'w', newline='', encoding='utf-8') as f:
        rows = csv.writer(f, lineterminator='\n')
        rows.writerow(CSV_HEADER)
        for eps in cfg.epsilon:
            clock = sde.Clock(cfg.h, eps, slow=model.slow)
            try:
                estimates = sde.integrate_batch(model, cfg.paths, clock, cfg.seed, cfg.times, cfg.observables,
                                                workers=workers, chunk=cfg.chunk)
            except sde.SimulationError as e:
                rows.writerow([cfg.model, utils.format_float(eps), utils.format_float(e.failed_at), FAILED,
                               '', '', '', str(cfg.seed), cfg.hash])
                f.flush()
                _write_sidecar(cfg, out, failure={'epsilon': eps, 't': e.failed_at, 'streams': e.stream_ids,
                                                  'message': e.message})
                log.info('simulation failed: %s', e.message)
                raise
            for est in estimates:
                rows.writerow(_row(cfg, eps, est))
            f.flush()
            if writer is not None:
                for est in estimates:
                    writer.add_scalar('{}/{}/eps={}'.format(cfg.model, est.name, eps), est.mean,
                                      cfg.times.index(est.t))
            results[eps] = estimates
    _write_sidecar(cfg, out)
    log.info('wrote %s', out)
    return results


def load_sidecar(csv_path):
    path = sidecar_path(csv_path)
    if not os.path.exists(path):
        raise FileNotFoundError('no sidecar {} for {}'.format(path, csv_path))
    with open(path, encoding='utf-8') as f:
        sidecar = json.load(f)
    cfg = config_lib.parse_config(sidecar['config'])
    if cfg.hash != sidecar['config_hash']:
        raise config_lib.ParseError('sidecar hash does not match its config text')
    return cfg, sidecar


def replay(csv_path, workers=1, logging=None):
    """Re-run the sidecar config and compare every CSV row as an exact string."""
    log = logging or logger
    cfg, _ = load_sidecar(csv_path)
    scratch = _stem(csv_path) + '.replay.csv'
    try:
        try:
            run_experiment(cfg, workers=workers, logging=log, out=scratch)
        except sde.SimulationError:
            pass
        with open(csv_path, encoding='utf-8') as f:
            expected = f.read().split('\n')
        with open(scratch, encoding='utf-8') as f:
            actual = f.read().split('\n')
    finally:
        for path in (scratch, sidecar_path(scratch)):
            if os.path.exists(path):
                os.remove(path)
    for i, (a, b) in enumerate(itertools.zip_longest(expected, actual, fillvalue='<missing>')):
        if a != b:
            log.info('replay mismatch at row %d', i + 1)
            return ReplayResult(False, i + 1, a, b)
    log.info('replay of %s matched %d rows', csv_path, len(expected) - 1)
    return ReplayResult(True)


def _series(estimates, name):
    return [e for e in estimates if e.name == name]


def _within(value, reference, se):
    return abs(value - reference) <= RELATIVE_TOL * abs(reference) + SE_MULTIPLIER * se


def _compare_rate(fit, fit_se, rate):
    decay = distributions.ReferenceDecay(1, rate.n, rate.c).rate
    if _within(fit, decay, fit_se + rate.se):
        verdict = 'agree'
    elif _within(fit, 2. * decay, fit_se + rate.se) or _within(fit, 0.5 * decay, fit_se + rate.se):
        verdict = 'factor-2'
    else:
        verdict = 'disagree'
    return {'source': rate.source, 'c': rate.c, 'decay': decay, 'se': rate.se, 'verdict': verdict}


def _rate_checks(cfg, results, report, writer):
    fits = {}
    for eps, estimates in results.items():
        try:
            fits[eps] = distributions.rate_fit(_series(estimates, 'P1'))
        except distributions.FitDomainError as e:
            report['fits'][utils.format_float(eps)] = {'error': str(e)}
            continue
        report['fits'][utils.format_float(eps)] = {'rate': fits[eps][0], 'se': fits[eps][1]}
        if writer is not None:
            writer.add_scalar('rate/fit', fits[eps][0], cfg.epsilon.index(eps))
    if not fits:
        return
    ordered = sorted(fits)
    if len(ordered) >= 2:
        (la, sa), (lb, sb) = fits[ordered[0]], fits[ordered[1]]
        report['checks'].append({'check': 'cauchy', 'eps': [ordered[0], ordered[1]],
                                 'difference': abs(la - lb), 'pass': bool(abs(la - lb) <= SE_MULTIPLIER * np.hypot(sa, sb))})
    fit, fit_se = fits[ordered[0]]
    rates = averaging.effective_rates(cfg.model_config(), seed=cfg.seed)
    for source, rate in rates.items():
        comparison = _compare_rate(fit, fit_se, rate)
        comparison['eps'] = ordered[0]
        report['rates'][source] = comparison
        if writer is not None:
            writer.add_scalar('rate/{}'.format(source), rate.decay(1), 0)
    kubo = report['rates']['kubo']
    report['checks'].append({'check': 'kubo-rate', 'pass': kubo['verdict'] == 'agree'})


def _invariance_checks(cfg, results, report):
    pairs = list(itertools.combinations(sorted(results), 2))
    names = cfg.observables
    tests = []
    for a, b in pairs:
        for ea, eb in zip(results[a], results[b]):
            if ea.name in EPS_DEPENDENT:
                continue
            tests.append((a, b, ea, eb))
    level = distributions.bonferroni(FAMILY_ALPHA, len(tests))
    failures = []
    for a, b, ea, eb in tests:
        p = distributions.two_sample_z(ea, eb)
        if p < level:
            failures.append({'eps': [a, b], 'observable': ea.name, 't': ea.t, 'p': p})
    report['checks'].append({'check': 'eps-invariance', 'tests': len(tests), 'level': level,
                             'observables': list(names), 'failures': failures, 'pass': not failures})


def _heisenberg_checks(cfg, results, report):
    smallest = min(results)
    for eps, estimates in sorted(results.items()):
        for est in _series(estimates, 'x2'):
            reference = distributions.heisenberg_reference(est.t, cfg.calculus)['x2']
            report['checks'].append({'check': 'variance', 'eps': eps, 't': est.t, 'mean': est.mean,
                                     'reference': reference,
                                     'pass': bool(abs(est.mean - reference) <= SE_MULTIPLIER * est.se)})
    for est in _series(results[smallest], 'area2'):
        reference = distributions.heisenberg_reference(est.t, cfg.calculus)['area2']
        report['checks'].append({'check': 'area', 'eps': smallest, 't': est.t, 'mean': est.mean,
                                 'reference': reference, 'pass': _within(est.mean, reference, est.se)})


def _speed_checks(results, report):
    # unit-speed horizontal lift: |x_{t+dt} - x_t| = dt + O(dt h)
    worst = max(abs(est.mean - 1.) for estimates in results.values() for est in _series(estimates, 'speed'))
    report['checks'].append({'check': 'unit-speed', 'worst': worst, 'pass': worst <= RELATIVE_TOL})


def step_order(cfg, results, workers=1, logging=None, halvings=STEP_HALVINGS):
    """Log-log slope of the mean terminal discrepancy against h, halving h from the config value."""
    steps, means = [], []
    for k in range(halvings + 1):
        if k:
            sub = cfg.replace(h=cfg.h / 2 ** k, out='{}_h{}.csv'.format(_stem(cfg.out), k))
            results = run_experiment(sub, workers=workers, logging=logging)
        terminal = _series(results[min(results)], 'discrepancy')[-1]
        steps.append(cfg.h / 2 ** k)
        means.append(terminal.mean)
    if min(means) <= 0:
        raise distributions.FitDomainError('discrepancy vanished; nothing to fit')
    slope = float(np.polyfit(np.log(steps), np.log(means), 1)[0])
    return steps, means, slope


def converge(cfg, workers=1, logging=None, writer=None):
    """eps sweep with rate fits, oracle comparison and invariance tests; writes the report JSON."""
    log = logging or logger
    results = run_experiment(cfg, workers=workers, logging=log, writer=writer)
    report = {'model': cfg.model, 'config_hash': cfg.hash, 'fits': {}, 'rates': {}, 'checks': []}
    if 'P1' in cfg.observables and cfg.timescale == 'slow':
        _rate_checks(cfg, results, report, writer)
    eps_free = cfg.model == 'heisenberg' or (cfg.model == 'rotinv' and not any(cfg.model_config().e0))
    if eps_free and len(results) >= 2 and cfg.paths >= 30:
        _invariance_checks(cfg, results, report)
    if cfg.model == 'heisenberg':
        _heisenberg_checks(cfg, results, report)
    if 'speed' in cfg.observables:
        _speed_checks(results, report)
    if cfg.model == 'hopf-coupled' and 'discrepancy' in cfg.observables:
        steps, means, slope = step_order(cfg, results, workers=workers, logging=log)
        report['checks'].append({'check': 'step-order', 'h': steps, 'discrepancy': means, 'order': slope,
                                 'pass': slope >= MIN_ORDER})
    report['pass'] = all(check['pass'] for check in report['checks'])
    for check in report['checks']:
        log.info('check %s: %s', check['check'], 'pass' if check['pass'] else 'FAIL')
    for source, comparison in report['rates'].items():
        log.info('rate %s: decay %.5g, verdict %s', source, comparison['decay'], comparison['verdict'])
    with open(report_path(cfg.out), 'w', encoding='utf-8') as f:
        json.dump(report, f, indent=2, sort_keys=True, default=float)
        f.write('\n')
    return report


def haar_table(cfg):
    """Haar averaged coefficients of the model's fast motion."""
    coeffs = averaging.averaged_coefficients(averaging.averaging_spec(cfg.model_config(), cfg.seed))
    return {'a': coeffs.a.tolist(), 'b': coeffs.b.tolist(), 'se': coeffs.se.tolist()}


def oracle_table(cfg):
    """Effective constants from every available source."""
    rates = averaging.effective_rates(cfg.model_config(), seed=cfg.seed)
    return {source: {'c': r.c, 'se': r.se, 'decay1': r.decay(1), 'decay2': r.decay(2)}
            for source, r in rates.items()}
