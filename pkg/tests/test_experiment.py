import csv
import json
import os

import pytest

import averaging
import config
import distributions
import experiment
import intertwine
import sde


def _write(tmp_path, text, name='run'):
    path = tmp_path / (name + '.cfg')
    path.write_text(text + 'out = {}\n'.format(tmp_path / (name + '.csv')))
    return str(path)


def _cfg(tmp_path, text, name='run'):
    return config.load_config(_write(tmp_path, text, name))


def _rows(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


class ScalarLog(object):

    def __init__(self):
        self.scalars = []

    def add_scalar(self, tag, value, step):
        self.scalars.append((tag, value, step))


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.delenv('INTERTWINE_WORKERS', raising=False)


def test_run_experiment_writes_csv_and_sidecar(tmp_path, heisenberg_text):
    cfg = _cfg(tmp_path, heisenberg_text)
    writer = ScalarLog()
    results = experiment.run_experiment(cfg, writer=writer)
    rows = _rows(cfg.out)
    assert tuple(rows[0]) == experiment.CSV_HEADER
    assert len(rows) == 1 + 2 * 2 * len(cfg.observables)
    assert rows[1][:4] == ['heisenberg', '1.0', '0.1', 'x']
    assert rows[1][6:] == ['40', '5', cfg.hash]
    assert sorted(results) == [0.5, 1.]
    with open(experiment.sidecar_path(cfg.out)) as f:
        sidecar = json.load(f)
    assert sidecar['config_hash'] == cfg.hash
    assert sidecar['streams'] == {'1.0': [0, 39], '0.5': [0, 39]}
    assert 'failure' not in sidecar
    assert ('heisenberg/x/eps=1.0', results[1.][0].mean, 0) in writer.scalars


def test_csv_rows_end_with_newline(tmp_path, heisenberg_text):
    cfg = _cfg(tmp_path, heisenberg_text)
    experiment.run_experiment(cfg)
    with open(cfg.out, 'rb') as f:
        data = f.read()
    assert data.endswith(b'\n')
    assert b'\r' not in data


def test_replay_matches_and_detects_edits(tmp_path, rotinv_text):
    cfg = _cfg(tmp_path, rotinv_text)
    experiment.run_experiment(cfg)
    assert experiment.replay(cfg.out).ok
    assert not os.path.exists(str(tmp_path / 'run.replay.csv'))

    with open(cfg.out) as f:
        lines = f.read().split('\n')
    lines[3] = lines[3] + '0'
    with open(cfg.out, 'w') as f:
        f.write('\n'.join(lines))
    result = experiment.replay(cfg.out)
    assert not result.ok
    assert result.row == 4
    assert result.actual + '0' == result.expected


def test_replay_needs_sidecar(tmp_path):
    with pytest.raises(FileNotFoundError):
        experiment.replay(str(tmp_path / 'nothing.csv'))


def test_tampered_sidecar_is_rejected(tmp_path, heisenberg_text):
    cfg = _cfg(tmp_path, heisenberg_text)
    experiment.run_experiment(cfg)
    path = experiment.sidecar_path(cfg.out)
    with open(path) as f:
        sidecar = json.load(f)
    sidecar['config'] = sidecar['config'].replace('seed = 5', 'seed = 6')
    with open(path, 'w') as f:
        json.dump(sidecar, f)
    with pytest.raises(config.ParseError):
        experiment.load_sidecar(cfg.out)


def _failing_batch(model, n_paths, clock, master_seed, times, names=None, **kwargs):
    raise sde.SimulationError('diverged', clock.clock_time(3), (0, 15), None)


def test_failed_run_writes_failed_row(tmp_path, heisenberg_text, monkeypatch):
    cfg = _cfg(tmp_path, heisenberg_text)
    monkeypatch.setattr(experiment.sde, 'integrate_batch', _failing_batch)
    with pytest.raises(sde.SimulationError):
        experiment.run_experiment(cfg)
    rows = _rows(cfg.out)
    assert len(rows) == 2
    assert rows[1][:4] == ['heisenberg', '1.0', '0.15000000000000002', experiment.FAILED]
    with open(experiment.sidecar_path(cfg.out)) as f:
        failure = json.load(f)['failure']
    assert failure['streams'] == [0, 15]
    assert failure['message'] == 'diverged'


def test_converge_on_rotinv(tmp_path, rotinv_text):
    cfg = _cfg(tmp_path, rotinv_text)
    report = experiment.converge(cfg)
    assert set(report['fits']) == {'1.0', '0.5'}
    assert set(report['rates']) == {'published', 'kubo', 'quadrature'}
    assert report['rates']['kubo']['decay'] == pytest.approx(1.)
    names = [check['check'] for check in report['checks']]
    assert names == ['cauchy', 'kubo-rate', 'eps-invariance']
    assert report['checks'][-1]['tests'] == 2 * len(cfg.times)
    with open(experiment.report_path(cfg.out)) as f:
        assert json.load(f)['pass'] == report['pass']


def test_converge_on_heisenberg(tmp_path, heisenberg_text):
    cfg = _cfg(tmp_path, heisenberg_text)
    report = experiment.converge(cfg)
    assert report['rates'] == {}
    names = [check['check'] for check in report['checks']]
    assert names.count('variance') == 4
    assert names.count('area') == 2
    invariance = [check for check in report['checks'] if check['check'] == 'eps-invariance'][0]
    assert invariance['tests'] == 2 * (len(cfg.observables) - 1)
    reference = [check['reference'] for check in report['checks'] if check['check'] == 'variance']
    assert reference == [0.1, 0.2, 0.1, 0.2]


def test_converge_passes_on_rotinv(tmp_path, rotinv_text):
    text = (rotinv_text.replace('paths = 40', 'paths = 2000').replace('T = 0.2', 'T = 0.5')
            .replace('times = 0.05, 0.1, 0.15, 0.2', 'times = 0.1, 0.2, 0.3, 0.4, 0.5'))
    report = experiment.converge(_cfg(tmp_path, text))
    assert report['rates']['kubo']['verdict'] == 'agree'
    assert report['rates']['quadrature']['verdict'] == 'agree'
    assert report['rates']['published']['verdict'] == 'agree'
    assert all(check['pass'] for check in report['checks'])
    assert report['pass']


def test_converge_heisenberg_variances_match(tmp_path, heisenberg_text):
    cfg = _cfg(tmp_path, heisenberg_text).replace(paths=2000)
    report = experiment.converge(cfg)
    variance = [check for check in report['checks'] if check['check'] == 'variance']
    assert len(variance) == 4
    assert all(check['pass'] for check in variance)


def test_compare_rate_verdicts():
    rate = averaging.EffectiveRate(1., 'kubo', 2)
    assert experiment._compare_rate(2., 0.01, rate)['verdict'] == 'agree'
    assert experiment._compare_rate(4., 0.01, rate)['verdict'] == 'factor-2'
    assert experiment._compare_rate(1., 0.01, rate)['verdict'] == 'factor-2'
    assert experiment._compare_rate(3., 0.01, rate)['verdict'] == 'disagree'
    assert experiment._compare_rate(2., 0.01, rate)['decay'] == distributions.ReferenceDecay(1, 2, 1.).rate


def test_step_order_on_coupled_mode(tmp_path):
    text = 'model = hopf-coupled\nepsilon = 0.1\nT = 0.2\nseed = 3\nh = 0.04\npaths = 8\nchunk = 8\n'
    cfg = _cfg(tmp_path, text, 'coupled')
    results = experiment.run_experiment(cfg)
    steps, means, slope = experiment.step_order(cfg, results, halvings=2)
    assert steps == [0.04, 0.02, 0.01]
    assert all(m > 0 for m in means)
    assert slope > 0.5
    assert os.path.exists(str(tmp_path / 'coupled_h2.csv'))


def test_haar_and_oracle_tables(tmp_path, rotinv_text):
    table = experiment.haar_table(_cfg(tmp_path, rotinv_text))
    assert table['a'] == pytest.approx([[1., 0.], [0., 1.]])
    hopf = _cfg(tmp_path, 'model = hopf-full\nepsilon = 0.1\nT = 0.5\nseed = 0\n', 'hopf')
    oracle = experiment.oracle_table(hopf)
    assert set(oracle) == {'published', 'kubo', 'quadrature'}
    assert oracle['kubo']['c'] == pytest.approx(4.)
    assert oracle['published']['decay1'] == pytest.approx(4.)


def _main(*argv):
    return intertwine.main(intertwine.build_parser().parse_args(list(argv)))


def test_cli_simulate_and_replay(tmp_path, heisenberg_text):
    path = _write(tmp_path, heisenberg_text)
    out = str(tmp_path / 'run.csv')
    assert _main('simulate', '--config', path) == intertwine.EXIT_OK
    assert _main('replay', out) == intertwine.EXIT_OK
    with open(out, 'a') as f:
        f.write('extra\n')
    assert _main('replay', out) == intertwine.EXIT_REPLAY


def test_cli_overrides(tmp_path, heisenberg_text):
    path = _write(tmp_path, heisenberg_text)
    other = str(tmp_path / 'other.csv')
    assert _main('simulate', '--config', path, '--seed', '8', '--paths', '30', '--out', other) == 0
    rows = _rows(other)
    assert rows[1][6:8] == ['30', '8']


def test_cli_exit_codes(tmp_path, heisenberg_text, monkeypatch):
    bad = tmp_path / 'bad.cfg'
    bad.write_text('model = heisenberg\nepsilon = 1\nT = 1\n')
    assert _main('simulate', '--config', str(bad)) == intertwine.EXIT_PARSE
    assert _main('simulate', '--config', str(tmp_path / 'missing.cfg')) == intertwine.EXIT_IO
    assert _main('replay', str(tmp_path / 'missing.csv')) == intertwine.EXIT_IO
    monkeypatch.setattr(experiment.sde, 'integrate_batch', _failing_batch)
    assert _main('simulate', '--config', _write(tmp_path, heisenberg_text)) == intertwine.EXIT_SIMULATION


def test_cli_tables(tmp_path, rotinv_text):
    path = _write(tmp_path, rotinv_text)
    assert _main('haar', '--config', path) == 0
    assert _main('oracle', '--config', path) == 0
