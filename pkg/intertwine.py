# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

import argparse
import json
import sys

import config as config_lib
import experiment
import sde
import utils

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SIMULATION = 3
EXIT_REPLAY = 4
EXIT_IO = 5


def load(args):
    cfg = config_lib.load_config(args.config)
    overrides = {key: getattr(args, key) for key in ('seed', 'paths', 'out') if getattr(args, key) is not None}
    return cfg.replace(**overrides) if overrides else cfg


def main(args):
    utils.create_exp_dir(args.save)
    logging = utils.Logger(0, args.save)
    writer = utils.Writer(0, args.save, enabled=args.tensorboard)
    logging.info('args = %s', args)
    try:
        workers = utils.resolve_workers(args.workers)
        if args.command == 'replay':
            result = experiment.replay(args.csv, workers=workers, logging=logging)
            if not result.ok:
                logging.warning('row %d differs:\n  expected %s\n  actual   %s', result.row, result.expected,
                                result.actual)
                return EXIT_REPLAY
            return EXIT_OK

        cfg = load(args)
        logging.info('config %s\n%s', cfg.hash, cfg.canonical_text())
        writer.add_text('config', cfg.canonical_text(), 0)
        if args.command == 'simulate':
            experiment.run_experiment(cfg, workers=workers, logging=logging, writer=writer)
        elif args.command == 'converge':
            report = experiment.converge(cfg, workers=workers, logging=logging, writer=writer)
            logging.info('converge: %s', 'pass' if report['pass'] else 'FAIL')
        elif args.command == 'haar':
            logging.info('averaged coefficients:\n%s', json.dumps(experiment.haar_table(cfg), indent=2))
        elif args.command == 'oracle':
            logging.info('effective rates:\n%s', json.dumps(experiment.oracle_table(cfg), indent=2, sort_keys=True))
        else:
            raise NotImplementedError('unknown command {}'.format(args.command))
    except sde.SimulationError as e:
        logging.warning('simulation failed at t = %r: %s', e.failed_at, e.message)
        return EXIT_SIMULATION
    except (ValueError, NotImplementedError) as e:
        logging.warning('configuration error: %s', e)
        return EXIT_PARSE
    except OSError as e:
        logging.warning('I/O error: %s', e)
        return EXIT_IO
    finally:
        writer.close()
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser('intertwine')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--workers', type=int, default=None,
                        help='worker processes (default: $INTERTWINE_WORKERS or 1)')
    common.add_argument('--save', type=str, default=None,
                        help='directory for log.txt and tensorboard events')
    common.add_argument('--tensorboard', action='store_true', default=False,
                        help='write per-eps estimates and rates as tensorboard scalars')
    configured = argparse.ArgumentParser(add_help=False)
    configured.add_argument('--config', type=str, required=True,
                            help='experiment file (key = value lines)')
    configured.add_argument('--seed', type=int, default=None,
                            help='override the master seed')
    configured.add_argument('--paths', type=int, default=None,
                            help='override the number of Monte Carlo paths')
    configured.add_argument('--out', type=str, default=None,
                            help='override the result CSV path')

    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('simulate', parents=[common, configured], help='run the eps sweep and write the CSV')
    commands.add_parser('converge', parents=[common, configured],
                        help='eps sweep with rate fits, oracle comparison and invariance tests')
    commands.add_parser('haar', parents=[common, configured], help='Haar averaged coefficients')
    commands.add_parser('oracle', parents=[common, configured], help='effective rates from every source')
    replay = commands.add_parser('replay', parents=[common], help='re-run a result CSV and compare bit-exactly')
    replay.add_argument('csv', type=str, help='result CSV with its .json sidecar')
    return parser


if __name__ == '__main__':
    args = build_parser().parse_args()
    sys.exit(main(args))
