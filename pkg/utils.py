# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

import hashlib
import logging
import os
import platform
import sys
import time

import numpy as np
import scipy
import torch
from tensorboardX import SummaryWriter


class AverageMeter(object):

    def __init__(self):
        self.reset()

    def reset(self):
        self.avg = 0
        self.sum = 0
        self.cnt = 0

    def update(self, val, n=1):
        self.sum += val * n
        self.cnt += n
        self.avg = self.sum / self.cnt


def create_exp_dir(path):
    if path and not os.path.exists(path):
        os.makedirs(path, exist_ok=True)
    return path


class Logger(object):
    def __init__(self, rank, save):
        self.rank = rank
        if self.rank == 0:
            log_format = '%(asctime)s %(message)s'
            logging.basicConfig(stream=sys.stdout, level=logging.INFO,
                                format=log_format, datefmt='%m/%d %I:%M:%S %p')
            if save is not None:
                fh = logging.FileHandler(os.path.join(save, 'log.txt'))
                fh.setFormatter(logging.Formatter(log_format))
                logging.getLogger().addHandler(fh)
            self.start_time = time.time()

    def info(self, string, *args):
        if self.rank == 0:
            elapsed_time = time.time() - self.start_time
            elapsed_time = time.strftime(
                '(Elapsed: %H:%M:%S) ', time.gmtime(elapsed_time))
            if isinstance(string, str):
                string = elapsed_time + string
            else:
                logging.info(elapsed_time)
            logging.info(string, *args)

    def warning(self, string, *args):
        if self.rank == 0:
            logging.warning(string, *args)


class Writer(object):
    """tensorboardX scalars, written only by rank 0 and only when enabled."""

    def __init__(self, rank, save, enabled=True):
        self.rank = rank
        self.enabled = enabled and rank == 0 and save is not None
        if self.enabled:
            self.writer = SummaryWriter(log_dir=save, flush_secs=20)

    def add_scalar(self, *args, **kwargs):
        if self.enabled:
            self.writer.add_scalar(*args, **kwargs)

    def add_text(self, *args, **kwargs):
        if self.enabled:
            self.writer.add_text(*args, **kwargs)

    def close(self):
        if self.enabled:
            self.writer.close()


def format_float(x):
    """Shortest decimal that round-trips to the same double."""
    return repr(float(x))


def text_hash(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def versions():
    return {
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'torch': torch.__version__,
    }


def resolve_workers(flag):
    if flag is not None:
        workers = flag
    else:
        workers = int(os.environ.get('INTERTWINE_WORKERS', '1'))
    if workers < 1:
        raise ValueError('worker count must be positive, got {}'.format(workers))
    return workers
