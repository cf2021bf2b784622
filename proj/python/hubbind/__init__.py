"""Python access to the hubbind training and evaluation core.

Configs may be passed as dicts, JSON strings or paths to JSON files. Reports
come back as dicts with "metrics", "flags" and "meta" entries.
"""

import json
import os

from . import _core
from ._core import ConfigError, IoError, NumericError

__all__ = [
    "ConfigError",
    "IoError",
    "NumericError",
    "config_hash",
    "desk_config",
    "evaluate",
    "info_nce",
    "make_world",
    "run_experiment",
    "train",
    "with_seed",
]


def _text(config):
    if isinstance(config, dict):
        return json.dumps(config)
    if isinstance(config, os.PathLike) or (isinstance(config, str) and not config.lstrip().startswith("{")):
        with open(config, encoding="utf-8") as fh:
            return fh.read()
    return config


def desk_config():
    return json.loads(_core.desk_config())


def with_seed(config, seed):
    cfg = json.loads(_core.canonical_config(_text(config)))
    cfg["seed"] = int(seed)
    return cfg


def config_hash(config):
    return _core.config_hash(_text(config))


def make_world(config=None, seed=None):
    return json.loads(_core.make_world(_text(config if config is not None else desk_config()), seed))


def info_nce(q, k, tau, symmetric=False):
    """Returns (loss, grad_q, grad_k) for unit-norm row batches q and k."""
    return _core.info_nce(q, k, tau, symmetric)


def train(config, checkpoint=None):
    path = os.fspath(checkpoint) if checkpoint is not None else None
    return json.loads(_core.train(_text(config), path))


def evaluate(config, checkpoint=None):
    path = os.fspath(checkpoint) if checkpoint is not None else None
    return json.loads(_core.evaluate(_text(config), path))


def run_experiment(config):
    return json.loads(_core.run_experiment(_text(config)))
