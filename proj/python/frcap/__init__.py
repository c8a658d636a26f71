"""Fisher-Rao norm and related capacity measures for bias-free rectified networks."""

import json

from . import _core
from ._core import Error, ValidationError

__all__ = [
    "Error",
    "ValidationError",
    "config_schema",
    "network_schema",
    "default_config",
    "experiments",
    "merged_config",
    "run_experiment",
    "norm_report",
    "predict",
    "init_network",
    "linear_fr_rademacher",
    "verify",
]


def config_schema():
    return json.loads(_core.config_schema())


def network_schema():
    return json.loads(_core.network_schema())


def default_config(experiment):
    return json.loads(_core.default_config(experiment))


def experiments():
    return list(_core.experiments())


def merged_config(experiment, config=None, overrides=()):
    """The fully merged and validated config the CLI would run."""
    return json.loads(_core.merged_config(json.dumps(config or {"schema": 1}), experiment, list(overrides)))


def run_experiment(experiment, config=None, overrides=()):
    return json.loads(_core.run_experiment(json.dumps(config or {"schema": 1}), experiment, list(overrides)))


def init_network(dims, activation="relu", seed=0):
    return json.loads(_core.init_network(list(dims), activation, seed))


def predict(network, x):
    return _core.predict(json.dumps(network), [float(v) for v in x])


def norm_report(network, x, y, loss="squared", classes=1, norms=()):
    x = [[float(v) for v in row] for row in x]
    y = [float(v) for v in y]
    return json.loads(_core.norm_report(json.dumps(network), x, y, loss, classes, list(norms)))


def linear_fr_rademacher(n, gamma, p, trials, seed=0, threads=1):
    return json.loads(_core.linear_fr_rademacher(n, gamma, p, trials, seed, threads))


def verify(suites=("all",), count=50, seed=0):
    return json.loads(_core.verify(list(suites), count, seed))
