"""Python bindings for the bbforget core library."""

import json

from ._bbforget import (
    Cma,
    Error,
    Surrogate,
    compute_metrics,
    harmonic_mean,
    loss_c_emb,
    loss_forget,
    loss_memorize,
    minimize,
    run_experiment_json,
)


def run_experiment(config, seeds=None):
    """Run an experiment config (dict or JSON text) and return the report as a dict."""
    text = config if isinstance(config, str) else json.dumps(config)
    return json.loads(run_experiment_json(text, seeds))


__all__ = [
    "Cma",
    "Error",
    "Surrogate",
    "compute_metrics",
    "harmonic_mean",
    "loss_c_emb",
    "loss_forget",
    "loss_memorize",
    "minimize",
    "run_experiment",
]
