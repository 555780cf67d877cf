"""Python access to the ilab bounds, scaling sweep and scenario runner."""

import json

from ._core import (
    ConfigError,
    binary_kl_logits,
    bound_ids,
    builtin_scenario_names,
    crp_expected_unique,
    dirmult_expected_unique,
    entropy,
    kl,
    lambert_w,
    log_grid,
)
from . import _core


def evaluate_bound(bound_id, **params):
    """Closed-form bound as a dict; value is None when the bound does not apply."""
    return json.loads(_core._evaluate_bound(bound_id, {k: float(v) for k, v in params.items()}))


def sweep_scaling(d, K, budgets):
    return json.loads(_core._sweep_scaling(int(d), float(K), [float(c) for c in budgets]))


def builtin_scenario(name):
    return json.loads(_core._builtin_scenario(name))


def run_scenario(config, threads=1):
    """Run a scenario given as a dict (same schema as the CLI's JSON files)."""
    return json.loads(_core._run_scenario(json.dumps(config), int(threads)))


__all__ = [
    "ConfigError",
    "binary_kl_logits",
    "bound_ids",
    "builtin_scenario",
    "builtin_scenario_names",
    "crp_expected_unique",
    "dirmult_expected_unique",
    "entropy",
    "evaluate_bound",
    "kl",
    "lambert_w",
    "log_grid",
    "run_scenario",
    "sweep_scaling",
]
