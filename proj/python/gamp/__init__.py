"""Python bindings for the gamp library."""

import json as _json

from . import _gamp
from ._gamp import (
    ConfigError,
    DimensionError,
    Env,
    Error,
    FrozenFormatError,
    FrozenPolicy,
    IntegrationError,
    NumericError,
    ParseError,
    ValidationError,
    compute_gae,
    gate,
    gate_evaluations,
    load_frozen,
    normalize_command,
    scenario_names,
    style_reward,
    total_reward,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "Env",
    "Error",
    "FrozenFormatError",
    "FrozenPolicy",
    "IntegrationError",
    "NumericError",
    "ParseError",
    "ValidationError",
    "compute_gae",
    "default_config",
    "evaluate",
    "gate",
    "gate_evaluations",
    "load_frozen",
    "normalize_command",
    "rollout",
    "scenario_names",
    "style_reward",
    "total_reward",
    "train",
]


def default_config():
    """Default training configuration as a dict."""
    return _json.loads(_gamp._default_config_json())


def train(config=None, output_dir="run"):
    """Trains a policy. config is a dict of overrides; returns metrics rows."""
    cfg = dict(config or {})
    cfg["output_dir"] = str(output_dir)
    return _gamp._train(_json.dumps(cfg))


def rollout(policy, scenario, seed=0, steps=None, trace=False):
    """Runs a frozen policy in a named scenario and returns a summary dict."""
    return _gamp._rollout(policy, scenario, seed, -1 if steps is None else steps, trace)


def evaluate(policy, suite="quick", out_dir=None):
    """Runs an evaluation suite and returns the headline numbers."""
    return _gamp._evaluate(policy, suite, "" if out_dir is None else str(out_dir))
