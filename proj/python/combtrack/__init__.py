"""Comb-line phase tracking: simulation, EKF/EM learning and the bandpass baseline."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import ConfigError, parse_config as _parse_config


def config(settings=None, **overrides):
    """Build an ExperimentConfig from a dict (or JSON text) plus keyword overrides."""
    if settings is None:
        settings = {}
    if isinstance(settings, str):
        settings = _json.loads(settings)
    merged = {**settings, **overrides}
    return _parse_config(_json.dumps(merged))
