"""VAR(1) simulation, least-squares identification and finite-time bounds."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import NumericError, RegimeError, _bound_report, _run_montecarlo

__all__ = [name for name in dir() if not name.startswith("_")]


def bound_report(config):
    """Every constant and the sample size, for a config dict (CLI schema)."""
    return _json.loads(_bound_report(_json.dumps(config)))


def run_montecarlo(config, write=False):
    """Run a campaign and return the summary dict. Files only when write=True."""
    return _json.loads(_run_montecarlo(_json.dumps(config), write))
