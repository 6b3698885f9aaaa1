import json
import os

from ._core import SCHEMA_VERSION, BlisError, cli_main, describe_packet, forecast_rmse, run_json

__all__ = ["SCHEMA_VERSION", "BlisError", "run", "run_config", "cli", "describe_packet", "forecast_rmse"]


def run_config(config, seed=None, base_dir=""):
    """Run a scenario given as a dict and return its metrics as a dict."""
    return json.loads(run_json(json.dumps(config), seed, str(base_dir)))


def run(path, seed=None):
    """Run a scenario JSON file."""
    with open(path) as f:
        config = json.load(f)
    return run_config(config, seed, os.path.dirname(os.path.abspath(path)))


def cli(*args):
    """Same as the blis_sim executable: returns (exit_code, stdout, stderr)."""
    return cli_main([str(a) for a in args])
