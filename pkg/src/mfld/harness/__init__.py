"""Config parsing, presets and the experiment runner behind the ``mfld`` command."""

from .config import ConfigError, DuplicateKeyWarning, PRESETS, RunConfig, load_config, load_preset, parse_config
from .runner import build_model, build_run, emit_plot_data, run_experiment

__all__ = [
    "ConfigError",
    "DuplicateKeyWarning",
    "PRESETS",
    "RunConfig",
    "build_model",
    "build_run",
    "emit_plot_data",
    "load_config",
    "load_preset",
    "parse_config",
    "run_experiment",
]
