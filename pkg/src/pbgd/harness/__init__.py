"""Experiment harness: config files, result writers and the command-line front end."""

from .commands import (EXIT_CONFIG, EXIT_DIVERGED, EXIT_FAILED, EXIT_OK, cmd_rate_sweep, cmd_run,
                       cmd_validate, execute_job, validate_problem)
from .config import ConfigFileError, ExperimentConfig, MethodSpec, load_config, parse_config
