"""Configuration, experiment drivers and the command-line interface."""

from .config import RunConfig, bundled_config, load_config, parse_config
from .experiments import run_experiment, sweep_mu, tracking_scenario, validate
from .scenario import DriftSchedule, Track, moving_hyperplanes
