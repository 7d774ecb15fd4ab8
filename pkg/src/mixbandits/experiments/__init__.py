from .config import (ExperimentConfig, config_from_dict, dump_config, load_config,
                     parse_config)
from .presets import load_preset, preset_names
from .runner import Bundle, bounds_report, checkpoints, run_experiment, run_lab

__all__ = ["ExperimentConfig", "config_from_dict", "dump_config", "load_config",
           "parse_config", "load_preset", "preset_names", "Bundle", "bounds_report",
           "checkpoints", "run_experiment", "run_lab"]
