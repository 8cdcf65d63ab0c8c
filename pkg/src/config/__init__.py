"""Configuration package"""

from .settings import (
    ALGORITHM_OPTIONS,
    ALGORITHM_LABELS,
    DATA_DIR,
    OUTPUT_DIR,
    DEFAULT_LOG_LEVEL,
)
from .experiment import ExperimentConfig, parse_config, config_from_dict, validate_config
from .log_config import configure_logging

__all__ = [
    'ALGORITHM_OPTIONS',
    'ALGORITHM_LABELS',
    'DATA_DIR',
    'OUTPUT_DIR',
    'DEFAULT_LOG_LEVEL',
    'ExperimentConfig',
    'parse_config',
    'config_from_dict',
    'validate_config',
    'configure_logging',
]
