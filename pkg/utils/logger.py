"""
Centralized logging configuration
"""
import logging
import sys

from config import Config

BASE_LOGGER = "glossremove"


def setup_logger(name: str = BASE_LOGGER) -> logging.Logger:
    """
    Setup and configure logger

    The base logger owns the only handler; named loggers are its children
    so progress from every module ends up on one stream.

    Args:
        name: Logger name, relative names are placed under the base logger

    Returns:
        Configured logger instance
    """
    base = logging.getLogger(BASE_LOGGER)

    if not base.handlers:
        base.setLevel(Config.LOG_LEVEL.upper())

        # Progress goes to stderr, stdout is reserved for command output
        handler = logging.StreamHandler(sys.stderr)
        handler.setLevel(Config.LOG_LEVEL.upper())

        # Format
        formatter = logging.Formatter(
            '[%(asctime)s] %(levelname)s - %(name)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        handler.setFormatter(formatter)

        base.addHandler(handler)
        base.propagate = False

    if name == BASE_LOGGER or name.startswith(BASE_LOGGER + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{BASE_LOGGER}.{name}")


def kv(**fields) -> str:
    """Render a structured progress message as key=value pairs"""
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            parts.append(f"{key}={value:.6g}")
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)
