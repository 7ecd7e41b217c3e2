"""
Logging setup for the command line.
"""

import logging
import sys

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def verbosity_level(verbosity: int) -> int:
    """-1 (``-q``) -> WARNING, 0 -> INFO, 1 or more (``-v``) -> DEBUG."""
    if verbosity < 0:
        return logging.WARNING
    if verbosity == 0:
        return logging.INFO
    return logging.DEBUG


def configure_logging(verbosity: int = 0) -> logging.Logger:
    """Install one stream handler on the root logger, replacing earlier ones."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(verbosity_level(verbosity))
    return root
