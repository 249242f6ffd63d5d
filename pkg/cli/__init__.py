"""
Command-line interface for integrated abundance estimation.

Sub-commands: simulate, fit, study, merge, calibrate.
"""

from .config import Settings
from .main import build_parser, main

__all__ = ["Settings", "build_parser", "main"]
