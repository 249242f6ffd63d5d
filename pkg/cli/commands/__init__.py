"""CLI sub-commands. Each module exposes register(subparsers) and handle(args, settings)."""

from . import calibrate, fit, merge, simulate, study

COMMANDS = (simulate, fit, study, merge, calibrate)

__all__ = ["COMMANDS", "calibrate", "fit", "merge", "simulate", "study"]
