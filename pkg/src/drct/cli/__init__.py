"""CLI module for drct."""

from drct.cli.main import main

__all__ = ["main"]
