"""
drct Test Suite

This package contains tests for the drct network, training engine,
evaluation protocol, diagnostics and CLI.
"""
