"""Integration tests for drct CLI and progressive training."""
