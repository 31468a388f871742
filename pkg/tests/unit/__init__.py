"""Unit tests for individual drct components."""
