"""Shared configuration, I/O and error handling for drct."""
