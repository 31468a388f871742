"""Feature-map intensity tracing and the G-index."""
