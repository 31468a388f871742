"""Training (progressive stages, losses, schedule) and evaluation (metrics, benchmarks)."""
