"""
Logging configuration for drct.

Console lines carry the bare message; the run log is TSV so it can be read
back with pandas next to ``metrics.tsv``.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from .schemas import MetricLogSchema

METRIC_LOG_COLUMNS = ['iteration', 'stage', 'lr', 'loss', 'val_psnr']
TSV_FORMAT = '%(asctime)s\t%(name)s\t%(levelname)s\t%(message)s'


def setup_logging(log_file: Optional[str] = None,
                  level: int = logging.INFO) -> logging.Logger:
    """
    Configure the ``drct`` logger for one run.

    Args:
        log_file: TSV run log, appended to. If None, console only.
        level: Threshold for both handlers.

    Returns:
        logging.Logger: The package logger.
    """
    logger = logging.getLogger('drct')
    logger.setLevel(level)
    # Repeated CLI invocations in one process must not stack handlers.
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)

    console = logging.StreamHandler(sys.stdout)
    console.setLevel(level)
    console.setFormatter(logging.Formatter('%(message)s'))
    logger.addHandler(console)

    if log_file:
        log_path = Path(log_file)
        try:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            run_log = logging.FileHandler(str(log_path), mode='a',
                                          encoding='utf-8')
        except OSError as e:
            logger.warning(f"⚠️ Could not set up file logging to {log_path}: {e}")
            return logger
        run_log.setLevel(level)
        run_log.setFormatter(
            logging.Formatter(TSV_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')
        )
        logger.addHandler(run_log)

    return logger


class MetricLog:
    """Append-only TSV record of training metrics, one line per record."""

    def __init__(self, path: str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, record: Dict[str, Any]) -> None:
        row = {column: record.get(column) for column in METRIC_LOG_COLUMNS}
        frame = pd.DataFrame([row], columns=METRIC_LOG_COLUMNS)
        frame.to_csv(
            self.path,
            sep='\t',
            index=False,
            mode='a',
            header=not self.path.exists(),
        )

    def read(self) -> pd.DataFrame:
        frame = pd.read_csv(self.path, sep='\t')
        return MetricLogSchema.validate(frame)
