"""drct - Dense-residual-connected transformer for image super-resolution"""

__version__ = "0.3.0"
__description__ = "Dense-residual-connected transformer for image super-resolution"
__author__ = "SSI-DK"
