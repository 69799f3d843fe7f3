"""Sparse-IMU human motion capture: calibration, synthesis, recurrent pose/translation
estimation and evaluation, all in numpy."""

__version__ = "0.1.0"
