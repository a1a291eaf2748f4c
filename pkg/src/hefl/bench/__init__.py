"""Benchmark harness: reports, ablations, calibration cache and the bundled self-test."""

from .report import emit_report, read_report, render
from .runner import AblationSpec, ablate, experiment_row, run_calibration, run_config
from .selftest import CHECKS, run_selftest

__all__ = [
    "AblationSpec", "CHECKS", "ablate", "emit_report", "experiment_row", "read_report", "render",
    "run_calibration", "run_config", "run_selftest",
]
