"""Sketch-and-solve regression on streamed transformed matrices."""

from app.regress.models import RegressionConfig, RegressionResult
from app.regress.solver import regress_solve, sketch_design

__all__ = ["RegressionConfig", "RegressionResult", "regress_solve", "sketch_design"]
