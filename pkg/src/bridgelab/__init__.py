"""Desk-scale Schrödinger bridge experiments on 2D toy densities."""
from .datasets2d import Dist2D
from .objectives import ParamMode, Predictor
from .schedules import GammaSchedule, ScheduleSpec, make_schedule
from .smallnet import DriftNet, NumericalError
from .trainer import TrainConfig, pretrain, run_ipf

__all__ = ["Dist2D", "DriftNet", "GammaSchedule", "NumericalError", "ParamMode", "Predictor",
           "ScheduleSpec", "TrainConfig", "make_schedule", "pretrain", "run_ipf"]
__version__ = "0.1.0"
