"""Solvers and verifiers for average-reward robust MDPs with S-rectangular adversaries."""

from .bellman import apply_operator, solve_discounted, span, span_curve
from .gain import duality_report, extract_policy, solve_constant_gain, verify_constant_gain
from .game import Orientation, solve_infsup, solve_supinf
from .model import (ControllerSet, FiniteKernels, RobustMdpInstance, SaTvBalls,
                    StationaryAdversaryPolicy, StationaryControllerPolicy, induced_chain,
                    load_instance, save_instance)
from .structure import structure_report

__all__ = [
    "ControllerSet", "FiniteKernels", "Orientation", "RobustMdpInstance", "SaTvBalls",
    "StationaryAdversaryPolicy", "StationaryControllerPolicy", "apply_operator",
    "duality_report", "extract_policy", "induced_chain", "load_instance", "save_instance",
    "solve_constant_gain", "solve_discounted", "solve_infsup", "solve_supinf", "span",
    "span_curve", "structure_report", "verify_constant_gain",
]
