"""Probabilistic execution-time analysis for intermittently powered programs."""
from . import dist, ir
from .costmodel import CostModel, CostPair, default_cost_model, load_cost_model
from .errors import IntermitError
from .estimator import IntermittentTimingAnalyzer
from .explore import Limits, explore_paths, explore_program
from .intermittent import EnergyConfig, analyze_function, analyze_path, load_energy_config
from .ir import parse_program
from .report import emit_outputs, evaluate_requirement
from .simulate import SimConfig, simulate_many, simulate_once

__all__ = [
    "dist", "ir", "CostModel", "CostPair", "default_cost_model", "load_cost_model",
    "IntermitError", "IntermittentTimingAnalyzer", "Limits", "explore_paths",
    "explore_program", "EnergyConfig", "analyze_function", "analyze_path",
    "load_energy_config", "parse_program", "emit_outputs", "evaluate_requirement",
    "SimConfig", "simulate_many", "simulate_once",
]
__version__ = "0.1.0"
