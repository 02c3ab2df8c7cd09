"""Bayesian optimization with an adaptive MSP/MES acquisition switch, and a
Gaussian-wake wind farm layout problem to apply it to."""

from .sampling import DesignSpace, constrained_lhs, expanded_lhs, standard_lhs
from .kriging import Dataset, KrigingConfig, KrigingModel, fit
from .acquisition import YStarPool, mes_gain, mes_value, msp_value, sample_ystars, switch_check
from .de import DeConfig, SeededInitPlan, de_optimize
from .engine import BoConfig, BoResult, Method, PenaltyConfig, Terminated, run_bo
from .wake import TurbineSpec, WakeParams, WindRose, aep, farm_power, nrel_5mw, turbine_power, wake_deficit
from .layout import Boundary, FarmLayout, Grid, WindFarmCase, snap_to_grid

__version__ = "0.1.0"

__all__ = [
    "DesignSpace", "standard_lhs", "expanded_lhs", "constrained_lhs",
    "Dataset", "KrigingConfig", "KrigingModel", "fit",
    "YStarPool", "mes_gain", "mes_value", "msp_value", "sample_ystars", "switch_check",
    "DeConfig", "SeededInitPlan", "de_optimize",
    "BoConfig", "BoResult", "Method", "PenaltyConfig", "Terminated", "run_bo",
    "TurbineSpec", "WakeParams", "WindRose", "aep", "farm_power", "nrel_5mw", "turbine_power", "wake_deficit",
    "Boundary", "FarmLayout", "Grid", "WindFarmCase", "snap_to_grid",
]
