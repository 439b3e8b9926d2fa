"""Bayesian optimization of sensor-based sorting process parameters."""
from .optimizer.design import build_initial_design, derive_search_space
from .optimizer.ledger import Ledger
from .optimizer.loop import OptimizationConfig, reference_best, run, step, weight_study
from .plant.metrics import ConfusionMatrix, ExperimentRecord, IntervalResult
from .plant.params import ParameterPoint
from .plant.replay import ReplayPlant
from .plant.simulator import SimulatorConfig, SimulatorPlant, run_experiment
from .surrogate.acquisition import CombinedWeights, SearchSpace, maximize_combined_ei
from .surrogate.gpr import KernelParams, TrainingSet, fit, predict

__all__ = (
    "CombinedWeights",
    "ConfusionMatrix",
    "ExperimentRecord",
    "IntervalResult",
    "KernelParams",
    "Ledger",
    "OptimizationConfig",
    "ParameterPoint",
    "ReplayPlant",
    "SearchSpace",
    "SimulatorConfig",
    "SimulatorPlant",
    "TrainingSet",
    "build_initial_design",
    "derive_search_space",
    "fit",
    "maximize_combined_ei",
    "predict",
    "reference_best",
    "run",
    "run_experiment",
    "step",
    "weight_study",
)
