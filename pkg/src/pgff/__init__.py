"""Physics-guided feedforward filters: a linear physical model in parallel with a
small network, trained so the network stays out of the model's output subspace."""
from ._accel import backend
from .evaluation import FilterUnderTest, apply_filter, evaluate, nonuniqueness_study
from .linmodel import LinearModel, ProjectionBasis, RankDeficiencyError, build_regressor, closed_form_ls, decompose
from .neuralnet import Network, init_network
from .objectives import FitProblem, LossBreakdown, ObjectiveConfig
from .plant import Dataset, StribeckPlant, exact_inverse, forward_simulate, synthesize_dataset
from .signals import ReferenceSpec, Trajectory, build_stack, derivative, generate_reference
from .training import TrainConfig, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "backend",
    "FilterUnderTest",
    "apply_filter",
    "evaluate",
    "nonuniqueness_study",
    "LinearModel",
    "ProjectionBasis",
    "RankDeficiencyError",
    "build_regressor",
    "closed_form_ls",
    "decompose",
    "Network",
    "init_network",
    "FitProblem",
    "LossBreakdown",
    "ObjectiveConfig",
    "Dataset",
    "StribeckPlant",
    "exact_inverse",
    "forward_simulate",
    "synthesize_dataset",
    "ReferenceSpec",
    "Trajectory",
    "build_stack",
    "derivative",
    "generate_reference",
    "TrainConfig",
    "TrainReport",
    "train",
]
