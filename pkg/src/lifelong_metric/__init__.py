"""Lifelong metric learning over a shared low-dimensional dictionary."""

from .data import SyntheticSpec, generate_synthetic, load_csv, save_csv, stratified_split
from .dictionary import (
    LifelongDictionary,
    TaskSummary,
    dictionary_gradient,
    dictionary_objective,
    init_dictionary,
    load_dictionary,
    refine_dictionary,
    save_dictionary,
)
from .engine import EngineConfig, LifelongMetricLearner
from .evaluation import (
    knn_classify,
    knn_error,
    knn_predict,
    run_sequence_experiment,
    sweep_dimension,
    sweep_sparsity,
)
from .exceptions import ConfigurationError, DataError, DivergenceError, ShapeError
from .learners import BaseLearnerConfig, batch_distance_fit, oasis_fit, pa_target
from .metric import (
    GradientSummary,
    MetricKind,
    MetricMatrix,
    aggregate_gradient,
    distance,
    similarity,
    summed_hinge_loss,
    triplet_hinge_loss,
)
from .solver import SolverConfig, objective, prox_l1_off, smooth_gradient, solve_weights
from .triplets import LabeledDataset, TripletSet, mine_triplets

__version__ = "0.1.0"
