"""Kth nearest-neighbour clutter removal for planar point patterns."""

__version__ = "0.1.0"

from .bench import ConfusionRates, rates, run_benchmark
from .errors import *  # noqa: F401,F403
from .iterative import AUTO, IterationRecord, IterationTrace, compose_labels, run_iterative
from .kselect import (
    EntropyCurve,
    SegmentedFit,
    entropy,
    entropy_curve,
    fit_segmented,
    select_k,
)
from .mixture import (
    EMConfig,
    Labels,
    MixtureFit,
    NnDensityParams,
    classify,
    em_fit,
    lambda_mle,
    nn_density,
)
from .pattern import KnnDistances, PointPattern, Window, knn_distances, subset
from .simulate import ScenarioSpec, make_scenario, scenario_spec, sim_cluster, sim_poisson
