"""Persistent homology, persistence landscapes and topological classification
of Cahn-Hilliard-Cook microstructures."""
from .field import LevelQuantizer, ScalarField2D, quantize, read_field, write_field
from .cubical import KERNEL, betti_at_level, build_filtration, compute_persistence
from .diagram import PersistenceDiagram, bottleneck_distance, wasserstein_distance
from .landscape import (
    PersistenceLandscape,
    average,
    evaluate,
    landscape_from_diagram,
    linear_combination,
    lp_distance,
)
from .process import (
    ClassifierModel,
    TopologicalProcess,
    average_process,
    classify_ca,
    classify_ck,
    process_distance,
    train,
)
from .chc import ChcParams, init_state, simulate, synthesize

__version__ = "0.1.0"
