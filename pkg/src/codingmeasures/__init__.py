"""Invariant measures of holomorphic maps from weighted coding trees of preimages."""

__version__ = "0.1.0"

from .errors import (BasePointRejected, CodingMeasuresError, ConditionsViolated, ConfigError,
                     ContainmentDomainError, EnumerationCapExceeded, IncompleteLevel, LiftFailed,
                     NumericalFailure, ResolutionFailure, RootFindingError)
from .dynamics import ComplexPolynomial, ProductMap, RationalMap
from .shift import Bernoulli, FiniteRange, gibbs_measure
from .coding import CodingTree, build_base_paths, choose_base_point
from .measures import AtomicMeasure, SampleCloud, pushforward_measure, sample_cloud
from .ergodic_stats import brin_katok_entropy, inequality_report, lyapunov
from .graph_transform import LinearSplit, LipGraph, LocalMap, backward_transform, transform_chain

__all__ = [
    "__version__", "CodingMeasuresError", "NumericalFailure", "RootFindingError", "LiftFailed",
    "EnumerationCapExceeded", "BasePointRejected", "IncompleteLevel", "ResolutionFailure",
    "ConditionsViolated", "ContainmentDomainError", "ConfigError",
    "ComplexPolynomial", "RationalMap", "ProductMap", "Bernoulli", "FiniteRange", "gibbs_measure",
    "CodingTree", "build_base_paths", "choose_base_point", "AtomicMeasure", "SampleCloud",
    "pushforward_measure", "sample_cloud", "lyapunov", "brin_katok_entropy", "inequality_report",
    "LinearSplit", "LipGraph", "LocalMap", "backward_transform", "transform_chain",
]
