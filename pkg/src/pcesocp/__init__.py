"""Generalized polynomial chaos for uncertain ODEs and robust optimal control."""
from .basis import Gaussian, ParameterSpace, PolynomialBasis, Uniform, moments_from_coefficients
from .errors import (
    DivergenceError,
    DomainError,
    EmptyEnsembleError,
    IllPosedDesignError,
    InvalidStartError,
    MissingWeightsError,
    PceError,
    ShapeError,
    UnsupportedDistributionError,
)
from .estimation import EstimatorMap, build_estimator, estimate_coefficients
from .mc import SampleEnsemble, ensemble_moments, sample_ensemble
from .propagation import CoefficientField, TimeGrid, UncertainOde, propagate_coupled, propagate_decoupled
from .quadrature import CollocationSet, design_nodes, gauss_rule
from .socp import ControlGrid, CostWeights, StochasticOcp, evaluate_ocp, solve_ocp, stochastic_cost

__version__ = "0.1.0"

__all__ = [
    "CoefficientField",
    "CollocationSet",
    "ControlGrid",
    "CostWeights",
    "DivergenceError",
    "DomainError",
    "EmptyEnsembleError",
    "EstimatorMap",
    "Gaussian",
    "IllPosedDesignError",
    "InvalidStartError",
    "MissingWeightsError",
    "ParameterSpace",
    "PceError",
    "PolynomialBasis",
    "SampleEnsemble",
    "ShapeError",
    "StochasticOcp",
    "TimeGrid",
    "UncertainOde",
    "Uniform",
    "UnsupportedDistributionError",
    "build_estimator",
    "design_nodes",
    "ensemble_moments",
    "estimate_coefficients",
    "evaluate_ocp",
    "gauss_rule",
    "moments_from_coefficients",
    "propagate_coupled",
    "propagate_decoupled",
    "sample_ensemble",
    "solve_ocp",
    "stochastic_cost",
]
