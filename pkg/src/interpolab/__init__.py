"""Over-parametrized logistic networks: gradient descent to interpolation and its risk floor."""

from .core_net import Architecture, WeightVector, count_weights, forward, predict
from .risk import (
    Dataset,
    analytic_gradient,
    conditional_mean,
    empirical_risk,
    interpolation_gap,
    interpolation_optimum,
    risk_and_gradient,
)

__all__ = [
    "Architecture",
    "WeightVector",
    "count_weights",
    "forward",
    "predict",
    "Dataset",
    "analytic_gradient",
    "conditional_mean",
    "empirical_risk",
    "interpolation_gap",
    "interpolation_optimum",
    "risk_and_gradient",
]
