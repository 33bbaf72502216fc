"""Geodesic estimation and non-Euclidean Kalman filtering for SPD matrices.

Modules
-------
``symlinalg``
    Eigendecomposition-based matrix functions and half-vectorization.
``geometry``
    Affine-invariant distance, Exp/Log, geodesics, barycenters.
``markowitz``
    The (gamma, mu, sigma) product manifold and efficient-portfolio weights.
``manifolds``
    Uniform chart interface over SPD, Euclidean, and product geometries.
``expectation``
    Conditional expectation of manifold-valued signals on finite models,
    with variational-limit verification machinery.
``filtering``
    Tangent-space Kalman filtering, simulation, and maximum likelihood.
``backtest``
    Rolling-covariance forecasting benchmark with bootstrap intervals.
``cli``
    Command-line entry points.
"""

from .errors import (
    DegenerateData,
    DegenerateSample,
    DimensionMismatch,
    EmptyPanel,
    InvalidInput,
    InvalidModel,
    MaxIterExceeded,
    NotPositiveDefinite,
    ParseError,
    SpdFilterError,
    WindowTooLarge,
)

__version__ = "0.1.0"
