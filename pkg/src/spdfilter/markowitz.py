"""The Markowitz product manifold and the efficient-portfolio weights map.

A point is a triple ``(gamma, mu, sigma)``: risk aversion, expected
log-returns, and an SPD return covariance.  The geometry is the product
of two Euclidean factors with the SPD cone, so Exp/Log act componentwise
and the squared distance is the sum of squared factor distances.

``efficient_weights`` solves the budget-constrained mean-variance
problem ``min_w -gamma mu'w + w'Sigma w / 2  s.t.  1'w = 1`` in closed
form via its KKT conditions, factoring ``Sigma`` rather than inverting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import geometry, symlinalg
from .errors import DimensionMismatch, InvalidInput, NotPositiveDefinite


@dataclass(frozen=True)
class MarkowitzPoint:
    """Risk aversion, expected log-returns, and SPD covariance."""

    gamma: float
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))
        object.__setattr__(self, "sigma", symlinalg.symmetrize(self.sigma))
        if not np.isfinite(self.gamma):
            raise InvalidInput("gamma must be finite")
        if not np.all(np.isfinite(self.mu)):
            raise InvalidInput("mu has non-finite entries")
        if self.sigma.shape[0] != self.mu.size:
            raise DimensionMismatch("mu and sigma dimensions differ")
        symlinalg.assert_spd(self.sigma)


@dataclass(frozen=True)
class MarkowitzTangent:
    """Tangent triple ``(dgamma, dmu, dsigma)`` with symmetric ``dsigma``."""

    dgamma: float
    dmu: np.ndarray
    dsigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dmu", np.asarray(self.dmu, dtype=float).reshape(-1))
        object.__setattr__(self, "dsigma", symlinalg.symmetrize(self.dsigma))
        if self.dsigma.shape[0] != self.dmu.size:
            raise DimensionMismatch("dmu and dsigma dimensions differ")


def _check_pair(p1: MarkowitzPoint, p2: MarkowitzPoint) -> None:
    if p1.mu.size != p2.mu.size:
        raise DimensionMismatch("points live in different dimensions")


def mrk_distance(p1: MarkowitzPoint, p2: MarkowitzPoint) -> float:
    """Product-metric distance: sqrt of the sum of squared factor distances."""
    _check_pair(p1, p2)
    return float(
        np.sqrt(
            (p2.gamma - p1.gamma) ** 2
            + np.sum((p2.mu - p1.mu) ** 2)
            + geometry.spd_distance(p1.sigma, p2.sigma) ** 2
        )
    )


def mrk_exp(p: MarkowitzPoint, v: MarkowitzTangent) -> MarkowitzPoint:
    """Componentwise exponential: add on the flat factors, SPD Exp on sigma."""
    if p.mu.size != v.dmu.size:
        raise DimensionMismatch("point and tangent dimensions differ")
    return MarkowitzPoint(
        gamma=p.gamma + v.dgamma,
        mu=p.mu + v.dmu,
        sigma=geometry.spd_exp(p.sigma, v.dsigma),
    )


def mrk_log(p1: MarkowitzPoint, p2: MarkowitzPoint) -> MarkowitzTangent:
    """Componentwise logarithm: subtract on the flat factors, SPD Log on sigma."""
    _check_pair(p1, p2)
    return MarkowitzTangent(
        dgamma=p2.gamma - p1.gamma,
        dmu=p2.mu - p1.mu,
        dsigma=geometry.spd_log(p1.sigma, p2.sigma),
    )


def efficient_weights(gamma: float, mu, sigma) -> np.ndarray:
    """Optimal budget-constrained portfolio weights.

    Solves ``min_w -gamma mu'w + w'Sigma w / 2`` subject to ``1'w = 1``.
    The KKT solution is ``w = Sigma^{-1}(gamma mu + nu 1)`` with the
    multiplier ``nu = (1 - gamma 1'Sigma^{-1}mu) / (1'Sigma^{-1}1)``.
    At ``gamma = 0`` this is the minimum-variance portfolio.

    Linear systems in ``Sigma`` are solved through a Cholesky
    factorization; the inverse is never formed.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    sigma = symlinalg.symmetrize(sigma)
    if sigma.shape[0] != mu.size:
        raise DimensionMismatch("mu and sigma dimensions differ")
    if not np.isfinite(gamma):
        raise InvalidInput("gamma must be finite")
    if not np.all(np.isfinite(mu)):
        raise InvalidInput("mu has non-finite entries")
    try:
        factor = scipy.linalg.cho_factor(sigma, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"covariance is not SPD: {exc}") from exc
    ones = np.ones(mu.size)
    sigma_inv_ones = scipy.linalg.cho_solve(factor, ones)
    sigma_inv_mu = scipy.linalg.cho_solve(factor, mu)
    denom = float(ones @ sigma_inv_ones)
    base = sigma_inv_ones / denom
    tilt = sigma_inv_mu - (float(ones @ sigma_inv_mu) / denom) * sigma_inv_ones
    return base + gamma * tilt
