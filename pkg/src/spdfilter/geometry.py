"""Affine-invariant Riemannian geometry of the SPD cone.

Distance, Exp/Log maps, geodesics, and the two barycenter notions used
by the filtering benchmark.  The distance between SPD matrices ``A`` and
``B`` is ``||log(B^{-1/2} A B^{-1/2})||_F``; Exp and Log whiten by the
base point, apply the matrix exp/log, and undo the whitening.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, InvalidInput, MaxIterExceeded
from .symlinalg import (
    assert_spd,
    mat_exp,
    mat_inv_sqrt,
    mat_log,
    mat_sqrt,
    symmetrize,
)


def _check_same_dim(A: np.ndarray, B: np.ndarray) -> None:
    if A.shape != B.shape:
        raise DimensionMismatch(f"shapes {A.shape} and {B.shape} differ")


def spd_distance(S1, S2) -> float:
    """Geodesic distance between two SPD matrices.

    Computed as ``sqrt(sum(log(lam)^2))`` over the eigenvalues ``lam`` of
    the symmetric-definite pencil ``(S1, S2)``, which equal those of
    ``S2^{-1/2} S1 S2^{-1/2}``.
    """
    S1 = symmetrize(S1)
    S2 = symmetrize(S2)
    _check_same_dim(S1, S2)
    assert_spd(S1)
    assert_spd(S2)
    if np.array_equal(S1, S2):
        return 0.0
    lam = scipy.linalg.eigh(S1, S2, eigvals_only=True)
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def spd_log(base, target) -> np.ndarray:
    """Riemannian logarithm: the tangent at ``base`` pointing to ``target``.

    Returns ``base^{1/2} log(base^{-1/2} target base^{-1/2}) base^{1/2}``,
    a symmetric matrix.
    """
    base = symmetrize(base)
    target = symmetrize(target)
    _check_same_dim(base, target)
    half = mat_sqrt(base)
    inv_half = mat_inv_sqrt(base)
    middle = mat_log(inv_half @ target @ inv_half)
    return symmetrize(half @ middle @ half)


def spd_exp(base, v) -> np.ndarray:
    """Riemannian exponential: follow the geodesic from ``base`` along ``v``.

    Returns ``base^{1/2} exp(base^{-1/2} v base^{-1/2}) base^{1/2}``,
    always SPD for symmetric ``v``.
    """
    base = symmetrize(base)
    v = symmetrize(v)
    _check_same_dim(base, v)
    half = mat_sqrt(base)
    inv_half = mat_inv_sqrt(base)
    middle = mat_exp(inv_half @ v @ inv_half)
    return symmetrize(half @ middle @ half)


@dataclass(frozen=True)
class GeodesicSegment:
    """Geodesic through ``base`` with initial velocity ``velocity``.

    Evaluates to ``base`` at t=0 and to ``Exp_base(velocity)`` at t=1.
    """

    base: np.ndarray
    velocity: np.ndarray


def geodesic_point(seg: GeodesicSegment, t: float) -> np.ndarray:
    """Point at parameter ``t`` along a geodesic (velocity scaled by ``t``)."""
    return spd_exp(seg.base, t * np.asarray(seg.velocity, dtype=float))


@dataclass(frozen=True)
class WeightedPointCloud:
    """SPD points with nonnegative weights summing to one."""

    points: tuple
    weights: np.ndarray

    @staticmethod
    def of(points, weights=None) -> "WeightedPointCloud":
        points = tuple(symmetrize(p) for p in points)
        if not points:
            raise InvalidInput("point cloud is empty")
        D = points[0].shape[0]
        for p in points:
            if p.shape[0] != D:
                raise DimensionMismatch("cloud mixes matrix dimensions")
            assert_spd(p)
        if weights is None:
            weights = np.full(len(points), 1.0 / len(points))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(points),):
            raise InvalidInput("one weight per point is required")
        if np.any(weights < 0):
            raise InvalidInput("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidInput("weights must sum to 1 within 1e-12")
        return WeightedPointCloud(points=points, weights=weights)


def mean_pairwise_distance(points) -> float:
    """Mean geodesic distance over all unordered pairs (0 for a singleton)."""
    n = len(points)
    if n < 2:
        return 0.0
    total = 0.0
    count = 0
    for i in range(n):
        for j in range(i + 1, n):
            total += spd_distance(points[i], points[j])
            count += 1
    return total / count


def frechet_objective(x, cloud: WeightedPointCloud) -> float:
    """Weighted sum of squared geodesic distances from ``x`` to the cloud."""
    return float(
        sum(w * spd_distance(x, p) ** 2 for w, p in zip(cloud.weights, cloud.points))
    )


def intrinsic_barycenter(
    cloud: WeightedPointCloud,
    tol: float | None = None,
    max_iter: int = 200,
) -> np.ndarray:
    """Weighted Fréchet mean of an SPD point cloud.

    Fixed-point iteration ``x <- Exp_x(sum_j w_j Log_x(Y_j))`` with unit
    step, halving the step whenever the objective fails to decrease.
    Stops when the Frobenius norm of the tangent mean drops below ``tol``
    (default ``1e-10 * (1 + mean pairwise distance)``).

    Raises
    ------
    MaxIterExceeded
        After ``max_iter`` iterations; carries the last iterate and the
        residual norm.
    """
    if tol is None:
        tol = 1e-10 * (1.0 + mean_pairwise_distance(cloud.points))
    if tol <= 0:
        raise InvalidInput("tol must be positive")

    x = cloud.points[0]
    if len(cloud.points) == 1:
        return x
    obj = frechet_objective(x, cloud)
    for _ in range(max_iter):
        tangent = np.zeros_like(x)
        for w, p in zip(cloud.weights, cloud.points):
            if w > 0.0:
                tangent += w * spd_log(x, p)
        residual = float(np.linalg.norm(tangent, "fro"))
        if residual < tol:
            return x
        step = 1.0
        while True:
            candidate = spd_exp(x, step * tangent)
            cand_obj = frechet_objective(candidate, cloud)
            if cand_obj < obj or step < 1e-8:
                x, obj = candidate, cand_obj
                break
            step /= 2.0
    raise MaxIterExceeded(
        f"barycenter did not converge in {max_iter} iterations "
        f"(residual {residual:.3e}, tol {tol:.3e})",
        last_iterate=x,
        residual=residual,
    )


def extrinsic_barycenter(points) -> np.ndarray:
    """Tangent-space average anchored at the first point.

    Returns ``Exp_{Y1}( (1/n) sum_j Log_{Y1}(Y_j) )`` with the anchor
    fixed to ``points[0]``; no re-anchoring.
    """
    points = [symmetrize(p) for p in points]
    if not points:
        raise InvalidInput("point list is empty")
    anchor = points[0]
    assert_spd(anchor)
    tangent = np.zeros_like(anchor)
    for p in points:
        tangent += spd_log(anchor, p)
    tangent /= len(points)
    return spd_exp(anchor, tangent)
