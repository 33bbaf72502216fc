"""Uniform chart interface over the supported geometries.

The conditional-expectation and filtering machinery is generic over the
geometry: it only needs Log/Exp at a base point, the geodesic distance,
and tangent norms.  Tangents are exchanged as flat coordinate vectors so
that weighted averages are plain array arithmetic:

* SPD matrices use the half-vectorization of the symmetric tangent;
* Euclidean points use themselves;
* Markowitz points concatenate ``(dgamma, dmu, vech(dsigma))``.

Two tangent norms are exposed.  ``norm(base, v)`` is the Riemannian norm
at the base point (for SPD, ``||base^{-1/2} Sym(v) base^{-1/2}||_F``),
the one tied to the distance via ``d(a, b) = norm(a, log(a, b))``.
``ambient_norm(v)`` is the Frobenius/Euclidean norm of the tangent in
the embedding, used for convergence residuals.
"""

from __future__ import annotations

import numpy as np

from . import geometry, symlinalg
from .errors import DimensionMismatch, InvalidInput, NotPositiveDefinite
from .markowitz import MarkowitzPoint, MarkowitzTangent, mrk_distance, mrk_exp, mrk_log


class SpdManifold:
    """SPD matrices of a fixed dimension with the affine-invariant metric."""

    kind = "spd"

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidInput("dimension must be positive")
        self.dim = int(dim)
        self.coord_dim = symlinalg.vech_dim(self.dim)

    def check_point(self, p) -> np.ndarray:
        p = symlinalg.symmetrize(p)
        if p.shape != (self.dim, self.dim):
            raise DimensionMismatch(
                f"expected a {self.dim}x{self.dim} matrix, got {p.shape}"
            )
        symlinalg.assert_spd(p)
        return p

    def log(self, base, target) -> np.ndarray:
        return symlinalg.vech(geometry.spd_log(base, target))

    def exp(self, base, v) -> np.ndarray:
        return geometry.spd_exp(base, symlinalg.sym_from_vech(v))

    def distance(self, a, b) -> float:
        return geometry.spd_distance(a, b)

    def norm(self, base, v) -> float:
        inv_half = symlinalg.mat_inv_sqrt(base)
        white = inv_half @ symlinalg.sym_from_vech(v) @ inv_half
        return float(np.linalg.norm(white, "fro"))

    def ambient_norm(self, v) -> float:
        return float(np.linalg.norm(symlinalg.sym_from_vech(v), "fro"))

    def points_equal(self, a, b, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol)

    def exp_frame(self, base, coords) -> np.ndarray:
        """Exp of a tangent given in the orthonormal frame at ``base``.

        ``base^{1/2} exp(Sym(coords)) base^{1/2}``: a unit coordinate
        vector moves unit geodesic distance regardless of the base, so
        random walks driven in this frame have stationary step sizes.
        """
        half = symlinalg.mat_sqrt(base)
        step = symlinalg.mat_exp(symlinalg.sym_from_vech(coords))
        out = half @ step @ half
        return (out + out.T) / 2.0

    def log_frame(self, base, target) -> np.ndarray:
        """Inverse of :meth:`exp_frame`."""
        inv_half = symlinalg.mat_inv_sqrt(base)
        return symlinalg.vech(symlinalg.mat_log(inv_half @ target @ inv_half))

    def ambient_coords(self, p) -> np.ndarray:
        """Half-vectorized embedding coordinates of a point."""
        return symlinalg.vech(p)

    def from_ambient(self, coords) -> np.ndarray:
        """Nearest SPD point with the given embedding coordinates.

        Eigenvalues are floored at a small positive fraction of the
        largest one when an ambient update steps outside the cone.
        """
        S = symlinalg.sym_from_vech(coords)
        Q, lam = symlinalg.sym_eigen(S)
        lam_max = lam[0]
        if lam_max <= 0:
            raise NotPositiveDefinite("ambient coordinates left the SPD cone")
        floor = 1e-10 * lam_max
        if lam[-1] <= floor:
            lam = np.maximum(lam, floor)
            S = (Q * lam) @ Q.T
            S = (S + S.T) / 2.0
        return S

    def flatten_point(self, p) -> list:
        return np.asarray(p, dtype=float).reshape(-1).tolist()

    def unflatten_point(self, flat) -> np.ndarray:
        arr = np.asarray(flat, dtype=float)
        if arr.size != self.dim * self.dim:
            raise InvalidInput(
                f"expected {self.dim * self.dim} entries, got {arr.size}"
            )
        return self.check_point(arr.reshape(self.dim, self.dim))


class EuclideanManifold:
    """Flat geometry: Exp/Log are addition and subtraction."""

    kind = "euclidean"

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidInput("dimension must be positive")
        self.dim = int(dim)
        self.coord_dim = self.dim

    def check_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float).reshape(-1)
        if p.size != self.dim:
            raise DimensionMismatch(f"expected a {self.dim}-vector, got {p.size}")
        if not np.all(np.isfinite(p)):
            raise InvalidInput("point has non-finite entries")
        return p

    def log(self, base, target) -> np.ndarray:
        return self.check_point(target) - self.check_point(base)

    def exp(self, base, v) -> np.ndarray:
        return self.check_point(base) + np.asarray(v, dtype=float).reshape(-1)

    def distance(self, a, b) -> float:
        return float(np.linalg.norm(self.check_point(a) - self.check_point(b)))

    def norm(self, base, v) -> float:
        return float(np.linalg.norm(v))

    def ambient_norm(self, v) -> float:
        return float(np.linalg.norm(v))

    def points_equal(self, a, b, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.check_point(a) - self.check_point(b))) <= tol)

    def exp_frame(self, base, coords) -> np.ndarray:
        return self.exp(base, coords)

    def log_frame(self, base, target) -> np.ndarray:
        return self.log(base, target)

    def ambient_coords(self, p) -> np.ndarray:
        return self.check_point(p)

    def from_ambient(self, coords) -> np.ndarray:
        return self.check_point(coords)

    def flatten_point(self, p) -> list:
        return self.check_point(p).tolist()

    def unflatten_point(self, flat) -> np.ndarray:
        return self.check_point(flat)


class MarkowitzManifold:
    """Product geometry R x R^D x SPD(D) for (gamma, mu, sigma) triples."""

    kind = "markowitz"

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidInput("dimension must be positive")
        self.dim = int(dim)
        self._sig_dim = symlinalg.vech_dim(self.dim)
        self.coord_dim = 1 + self.dim + self._sig_dim

    def check_point(self, p) -> MarkowitzPoint:
        if not isinstance(p, MarkowitzPoint):
            raise InvalidInput("expected a MarkowitzPoint")
        if p.mu.size != self.dim:
            raise DimensionMismatch(f"expected mu of size {self.dim}")
        return p

    def _pack(self, t: MarkowitzTangent) -> np.ndarray:
        return np.concatenate(
            [[t.dgamma], t.dmu, symlinalg.vech(t.dsigma)]
        )

    def _unpack(self, v) -> MarkowitzTangent:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != self.coord_dim:
            raise DimensionMismatch(f"expected {self.coord_dim} coordinates")
        dmu = v[1 : 1 + self.dim]
        dsigma = symlinalg.sym_from_vech(v[1 + self.dim :])
        return MarkowitzTangent(dgamma=float(v[0]), dmu=dmu, dsigma=dsigma)

    def log(self, base, target) -> np.ndarray:
        return self._pack(mrk_log(self.check_point(base), self.check_point(target)))

    def exp(self, base, v) -> MarkowitzPoint:
        return mrk_exp(self.check_point(base), self._unpack(v))

    def distance(self, a, b) -> float:
        return mrk_distance(self.check_point(a), self.check_point(b))

    def norm(self, base, v) -> float:
        base = self.check_point(base)
        t = self._unpack(v)
        inv_half = symlinalg.mat_inv_sqrt(base.sigma)
        white = inv_half @ t.dsigma @ inv_half
        return float(
            np.sqrt(
                t.dgamma**2
                + np.dot(t.dmu, t.dmu)
                + np.linalg.norm(white, "fro") ** 2
            )
        )

    def ambient_norm(self, v) -> float:
        t = self._unpack(v)
        return float(
            np.sqrt(
                t.dgamma**2
                + np.dot(t.dmu, t.dmu)
                + np.linalg.norm(t.dsigma, "fro") ** 2
            )
        )

    def exp_frame(self, base, coords) -> MarkowitzPoint:
        base = self.check_point(base)
        t = self._unpack(coords)
        half = symlinalg.mat_sqrt(base.sigma)
        step = symlinalg.mat_exp(t.dsigma)
        sigma = half @ step @ half
        return MarkowitzPoint(
            gamma=base.gamma + t.dgamma,
            mu=base.mu + t.dmu,
            sigma=(sigma + sigma.T) / 2.0,
        )

    def log_frame(self, base, target) -> np.ndarray:
        base = self.check_point(base)
        target = self.check_point(target)
        inv_half = symlinalg.mat_inv_sqrt(base.sigma)
        dsigma = symlinalg.mat_log(inv_half @ target.sigma @ inv_half)
        return np.concatenate(
            [
                [target.gamma - base.gamma],
                target.mu - base.mu,
                symlinalg.vech(dsigma),
            ]
        )

    def points_equal(self, a, b, tol: float = 0.0) -> bool:
        a = self.check_point(a)
        b = self.check_point(b)
        return bool(
            abs(a.gamma - b.gamma) <= tol
            and np.max(np.abs(a.mu - b.mu)) <= tol
            and np.max(np.abs(a.sigma - b.sigma)) <= tol
        )

    def flatten_point(self, p) -> list:
        p = self.check_point(p)
        return (
            [p.gamma]
            + p.mu.tolist()
            + np.asarray(p.sigma, dtype=float).reshape(-1).tolist()
        )

    def unflatten_point(self, flat) -> MarkowitzPoint:
        arr = np.asarray(flat, dtype=float).reshape(-1)
        if arr.size != 1 + self.dim + self.dim * self.dim:
            raise InvalidInput("flattened Markowitz point has wrong length")
        sigma = arr[1 + self.dim :].reshape(self.dim, self.dim)
        return self.check_point(
            MarkowitzPoint(gamma=float(arr[0]), mu=arr[1 : 1 + self.dim], sigma=sigma)
        )


def make_manifold(kind: str, dim: int):
    """Instantiate a manifold by its serialized ``kind`` tag."""
    try:
        cls = {
            "spd": SpdManifold,
            "euclidean": EuclideanManifold,
            "markowitz": MarkowitzManifold,
        }[kind]
    except KeyError:
        raise InvalidInput(f"unknown manifold kind {kind!r}") from None
    return cls(dim)
