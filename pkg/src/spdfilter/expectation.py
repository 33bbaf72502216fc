"""Conditional expectation of manifold-valued signals on finite models.

Everything here runs on a :class:`DiscreteModel`: a finite probability
space with a refining-partition filtration and one manifold-valued path
per atom.  On such models conditional expectations are weighted
averages, so the two estimator notions can be computed exactly and
compared:

* the *recursive* estimator (:func:`geodesic_ce`) moves the previous
  estimate along the geodesic toward the conditional tangent average of
  the signal, with a configurable number of interpolation substeps per
  observation interval standing in for the continuous-time lag limit;
* the *variational* estimator (:func:`intrinsic_ce`) directly minimizes
  the conditionally expected squared geodesic distance per cell.

The functionals :func:`gamma_F` and :func:`gamma_Fn` evaluate the
variational objective and its lagged tangent-space approximations; the
identity between the minimum of the former and the limiting infimum of
the latter is checked exhaustively over a finite candidate family by
:func:`gamma_limit_identity_check`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, InvalidModel, MaxIterExceeded, ParseError
from .manifolds import make_manifold


# ---------------------------------------------------------------------------
# model and path containers


@dataclass(frozen=True)
class DiscreteModel:
    """Finite probability space with a filtration and manifold paths.

    Attributes
    ----------
    manifold : SpdManifold | EuclideanManifold | MarkowitzManifold
        Geometry shared by every path point.
    atoms : tuple of str
        Outcome labels.
    probs : ndarray
        Strictly positive weights summing to one.
    times : ndarray
        Strictly increasing grid starting at 0.
    filtration : tuple
        One partition of atom indices per time; each partition refines
        the previous one.
    paths : tuple
        ``paths[atom][time]`` is a manifold point.
    """

    manifold: object
    atoms: tuple
    probs: np.ndarray
    times: np.ndarray
    filtration: tuple
    paths: tuple

    @staticmethod
    def of(manifold, atoms, probs, times, filtration, paths) -> "DiscreteModel":
        atoms = tuple(str(a) for a in atoms)
        n = len(atoms)
        if n == 0:
            raise InvalidModel("model has no atoms")
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (n,):
            raise InvalidModel("one probability per atom is required")
        if np.any(probs <= 0):
            raise InvalidModel("atom probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidModel("probabilities must sum to 1 within 1e-12")
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 1:
            raise InvalidModel("times must be a non-empty 1-d grid")
        if abs(times[0]) > 0:
            raise InvalidModel("time grid must start at 0")
        if np.any(np.diff(times) <= 0):
            raise InvalidModel("times must be strictly increasing")
        filtration = tuple(
            tuple(tuple(int(i) for i in cell) for cell in partition)
            for partition in filtration
        )
        if len(filtration) != times.size:
            raise InvalidModel("one partition per time is required")
        for k, partition in enumerate(filtration):
            seen = sorted(i for cell in partition for i in cell)
            if seen != list(range(n)):
                raise InvalidModel(f"partition at time index {k} does not cover atoms")
            if any(len(cell) == 0 for cell in partition):
                raise InvalidModel(f"partition at time index {k} has an empty cell")
        for k in range(1, len(filtration)):
            coarse = {
                i: idx for idx, cell in enumerate(filtration[k - 1]) for i in cell
            }
            for cell in filtration[k]:
                parents = {coarse[i] for i in cell}
                if len(parents) != 1:
                    raise InvalidModel(
                        f"partition at time index {k} does not refine its predecessor"
                    )
        if len(paths) != n:
            raise InvalidModel("one path per atom is required")
        checked = []
        for path in paths:
            if len(path) != times.size:
                raise InvalidModel("each path needs one point per time")
            checked.append(tuple(manifold.check_point(p) for p in path))
        return DiscreteModel(
            manifold=manifold,
            atoms=atoms,
            probs=probs,
            times=times,
            filtration=filtration,
            paths=tuple(checked),
        )

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_times(self) -> int:
        return self.times.size

    def point(self, atom: int, k: int):
        return self.paths[atom][k]

    def cell_index(self, k: int) -> dict:
        """Map atom index -> position of its cell in partition ``k``."""
        return {
            i: idx for idx, cell in enumerate(self.filtration[k]) for i in cell
        }

    def cell_weights(self, cell) -> np.ndarray:
        w = self.probs[list(cell)]
        return w / w.sum()

    def signal_path(self) -> "ManifoldPath":
        """The signal itself as a path object (perfect-information target)."""
        return ManifoldPath(manifold=self.manifold, times=self.times, values=self.paths)

    def diameter(self) -> float:
        """Largest geodesic distance between any two path points."""
        pts = [p for path in self.paths for p in path]
        best = 0.0
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                best = max(best, self.manifold.distance(pts[i], pts[j]))
        return best


@dataclass(frozen=True)
class ManifoldPath:
    """Per-atom, per-time manifold points on a shared grid."""

    manifold: object
    times: np.ndarray
    values: tuple

    def point(self, atom: int, k: int):
        return self.values[atom][k]

    def is_measurable(self, model: DiscreteModel, tol: float = 0.0) -> bool:
        """True when values are constant on every filtration cell."""
        for k in range(model.n_times):
            for cell in model.filtration[k]:
                ref = self.values[cell[0]][k]
                for i in cell[1:]:
                    if not self.manifold.points_equal(self.values[i][k], ref, tol):
                        return False
        return True

    def evaluate(self, atom: int, s: float):
        """Value at an off-grid time: frozen tails, geodesic interpolation."""
        t = self.times
        if s <= t[0]:
            return self.values[atom][0]
        if s >= t[-1]:
            return self.values[atom][-1]
        k = int(np.searchsorted(t, s, side="right") - 1)
        if s == t[k]:
            return self.values[atom][k]
        tau = (s - t[k]) / (t[k + 1] - t[k])
        a = self.values[atom][k]
        b = self.values[atom][k + 1]
        return self.manifold.exp(a, tau * self.manifold.log(a, b))


def horizontal_extend(path: ManifoldPath, T: float) -> ManifoldPath:
    """Freeze a path at its time-``T`` value for all later grid times.

    The value before time 0 is frozen at the initial point (handled by
    :meth:`ManifoldPath.evaluate`).  ``T`` may lie off the grid, in
    which case the last grid value at or before ``T`` is held.
    Idempotent.
    """
    t = path.times
    if T >= t[-1]:
        return path
    k_hold = int(np.searchsorted(t, T, side="right") - 1)
    k_hold = max(k_hold, 0)
    values = tuple(
        tuple(
            path.values[a][min(k, k_hold)] for k in range(t.size)
        )
        for a in range(len(path.values))
    )
    return ManifoldPath(manifold=path.manifold, times=t, values=values)


# ---------------------------------------------------------------------------
# weighted Fréchet mean (generic over the manifold adapters)


def weighted_frechet_mean(manifold, points, weights, tol, max_iter: int = 200):
    """Minimize the weighted sum of squared distances by fixed-point steps.

    ``x <- Exp_x(sum_j w_j Log_x(y_j))`` with the step halved whenever
    the objective fails to decrease.  Convergence is declared when the
    ambient norm of the tangent mean falls below ``tol``.
    """
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    points = list(points)
    weights = np.asarray(weights, dtype=float)
    x = points[0]
    if len(points) == 1:
        return x

    def objective(z):
        return sum(
            w * manifold.distance(z, p) ** 2 for w, p in zip(weights, points)
        )

    obj = objective(x)
    residual = np.inf
    for _ in range(max_iter):
        tangent = np.zeros(manifold.coord_dim)
        for w, p in zip(weights, points):
            if w > 0.0:
                tangent += w * manifold.log(x, p)
        residual = manifold.ambient_norm(tangent)
        if residual < tol:
            return x
        step = 1.0
        while True:
            candidate = manifold.exp(x, step * tangent)
            cand_obj = objective(candidate)
            if cand_obj < obj or step < 1e-8:
                x, obj = candidate, cand_obj
                break
            step /= 2.0
    raise MaxIterExceeded(
        f"Fréchet mean did not converge in {max_iter} iterations "
        f"(residual {residual:.3e}, tol {tol:.3e})",
        last_iterate=x,
        residual=residual,
    )


def _scale_aware_tol(manifold, points, tol):
    if tol is not None:
        return tol
    n = len(points)
    if n < 2:
        return 1e-10
    acc, cnt = 0.0, 0
    for i in range(n):
        for j in range(i + 1, n):
            acc += manifold.distance(points[i], points[j])
            cnt += 1
    return 1e-10 * (1.0 + acc / cnt)


def frechet_initial(model: DiscreteModel, tol: float | None = None):
    """Barycenter of the time-0 law: the estimator's initial condition."""
    points = [model.point(a, 0) for a in range(model.n_atoms)]
    tol = _scale_aware_tol(model.manifold, points, tol)
    return weighted_frechet_mean(model.manifold, points, model.probs, tol)


# ---------------------------------------------------------------------------
# the two conditional-expectation constructions


def conditional_tangent_mean(model: DiscreteModel, k: int, anchors) -> list:
    """Per-cell average of Log-anchor coordinates of the time-``k`` signal.

    ``anchors`` holds one base point per cell of the time-``k``
    partition.  For cell ``C``: ``sum_{w in C} p_w Log_anchor(X_k(w)) /
    sum_{w in C} p_w``.
    """
    partition = model.filtration[k]
    if len(anchors) != len(partition):
        raise InvalidModel("one anchor per cell is required")
    out = []
    for anchor, cell in zip(anchors, partition):
        if len(cell) == 0:
            raise InvalidModel("empty filtration cell")
        w = model.cell_weights(cell)
        tangent = np.zeros(model.manifold.coord_dim)
        for wi, atom in zip(w, cell):
            tangent += wi * model.manifold.log(anchor, model.point(atom, k))
        out.append(tangent)
    return out


def geodesic_ce(model: DiscreteModel, substeps: int = 1) -> ManifoldPath:
    """Recursive tangent-average estimator of the signal given the filtration.

    Starts from :func:`frechet_initial`.  Advancing from one grid time
    to the next applies, per cell of the new partition, ``substeps``
    rounds of ``z <- Exp_z(conditional tangent mean at z)``.  Larger
    ``substeps`` refines the interpolation toward the continuous-time
    construction; on flat geometry a single round already lands exactly
    on the conditional mean.
    """
    if substeps < 1:
        raise InvalidInput("substeps must be >= 1")
    manifold = model.manifold
    n_atoms = model.n_atoms
    values = [[None] * model.n_times for _ in range(n_atoms)]
    z0 = frechet_initial(model)
    for a in range(n_atoms):
        values[a][0] = z0
    for k in range(1, model.n_times):
        partition = model.filtration[k]
        anchors = [values[cell[0]][k - 1] for cell in partition]
        for anchor, cell in zip(anchors, partition):
            w = model.cell_weights(cell)
            z = anchor
            for _ in range(substeps):
                tangent = np.zeros(manifold.coord_dim)
                for wi, atom in zip(w, cell):
                    tangent += wi * manifold.log(z, model.point(atom, k))
                z = manifold.exp(z, tangent)
            for atom in cell:
                values[atom][k] = z
    return ManifoldPath(
        manifold=manifold,
        times=model.times,
        values=tuple(tuple(row) for row in values),
    )


def intrinsic_ce(
    model: DiscreteModel, k: int, tol: float | None = None, max_iter: int = 200
) -> list:
    """Per-cell minimizer of the conditionally expected squared distance.

    Returns one point per cell of the time-``k`` partition, each the
    weighted Fréchet mean of the signal values in the cell, converged to
    first-order residual below ``tol``.
    """
    out = []
    for cell in model.filtration[k]:
        points = [model.point(atom, k) for atom in cell]
        cell_tol = _scale_aware_tol(model.manifold, points, tol)
        out.append(
            weighted_frechet_mean(
                model.manifold, points, model.cell_weights(cell), cell_tol, max_iter
            )
        )
    return out


# ---------------------------------------------------------------------------
# variational functionals


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros(times.size)
    if times.size == 1:
        return np.ones(1)
    w[0] = (times[1] - times[0]) / 2.0
    w[-1] = (times[-1] - times[-2]) / 2.0
    if times.size > 2:
        w[1:-1] = (times[2:] - times[:-2]) / 2.0
    return w


def _check_candidate_path(model: DiscreteModel, Z: ManifoldPath) -> None:
    if Z.times.size != model.n_times or np.any(Z.times != model.times):
        raise InvalidModel("candidate path must live on the model grid")
    if len(Z.values) != model.n_atoms:
        raise InvalidModel("candidate path must have one row per atom")
    if not Z.is_measurable(model, tol=0.0):
        raise InvalidModel("candidate path is not filtration-measurable")


def gamma_F(model: DiscreteModel, Z: ManifoldPath, p: float = 2.0) -> float:
    """Expected ``p``-th power distance between ``Z`` and the signal,
    integrated over the grid by the trapezoid rule."""
    _check_candidate_path(model, Z)
    m = model.manifold
    w = _trapezoid_weights(model.times)
    total = 0.0
    for k in range(model.n_times):
        e = sum(
            model.probs[a] * m.distance(Z.point(a, k), model.point(a, k)) ** p
            for a in range(model.n_atoms)
        )
        total += w[k] * e
    return float(total)


def gamma_Fn(model: DiscreteModel, Z: ManifoldPath, n: int, p: float = 2.0) -> float:
    """Lagged tangent-space approximation of :func:`gamma_F`.

    The integrand at time ``t`` compares Log coordinates of ``Z_t`` and
    of the signal, both taken at the base ``Z_{t - 1/n}`` (evaluated on
    the horizontally extended, geodesically interpolated path), in the
    Riemannian norm of that base.
    """
    if n < 1:
        raise InvalidInput("n must be >= 1")
    _check_candidate_path(model, Z)
    m = model.manifold
    w = _trapezoid_weights(model.times)
    total = 0.0
    for k in range(model.n_times):
        t_lag = model.times[k] - 1.0 / n
        e = 0.0
        for a in range(model.n_atoms):
            base = Z.evaluate(a, t_lag)
            diff = m.log(base, Z.point(a, k)) - m.log(base, model.point(a, k))
            e += model.probs[a] * m.norm(base, diff) ** p
        total += w[k] * e
    return float(total)


# ---------------------------------------------------------------------------
# exhaustive verification of the variational limit identity


@dataclass
class GammaReport:
    """Outcome of the finite-family minimum-vs-limit comparison."""

    min_F: float
    n_values: list
    inf_Fn: list
    candidate_counts: list = field(default_factory=list)

    @property
    def terminal_gap(self) -> float:
        return abs(self.min_F - self.inf_Fn[-1])

    @property
    def relative_gap(self) -> float:
        return self.terminal_gap / (1.0 + self.min_F)


def _cell_candidates(model: DiscreteModel, k: int, cell, cap: int = 10) -> list:
    """Geodesic grid refinement of the cell's signal values.

    Atom values, midpoints of consecutive pairs, and the cell's
    conditional Fréchet mean, deduplicated.
    """
    m = model.manifold
    pts = [model.point(a, k) for a in cell]
    mean = weighted_frechet_mean(
        m, pts, model.cell_weights(cell), _scale_aware_tol(m, pts, None)
    )
    # the conditional mean first: it is the unconstrained minimizer of the
    # per-cell objective and must survive the candidate cap
    cands = [mean] + list(pts)
    for a, b in zip(pts, pts[1:]):
        cands.append(m.exp(a, 0.5 * m.log(a, b)))
    scale = 1.0 + max((m.distance(pts[0], q) for q in pts), default=0.0)
    unique = []
    for c in cands:
        if all(m.distance(c, u) > 1e-12 * scale for u in unique):
            unique.append(c)
        if len(unique) >= cap:
            break
    return unique


def _default_n_schedule(times: np.ndarray, n_max: int = 2**10) -> list:
    min_gap = float(np.min(np.diff(times))) if times.size > 1 else 1.0
    n0 = 1
    while 1.0 / n0 > min_gap:
        n0 *= 2
    schedule = []
    n = n0
    while n <= n_max:
        schedule.append(n)
        n *= 2
    return schedule


def gamma_limit_identity_check(
    model: DiscreteModel, n_schedule=None, candidate_cap: int = 10
) -> GammaReport:
    """Compare ``min F`` with ``inf F_n`` over a finite candidate family.

    Candidate paths are filtration-measurable with per-cell values drawn
    from :func:`_cell_candidates`.  ``min F`` separates across cells and
    is minimized directly; ``inf F_n`` couples consecutive times through
    the lagged base point and is minimized exactly by dynamic
    programming over the filtration tree.  The ``n`` schedule doubles
    from the smallest power of two whose lag ``1/n`` fits inside one
    grid interval (so the lag never crosses more than one interval) up
    to ``2**10``.
    """
    if model.n_atoms > 16 or model.n_times > 6:
        raise InvalidModel("identity check is limited to small models")
    m = model.manifold
    trap = _trapezoid_weights(model.times)
    if n_schedule is None:
        n_schedule = _default_n_schedule(model.times)
    n_schedule = [int(n) for n in n_schedule]
    min_gap = float(np.min(np.diff(model.times))) if model.n_times > 1 else np.inf
    if any(1.0 / n > min_gap + 1e-12 for n in n_schedule):
        raise InvalidInput("every lag 1/n must fit inside one grid interval")

    candidates = [
        [_cell_candidates(model, k, cell, candidate_cap) for cell in model.filtration[k]]
        for k in range(model.n_times)
    ]

    # min F: separable across (time, cell)
    min_F = 0.0
    for k in range(model.n_times):
        for c_idx, cell in enumerate(model.filtration[k]):
            w = model.probs[list(cell)]
            best = min(
                sum(
                    wi * m.distance(cand, model.point(a, k)) ** 2
                    for wi, a in zip(w, cell)
                )
                for cand in candidates[k][c_idx]
            )
            min_F += trap[k] * best

    # children of each (k, cell) node in the filtration tree
    children: dict = {}
    for k in range(1, model.n_times):
        parent_of = model.cell_index(k - 1)
        for c_idx, cell in enumerate(model.filtration[k]):
            p_idx = parent_of[cell[0]]
            children.setdefault((k - 1, p_idx), []).append((k, c_idx))

    def edge_cost(k, cell, cand_parent, cand_child, n):
        """Trapezoid-weighted time-k term for one (parent, child) choice."""
        t_lag = model.times[k] - 1.0 / n
        gap = model.times[k] - model.times[k - 1]
        tau = (t_lag - model.times[k - 1]) / gap
        base = m.exp(cand_parent, tau * m.log(cand_parent, cand_child))
        log_child = m.log(base, cand_child)
        acc = 0.0
        for a in cell:
            diff = log_child - m.log(base, model.point(a, k))
            acc += model.probs[a] * m.norm(base, diff) ** 2
        return trap[k] * acc

    def solve_for_n(n):
        cache: dict = {}

        def value(k, c_idx, choice):
            key = (k, c_idx, choice)
            if key in cache:
                return cache[key]
            total = 0.0
            if k == 0:
                cell = model.filtration[0][c_idx]
                cand = candidates[0][c_idx][choice]
                total += trap[0] * sum(
                    model.probs[a] * m.distance(cand, model.point(a, 0)) ** 2
                    for a in cell
                )
            for (kc, cc) in children.get((k, c_idx), []):
                cell_c = model.filtration[kc][cc]
                best = min(
                    edge_cost(
                        kc,
                        cell_c,
                        candidates[k][c_idx][choice],
                        candidates[kc][cc][ch],
                        n,
                    )
                    + value(kc, cc, ch)
                    for ch in range(len(candidates[kc][cc]))
                )
                total += best
            cache[key] = total
            return total

        return sum(
            min(value(0, c_idx, ch) for ch in range(len(candidates[0][c_idx])))
            for c_idx in range(len(model.filtration[0]))
        )

    inf_Fn = [solve_for_n(n) for n in n_schedule]
    counts = [len(c) for per_time in candidates for c in per_time]
    return GammaReport(
        min_F=float(min_F),
        n_values=n_schedule,
        inf_Fn=[float(v) for v in inf_Fn],
        candidate_counts=counts,
    )


# ---------------------------------------------------------------------------
# (de)serialization


def model_to_dict(model: DiscreteModel) -> dict:
    return {
        "manifold": {"kind": model.manifold.kind, "dim": model.manifold.dim},
        "atoms": list(model.atoms),
        "probs": model.probs.tolist(),
        "times": model.times.tolist(),
        "filtration": [
            [list(cell) for cell in partition] for partition in model.filtration
        ],
        "paths": [
            [model.manifold.flatten_point(p) for p in path] for path in model.paths
        ],
    }


def model_from_dict(payload: dict) -> DiscreteModel:
    try:
        spec = payload["manifold"]
        manifold = make_manifold(spec["kind"], int(spec["dim"]))
        paths = [
            [manifold.unflatten_point(p) for p in path] for path in payload["paths"]
        ]
        return DiscreteModel.of(
            manifold=manifold,
            atoms=payload["atoms"],
            probs=payload["probs"],
            times=payload["times"],
            filtration=payload["filtration"],
            paths=paths,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModel(f"malformed model payload: {exc}") from exc


def save_model(model: DiscreteModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path) -> DiscreteModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(payload)


# ---------------------------------------------------------------------------
# bundled verification models


def bundled_deterministic_model() -> DiscreteModel:
    """Single-atom SPD model: every estimator must reproduce the path."""
    from .geometry import spd_exp

    manifold = make_manifold("spd", 2)
    times = [0.0, 0.25, 0.5, 0.75]
    steps = [
        np.array([[0.3, 0.1], [0.1, -0.2]]),
        np.array([[-0.1, 0.05], [0.05, 0.25]]),
        np.array([[0.2, -0.15], [-0.15, 0.1]]),
    ]
    x = np.array([[1.0, 0.2], [0.2, 0.8]])
    path = [x]
    for s in steps:
        x = spd_exp(x, s)
        path.append(x)
    return DiscreteModel.of(
        manifold=manifold,
        atoms=["w0"],
        probs=[1.0],
        times=times,
        filtration=[[[0]]] * len(times),
        paths=[path],
    )


def bundled_euclidean_model() -> DiscreteModel:
    """8-atom scalar model with a dyadically refining filtration."""
    manifold = make_manifold("euclidean", 1)
    times = [0.0, 0.25, 0.5, 0.75, 1.0]
    filtration = [
        [[0, 1, 2, 3, 4, 5, 6, 7]],
        [[0, 1, 2, 3], [4, 5, 6, 7]],
        [[0, 1], [2, 3], [4, 5], [6, 7]],
        [[0, 1], [2, 3], [4, 5], [6, 7]],
        [[0], [1], [2], [3], [4], [5], [6], [7]],
    ]
    probs = np.array([3, 1, 2, 2, 1, 3, 2, 2], dtype=float)
    probs /= probs.sum()
    rng = np.random.default_rng(71)
    paths = []
    for a in range(8):
        x = float(a - 3.5)
        path = [np.array([x])]
        for _ in times[1:]:
            x = x + float(rng.normal(0.0, 0.6))
            path.append(np.array([x]))
        paths.append(path)
    return DiscreteModel.of(
        manifold=manifold,
        atoms=[f"w{i}" for i in range(8)],
        probs=probs,
        times=times,
        filtration=filtration,
        paths=paths,
    )


def bundled_spd_model() -> DiscreteModel:
    """8-atom, 2x2 SPD model on six times with 2-atom terminal cells."""
    from .geometry import spd_exp

    manifold = make_manifold("spd", 2)
    times = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    filtration = [
        [[0, 1, 2, 3, 4, 5, 6, 7]],
        [[0, 1, 2, 3], [4, 5, 6, 7]],
        [[0, 1], [2, 3], [4, 5], [6, 7]],
        [[0, 1], [2, 3], [4, 5], [6, 7]],
        [[0, 1], [2, 3], [4, 5], [6, 7]],
        [[0, 1], [2, 3], [4, 5], [6, 7]],
    ]
    probs = np.array([2, 1, 1, 2, 1, 2, 2, 1], dtype=float)
    probs /= probs.sum()
    rng = np.random.default_rng(1234)
    paths = []
    for a in range(8):
        x = spd_exp(np.eye(2), 0.3 * _sym2(rng))
        path = [x]
        for _ in times[1:]:
            x = spd_exp(x, 0.12 * _sym2(rng))
            path.append(x)
        paths.append(path)
    return DiscreteModel.of(
        manifold=manifold,
        atoms=[f"w{i}" for i in range(8)],
        probs=probs,
        times=times,
        filtration=filtration,
        paths=paths,
    )


def _sym2(rng) -> np.ndarray:
    a = rng.standard_normal((2, 2))
    return (a + a.T) / 2.0


def bundled_models() -> dict:
    """Named verification models shipped with the package."""
    return {
        "deterministic-spd": bundled_deterministic_model(),
        "euclidean-8atom": bundled_euclidean_model(),
        "spd-8atom": bundled_spd_model(),
    }


# ---------------------------------------------------------------------------
# estimator equivalence study (used by the verify command and tests)


def classical_conditional_means(model: DiscreteModel, k: int) -> list:
    """Arithmetic conditional means per cell (flat models only)."""
    out = []
    for cell in model.filtration[k]:
        w = model.cell_weights(cell)
        out.append(
            sum(wi * model.point(a, k) for wi, a in zip(w, cell))
        )
    return out


def equivalence_study(model: DiscreteModel, substeps_values=(1, 2, 4, 8, 16, 32, 64)):
    """Distance between the recursive and variational estimators at the
    terminal time, per substeps setting.

    Returns ``(gaps, diameter)`` where ``gaps[i]`` is the worst per-cell
    geodesic distance at the final grid time for ``substeps_values[i]``.
    """
    k_last = model.n_times - 1
    targets = intrinsic_ce(model, k_last, tol=1e-12)
    gaps = []
    for substeps in substeps_values:
        path = geodesic_ce(model, substeps=substeps)
        worst = 0.0
        for target, cell in zip(targets, model.filtration[k_last]):
            est = path.point(cell[0], k_last)
            worst = max(worst, model.manifold.distance(est, target))
        gaps.append(worst)
    return gaps, model.diameter()
