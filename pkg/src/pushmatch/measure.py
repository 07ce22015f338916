"""Finitely supported probability measures and tabulated forward maps.

A :class:`DiscreteMeasure` is a list of distinct points with nonnegative
weights summing to one. A :class:`ForwardMap` is a finite table
``theta -> image``; its range is the deduplicated image set. Point identity
everywhere in the package is decided by :func:`match_points`, a
coordinate-wise absolute tolerance of ``EPS_POINT``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _json
from .errors import (
    AtomOutsideRange,
    DimensionMismatch,
    DuplicateTheta,
    EmptySupport,
    LengthMismatch,
    NegativeWeight,
    NonFinitePoint,
    UnmappedAtom,
    ZeroMassOnRange,
)

EPS_POINT = 1e-9
NEG_WEIGHT_TOL = 1e-12

Point = tuple[float, ...]


def as_points(points, dim: int | None = None) -> np.ndarray:
    """Coerce a sequence of points (or of scalars, for 1-D) to a ``(k, d)`` array."""
    try:
        arr = np.asarray(points, dtype=float)
    except ValueError as exc:
        raise DimensionMismatch(f"points have inconsistent dimensions: {exc}") from None
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # a flat list is a list of 1-D points unless a dimension says otherwise
        if dim is not None and dim > 1 and arr.size == dim:
            arr = arr.reshape(1, dim)
        else:
            arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionMismatch(f"points must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] and arr.shape[1] < 1:
        raise DimensionMismatch("points must have dimension >= 1")
    if dim is not None and arr.shape[0] and arr.shape[1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise NonFinitePoint("point coordinates must be finite")
    return arr


def match_points(points: np.ndarray, targets: np.ndarray, eps: float = EPS_POINT) -> np.ndarray:
    """Index of the first target within ``eps`` (max-abs) of each point, or -1.

    This is the single membership predicate used throughout the package.
    """
    points = np.asarray(points, dtype=float)
    targets = np.asarray(targets, dtype=float)
    out = np.full(len(points), -1, dtype=np.intp)
    if len(points) == 0 or len(targets) == 0:
        return out
    if points.shape[1] != targets.shape[1]:
        raise DimensionMismatch(
            f"dimension mismatch: {points.shape[1]} vs {targets.shape[1]}"
        )
    close = np.all(np.abs(points[:, None, :] - targets[None, :, :]) <= eps, axis=2)
    hit = close.any(axis=1)
    out[hit] = np.argmax(close[hit], axis=1)
    return out


def _lex_order(points: np.ndarray) -> np.ndarray:
    # np.lexsort treats the last key as primary
    return np.lexsort(points.T[::-1])


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure on finitely many distinct points.

    Build instances with :func:`make_measure`; the constructor assumes its
    arguments already satisfy the invariants (sorted, distinct, normalized).
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _freeze(self.points))
        object.__setattr__(self, "weights", _freeze(self.weights))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return len(self.weights)

    def __len__(self) -> int:
        return self.size

    @property
    def atoms(self) -> list[tuple[Point, float]]:
        return [(tuple(p), float(w)) for p, w in zip(self.points.tolist(), self.weights)]

    def weight_at(self, point) -> float:
        idx = match_points(as_points([point], self.dim), self.points)[0]
        return 0.0 if idx < 0 else float(self.weights[idx])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [{"point": list(p), "weight": w} for p, w in self.atoms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        dim = int(data["dim"])
        atoms = data["atoms"]
        return make_measure(
            as_points([a["point"] for a in atoms], dim) if atoms else np.empty((0, dim)),
            [a["weight"] for a in atoms],
        )

    def __repr__(self) -> str:
        body = ", ".join(
            f"{p[0] if len(p) == 1 else p}->{w:.6g}" for p, w in self.atoms
        )
        return f"DiscreteMeasure({body})"


def make_measure(points, weights: Iterable[float]) -> DiscreteMeasure:
    """Build a normalized discrete measure.

    Tiny negative weights (down to ``-1e-12``) are clamped to zero, points
    within ``EPS_POINT`` of an earlier point are merged into it by adding
    weights, the total is renormalized to one, and atoms are sorted
    lexicographically.

    Examples
    --------
    >>> make_measure([0, 0, 1], [0.2, 0.1, 0.7]).atoms
    [((0.0,), 0.30000000000000004), ((1.0,), 0.7)]
    """
    pts = as_points(points)
    w = np.asarray(list(weights), dtype=float).ravel()
    if len(pts) == 0 and len(w) == 0:
        raise EmptySupport("a measure needs at least one atom")
    if len(pts) != len(w):
        raise LengthMismatch(f"{len(pts)} points but {len(w)} weights")
    if not np.all(np.isfinite(w)):
        raise NegativeWeight("weights must be finite")
    if np.any(w < -NEG_WEIGHT_TOL):
        raise NegativeWeight(f"negative weight {w.min():.3g}")
    w = np.maximum(w, 0.0)

    reps: list[int] = []
    merged: list[float] = []
    for i in range(len(pts)):
        j = match_points(pts[i : i + 1], pts[reps])[0] if reps else -1
        if j < 0:
            reps.append(i)
            merged.append(w[i])
        else:
            merged[j] += w[i]
    rep_pts = pts[reps]
    mw = np.asarray(merged)
    total = mw.sum()
    if not total > 0:
        raise EmptySupport("total mass must be positive")
    order = _lex_order(rep_pts)
    mw = mw[order] if total == 1.0 else mw[order] / total
    return DiscreteMeasure(rep_pts[order], mw)


def dirac(point) -> DiscreteMeasure:
    pts = as_points(point) if np.ndim(point) == 0 else as_points([point], len(point))
    return make_measure(pts, [1.0])


def mixture(measures: Sequence[DiscreteMeasure], coefs: Sequence[float]) -> DiscreteMeasure:
    """Convex combination of measures, atoms merged under ``EPS_POINT``."""
    pts = np.vstack([m.points for m in measures])
    w = np.concatenate([c * m.weights for m, c in zip(measures, coefs)])
    return make_measure(pts, w)


def align(P: DiscreteMeasure, Q: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Put two measures on a common support.

    Returns ``(points, p, q)`` where ``points`` lists every atom of ``P``
    followed by the atoms of ``Q`` that match none of ``P``; atoms absent
    from one side carry weight 0 there.
    """
    if P.dim != Q.dim:
        raise DimensionMismatch(f"dimension mismatch: {P.dim} vs {Q.dim}")
    idx = match_points(Q.points, P.points)
    extra = idx < 0
    points = np.vstack([P.points, Q.points[extra]])
    p = np.concatenate([P.weights, np.zeros(extra.sum())])
    q = np.zeros(len(points))
    q[idx[~extra]] += Q.weights[~extra]
    q[len(P.weights):] = Q.weights[extra]
    return points, p, q


def tv_distance(P: DiscreteMeasure, Q: DiscreteMeasure) -> float:
    """Total variation ``0.5 * sum |p - q|`` on the aligned support."""
    _, p, q = align(P, Q)
    return 0.5 * float(np.abs(p - q).sum())


def max_weight_gap(P: DiscreteMeasure, Q: DiscreteMeasure) -> float:
    """Largest atomwise weight difference; zero-weight atoms compare equal to absent ones."""
    _, p, q = align(P, Q)
    return float(np.abs(p - q).max())


@dataclass(frozen=True, eq=False)
class ForwardMap:
    """Tabulated map ``theta_i -> G(theta_i)`` on a finite domain grid."""

    thetas: np.ndarray
    images: np.ndarray
    range_points: np.ndarray = field(init=False, repr=False)
    image_index: np.ndarray = field(init=False, repr=False)
    preimages: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        thetas = as_points(self.thetas)
        images = as_points(self.images)
        if len(thetas) == 0:
            raise EmptySupport("a forward map needs at least one pair")
        if len(thetas) != len(images):
            raise LengthMismatch(f"{len(thetas)} thetas but {len(images)} images")
        for i in range(1, len(thetas)):
            if match_points(thetas[i : i + 1], thetas[:i])[0] >= 0:
                raise DuplicateTheta(f"theta #{i} duplicates an earlier theta")

        reps: list[int] = []
        first = np.empty(len(images), dtype=np.intp)
        for i in range(len(images)):
            j = match_points(images[i : i + 1], images[reps])[0] if reps else -1
            if j < 0:
                reps.append(i)
                j = len(reps) - 1
            first[i] = j
        order = _lex_order(images[reps])
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        image_index = rank[first]
        preimages = tuple(
            tuple(int(i) for i in np.flatnonzero(image_index == r)) for r in range(len(order))
        )
        object.__setattr__(self, "thetas", _freeze(thetas))
        object.__setattr__(self, "images", _freeze(images))
        object.__setattr__(self, "range_points", _freeze(images[reps][order]))
        ii = np.array(image_index)
        ii.setflags(write=False)
        object.__setattr__(self, "image_index", ii)
        object.__setattr__(self, "preimages", preimages)

    @classmethod
    def tabulate(cls, thetas, fn: Callable[[np.ndarray], Sequence[float]]) -> "ForwardMap":
        """Evaluate ``fn`` on every point of ``thetas`` and store the table."""
        pts = as_points(thetas)
        return cls(pts, np.array([np.atleast_1d(fn(t)) for t in pts], dtype=float))

    @property
    def domain_dim(self) -> int:
        return self.thetas.shape[1]

    @property
    def codomain_dim(self) -> int:
        return self.images.shape[1]

    def __len__(self) -> int:
        return len(self.thetas)

    def aggregation_matrix(self) -> np.ndarray:
        """0/1 matrix ``A`` with ``A[r, i] = 1`` iff ``G(theta_i)`` is range point ``r``."""
        A = np.zeros((len(self.range_points), len(self.thetas)))
        A[self.image_index, np.arange(len(self.thetas))] = 1.0
        return A

    def to_dict(self) -> dict:
        return {
            "domain_dim": self.domain_dim,
            "codomain_dim": self.codomain_dim,
            "pairs": [
                {"theta": t, "image": y}
                for t, y in zip(self.thetas.tolist(), self.images.tolist())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForwardMap":
        m, n = int(data["domain_dim"]), int(data["codomain_dim"])
        pairs = data["pairs"]
        return cls(
            as_points([p["theta"] for p in pairs], m),
            as_points([p["image"] for p in pairs], n),
        )


def pushforward(fmap: ForwardMap, rho_x: DiscreteMeasure) -> DiscreteMeasure:
    """Image measure ``G # rho_x``: weights aggregate onto image points."""
    if rho_x.dim != fmap.domain_dim:
        raise DimensionMismatch(f"measure dim {rho_x.dim} vs map domain dim {fmap.domain_dim}")
    idx = match_points(rho_x.points, fmap.thetas)
    if np.any(idx < 0):
        bad = rho_x.points[np.argmax(idx < 0)]
        raise UnmappedAtom(f"atom {tuple(bad)} has no tabulated image")
    r = fmap.image_index[idx]
    w = np.zeros(len(fmap.range_points))
    np.add.at(w, r, rho_x.weights)
    used = np.unique(r)
    # no renormalization: aggregation preserves mass, and a second division
    # would perturb weights that callers compare exactly
    return DiscreteMeasure(fmap.range_points[used], w[used])


def range_of(fmap: ForwardMap) -> list[Point]:
    return [tuple(p) for p in fmap.range_points.tolist()]


def _range_array(range_pts, dim: int) -> np.ndarray:
    if isinstance(range_pts, ForwardMap):
        return range_pts.range_points
    if len(range_pts) == 0:
        return np.empty((0, dim))
    return as_points(range_pts, dim)


def in_range_mask(rho_y: DiscreteMeasure, range_pts) -> np.ndarray:
    return match_points(rho_y.points, _range_array(range_pts, rho_y.dim)) >= 0


def mass_in_range(rho_y: DiscreteMeasure, range_pts) -> tuple[float, float]:
    """Masses ``(nu1, nu0)`` of ``rho_y`` inside and outside the range."""
    nu1 = float(rho_y.weights[in_range_mask(rho_y, range_pts)].sum())
    nu1 = min(nu1, 1.0)
    return nu1, 1.0 - nu1


def conditional_restrict(rho_y: DiscreteMeasure, range_pts) -> DiscreteMeasure:
    """Restrict ``rho_y`` to the range and renormalize by its mass there.

    Every kept atom's weight is its original weight divided by ``nu1``, so
    the result has density ``1/nu1`` on the range and 0 off it with respect
    to ``rho_y``.
    """
    mask = in_range_mask(rho_y, range_pts)
    nu1 = float(rho_y.weights[mask].sum())
    if not nu1 > 0:
        raise ZeroMassOnRange("rho_y has no mass on the range")
    return DiscreteMeasure(rho_y.points[mask], rho_y.weights[mask] / nu1)


def left_inverse_pullback(fmap: ForwardMap, rho_prime: DiscreteMeasure) -> DiscreteMeasure:
    """Pull a range-supported measure back to the domain.

    Each atom's weight goes to the first preimage in the map's input order,
    so ``pushforward(fmap, result)`` reproduces ``rho_prime``.
    """
    if rho_prime.dim != fmap.codomain_dim:
        raise DimensionMismatch(
            f"measure dim {rho_prime.dim} vs map codomain dim {fmap.codomain_dim}"
        )
    idx = match_points(rho_prime.points, fmap.range_points)
    if np.any(idx < 0):
        bad = rho_prime.points[np.argmax(idx < 0)]
        raise AtomOutsideRange(f"atom {tuple(bad)} is not in the range of the map")
    first = np.array([fmap.preimages[r][0] for r in idx], dtype=np.intp)
    pts = fmap.thetas[first]
    order = _lex_order(pts)
    return DiscreteMeasure(pts[order], rho_prime.weights[order])


def save_measure(measure: DiscreteMeasure, path: str | Path) -> None:
    _json.dump(measure.to_dict(), path)


def load_measure(path: str | Path) -> DiscreteMeasure:
    return DiscreteMeasure.from_dict(_json.load(path))


def save_map(fmap: ForwardMap, path: str | Path) -> None:
    _json.dump(fmap.to_dict(), path)


def load_map(path: str | Path) -> ForwardMap:
    return ForwardMap.from_dict(_json.load(path))
