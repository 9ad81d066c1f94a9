"""Planar point patterns, rectangular windows and Kth nearest-neighbour distances."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidK, InvalidWindow, LengthMismatch, TooFewPoints

CLUTTER = "clutter"
FEATURE = "feature"

# below this size the all-pairs path is cheaper than building a tree
BRUTE_FORCE_MAX_N = 64
# extra neighbours pulled from the tree so near-ties are re-ranked exactly
_TIE_MARGIN = 4


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangular observation window."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidWindow(f"window bounds must be finite, got {vals}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise InvalidWindow(f"degenerate window {vals}")

    @classmethod
    def square(cls, lo: float = 0.0, hi: float = 1.0) -> "Window":
        return cls(lo, hi, lo, hi)

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return (
            (xy[:, 0] >= self.xmin)
            & (xy[:, 0] <= self.xmax)
            & (xy[:, 1] >= self.ymin)
            & (xy[:, 1] <= self.ymax)
        )

    def covering(self, xy: np.ndarray) -> "Window":
        """Smallest window containing both this window and the points ``xy``."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        if len(xy) == 0:
            return self
        return Window(
            min(self.xmin, xy[:, 0].min()),
            max(self.xmax, xy[:, 0].max()),
            min(self.ymin, xy[:, 1].min()),
            max(self.ymax, xy[:, 1].max()),
        )

    def as_tuple(self):
        return (self.xmin, self.xmax, self.ymin, self.ymax)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointPattern:
    """A planar point set observed in a rectangular window.

    Parameters
    ----------
    points : (n, 2) array_like
        Point coordinates. Order is preserved and every per-point output
        of the library is aligned with it.
    window : Window
        Observation window; all points must lie inside or on its boundary.
    truth : sequence of bool, optional
        Ground-truth labels, ``True`` for feature and ``False`` for clutter.
    parent_index : (n,) array_like of int, optional
        Index of each point in the pattern this one was cut from (see
        :func:`subset`). Defaults to ``arange(n)``.
    """

    points: np.ndarray
    window: Window
    truth: Optional[np.ndarray] = None
    parent_index: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.size == 0:
            pts = pts.reshape(0, 2)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise LengthMismatch(f"points must have shape (n, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if not np.all(self.window.contains(pts)):
            raise InvalidWindow("some points lie outside the observation window")
        object.__setattr__(self, "points", _readonly(pts))

        if self.truth is not None:
            truth = np.array(self.truth, dtype=bool, copy=True).reshape(-1)
            if len(truth) != len(pts):
                raise LengthMismatch(
                    f"truth has {len(truth)} labels for {len(pts)} points"
                )
            object.__setattr__(self, "truth", _readonly(truth))

        if self.parent_index is None:
            idx = np.arange(len(pts))
        else:
            idx = np.array(self.parent_index, dtype=np.int64, copy=True).reshape(-1)
            if len(idx) != len(pts):
                raise LengthMismatch("parent_index length differs from point count")
        object.__setattr__(self, "parent_index", _readonly(idx))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def has_truth(self) -> bool:
        return self.truth is not None


@dataclass(frozen=True)
class KnnDistances:
    """Distance from every point of a pattern to its ``k``-th nearest other point."""

    k: int
    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float, copy=True).reshape(-1)
        if np.any(d < 0):
            raise ValueError("distances must be non-negative")
        object.__setattr__(self, "d", _readonly(d))

    @property
    def n(self) -> int:
        return len(self.d)


def subset(pattern: PointPattern, keep: Sequence[bool]) -> PointPattern:
    """Restrict ``pattern`` to the points flagged in ``keep``.

    The window is unchanged and ``parent_index`` maps every surviving point
    back to its row in ``pattern``.
    """
    keep = np.asarray(keep, dtype=bool).reshape(-1)
    if len(keep) != pattern.n:
        raise LengthMismatch(f"keep has {len(keep)} flags for {pattern.n} points")
    truth = None if pattern.truth is None else pattern.truth[keep]
    return PointPattern(
        pattern.points[keep],
        pattern.window,
        truth=truth,
        parent_index=np.flatnonzero(keep),
    )


def _check_k(n: int, k) -> int:
    if isinstance(k, (bool, np.bool_)) or int(k) != k or k < 1:
        raise InvalidK(f"k must be a positive integer, got {k!r}")
    k = int(k)
    if n <= k:
        raise TooFewPoints(f"need more than k={k} points, got {n}")
    return k


def _pair_distances(points: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    # single formula shared by every path so that results agree bit-for-bit
    dx = points[i, 0] - points[j, 0]
    dy = points[i, 1] - points[j, 1]
    return np.sqrt(dx * dx + dy * dy)


def brute_force_table(points: np.ndarray, k_max: int) -> np.ndarray:
    """Sorted distances to the ``k_max`` nearest other points, by all-pairs search."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    rows = np.repeat(np.arange(n), n)
    cols = np.tile(np.arange(n), n)
    full = _pair_distances(points, rows, cols).reshape(n, n)
    full.sort(axis=1)
    # column 0 is one zero (the point itself, or an exact duplicate)
    return full[:, 1 : k_max + 1]


def neighbour_table(pattern: PointPattern, k_max: int) -> np.ndarray:
    """Sorted distances from each point to its ``k_max`` nearest other points.

    Column ``k - 1`` holds the ``k``-th nearest-neighbour distance. Candidate
    neighbours come from a k-d tree; their distances are recomputed with the
    same arithmetic as :func:`brute_force_table` and re-sorted, so both paths
    return identical values.
    """
    k_max = _check_k(pattern.n, k_max)
    pts = pattern.points
    n = len(pts)
    if n < BRUTE_FORCE_MAX_N:
        return brute_force_table(pts, k_max)
    m = min(n, k_max + 1 + _TIE_MARGIN)
    _, idx = cKDTree(pts).query(pts, k=m)
    rows = np.repeat(np.arange(n), m)
    table = _pair_distances(pts, rows, idx.reshape(-1)).reshape(n, m)
    table.sort(axis=1)
    return table[:, 1 : k_max + 1]


def knn_distances(pattern: PointPattern, k: int) -> KnnDistances:
    """Distance from each point to its ``k``-th nearest other point.

    Euclidean metric, no edge correction. A duplicate point contributes
    distance 0 to its twin.

    Examples
    --------
    >>> pp = PointPattern([(0, 0), (1, 0), (3, 0)], Window(0, 3, -1, 1))
    >>> knn_distances(pp, 1).d.tolist()
    [1.0, 1.0, 2.0]
    """
    k = _check_k(pattern.n, k)
    table = neighbour_table(pattern, k)
    return KnnDistances(k, table[:, k - 1])
