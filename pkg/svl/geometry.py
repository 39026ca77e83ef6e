# svl/geometry.py
"""
3D input representation: event streams, point clouds and voxel grids.

Everything here is a pure numpy function over plain arrays; nothing records
onto the autodiff tape. Distances are compared squared.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import NORM_EPS
from .exceptions import DataError, DegenerateInputError, ShapeError

logger = logging.getLogger(__name__)

Triple = Union[float, Sequence[float]]


@dataclass(frozen=True)
class EventStream:
    """DVS events as parallel integer columns, sorted by timestamp."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        columns = {}
        for name in ("t", "x", "y", "p"):
            column = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1)
            column.flags.writeable = False
            columns[name] = column
            object.__setattr__(self, name, column)

        if len({len(c) for c in columns.values()}) != 1:
            raise ShapeError("event columns t, x, y, p must have equal length")
        if np.any(np.diff(columns["t"]) < 0):
            raise DataError("events must be sorted by non-decreasing timestamp")
        if np.any((columns["p"] != 0) & (columns["p"] != 1)):
            raise DataError("event polarity must be 0 or 1")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "EventStream":
        """Build a stream from (t, x, y, p) tuples in any order."""
        if len(rows) == 0:
            return cls(*(np.zeros(0, dtype=np.int64) for _ in range(4)))
        table = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
        order = np.argsort(table[:, 0], kind="stable")
        table = table[order]
        return cls(table[:, 0], table[:, 1], table[:, 2], table[:, 3])

    def __len__(self) -> int:
        return len(self.t)

    def select(self, mask: np.ndarray) -> "EventStream":
        return EventStream(self.t[mask], self.x[mask], self.y[mask], self.p[mask])


@dataclass(frozen=True)
class PointCloud:
    """N×3 coordinates with optional N×F per-point features."""

    points: np.ndarray
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ShapeError(f"points must be N×3, got {list(points.shape)}")
        if points.shape[0] < 1:
            raise DegenerateInputError("a point cloud needs at least one point")
        if not np.all(np.isfinite(points)):
            raise DataError("point coordinates contain NaN or Inf")
        points.flags.writeable = False
        object.__setattr__(self, "points", points)

        if self.features is not None:
            features = np.array(self.features, dtype=np.float64)
            if features.ndim == 1:
                features = features.reshape(-1, 1)
            if features.ndim != 2 or features.shape[0] != points.shape[0]:
                raise ShapeError(
                    f"features {list(features.shape)} do not match {points.shape[0]} points"
                )
            features.flags.writeable = False
            object.__setattr__(self, "features", features)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return 0 if self.features is None else self.features.shape[1]


@dataclass(frozen=True)
class VoxelGrid:
    """
    Occupied voxels of a clipped box, keyed by integer (i, j, k).

    Each value is the mean feature of the points that fell into the voxel.
    """

    resolution: Tuple[float, float, float]
    range_min: Tuple[float, float, float]
    range_max: Tuple[float, float, float]
    occupied: Dict[Tuple[int, int, int], np.ndarray] = field(default_factory=dict)

    @property
    def extent(self) -> Tuple[int, int, int]:
        return _grid_extent(self.resolution, self.range_min, self.range_max)

    def __len__(self) -> int:
        return len(self.occupied)

    def to_cloud(self) -> PointCloud:
        """Voxel centers as points, averaged features as features."""
        keys = sorted(self.occupied)
        coords = np.asarray(keys, dtype=np.float64)
        centers = np.asarray(self.range_min) + (coords + 0.5) * np.asarray(self.resolution)
        features = np.stack([self.occupied[key] for key in keys])
        return PointCloud(centers, features)


def _as_triple(value: Triple) -> Tuple[float, float, float]:
    array = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
    return tuple(float(v) for v in array)


def _grid_extent(resolution, range_min, range_max) -> Tuple[int, int, int]:
    spans = np.asarray(range_max) - np.asarray(range_min)
    cells = np.ceil(spans / np.asarray(resolution) - 1e-9).astype(int)
    return tuple(int(max(1, c)) for c in cells)


# ============================================================================
# Event streams
# ============================================================================


def _cloud_from_events(stream: EventStream) -> PointCloud:
    if len(stream) == 0:
        raise DegenerateInputError("event window is empty")
    t_min, t_max = int(stream.t[0]), int(stream.t[-1])
    if t_max == t_min:
        raise DegenerateInputError(f"all events in the window share timestamp {t_min}")

    z = (stream.t - t_min) / float(t_max - t_min)
    points = np.column_stack([stream.x, stream.y, z]).astype(np.float64)
    return PointCloud(points, stream.p.astype(np.float64).reshape(-1, 1))


def event_to_cloud(
    stream: EventStream, window: Optional[Tuple[int, int]] = None
) -> PointCloud:
    """
    Treat the events of a closed time window as a spatio-temporal cloud.

    Each event becomes (x, y, z) with z = (t − t_min)/(t_max − t_min) over the
    window, so z lies in [0, 1]; polarity is kept as a one-column feature.

    Args:
        stream: Sorted event stream
        window: Inclusive (t_start, t_end); the whole stream when omitted

    Raises:
        DegenerateInputError: Empty window or a single distinct timestamp
    """
    if window is not None:
        t_start, t_end = window
        stream = stream.select((stream.t >= t_start) & (stream.t <= t_end))
    return _cloud_from_events(stream)


def sliding_windows(stream: EventStream, window_us: int) -> List[PointCloud]:
    """
    Cut a stream into back-to-back windows of ``window_us`` microseconds.

    Windows are half-open so every event lands in exactly one of them; a
    window with fewer than two distinct timestamps is skipped.
    """
    if window_us <= 0:
        raise DegenerateInputError(f"window length must be positive, got {window_us}")
    if len(stream) == 0:
        return []

    clouds = []
    start, last = int(stream.t[0]), int(stream.t[-1])
    while start <= last:
        part = stream.select((stream.t >= start) & (stream.t < start + window_us))
        if len(part) and part.t[0] != part.t[-1]:
            clouds.append(_cloud_from_events(part))
        start += window_us

    logger.debug("sliding_windows: %d events -> %d clouds", len(stream), len(clouds))
    return clouds


def normalize_unit_sphere(cloud: PointCloud) -> PointCloud:
    """Center on the centroid and scale so the farthest point has norm 1."""
    centered = cloud.points - cloud.points.mean(axis=0)
    radius = float(np.max(np.linalg.norm(centered, axis=1)))
    if radius > NORM_EPS:
        centered = centered / radius
    return PointCloud(centered, cloud.features)


# ============================================================================
# Sampling and grouping
# ============================================================================


def _squared_distances(points: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, anchors × points."""
    delta = anchors[:, None, :] - points[None, :, :]
    return np.sum(delta * delta, axis=-1)


def fps(cloud: PointCloud, m: int, start_index: int = 0) -> List[int]:
    """
    Farthest point sampling.

    Starts at ``start_index`` and repeatedly takes the point farthest from
    the selected set. Ties go to the lowest index; selected points never
    return, so duplicate coordinates are still sampled as distinct indices.
    """
    points = cloud.points
    n = len(points)
    if not 1 <= m <= n:
        raise DegenerateInputError(f"cannot sample {m} points from a cloud of {n}")
    if not 0 <= start_index < n:
        raise ShapeError(f"start index {start_index} out of range for {n} points")

    selected = [start_index]
    gaps = _squared_distances(points, points[start_index][None, :])[0]
    gaps[start_index] = -1.0
    for _ in range(m - 1):
        pick = int(np.argmax(gaps))
        selected.append(pick)
        gaps = np.minimum(gaps, _squared_distances(points, points[pick][None, :])[0])
        gaps[pick] = -1.0
    return selected


def knn_indices(cloud: PointCloud, centers: Sequence[int], k: int) -> np.ndarray:
    """N'×K indices of each center's nearest points, nearest first, itself included."""
    n = len(cloud)
    if not 1 <= k <= n:
        raise DegenerateInputError(f"cannot group {k} neighbors from a cloud of {n}")
    centers = np.asarray(centers, dtype=np.int64)
    if centers.size and (centers.min() < 0 or centers.max() >= n):
        raise ShapeError(f"center index out of range for {n} points")

    distances = _squared_distances(cloud.points, cloud.points[centers])
    return np.argsort(distances, axis=1, kind="stable")[:, :k]


def knn_group(cloud: PointCloud, centers: Sequence[int], k: int) -> np.ndarray:
    """
    Group the k nearest neighbors of every center.

    Returns:
        N'×K×3 coordinates relative to each group's center
    """
    index = knn_indices(cloud, centers, k)
    anchors = cloud.points[np.asarray(centers, dtype=np.int64)]
    return cloud.points[index] - anchors[:, None, :]


# ============================================================================
# Voxelization
# ============================================================================


def voxelize(
    cloud: PointCloud,
    resolution: Triple,
    range_min: Triple,
    range_max: Triple,
) -> VoxelGrid:
    """
    Bucket the points of a clipped box into voxels.

    Points outside the closed box are dropped; a point on the upper face
    joins the last voxel along that axis. Features of co-located points are
    averaged; a cloud without features averages its coordinates instead.

    Raises:
        DegenerateInputError: Bad resolution/range, or nothing left after clipping
    """
    resolution = _as_triple(resolution)
    range_min = _as_triple(range_min)
    range_max = _as_triple(range_max)
    if any(r <= 0 for r in resolution):
        raise DegenerateInputError(f"voxel resolution must be positive, got {resolution}")
    if any(lo >= hi for lo, hi in zip(range_min, range_max)):
        raise DegenerateInputError("range_min must be below range_max on every axis")

    points = cloud.points
    inside = np.all((points >= range_min) & (points <= range_max), axis=1)
    if not inside.any():
        raise DegenerateInputError("no points left after clipping to the voxel range")

    features = cloud.features if cloud.features is not None else points
    extent = np.asarray(_grid_extent(resolution, range_min, range_max))
    coords = np.floor((points[inside] - range_min) / np.asarray(resolution)).astype(np.int64)
    coords = np.clip(coords, 0, extent - 1)

    keys, inverse = np.unique(coords, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(keys), features.shape[1]))
    np.add.at(sums, inverse, features[inside])
    counts = np.bincount(inverse, minlength=len(keys)).astype(np.float64)
    means = sums / counts[:, None]

    occupied = {tuple(int(c) for c in key): means[i] for i, key in enumerate(keys)}
    logger.debug(
        "voxelize: %d of %d points into %d voxels (extent %s)",
        int(inside.sum()),
        len(points),
        len(occupied),
        tuple(extent),
    )
    return VoxelGrid(resolution, range_min, range_max, occupied)
