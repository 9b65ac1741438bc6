"""Fixed-resolution voxel grids over feature point sets.

Each occupied voxel stores the mean vector of the largest semantic cluster of
its contained points; a boolean visibility map marks occupancy, and only
visible voxels emit visual tokens. Clustering is connected components of the
mutual k-nearest-neighbor graph built on the semantic block of each point
vector (the trailing 3 entries are normalized coordinates and are excluded
from distances: points sharing a voxel are already spatially co-located, so
the graph separates points by what they are, not where they sit).

Determinism rules, pinned so independent implementations agree bit-exactly:
the neighbor set includes every point tied at the k-th smallest distance (so
identical points always form one component, with no arbitrary tie choice),
the largest-cluster tie breaks toward the smallest member index, and cluster
means use correctly-rounded per-column summation (math.fsum) over members in
ascending point-index order, which makes the feature bits independent of
input point order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInputError, OutOfBoundsError


@dataclass(frozen=True)
class GridLayout:
    origin: np.ndarray  # 3-vector, componentwise multiple of resolution
    resolution: float  # voxel edge length in meters
    dims: tuple[int, int, int]

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError(f"resolution must be positive, got {self.resolution}")
        if any(d < 1 for d in self.dims):
            raise ConfigError(f"grid dims must be >= 1, got {self.dims}")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def box_min(self) -> np.ndarray:
        return self.origin

    @property
    def box_max(self) -> np.ndarray:
        return self.origin + np.array(self.dims, dtype=np.float64) * self.resolution

    @property
    def n_voxels(self) -> int:
        x, y, z = self.dims
        return x * y * z


@dataclass(frozen=True)
class VoxelClusterConfig:
    k: int = 5
    metric: str = "euclidean"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.metric != "euclidean":
            raise ConfigError(f"unsupported metric {self.metric!r}")


@dataclass(frozen=True)
class VoxelGrid:
    layout: GridLayout
    features: np.ndarray  # X x Y x Z x (D+3); zero rows where invisible
    visibility: np.ndarray  # X x Y x Z bool

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        vis = np.asarray(self.visibility, dtype=bool)
        if feats.shape[:3] != self.layout.dims or vis.shape != self.layout.dims:
            raise ConfigError("grid array shapes do not match layout dims")
        if vis.any() and not np.all(np.isfinite(feats[vis])):
            raise ConfigError("visible voxel features must be finite")
        if (~vis).any() and np.any(feats[~vis]):
            raise ConfigError("invisible voxels must store exact zero features")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "visibility", vis)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[3]

    @property
    def n_visible(self) -> int:
        return int(self.visibility.sum())


def grid_layout(points: np.ndarray, resolution: float, explicit_bounds=None) -> GridLayout:
    """Lay out a grid of half-open voxels [origin + i*r, origin + (i+1)*r).

    The origin snaps down to a multiple of the resolution. With auto bounds the
    dims are floor((max - origin)/r) + 1 per axis, which matches
    ceil((max - origin)/r) except when the span is an exact multiple of r;
    the extra voxel there keeps the max point inside the half-open range.
    """
    if resolution <= 0:
        raise ConfigError(f"resolution must be positive, got {resolution}")
    r = float(resolution)
    if explicit_bounds is not None:
        box_min = np.asarray(explicit_bounds[0], dtype=np.float64).reshape(3)
        box_max = np.asarray(explicit_bounds[1], dtype=np.float64).reshape(3)
        if np.any(box_max < box_min):
            raise ConfigError("explicit bounds have max < min")
        origin = np.floor(box_min / r) * r
        dims = np.maximum(np.ceil((box_max - origin) / r).astype(np.int64), 1)
        return GridLayout(origin, r, tuple(dims))
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise EmptyInputError("grid_layout needs points or explicit bounds")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    origin = np.floor(lo / r) * r
    dims = np.floor((hi - origin) / r).astype(np.int64) + 1
    return GridLayout(origin, r, tuple(dims))


def assign_voxels(points: np.ndarray, layout: GridLayout) -> np.ndarray:
    """Map each point to its voxel index triple: floor((p - origin)/r) per axis.

    Raises OutOfBoundsError listing offending point indices when a point lands
    outside the grid.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    idx = np.floor((pts - layout.origin) / layout.resolution).astype(np.int64)
    dims = np.array(layout.dims, dtype=np.int64)
    bad = np.nonzero(np.any((idx < 0) | (idx >= dims), axis=1))[0]
    if bad.size:
        head = ", ".join(str(i) for i in bad[:10])
        more = f" (+{bad.size - 10} more)" if bad.size > 10 else ""
        raise OutOfBoundsError(
            f"{bad.size} points outside grid bounds; offending indices: {head}{more}",
            offenders=bad.tolist(),
        )
    return idx


def semantic_block(vectors: np.ndarray) -> np.ndarray:
    """The feature part of (D+3) point vectors: everything but the trailing coords."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[1] < 4:
        raise ConfigError(f"point vectors must be N x (D+3) with D >= 1, got {vectors.shape}")
    return vectors[:, :-3]


def cluster_voxel(point_vectors: np.ndarray, cfg: VoxelClusterConfig) -> list[list[int]]:
    """Cluster one voxel's points: connected components of the mutual-kNN graph.

    Distances are Euclidean over the semantic block only. With M points the
    effective neighbor count is min(k, M-1), and the neighbor set includes
    every point tied at the k-th smallest distance, so coincident points never
    fragment. Components come back sorted by (size desc, smallest member asc),
    members ascending.
    """
    vectors = np.asarray(point_vectors, dtype=np.float64)
    m = vectors.shape[0]
    if m == 0:
        raise EmptyInputError("cluster_voxel needs at least one point")
    if m == 1:
        return [[0]]
    feats = semantic_block(vectors)
    k = min(cfg.k, m - 1)
    # Squared distances preserve the ranking; full matrix is fine at voxel scale.
    sq = np.sum(feats * feats, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (feats @ feats.T)
    np.fill_diagonal(d2, np.inf)
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
    neighbors = d2 <= kth[:, None]  # diagonal is inf, never a neighbor
    mutual = neighbors & neighbors.T
    seen = np.zeros(m, dtype=bool)
    components: list[list[int]] = []
    for start in range(m):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            node = stack.pop()
            comp.append(node)
            for nb in np.nonzero(mutual[node] & ~seen)[0]:
                seen[nb] = True
                stack.append(int(nb))
        components.append(sorted(comp))
    components.sort(key=lambda c: (-len(c), c[0]))
    return components


def exact_mean(rows: np.ndarray) -> np.ndarray:
    """Correctly-rounded column means (fsum): bits independent of row order."""
    rows = np.asarray(rows, dtype=np.float64)
    n = rows.shape[0]
    return np.array([math.fsum(rows[:, j]) for j in range(rows.shape[1])]) / n


def _voxel_feature(vectors: np.ndarray, members: np.ndarray, cfg: VoxelClusterConfig) -> np.ndarray:
    clusters = cluster_voxel(vectors[members], cfg)
    largest = members[clusters[0]]  # members is index-sorted, clusters ascend
    return exact_mean(vectors[largest])


def voxelize(
    positions: np.ndarray,
    vectors: np.ndarray,
    layout: GridLayout,
    cfg: VoxelClusterConfig,
    out_of_bounds: str = "error",
    n_threads: int = 1,
) -> VoxelGrid:
    """Build the feature grid: per occupied voxel, mean of the largest cluster.

    `out_of_bounds` is "error" (raise, listing offenders) or "drop" (ignore
    points outside the layout; used when fusing frames into a frozen scene
    grid). Voxels never touched stay exactly zero with visibility 0.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[0] != positions.shape[0]:
        raise ConfigError("positions and point vectors disagree on count")
    if out_of_bounds not in ("error", "drop"):
        raise ConfigError(f"out_of_bounds must be 'error' or 'drop', got {out_of_bounds!r}")
    n = positions.shape[0]
    dims = layout.dims
    feat_dim = vectors.shape[1] if n else 4
    features = np.zeros(dims + (feat_dim,), dtype=np.float64)
    visibility = np.zeros(dims, dtype=bool)
    if n == 0:
        return VoxelGrid(layout, features, visibility)

    if out_of_bounds == "drop":
        idx_raw = np.floor((positions - layout.origin) / layout.resolution).astype(np.int64)
        keep = np.all((idx_raw >= 0) & (idx_raw < np.array(dims)), axis=1)
        kept_ids = np.nonzero(keep)[0]
        idx = idx_raw[keep]
    else:
        kept_ids = np.arange(n)
        idx = assign_voxels(positions, layout)
    if kept_ids.size == 0:
        return VoxelGrid(layout, features, visibility)

    flat = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]
    order = np.argsort(flat, kind="stable")  # stable: members stay index-ascending
    flat_sorted = flat[order]
    ids_sorted = kept_ids[order]
    boundaries = np.nonzero(np.diff(flat_sorted))[0] + 1
    groups = np.split(np.arange(ids_sorted.size), boundaries)
    group_flats = flat_sorted[np.concatenate([[0], boundaries])]

    def fill(gi: int) -> tuple[int, np.ndarray]:
        members = ids_sorted[groups[gi]]
        return int(group_flats[gi]), _voxel_feature(vectors, members, cfg)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(fill, range(len(groups))))
    else:
        results = [fill(gi) for gi in range(len(groups))]
    flat_features = features.reshape(-1, feat_dim)
    flat_vis = visibility.reshape(-1)
    for f, vec in results:
        flat_features[f] = vec
        flat_vis[f] = True
    return VoxelGrid(layout, features, visibility)


def count_outside_layout(positions: np.ndarray, layout: GridLayout) -> int:
    """How many points fall outside the layout's half-open voxel range."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if positions.shape[0] == 0:
        return 0
    idx = np.floor((positions - layout.origin) / layout.resolution).astype(np.int64)
    keep = np.all((idx >= 0) & (idx < np.array(layout.dims)), axis=1)
    return int(positions.shape[0] - keep.sum())


def emit_tokens(grid: VoxelGrid) -> list[tuple[tuple[int, int, int], np.ndarray]]:
    """One (voxel index triple, feature vector) per visible voxel, lexicographic."""
    coords = np.argwhere(grid.visibility)  # argwhere is already lexicographic
    return [
        (tuple(int(c) for c in coord), grid.features[tuple(coord)].copy())
        for coord in coords
    ]


def token_matrix(grid: VoxelGrid) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized emit_tokens: (K x 3 voxel indices, K x (D+3) features)."""
    coords = np.argwhere(grid.visibility)
    return coords, grid.features[grid.visibility]
