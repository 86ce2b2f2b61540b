"""Point-cloud container, file I/O and geometric preprocessing.

Clouds are held as ``(N, 3)`` float arrays.  Every operation here is a pure
function of its inputs (plus an explicit seed where randomness is involved)
and returns a new :class:`PointCloud`.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

FORMATS = ("xyz", "xyz_label", "off")

# relative gap below which two covariance eigenvalues are treated as equal
EIGEN_TIE_RTOL = 1e-9


class CloudError(ValueError):
    """Raised for malformed clouds, unreadable files and degenerate geometry."""


@dataclass
class PointCloud:
    points: np.ndarray
    normals: Optional[np.ndarray] = None
    part_labels: Optional[np.ndarray] = None
    category: Optional[str] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise CloudError("point coordinates must be finite")
        n = len(self.points)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != n:
                raise CloudError("normals and points differ in length")
        if self.part_labels is not None:
            self.part_labels = np.asarray(self.part_labels)
            if self.part_labels.shape != (n,):
                raise CloudError("part_labels and points differ in length")

    def __len__(self):
        return len(self.points)

    def subset(self, mask) -> "PointCloud":
        """Cloud restricted to ``mask`` (boolean mask or index array)."""
        return PointCloud(
            self.points[mask],
            None if self.normals is None else self.normals[mask],
            None if self.part_labels is None else self.part_labels[mask],
            self.category,
        )

    def transformed(self, rotation: np.ndarray) -> "PointCloud":
        rotation = np.asarray(rotation, dtype=np.float64)
        return PointCloud(
            self.points @ rotation.T,
            None if self.normals is None else self.normals @ rotation.T,
            None if self.part_labels is None else self.part_labels.copy(),
            self.category,
        )


@dataclass
class ReferenceFrame:
    """PCA frame: rows of ``axes`` are the principal directions."""

    origin: np.ndarray
    axes: np.ndarray
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # set when two eigenvalues coincide and the axis order is a convention
    unstable: bool = False

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.axes.T


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------


def load_cloud(path, format: str = "xyz_label") -> PointCloud:
    """Read a cloud from ``path``.

    ``xyz`` and ``xyz_label`` are whitespace-separated ASCII with one point per
    line (the latter with a trailing non-negative integer part label).  For
    ``off`` only the vertex block is read.
    """
    if format not in FORMATS:
        raise CloudError(f"unknown cloud format {format!r}")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CloudError(f"cannot read {path}: {exc}") from exc
    if format == "off":
        return _parse_off(text, path)

    ncols = 4 if format == "xyz_label" else 3
    points, labels = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != ncols:
            raise CloudError(f"{path}:{lineno}: expected {ncols} fields, got {len(fields)}")
        try:
            xyz = [float(v) for v in fields[:3]]
            if ncols == 4:
                label = int(fields[3])
                if label < 0:
                    raise ValueError("negative label")
                labels.append(label)
        except ValueError as exc:
            raise CloudError(f"{path}:{lineno}: malformed line ({exc})") from None
        if not all(np.isfinite(xyz)):
            raise CloudError(f"{path}:{lineno}: non-finite coordinate")
        points.append(xyz)
    if not points:
        raise CloudError(f"{path}: empty cloud")
    return PointCloud(np.array(points), part_labels=np.array(labels, dtype=np.int64) if ncols == 4 else None)


def _parse_off(text: str, path: Path) -> PointCloud:
    lines = [ln.split("#")[0].strip() for ln in text.splitlines()]
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not numbered:
        raise CloudError(f"{path}: empty cloud")
    lineno, head = numbered[0]
    rest = numbered[1:]
    if head.startswith("OFF"):
        head = head[3:].strip()
        if not head:
            if not rest:
                raise CloudError(f"{path}: missing OFF counts line")
            lineno, head = rest[0]
            rest = rest[1:]
    else:
        raise CloudError(f"{path}:{lineno}: missing OFF header")
    try:
        n_vertices = int(head.split()[0])
    except (ValueError, IndexError):
        raise CloudError(f"{path}:{lineno}: malformed OFF counts line") from None
    if n_vertices == 0:
        raise CloudError(f"{path}: empty cloud")
    if len(rest) < n_vertices:
        raise CloudError(f"{path}: expected {n_vertices} vertices, found {len(rest)}")
    points = []
    for lineno, line in rest[:n_vertices]:
        try:
            xyz = [float(v) for v in line.split()[:3]]
        except ValueError:
            raise CloudError(f"{path}:{lineno}: malformed vertex") from None
        if len(xyz) != 3:
            raise CloudError(f"{path}:{lineno}: malformed vertex")
        points.append(xyz)
    return PointCloud(np.array(points))


def format_cloud(cloud: PointCloud, format: str = "xyz_label", labels: Optional[Sequence] = None) -> str:
    """Serialize ``cloud``; ``labels`` overrides ``cloud.part_labels``."""
    if format not in FORMATS:
        raise CloudError(f"unknown cloud format {format!r}")
    pts = cloud.points
    if format == "off":
        body = "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist())
        return f"OFF\n{len(pts)} 0 0\n" + body
    if format == "xyz" and labels is None:
        return "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist())
    if labels is None:
        labels = cloud.part_labels
    if labels is None:
        raise CloudError("cloud has no labels to write")
    return "".join(f"{x!r} {y!r} {z!r} {lab}\n" for (x, y, z), lab in zip(pts.tolist(), list(labels)))


def save_cloud(cloud: PointCloud, path, format: str = "xyz_label", labels=None) -> None:
    Path(path).write_text(format_cloud(cloud, format, labels))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def _majority(labels) -> object:
    counts = Counter(labels.tolist())
    best = max(counts.values())
    return min(lab for lab, c in counts.items() if c == best)


def voxel_downsample(cloud: PointCloud, leaf: float) -> PointCloud:
    """One point per occupied voxel of edge ``leaf``, placed at the members' centroid.

    The grid is aligned to integer multiples of ``leaf`` so that downsampling an
    already downsampled cloud is a no-op.  Labels are fused by majority vote
    (ties go to the smallest label); normals are averaged and renormalized.
    """
    if not leaf > 0:
        raise CloudError(f"leaf must be positive, got {leaf}")
    if len(cloud) == 0:
        return cloud.subset(np.zeros(0, dtype=int))
    cells = np.floor(cloud.points / leaf).astype(np.int64)
    _, inverse, counts = np.unique(cells, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    n_cells = len(counts)
    points = np.zeros((n_cells, 3))
    np.add.at(points, inverse, cloud.points)
    points /= counts[:, None]

    normals = None
    if cloud.normals is not None:
        normals = np.zeros((n_cells, 3))
        np.add.at(normals, inverse, cloud.normals)
        norm = np.linalg.norm(normals, axis=1)
        # opposing normals cancel out; keep the first member's normal then
        first = np.zeros(n_cells, dtype=np.int64)
        first[inverse[::-1]] = np.arange(len(cloud))[::-1]
        bad = norm < 1e-12
        normals[bad] = cloud.normals[first[bad]]
        norm[bad] = 1.0
        normals /= norm[:, None]

    labels = None
    if cloud.part_labels is not None:
        order = np.argsort(inverse, kind="stable")
        bounds = np.concatenate([[0], np.cumsum(counts)])
        members = cloud.part_labels[order]
        labels = np.array(
            [_majority(members[bounds[i]:bounds[i + 1]]) for i in range(n_cells)],
            dtype=cloud.part_labels.dtype,
        )
    return PointCloud(points, normals, labels, cloud.category)


def estimate_normals(cloud: PointCloud, k: int = 10) -> PointCloud:
    """Per-point normals from a PCA plane fit over the ``k`` nearest neighbours.

    Normals point away from the cloud centroid.
    """
    if k < 3:
        raise CloudError(f"k must be at least 3, got {k}")
    if len(cloud) < k:
        raise CloudError(f"cloud has {len(cloud)} points, fewer than k={k}")
    pts = cloud.points
    _, idx = cKDTree(pts).query(pts, k=k)
    nbrs = pts[idx]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    outward = pts - pts.mean(axis=0)
    flip = np.einsum("ni,ni->n", normals, outward) < 0
    normals[flip] *= -1
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pts.copy(), normals, cloud.part_labels, cloud.category)


def pca_frame(cloud: PointCloud) -> ReferenceFrame:
    """Repeatable PCA reference frame of a cloud.

    Axes are ordered by descending variance.  Each axis gets the sign that
    makes ``sum(x * |x|)`` of the projected coordinates positive, which
    follows the heavier tail of the distribution.  A right-handed frame leaves
    only two signs free, so the axis with the weakest (relative) skew takes
    whatever sign right-handedness dictates; the third axis is always the
    cross product of the first two.  Mirror-symmetric objects such as tables
    thereby keep a consistent "up" even though their long axes are ambiguous.
    """
    pts = cloud.points
    if len(pts) < 3:
        raise CloudError("degenerate frame: fewer than 3 points")
    origin = pts.mean(axis=0)
    centered = pts - origin
    cov = centered.T @ centered / len(pts)
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    scale = max(vals[0], np.finfo(float).tiny)
    if vals[1] <= 1e-12 * scale:
        raise CloudError("degenerate frame: points are collinear or coincident")

    unstable = bool(
        (vals[0] - vals[1]) <= EIGEN_TIE_RTOL * scale or (vals[1] - vals[2]) <= EIGEN_TIE_RTOL * scale
    )
    axes = vecs.T.copy()
    proj = centered @ axes.T
    skew = np.sum(proj * np.abs(proj), axis=0)
    rel = np.abs(skew) / np.maximum(np.sum(proj * proj, axis=0), np.finfo(float).tiny)
    weakest = int(np.argmin(rel))
    for i in range(3):
        if i == weakest:
            continue
        if rel[i] <= 1e-12:
            # symmetric along this axis too: fall back to a fixed component convention
            unstable = True
            skew[i] = axes[i][np.argmax(np.abs(axes[i]))]
        if skew[i] < 0:
            axes[i] = -axes[i]
    if weakest == 2:
        axes[2] = np.cross(axes[0], axes[1])
    else:
        # choose the free sign among the first two so that their cross product
        # matches the already oriented third axis
        target = axes[2].copy()
        axes[2] = np.cross(axes[0], axes[1])
        if axes[2] @ target < 0:
            axes[weakest] = -axes[weakest]
            axes[2] = np.cross(axes[0], axes[1])
    axes[2] /= np.linalg.norm(axes[2])
    return ReferenceFrame(origin, axes, vals, unstable)


def uniform_rotation_matrix(rng: np.random.Generator) -> np.ndarray:
    """Rotation drawn uniformly from SO(3) via a uniform unit quaternion."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    w, x = a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2)
    y, z = b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(cloud: PointCloud, seed: int) -> PointCloud:
    return cloud.transformed(uniform_rotation_matrix(np.random.default_rng(seed)))


def occlusion_cut_range(x: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(x)), float(np.max(x))
    quarter = (hi - lo) / 4.0
    return lo + quarter, hi - quarter


def occlude(cloud: PointCloud, seed: int) -> PointCloud:
    """Rotate randomly, then drop every point left of a random x-cut.

    The cut is uniform over the middle half of the rotated x-extent, so at
    least the right quarter of the extent always survives.
    """
    if len(cloud) == 0:
        raise CloudError("cannot occlude an empty cloud")
    rng = np.random.default_rng(seed)
    rotated = cloud.transformed(uniform_rotation_matrix(rng))
    lo, hi = occlusion_cut_range(rotated.points[:, 0])
    cut = rng.uniform(lo, hi) if hi > lo else lo
    return rotated.subset(~(rotated.points[:, 0] < cut))
