"""Per-keypoint shape descriptors and their bag-of-words documents.

Two descriptor families describe each keypoint:

* a local-to-global spin image binned in (radial distance, signed height)
  around the normal.  By default its support radius reaches every point of
  the object; ``spin_radius`` fixes it instead;
* a global-to-local "pinpoint" descriptor: the cloud is projected onto the
  three planes of its PCA frame and every point adds ``((l - d) / l)**2`` to
  its bin, ``d`` being its 3D distance to the keypoint.

Every bin of both descriptors is one vocabulary word, so no dictionary has to
be learned.  Spin words come first (row-major), then the three projection
planes (plane-major, row-major).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .pointcloud import PointCloud, ReferenceFrame, estimate_normals, pca_frame, voxel_downsample

PLANES = ("XoY", "XoZ", "YoZ")
_PLANE_AXES = {"XoY": (0, 1), "XoZ": (0, 2), "YoZ": (1, 2)}


class DescriptorError(ValueError):
    pass


@dataclass
class DescriptorConfig:
    """Knobs shared by every document of one experiment."""

    n_spin: int = 8
    n_proj: int = 5
    # epsilon as a fraction of the support length l
    eps_frac: float = 0.015
    scale: float = 10.0
    leaf: float = 0.05
    k_normals: int = 10
    spin_only: bool = False
    # fixed spin-image support; None uses each keypoint's farthest point
    spin_radius: Optional[float] = None

    def __post_init__(self):
        if self.n_spin < 1 or self.n_proj < 1:
            raise DescriptorError("bin counts must be positive")
        if not self.eps_frac > 0:
            raise DescriptorError("eps_frac must be positive")
        if not self.scale > 0:
            raise DescriptorError("scale must be positive")
        if not self.leaf > 0:
            raise DescriptorError("leaf must be positive")
        if self.k_normals < 3:
            raise DescriptorError("k_normals must be at least 3")
        if self.spin_radius is not None and not self.spin_radius > 0:
            raise DescriptorError("spin_radius must be positive")

    @property
    def spin_vocab(self) -> int:
        return self.n_spin ** 2

    @property
    def vocab_size(self) -> int:
        return vocabulary_size(self.n_spin, self.n_proj, self.spin_only)


def vocabulary_size(n_spin: int, n_proj: int, spin_only: bool = False) -> int:
    return n_spin ** 2 if spin_only else n_spin ** 2 + 3 * n_proj ** 2


@dataclass
class SpinImage:
    bins: np.ndarray
    support_radius: float
    keypoint_index: int


@dataclass
class ProjectionDescriptor:
    planes: np.ndarray  # (3, n, n) in PLANES order
    support_length: float
    bin_count: int
    epsilon: float


@dataclass
class PointDocument:
    """Sparse word counts of one keypoint; ``ids`` are sorted and unique."""

    ids: np.ndarray
    counts: np.ndarray
    vocab_size: int

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.ids.shape != self.counts.shape:
            raise DescriptorError("ids and counts differ in length")
        if len(self.ids) and (self.ids.min() < 0 or np.any(np.diff(self.ids) <= 0)):
            raise DescriptorError("word ids must be sorted, unique and non-negative")
        if np.any(self.counts < 1):
            raise DescriptorError("word counts must be positive")

    def __len__(self):
        return int(self.counts.sum())

    def dense(self, vocab_size: Optional[int] = None) -> np.ndarray:
        out = np.zeros(vocab_size or self.vocab_size)
        out[self.ids] = self.counts
        return out

    def to_line(self, doc_id) -> str:
        words = " ".join(f"{w}:{c}" for w, c in zip(self.ids.tolist(), self.counts.tolist()))
        return f"{doc_id} {words}".rstrip()

    @classmethod
    def from_line(cls, line: str, vocab_size: int) -> tuple[str, "PointDocument"]:
        head, *pairs = line.split()
        ids, counts = [], []
        for pair in pairs:
            w, c = pair.split(":")
            ids.append(int(w))
            counts.append(int(c))
        return head, cls(np.array(ids, dtype=np.int64), np.array(counts, dtype=np.int64), vocab_size)


# ---------------------------------------------------------------------------
# spin image
# ---------------------------------------------------------------------------


def _spin_indices(alpha, beta, n_s, radius):
    row = np.floor((radius - beta) * n_s / (2.0 * radius)).astype(np.int64)
    col = np.floor(alpha * n_s / radius).astype(np.int64)
    return np.clip(row, 0, n_s - 1), np.clip(col, 0, n_s - 1)


def spin_image(cloud: PointCloud, keypoint: int, n_s: int, radius: float) -> SpinImage:
    """Spin image of point ``keypoint`` over the whole cloud (keypoint included)."""
    if cloud.normals is None:
        raise DescriptorError("spin images need normals")
    if not 0 <= keypoint < len(cloud):
        raise DescriptorError(f"keypoint {keypoint} out of range")
    if not radius > 0:
        raise DescriptorError("radius must be positive")
    p = cloud.points[keypoint]
    m = cloud.normals[keypoint]
    diff = cloud.points - p
    beta = diff @ m
    alpha = np.sqrt(np.maximum(np.einsum("ij,ij->i", diff, diff) - beta * beta, 0.0))
    keep = (alpha <= radius) & (np.abs(beta) <= radius)
    row, col = _spin_indices(alpha[keep], beta[keep], n_s, radius)
    bins = np.zeros((n_s, n_s))
    np.add.at(bins, (row, col), 1.0)
    return SpinImage(bins, float(radius), int(keypoint))


# ---------------------------------------------------------------------------
# projection ("pinpoint") descriptor
# ---------------------------------------------------------------------------


def project_point(p, frame: ReferenceFrame, plane: str) -> tuple[float, float]:
    if plane not in _PLANE_AXES:
        raise DescriptorError(f"unknown plane {plane!r}")
    local = frame.to_local(np.asarray(p, dtype=np.float64).reshape(1, 3))[0]
    i, j = _PLANE_AXES[plane]
    return float(local[i]), float(local[j])


def _check_support(alpha, beta, l):
    half = l / 2.0
    slack = 1e-9 * max(l, 1.0)
    if np.any(np.abs(alpha) > half + slack) or np.any(np.abs(beta) > half + slack):
        raise DescriptorError("coordinate outside the support length; choose l to cover the cloud")


def _bin_rc(alpha, beta, l, n, eps):
    width = (l + eps) / n
    r = np.floor((alpha + l / 2) / width).astype(np.int64)
    c = np.floor((beta + l / 2) / width).astype(np.int64)
    return r, c


def bin_index(alpha: float, beta: float, l: float, n: int, eps: float) -> tuple[int, int]:
    """Row/column of a projected point on an ``n x n`` grid of support ``l``."""
    if not l > 0 or not eps > 0 or n < 1:
        raise DescriptorError("need l > 0, eps > 0 and n >= 1")
    _check_support(alpha, beta, l)
    r, c = _bin_rc(np.float64(alpha), np.float64(beta), l, n, eps)
    # slack from _check_support can only push a point onto the border
    return int(np.clip(r, 0, n - 1)), int(np.clip(c, 0, n - 1))


def bin_indices(alpha, beta, l: float, n: int, eps: float):
    """Vectorized :func:`bin_index`."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    _check_support(alpha, beta, l)
    r, c = _bin_rc(alpha, beta, l, n, eps)
    return np.clip(r, 0, n - 1), np.clip(c, 0, n - 1)


def proximity_weight(d, l: float):
    """Distance weight ``max(0, (l - d) / l) ** 2`` of a point at distance ``d``."""
    w = np.maximum(0.0, (l - np.asarray(d, dtype=np.float64)) / l)
    return w * w


def support_length(local: np.ndarray) -> float:
    """Smallest centred support that covers all frame coordinates."""
    l = 2.0 * float(np.max(np.abs(local)))
    if not l > 0:
        raise DescriptorError("cloud has zero extent")
    return l


def pinpoint_descriptor(cloud: PointCloud, keypoint: int, frame: ReferenceFrame, n: int,
                        eps: Optional[float] = None, l: Optional[float] = None) -> ProjectionDescriptor:
    """Projection descriptor that pinpoints ``keypoint`` on the three PCA planes.

    ``l`` defaults to the support covering the cloud and ``eps`` to ``0.015 * l``.
    """
    if len(cloud) == 0:
        raise DescriptorError("empty cloud")
    if not 0 <= keypoint < len(cloud):
        raise DescriptorError(f"keypoint {keypoint} out of range")
    local = frame.to_local(cloud.points)
    if l is None:
        l = support_length(local)
    if eps is None:
        eps = 0.015 * l
    d = np.linalg.norm(cloud.points - cloud.points[keypoint], axis=1)
    weight = proximity_weight(d, l)
    planes = np.zeros((3, n, n))
    for k, name in enumerate(PLANES):
        i, j = _PLANE_AXES[name]
        r, c = bin_indices(local[:, i], local[:, j], l, n, eps)
        np.add.at(planes[k], (r, c), weight)
    return ProjectionDescriptor(planes, float(l), int(n), float(eps))


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------


def make_document(spin: SpinImage, proj: Optional[ProjectionDescriptor], scale: float = 10.0,
                  spin_only: bool = False) -> PointDocument:
    """Bag-of-words document of one keypoint.

    ``count(w) = round(scale * bin_value(w))``; zero counts are dropped.  With
    ``spin_only`` the projection words are omitted and the vocabulary shrinks
    to the spin bins (which keep their ids).
    """
    n_s = spin.bins.shape[0]
    if spin.bins.shape != (n_s, n_s):
        raise DescriptorError("spin image must be square")
    if spin_only:
        values = spin.bins.reshape(-1)
        vocab = n_s * n_s
    else:
        if proj is None:
            raise DescriptorError("projection descriptor required unless spin_only")
        n = proj.bin_count
        if proj.planes.shape != (3, n, n):
            raise DescriptorError("projection planes must be (3, n, n)")
        values = np.concatenate([spin.bins.reshape(-1), proj.planes.reshape(-1)])
        vocab = vocabulary_size(n_s, n)
    return _document_from_values(values, scale, vocab)


def _document_from_values(values: np.ndarray, scale: float, vocab: int) -> PointDocument:
    counts = np.rint(scale * values).astype(np.int64)
    ids = np.flatnonzero(counts > 0)
    return PointDocument(ids, counts[ids], vocab)


@dataclass
class PreparedObject:
    """Downsampled keypoints of one object together with their documents."""

    keypoints: PointCloud
    frame: ReferenceFrame
    counts: np.ndarray  # (n_keypoints, vocab) dense word counts
    vocab_size: int

    def documents(self) -> list[PointDocument]:
        docs = []
        for row in self.counts:
            ids = np.flatnonzero(row)
            docs.append(PointDocument(ids, row[ids].astype(np.int64), self.vocab_size))
        return docs


def descriptor_values(cloud: PointCloud, frame: ReferenceFrame, n_s: int, n: int,
                      eps_frac: float = 0.015, spin_only: bool = False,
                      spin_radius: Optional[float] = None) -> np.ndarray:
    """Descriptor values of every point of ``cloud`` at once, shape ``(N, V)``.

    Row ``i`` equals the concatenation produced by :func:`spin_image` and
    :func:`pinpoint_descriptor` for keypoint ``i``.  The spin radius is
    ``spin_radius`` when given, otherwise the distance from the keypoint to
    its farthest point (local-to-global support).
    """
    if cloud.normals is None:
        raise DescriptorError("spin images need normals")
    pts, nrm = cloud.points, cloud.normals
    N = len(pts)
    diff = pts[None, :, :] - pts[:, None, :]  # (keypoint, point, 3)
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    dist = np.sqrt(dist2)
    beta = np.einsum("ijk,ik->ij", diff, nrm)
    alpha = np.sqrt(np.maximum(dist2 - beta * beta, 0.0))
    if spin_radius is None:
        radius = dist.max(axis=1)
        radius[radius <= 0] = 1.0
    else:
        radius = np.full(N, float(spin_radius))
    rad = radius[:, None]
    keep = (alpha <= rad) & (np.abs(beta) <= rad)
    row, col = _spin_indices(alpha, beta, n_s, rad)
    spin_flat = row * n_s + col + (np.arange(N) * n_s * n_s)[:, None]
    spin = np.bincount(spin_flat[keep], minlength=N * n_s * n_s).reshape(N, n_s * n_s).astype(np.float64)
    if spin_only:
        return spin

    local = frame.to_local(pts)
    l = support_length(local)
    eps = eps_frac * l
    weight = proximity_weight(dist, l)  # symmetric in keypoint/point
    blocks = [spin]
    for name in PLANES:
        i, j = _PLANE_AXES[name]
        r, c = bin_indices(local[:, i], local[:, j], l, n, eps)
        onehot = np.zeros((N, n * n))
        onehot[np.arange(N), r * n + c] = 1.0
        blocks.append(weight @ onehot)
    return np.concatenate(blocks, axis=1)


def prepare_object(cloud: PointCloud, config: DescriptorConfig, spin_only: Optional[bool] = None) -> PreparedObject:
    """Downsample, estimate normals and frame, and build one document per keypoint."""
    spin_only = config.spin_only if spin_only is None else spin_only
    keypoints = voxel_downsample(cloud, config.leaf)
    if len(keypoints) < config.k_normals:
        raise DescriptorError(
            f"only {len(keypoints)} keypoints after downsampling; need at least k_normals={config.k_normals}")
    keypoints = estimate_normals(keypoints, config.k_normals)
    frame = pca_frame(keypoints)
    values = descriptor_values(keypoints, frame, config.n_spin, config.n_proj, config.eps_frac, spin_only,
                               config.spin_radius)
    counts = np.rint(config.scale * values).astype(np.int64)
    vocab = vocabulary_size(config.n_spin, config.n_proj, spin_only)
    return PreparedObject(keypoints, frame, counts, vocab)


def write_documents(docs: Iterable[PointDocument], path, ids: Optional[Iterable] = None) -> None:
    docs = list(docs)
    ids = range(len(docs)) if ids is None else ids
    with open(path, "w") as fh:
        for doc_id, doc in zip(ids, docs):
            fh.write(doc.to_line(doc_id) + "\n")


def read_documents(path, vocab_size: int) -> list[tuple[str, PointDocument]]:
    with open(path) as fh:
        return [PointDocument.from_line(line, vocab_size) for line in fh if line.strip()]
