"""Procedural part-annotated objects for tests and small experiments.

Three categories with two parts each: mug (body, handle), table (top, leg)
and airplane (fuselage, wing).  Points are sampled area-uniformly on the
surfaces; every object is centred and scaled into the unit sphere, like the
ShapeNet-part clouds.
"""

from __future__ import annotations

import numpy as np

from .descriptors import DescriptorConfig
from .localhdp import HdpHyperparams
from .pointcloud import PointCloud

CATEGORY_PARTS = {
    "mug": ("body", "handle"),
    "table": ("top", "leg"),
    "airplane": ("fuselage", "wing"),
}


def _box_area(size):
    sx, sy, sz = size
    return 2 * (sx * sy + sy * sz + sx * sz)


def _sample_box(rng, n, center, size):
    sx, sy, sz = size
    faces = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
    face = rng.choice(6, size=n, p=faces / faces.sum())
    uv = rng.random((n, 3)) - 0.5
    pts = uv * np.array(size)
    axis = face // 2
    sign = np.where(face % 2 == 0, -0.5, 0.5)
    pts[np.arange(n), axis] = sign * np.array(size)[axis]
    return pts + np.asarray(center)


def _sample_cylinder(rng, n, radius, length, axis=2, caps=(True, True)):
    side = 2 * np.pi * radius * length
    cap = np.pi * radius ** 2
    areas = np.array([side, cap * caps[0], cap * caps[1]])
    which = rng.choice(3, size=n, p=areas / areas.sum())
    theta = rng.uniform(0, 2 * np.pi, n)
    r = np.where(which == 0, radius, radius * np.sqrt(rng.random(n)))
    h = np.where(which == 0, rng.uniform(0, length, n), np.where(which == 1, 0.0, length))
    local = np.stack([r * np.cos(theta), r * np.sin(theta), h], axis=1)
    order = {0: [2, 0, 1], 1: [1, 2, 0], 2: [0, 1, 2]}[axis]
    return local[:, order]


def _allocate(rng, n, areas):
    areas = np.asarray(areas, dtype=float)
    return rng.multinomial(n, areas / areas.sum())


def _finish(rng, pieces, category, n_points, jitter):
    pts = np.concatenate([p for p, _ in pieces])
    labels = np.concatenate([np.full(len(p), lab) for p, lab in pieces]).astype(str)
    pts = pts + rng.normal(0.0, jitter, pts.shape)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pts = pts - (lo + hi) / 2
    pts /= np.linalg.norm(pts, axis=1).max()
    perm = rng.permutation(len(pts))
    return PointCloud(pts[perm], part_labels=labels[perm], category=category)


def make_mug(rng: np.random.Generator, n_points: int = 1024, jitter: float = 0.002) -> PointCloud:
    # tall enough that the cylinder axis stays the dominant principal axis
    r = rng.uniform(0.28, 0.34)
    h = rng.uniform(1.0, 1.2)
    ring = rng.uniform(0.22, 0.28) * h  # handle centre-line radius
    tube = rng.uniform(0.04, 0.055)
    body_area = 2 * np.pi * r * h + np.pi * r * r
    handle_area = 2 * np.pi * tube * np.pi * ring
    n_body, n_handle = _allocate(rng, n_points, [body_area, handle_area])
    body = _sample_cylinder(rng, n_body, r, h, axis=2, caps=(True, False))
    theta = rng.uniform(-np.pi / 2, np.pi / 2, n_handle)
    phi = rng.uniform(0, 2 * np.pi, n_handle)
    cx = r + ring * np.cos(theta)
    cz = h / 2 + ring * np.sin(theta)
    handle = np.stack([
        cx + tube * np.cos(phi) * np.cos(theta),
        tube * np.sin(phi),
        cz + tube * np.cos(phi) * np.sin(theta),
    ], axis=1)
    return _finish(rng, [(body, "body"), (handle, "handle")], "mug", n_points, jitter)


def make_table(rng: np.random.Generator, n_points: int = 1024, jitter: float = 0.002) -> PointCloud:
    w = rng.uniform(1.2, 1.6)
    d = rng.uniform(0.7, 1.0)
    H = rng.uniform(0.6, 0.8)
    t = rng.uniform(0.04, 0.07)
    s = rng.uniform(0.07, 0.1)
    inset = rng.uniform(0.05, 0.12)
    top_size = (w, d, t)
    leg_size = (s, s, H - t)
    areas = [_box_area(top_size)] + [_box_area(leg_size)] * 4
    counts = _allocate(rng, n_points, areas)
    pieces = [(_sample_box(rng, counts[0], (0, 0, H - t / 2), top_size), "top")]
    corners = [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    for n, (sx, sy) in zip(counts[1:], corners):
        c = (sx * (w / 2 - inset - s / 2), sy * (d / 2 - inset - s / 2), (H - t) / 2)
        pieces.append((_sample_box(rng, n, c, leg_size), "leg"))
    return _finish(rng, pieces, "table", n_points, jitter)


def make_airplane(rng: np.random.Generator, n_points: int = 1024, jitter: float = 0.002) -> PointCloud:
    L = rng.uniform(2.0, 2.4)
    rf = rng.uniform(0.1, 0.14)
    span = rng.uniform(0.6, 0.8)  # one wing
    chord = rng.uniform(0.3, 0.4)
    thick = rng.uniform(0.025, 0.04)
    wing_x = rng.uniform(0.4, 0.5) * L
    fin = (rng.uniform(0.2, 0.28), 0.03, rng.uniform(0.25, 0.35))
    fus_area = 2 * np.pi * rf * L + 2 * np.pi * rf * rf + _box_area(fin)
    wing_size = (chord, span, thick)
    counts = _allocate(rng, n_points, [fus_area, _box_area(wing_size), _box_area(wing_size)])
    n_fin = int(round(counts[0] * _box_area(fin) / fus_area))
    body = _sample_cylinder(rng, counts[0] - n_fin, rf, L, axis=0)
    tail = _sample_box(rng, n_fin, (fin[0] / 2 + 0.02, 0, rf + fin[2] / 2), fin)
    pieces = [(np.concatenate([body, tail]), "fuselage")]
    for n, side in zip(counts[1:], (-1, 1)):
        c = (wing_x, side * (rf + span / 2), 0.0)
        pieces.append((_sample_box(rng, n, c, wing_size), "wing"))
    return _finish(rng, pieces, "airplane", n_points, jitter)


MAKERS = {"mug": make_mug, "table": make_table, "airplane": make_airplane}


def make_dataset(per_category: int = 30, seed: int = 0, n_points: int = 1024, categories=None) -> list[PointCloud]:
    """``per_category`` objects of each category, interleaved category by category."""
    categories = list(categories or MAKERS)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(per_category):
        for cat in categories:
            out.append(MAKERS[cat](rng, n_points))
    return out


def synthetic_settings() -> tuple[DescriptorConfig, HdpHyperparams]:
    """Descriptor and model settings tuned for the synthetic objects.

    The library defaults follow common online-HDP practice; on these small,
    dense documents (thousands of tokens each) they leave every part with a
    handful of topics.  A stronger top-level concentration and a flatter topic
    prior keep more topics alive, and since per-document bounds are of order
    -1e4 an absolute tolerance of 1 nat is already a relative change of 1e-4.
    Objects live in the unit sphere, so a fixed spin radius of 2 covers every
    point of every object, and removing points (occlusion) only removes
    counts from a keypoint's spin image instead of rescaling its bins.
    """
    return (DescriptorConfig(leaf=0.1, spin_radius=2.0),
            HdpHyperparams(gamma=5.0, eta=0.5, max_iters=30, tol=1.0))


def occlusion_settings() -> tuple[DescriptorConfig, HdpHyperparams, float]:
    """Settings for the occlusion study on the synthetic objects: (descriptor, hdp, min_fraction).

    Occluded clouds are segmented from spin-image words alone, so the part
    models are trained on spin-only documents as well.  A spin radius smaller
    than the objects keeps each spin image local, and a part must cover 30%
    of an object's keypoints to count as a symbol for recognition: a cut
    leaves stray mislabelled keypoints, which would otherwise trigger
    arguments of the wrong category.
    """
    descriptor, hdp = synthetic_settings()
    return (DescriptorConfig(leaf=descriptor.leaf, n_spin=8, spin_radius=0.5, spin_only=True), hdp, 0.3)
