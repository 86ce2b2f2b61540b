"""Evaluation drivers: part-wise mIoU, the simulated teacher and the occlusion study.

The teacher works with any *learner* exposing

* ``teach(cloud, part)``: learn ``part`` from the annotated points of ``cloud``;
* ``correct(cloud, parts)``: feedback on a mis-segmented object, restricted to
  the already learned ``parts``;
* ``segment(cloud, parts) -> (pred, gt)``: per-keypoint predictions among
  ``parts`` plus the matching ground truth.

:class:`HdpLearner` adapts a :class:`~partseg.localhdp.PartRegistry`.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import abl
from .descriptors import DescriptorConfig, PreparedObject, prepare_object
from .localhdp import (PartRegistry, new_part, predict_parts, segment_prepared, spin_vocabulary, train_offline,
                       train_part, update_minibatch)
from .pointcloud import PointCloud, occlude, pca_frame, voxel_downsample


class ProtocolError(ValueError):
    pass


def part_miou(pred, gt, parts=None) -> float:
    """Mean IoU over ``parts`` (default: every label in ``pred`` or ``gt``).

    Parts absent from both sequences have an empty union and are skipped.
    """
    pred = np.asarray(pred, dtype=object)
    gt = np.asarray(gt, dtype=object)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ProtocolError("pred and gt must be 1-D sequences of equal length")
    if len(pred) == 0:
        raise ProtocolError("empty label sequences")
    if parts is None:
        parts = set(pred.tolist()) | set(gt.tolist())
    ious = []
    for p in parts:
        in_pred = pred == p
        in_gt = gt == p
        union = np.count_nonzero(in_pred | in_gt)
        if union:
            ious.append(np.count_nonzero(in_pred & in_gt) / union)
    if not ious:
        raise ProtocolError("no part occurs in pred or gt")
    # fsum is correctly rounded, so the result does not depend on part order
    return math.fsum(ious) / len(ious)


def _ordered_parts(labels) -> list:
    """Distinct labels of one object in a fixed (sorted) order."""
    return sorted(set(np.asarray(labels).tolist()), key=str)


# ---------------------------------------------------------------------------
# learner adapter
# ---------------------------------------------------------------------------


class HdpLearner:
    """Teacher-facing wrapper around a part registry.

    Prepared keypoint documents are cached per cloud object, so repeated tests
    of one object compute descriptors once.
    """

    def __init__(self, registry: PartRegistry, config: DescriptorConfig, seed: int = 0):
        if registry.vocab_size != config.vocab_size:
            raise ProtocolError("registry vocabulary does not match the descriptor config")
        self.registry = registry
        self.config = config
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._cache: dict = {}

    def prepare(self, cloud: PointCloud) -> PreparedObject:
        key = id(cloud)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not cloud:
            hit = (cloud, prepare_object(cloud, self.config))
            self._cache[key] = hit
        return hit[1]

    def learned_parts(self) -> list:
        return self.registry.labels()

    def _docs(self, cloud, part):
        prepared = self.prepare(cloud)
        labels = prepared.keypoints.part_labels
        if labels is None:
            raise ProtocolError("teaching needs an annotated cloud")
        return prepared.counts[labels == part]

    def teach(self, cloud: PointCloud, part) -> None:
        docs = self._docs(cloud, part)
        if len(docs) == 0:
            raise ProtocolError(f"object has no keypoint labelled {part!r}")
        model = self.registry.models.get(part)
        if model is None:
            model = new_part(self.registry, part, seed=self.seed + len(self.registry))
        train_part(model, self.registry.hyper, docs, self._rng)

    def correct(self, cloud: PointCloud, parts) -> None:
        for part in parts:
            docs = self._docs(cloud, part)
            if len(docs):
                update_minibatch(self.registry.models[part], self.registry.hyper, docs)

    def segment(self, cloud: PointCloud, parts=None):
        prepared = self.prepare(cloud)
        pred = predict_parts(self.registry, prepared.counts, allowed=parts)
        return np.array(pred, dtype=object), prepared.keypoints.part_labels


# ---------------------------------------------------------------------------
# simulated teacher
# ---------------------------------------------------------------------------


@dataclass
class TeacherConfig:
    threshold: float = 0.75
    stall_iterations: int = 100
    teach_count: int = 3
    window_factor: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ProtocolError("threshold must lie in (0, 1)")
        for name in ("stall_iterations", "teach_count", "window_factor"):
            if getattr(self, name) < 1:
                raise ProtocolError(f"{name} must be positive")


@dataclass
class ProtocolReport:
    learned_parts: int
    correction_iterations: int
    avg_instances_per_part: float
    final_miou: float
    stop_reason: str
    test_iterations: int = 0
    instances: int = 0
    parts: list = field(default_factory=list)
    # rows of (iteration, n_parts, window_miou)
    trajectory: list = field(default_factory=list)

    @property
    def miou_trajectory(self) -> list:
        return [(it, m) for it, _, m in self.trajectory]


def run_open_ended(dataset: Sequence[PointCloud], config: TeacherConfig, learner) -> ProtocolReport:
    """Teach parts one at a time and test until every part passes or learning stalls.

    Objects are visited in a seeded shuffle; parts are introduced in the order
    they first appear there, each from the first ``teach_count`` objects that
    contain it.  Each test iteration segments one random object not used for
    teaching among the learned parts, scoring only points whose true part is
    learned.  An object scoring below the threshold triggers a correction.
    The window of the last ``window_factor * n_learned`` scores is reset at
    every introduction and must be full before it is compared with the
    threshold.
    """
    if not dataset:
        raise ProtocolError("empty dataset")
    if any(c.part_labels is None for c in dataset):
        raise ProtocolError("open-ended evaluation needs per-point part annotations")
    rng = np.random.default_rng(config.seed)
    order = [int(i) for i in rng.permutation(len(dataset))]
    part_order = []
    for i in order:
        for p in _ordered_parts(dataset[i].part_labels):
            if p not in part_order:
                part_order.append(p)

    parts_of = {i: set(_ordered_parts(dataset[i].part_labels)) for i in order}
    used: set = set()
    learned: list = []
    instances = 0
    corrections = 0
    iteration = 0
    trajectory = []

    def introduce(part):
        nonlocal instances
        chosen = [i for i in order if part in parts_of[i] and i not in used][:config.teach_count]
        if not chosen:
            chosen = [i for i in order if part in parts_of[i]][:config.teach_count]
        for i in chosen:
            learner.teach(dataset[i], part)
            used.add(i)
        instances += len(chosen)
        learned.append(part)

    introduce(part_order[0])
    window: deque = deque(maxlen=config.window_factor)
    since_intro = 0
    stop_reason = "stalled"
    window_miou = 0.0
    while True:
        pool = [i for i in order if i not in used and parts_of[i] & set(learned)]
        if not pool:
            break
        idx = pool[int(rng.integers(len(pool)))]
        pred, gt = learner.segment(dataset[idx], list(learned))
        gt = np.asarray(gt, dtype=object)
        mask = np.isin(gt, np.array(learned, dtype=object))
        score = part_miou(np.asarray(pred, dtype=object)[mask], gt[mask], set(learned)) if mask.any() else 0.0
        iteration += 1
        since_intro += 1
        if score < config.threshold:
            learner.correct(dataset[idx], [p for p in learned if p in parts_of[idx]])
            corrections += 1
            used.add(idx)
        window.append(score)
        window_miou = float(np.mean(window))
        trajectory.append((iteration, len(learned), window_miou))
        if len(window) == window.maxlen and window_miou > config.threshold:
            if len(learned) == len(part_order):
                stop_reason = "all_taught"
                break
            introduce(part_order[len(learned)])
            window = deque(maxlen=config.window_factor * len(learned))
            since_intro = 0
            continue
        if since_intro >= config.stall_iterations:
            break

    return ProtocolReport(
        learned_parts=len(learned),
        correction_iterations=corrections,
        avg_instances_per_part=instances / len(learned),
        final_miou=window_miou,
        stop_reason=stop_reason,
        test_iterations=iteration,
        instances=instances,
        parts=list(learned),
        trajectory=trajectory,
    )


def format_report(report: ProtocolReport) -> str:
    pairs = [
        ("learned_parts", report.learned_parts),
        ("correction_iterations", report.correction_iterations),
        ("avg_instances_per_part", repr(float(report.avg_instances_per_part))),
        ("final_miou", repr(float(report.final_miou))),
        ("stop_reason", report.stop_reason),
        ("test_iterations", report.test_iterations),
        ("instances", report.instances),
        ("parts", ",".join(map(str, report.parts))),
    ]
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def format_trajectory(report: ProtocolReport) -> str:
    rows = ["iteration,n_parts,window_miou"]
    rows += [f"{it},{n},{m!r}" for it, n, m in report.trajectory]
    return "\n".join(rows) + "\n"


def write_report(report: ProtocolReport, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rep, traj = out_dir / "report.txt", out_dir / "trajectory.csv"
    rep.write_text(format_report(report))
    traj.write_text(format_trajectory(report))
    return rep, traj


# ---------------------------------------------------------------------------
# occlusion experiment
# ---------------------------------------------------------------------------


def split_dataset(dataset: Sequence[PointCloud], seed: int, test_fraction: float = 0.1):
    """Seeded train/test split; the test side gets ``round(test_fraction * n)`` objects (at least 1)."""
    n = len(dataset)
    if n < 10:
        raise ProtocolError("the occlusion experiment needs at least 10 objects")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    test = sorted(int(i) for i in perm[:n_test])
    train = sorted(int(i) for i in perm[n_test:])
    return [dataset[i] for i in train], [dataset[i] for i in test]


def occlusion_seed(split_seed: int, index: int) -> int:
    return split_seed * 100_003 + index


def occluded_copies(test: Sequence[PointCloud], split_seed: int) -> list:
    return [occlude(c, occlusion_seed(split_seed, i)) for i, c in enumerate(test)]


def segmentation_labels(registry: PartRegistry, prepared: PreparedObject, config: DescriptorConfig) -> list:
    """Predicted part per keypoint; spin-only documents are scored on the spin block."""
    return segment_prepared(registry, prepared, spin_vocabulary(config))


@dataclass
class OcclusionSettings:
    oracle_labels: bool = False
    min_fraction: float = 0.1
    epochs: int = 1
    seed: int = 0


def recognize(registry: PartRegistry, model: abl.ArgumentationModel, cloud: PointCloud,
              config: DescriptorConfig, spin_only: bool = False, min_fraction: float = 0.1):
    """Segment ``cloud`` and name its category; returns (category, explanation, labels)."""
    # a model trained on spin-only documents can only read spin-only documents
    prepared = prepare_object(cloud, config, spin_only=spin_only or config.spin_only)
    labels = segmentation_labels(registry, prepared, config)
    category, explanation = abl.predict(model, abl.label_set(labels, min_fraction))
    return category, explanation, labels


def run_occlusion_experiment(dataset: Sequence[PointCloud], split_seed: int, registry: PartRegistry,
                             abl_model: abl.ArgumentationModel, config: Optional[DescriptorConfig] = None,
                             settings: Optional[OcclusionSettings] = None) -> tuple[float, float]:
    """Category accuracy on the held-out 10% before and after occlusion.

    ``registry`` and ``abl_model`` are trained in place on the 90% side.  The
    occluded copies are scored with spin-image-only documents.  An object
    the argument store cannot name counts as a miss.
    """
    config = config or DescriptorConfig()
    settings = settings or OcclusionSettings()
    if any(c.category is None for c in dataset):
        raise ProtocolError("the occlusion experiment needs category labels")
    train, test = split_dataset(dataset, split_seed)
    prepared = [prepare_object(c, config) for c in train]
    train_offline(registry, prepared, epochs=settings.epochs, seed=settings.seed)
    for cloud, prep in zip(train, prepared):
        if settings.oracle_labels:
            labels = prep.keypoints.part_labels
        else:
            labels = segmentation_labels(registry, prep, config)
        abl.train(abl_model, abl.label_set(labels, settings.min_fraction), cloud.category)

    def accuracy(clouds, spin_only):
        hits = 0
        for cloud, truth in clouds:
            try:
                category, _, _ = recognize(registry, abl_model, cloud, config, spin_only, settings.min_fraction)
            except abl.UnknownObject:
                continue
            hits += category == truth
        return hits / len(clouds)

    truths = [c.category for c in test]
    acc_original = accuracy(list(zip(test, truths)), False)
    acc_occluded = accuracy(list(zip(occluded_copies(test, split_seed), truths)), True)
    return acc_original, acc_occluded


# ---------------------------------------------------------------------------
# global-descriptor baseline
# ---------------------------------------------------------------------------


def global_descriptor(cloud: PointCloud, bins: int = 10, leaf: Optional[float] = 0.05) -> np.ndarray:
    """Whole-object shape histogram on the three PCA planes.

    The cloud is expressed in its PCA frame, each plane projection is
    histogrammed on a ``bins x bins`` grid spanning the object's largest
    extent, and the three normalised histograms are concatenated.
    """
    if leaf:
        cloud = voxel_downsample(cloud, leaf)
    frame = pca_frame(cloud)
    local = frame.to_local(cloud.points)
    half = max(np.abs(local).max(), 1e-12)
    edges = np.linspace(-half, half, bins + 1)
    out = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        h, _, _ = np.histogram2d(local[:, i], local[:, j], bins=[edges, edges])
        out.append(h.ravel() / len(local))
    return np.concatenate(out)


class NearestCentroid:
    """Nearest class mean of global descriptors (Euclidean)."""

    def __init__(self, bins: int = 10, leaf: Optional[float] = 0.05):
        self.bins = bins
        self.leaf = leaf
        self.classes: list = []
        self.centroids: Optional[np.ndarray] = None

    def fit(self, clouds: Sequence[PointCloud]) -> "NearestCentroid":
        feats = np.stack([global_descriptor(c, self.bins, self.leaf) for c in clouds])
        cats = np.array([c.category for c in clouds], dtype=object)
        self.classes = sorted(set(cats.tolist()), key=str)
        self.centroids = np.stack([feats[cats == k].mean(axis=0) for k in self.classes])
        return self

    def predict(self, cloud: PointCloud):
        if self.centroids is None:
            raise ProtocolError("baseline is not fitted")
        f = global_descriptor(cloud, self.bins, self.leaf)
        return self.classes[int(np.argmin(np.linalg.norm(self.centroids - f, axis=1)))]

    def accuracy(self, clouds: Sequence[PointCloud], truths) -> float:
        return float(np.mean([self.predict(c) == t for c, t in zip(clouds, truths)]))


def baseline_occlusion_accuracy(dataset: Sequence[PointCloud], split_seed: int, bins: int = 10) -> tuple[float, float]:
    """(original, occluded) accuracy of :class:`NearestCentroid` on the same split and cuts."""
    train, test = split_dataset(dataset, split_seed)
    clf = NearestCentroid(bins).fit(train)
    truths = [c.category for c in test]
    return clf.accuracy(test, truths), clf.accuracy(occluded_copies(test, split_seed), truths)
