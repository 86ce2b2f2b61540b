import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_miou
from partseg.descriptors import DescriptorConfig
from partseg.localhdp import PartRegistry
from partseg.pointcloud import PointCloud
from partseg.protocol import (HdpLearner, NearestCentroid, ProtocolError, TeacherConfig, format_report,
                              format_trajectory, global_descriptor, occluded_copies, occlusion_seed, parse_report,
                              part_miou, run_open_ended, split_dataset, write_report)
from partseg.synthetic import make_dataset, synthetic_settings

# ---------------------------------------------------------------- mIoU


def test_miou_examples():
    assert part_miou(list("AABB"), list("AABB")) == 1.0
    assert part_miou(list("AABB"), list("ABAB")) == pytest.approx(1 / 3)
    assert part_miou(list("AAAA"), list("BBBB")) == 0.0


def test_miou_skips_parts_absent_from_both():
    assert part_miou(list("AB"), list("AB"), parts={"A", "B", "C"}) == 1.0


def test_miou_errors():
    with pytest.raises(ProtocolError):
        part_miou([], [])
    with pytest.raises(ProtocolError):
        part_miou(["A"], ["A", "B"])
    with pytest.raises(ProtocolError):
        part_miou(["A"], ["A"], parts={"Z"})


labels = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60)


@settings(max_examples=100, deadline=None)
@given(labels, st.randoms(use_true_random=False))
def test_miou_permutation_invariant_and_matches_oracle(pairs, rnd):
    pred, gt = map(list, zip(*pairs))
    value = part_miou(pred, gt)
    assert 0.0 <= value <= 1.0
    assert value == brute_force_miou(pred, gt)
    rnd.shuffle(pairs)
    p2, g2 = map(list, zip(*pairs))
    assert part_miou(p2, g2) == value
    # relabelling both sides by the same bijection leaves the score unchanged
    perm = {k: (k * 3 + 1) % 5 for k in range(5)}
    assert part_miou([perm[x] for x in pred], [perm[x] for x in gt]) == value


# ---------------------------------------------------------------- teacher with stub learners


def toy_dataset(n_per_cat=12, seed=0):
    """Tiny labelled objects: 'cup' has parts a/b, 'pan' has parts b/c."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(2 * n_per_cat):
        cat, parts = ("cup", ["a", "b"]) if i % 2 == 0 else ("pan", ["b", "c"])
        labs = np.array([parts[j % 2] for j in range(10)], dtype=object)
        out.append(PointCloud(rng.normal(size=(10, 3)), part_labels=labs, category=cat))
    return out


class OracleLearner:
    def __init__(self):
        self.taught = []
        self.corrected = 0

    def teach(self, cloud, part):
        self.taught.append(part)

    def correct(self, cloud, parts):
        self.corrected += 1

    def segment(self, cloud, parts):
        return cloud.part_labels.copy(), cloud.part_labels


class WrongLearner(OracleLearner):
    def segment(self, cloud, parts):
        return np.array(["nonsense"] * len(cloud), dtype=object), cloud.part_labels


def test_oracle_learner_learns_every_part():
    report = run_open_ended(toy_dataset(), TeacherConfig(), OracleLearner())
    assert report.stop_reason == "all_taught"
    assert report.learned_parts == 3
    assert report.correction_iterations == 0
    assert report.avg_instances_per_part == 3.0
    assert report.final_miou == 1.0


def test_wrong_learner_stalls_on_first_part():
    learner = WrongLearner()
    report = run_open_ended(toy_dataset(), TeacherConfig(stall_iterations=5), learner)
    assert report.learned_parts == 1
    assert report.stop_reason == "stalled"
    assert report.correction_iterations == learner.corrected == report.test_iterations
    assert report.final_miou == 0.0


def test_teacher_is_deterministic():
    a = run_open_ended(toy_dataset(), TeacherConfig(seed=4), OracleLearner())
    b = run_open_ended(toy_dataset(), TeacherConfig(seed=4), OracleLearner())
    assert format_report(a) == format_report(b)
    assert format_trajectory(a) == format_trajectory(b)


def test_teacher_window_grows_with_learned_parts():
    report = run_open_ended(toy_dataset(), TeacherConfig(window_factor=2), OracleLearner())
    n_parts = [n for _, n, _ in report.trajectory]
    # the first introduction needs 2 tests, the next 2*2, the last 2*3
    assert n_parts == [1] * 2 + [2] * 4 + [3] * 6


def test_teacher_rejects_unlabelled_data():
    with pytest.raises(ProtocolError):
        run_open_ended([PointCloud(np.zeros((3, 3)))], TeacherConfig(), OracleLearner())
    with pytest.raises(ProtocolError):
        run_open_ended([], TeacherConfig(), OracleLearner())


def test_teacher_config_validation():
    with pytest.raises(ProtocolError):
        TeacherConfig(threshold=1.0)
    with pytest.raises(ProtocolError):
        TeacherConfig(teach_count=0)


def test_report_files(tmp_path):
    report = run_open_ended(toy_dataset(), TeacherConfig(), OracleLearner())
    rep, traj = write_report(report, tmp_path / "out")
    fields = parse_report(rep.read_text())
    assert fields["learned_parts"] == "3" and fields["stop_reason"] == "all_taught"
    assert float(fields["avg_instances_per_part"]) == report.avg_instances_per_part
    rows = traj.read_text().splitlines()
    assert rows[0] == "iteration,n_parts,window_miou"
    assert len(rows) == 1 + report.test_iterations


# ---------------------------------------------------------------- HDP learner


def test_hdp_learner_teaches_and_segments():
    cfg, hyper = synthetic_settings()
    data = make_dataset(2, seed=1, n_points=256, categories=["mug"])
    learner = HdpLearner(PartRegistry(hyper, cfg.vocab_size), cfg, seed=0)
    learner.teach(data[0], "body")
    learner.teach(data[0], "handle")
    assert learner.learned_parts() == ["body", "handle"]
    pred, gt = learner.segment(data[1], ["body", "handle"])
    assert len(pred) == len(gt) and set(pred) <= {"body", "handle"}
    with pytest.raises(ProtocolError):
        learner.teach(data[0], "wing")


def test_hdp_learner_vocabulary_mismatch():
    with pytest.raises(ProtocolError):
        HdpLearner(PartRegistry(synthetic_settings()[1], 10), DescriptorConfig())


# ---------------------------------------------------------------- splits, occlusion and baseline


def test_split_is_seeded_partition():
    data = toy_dataset(10)
    train, test = split_dataset(data, 3)
    assert len(test) == 2 and len(train) == 18
    assert {id(c) for c in train} | {id(c) for c in test} == {id(c) for c in data}
    assert [id(c) for c in split_dataset(data, 3)[1]] == [id(c) for c in test]


def test_split_needs_ten_objects():
    with pytest.raises(ProtocolError, match="at least 10"):
        split_dataset(toy_dataset(4), 0)


def test_occlusion_seeds_are_distinct():
    seeds = {occlusion_seed(s, i) for s, i in itertools.product(range(20), range(100))}
    assert len(seeds) == 2000
    data = toy_dataset(3)
    a = occluded_copies(data, 1)
    b = occluded_copies(data, 1)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.points, y.points)


def test_global_descriptor_is_normalised():
    cloud = make_dataset(1, seed=0, n_points=300, categories=["table"])[0]
    f = global_descriptor(cloud, bins=6)
    assert f.shape == (3 * 36,)
    np.testing.assert_allclose(f.reshape(3, -1).sum(axis=1), 1.0)


def test_nearest_centroid_separates_categories():
    data = make_dataset(4, seed=2, n_points=300)
    clf = NearestCentroid().fit(data)
    assert clf.accuracy(data, [c.category for c in data]) >= 0.9
    with pytest.raises(ProtocolError):
        NearestCentroid().predict(data[0])
