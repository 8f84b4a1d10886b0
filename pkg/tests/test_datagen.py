import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aimspose.camera import KeypointSet2D
from aimspose.datagen import (
    FEATURE_DIM,
    Dataset,
    DatasetConfig,
    PosePrototype,
    PosePrototypeBank,
    ShiftConfig,
    apply_domain_shift,
    extract_features,
    generate_dataset,
    generate_domain,
    rotation_mixing,
    sample_pose,
    write_dataset,
)
from aimspose.errors import ConfigError, DataError, LabelAccessError
from aimspose.prototypes import prototype_poses


@pytest.fixture(scope="module")
def small():
    return generate_dataset(DatasetConfig(per_class=10, test_count=30), seed=3)


def fixed_bank(jitter):
    return PosePrototypeBank({f: PosePrototype(t, jitter, (0.0, 0.0)) for f, t in prototype_poses().items()})


# -- prototypes ----------------------------------------------------------------------


def test_bank_has_twelve_entries(taxonomy):
    bank = PosePrototypeBank.default(taxonomy)
    assert sorted(bank) == sorted(taxonomy.fine_labels)
    for proto in bank.values():
        assert proto.mean_theta.shape == (24, 3)
        assert np.all(np.linalg.norm(proto.mean_theta, axis=1) <= np.pi + 1e-12)


def test_prototypes_differ_within_and_across_coarse(taxonomy):
    poses = prototype_poses()
    for a in taxonomy.fine_labels:
        for b in taxonomy.fine_labels:
            if a >= b:
                continue
            limbs = np.abs(poses[a][1:] - poses[b][1:]).max()
            root = np.abs(poses[a][0] - poses[b][0]).max()
            if taxonomy.same_coarse(a, b):
                assert limbs > 0.1, (a, b)
            else:
                assert max(root, limbs) > 0.1, (a, b)


# -- sample_pose --------------------------------------------------------------------------


def test_zero_jitter_gives_prototype():
    bank = fixed_bank(0.0)
    theta, beta = sample_pose(np.random.default_rng(0), "Rolling", bank, shape_scale=0.0)
    np.testing.assert_allclose(theta, prototype_poses()["Rolling"], atol=1e-12)
    np.testing.assert_array_equal(beta, np.zeros(10))


def test_sample_pose_deterministic():
    bank = PosePrototypeBank.default()
    a = sample_pose(np.random.default_rng(4), "Standing", bank)
    b = sample_pose(np.random.default_rng(4), "Standing", bank)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_sample_pose_monte_carlo_mean():
    sigma = 0.12
    bank = fixed_bank(sigma)
    rng = np.random.default_rng(0)
    draws = np.stack([sample_pose(rng, "FourPointKneeling", bank)[0] for _ in range(500)])
    mean = prototype_poses()["FourPointKneeling"]
    # non-root joints: plain additive jitter, well inside the pi clip
    assert np.all(np.abs(draws[:, 1:].mean(0) - mean[1:]) <= 3 * sigma / np.sqrt(500))


def test_shape_is_truncated():
    rng = np.random.default_rng(0)
    betas = np.stack([sample_pose(rng, "Standing", PosePrototypeBank.default())[1] for _ in range(300)])
    assert np.abs(betas).max() <= 2.0
    assert 0.6 < betas.std() < 1.0


def test_unknown_label_rejected():
    with pytest.raises(DataError, match="Hopping"):
        sample_pose(np.random.default_rng(0), "Hopping", PosePrototypeBank.default())


# -- features -------------------------------------------------------------------------------


@pytest.fixture
def keypoints(template, rng):
    from aimspose.camera import CameraConfig, project, sample_camera
    from aimspose.skeleton import forward_kinematics

    theta, beta = sample_pose(rng, "SittingWithSupport", PosePrototypeBank.default())
    return project(forward_kinematics(template, theta, beta), sample_camera(rng, CameraConfig()))


def test_feature_dimension(keypoints):
    f = extract_features(keypoints)
    assert f.shape == (FEATURE_DIM,) and FEATURE_DIM == 60 and np.all(np.isfinite(f))


def test_features_translation_invariant(keypoints):
    moved = KeypointSet2D.all_visible(keypoints.x_2d + np.array([100.0, -40.0]))
    np.testing.assert_allclose(extract_features(moved), extract_features(keypoints), atol=1e-12)


def test_features_scale_invariant(template, keypoints):
    pelvis = keypoints.x_2d[template.pelvis]
    scaled = KeypointSet2D.all_visible(pelvis + 2.0 * (keypoints.x_2d - pelvis))
    np.testing.assert_allclose(extract_features(scaled), extract_features(keypoints), atol=1e-12)


def test_hand_angle_case(template):
    x = np.zeros((24, 2))
    x[template.index("nose")] = [0.0, -1.0]
    # right angle at the left elbow, 60 degrees at the right elbow
    x[template.index("left_shoulder")] = [1.0, 0.0]
    x[template.index("left_elbow")] = [2.0, 0.0]
    x[template.index("left_wrist")] = [2.0, 1.0]
    x[template.index("right_shoulder")] = [-1.0, 0.0]
    x[template.index("right_elbow")] = [-2.0, 0.0]
    x[template.index("right_wrist")] = [-2.0 + np.cos(np.pi / 3), np.sin(np.pi / 3)]
    f = extract_features(KeypointSet2D.all_visible(x))
    assert f[48] == pytest.approx(np.pi / 2, abs=1e-9)
    assert f[49] == pytest.approx(np.pi / 3, abs=1e-9)


def test_degenerate_2d_scale_rejected(template):
    with pytest.raises(DataError, match="nose-pelvis"):
        extract_features(KeypointSet2D.all_visible(np.ones((24, 2))))


# -- rotation mixing ----------------------------------------------------------------------


def test_mixing_quarter_turn_on_known_plane():
    Q = rotation_mixing(2, np.pi / 2, basis=np.eye(2))
    np.testing.assert_allclose(Q @ np.array([1.0, 0.0]), [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(Q @ np.array([0.0, 1.0]), [-1.0, 0.0], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, np.pi), st.integers(0, 1000))
def test_mixing_is_orthogonal(angle, seed):
    Q = rotation_mixing(60, angle, seed)
    np.testing.assert_allclose(Q @ Q.T, np.eye(60), atol=1e-10)
    assert np.linalg.det(Q) == pytest.approx(1.0)


# -- domain shift ---------------------------------------------------------------------------------


def test_identity_shift_returns_sample(small):
    sample = small[0][0]
    assert apply_domain_shift(sample, ShiftConfig.identity(), np.random.default_rng(0)) is sample


def test_shift_preserves_labels_and_changes_features(small):
    source = small[0]
    for s in source.samples[:12]:
        shifted = apply_domain_shift(s, ShiftConfig(), np.random.default_rng(1))
        assert (shifted.fine, shifted.coarse) == (s.fine, s.coarse)
        assert not np.allclose(shifted.features, s.features)
        np.testing.assert_allclose(shifted.theta, s.theta)


def test_shift_config_validation():
    with pytest.raises(ConfigError):
        ShiftConfig(keypoint_noise_px=-1)
    with pytest.raises(ConfigError):
        ShiftConfig(feature_rotation_angle=4.0)
    with pytest.raises(ConfigError):
        ShiftConfig(bone_length_scale_range=(1.2, 1.1))


# -- datasets ---------------------------------------------------------------------------------------


def test_balanced_counts(small, taxonomy):
    source, target = small
    assert len(source) == 120 and len(target) == 120
    for ds in (source, target.evaluation_view()):
        counts = np.bincount(ds.fine_indices(), minlength=12)
        assert counts.tolist() == [10] * 12
    assert sum(s.split == "test" for s in target) == 30


def test_taxonomy_consistency(small, taxonomy):
    for ds in small:
        for s in ds:
            assert s.coarse == taxonomy.coarse_of(s.fine)
            assert np.all(np.isfinite(s.features)) and s.features.shape == (60,)


def test_target_labels_hidden(small):
    target = small[1]
    with pytest.raises(LabelAccessError):
        target.fine_indices()
    with pytest.raises(LabelAccessError):
        target.coarse_indices()
    assert len(target.evaluation_view().coarse_indices()) == len(target)


def test_byte_identical_files(tmp_path):
    config = DatasetConfig(per_class=3, test_count=6)
    digests = []
    for run in ("a", "b"):
        source, target = generate_dataset(config, seed=21)
        write_dataset(tmp_path / run, source, target, config, 21)
        digests.append([(tmp_path / run / f).read_bytes() for f in ("source.jsonl", "target.jsonl", "manifest.json")])
    assert digests[0] == digests[1]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 21 and manifest["counts"] == {"source": 36, "target": 36, "target_test": 6}


def test_different_seeds_differ():
    config = DatasetConfig(per_class=1)
    a, _ = generate_dataset(config, seed=1)
    b, _ = generate_dataset(config, seed=2)
    assert a.to_jsonl() != b.to_jsonl()


def test_file_round_trip(tmp_path, small):
    source, target = small
    source.save(tmp_path / "s.jsonl")
    target.save(tmp_path / "t.jsonl")
    s2 = Dataset.load(tmp_path / "s.jsonl")
    t2 = Dataset.load(tmp_path / "t.jsonl")
    assert s2.labels_visible and not t2.labels_visible
    assert s2.to_jsonl() == source.to_jsonl() and t2.to_jsonl() == target.to_jsonl()


def test_malformed_line_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": 1}\n')
    with pytest.raises(DataError):
        Dataset.load(path)


def test_config_validation():
    with pytest.raises(ConfigError):
        DatasetConfig(per_class=0)
    with pytest.raises(ConfigError):
        DatasetConfig(source_count=5)
    assert DatasetConfig.from_dict(DatasetConfig().to_dict()) == DatasetConfig()


# -- domain statistics -----------------------------------------------------------------------------------

N_STATS = 150


def _per_class_gaps(shift, seed=5, n=N_STATS):
    config = DatasetConfig(per_class=n, shift=shift)
    source = generate_domain("source", config, seed)
    target = generate_domain("target", config, seed).evaluation_view()
    ys, yt = source.fine_indices(), target.fine_indices()
    gaps, noise = [], []
    for c in range(12):
        a, b = source.features[ys == c], target.features[yt == c]
        gaps.append(np.linalg.norm(a.mean(0) - b.mean(0)))
        # standard error of the difference of means, in L2
        noise.append(np.sqrt((np.trace(np.cov(a.T)) + np.trace(np.cov(b.T))) / n))
    return np.array(gaps), np.array(noise)


@pytest.fixture(scope="module")
def identity_gaps():
    return _per_class_gaps(ShiftConfig.identity())


def test_zero_shift_means_match_within_sampling_noise(identity_gaps):
    gaps, noise = identity_gaps
    assert np.all(gaps < 3 * noise)


@pytest.mark.xfail(
    strict=True,
    reason="per-class feature covariance trace is ~20 (random yaw), so a 0.05 L2 gap between "
    "independent samples needs ~15k samples per class",
)
def test_zero_shift_means_within_fixed_tolerance(identity_gaps):
    assert np.all(identity_gaps[0] < 0.05)


def test_default_shift_separates_means():
    gaps, _ = _per_class_gaps(ShiftConfig(), n=60)
    assert np.all(gaps > 0.3)


@pytest.mark.slow
def test_zero_shift_domain_classifier_at_chance():
    from sklearn.linear_model import LogisticRegression
    from sklearn.model_selection import train_test_split

    accs = []
    for seed in range(5):
        config = DatasetConfig(per_class=60, shift=ShiftConfig.identity())
        X = np.vstack([generate_domain(d, config, seed).features for d in ("source", "target")])
        y = np.repeat([0, 1], len(X) // 2)
        Xa, Xb, ya, yb = train_test_split(X, y, test_size=0.3, random_state=seed, stratify=y)
        clf = LogisticRegression(max_iter=2000).fit(Xa, ya)
        accs.append(clf.score(Xb, yb))
    assert np.mean(accs) <= 0.55
