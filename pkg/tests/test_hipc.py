import numpy as np
import pytest

from aimspose.datagen import DatasetConfig, generate_dataset
from aimspose.errors import ConfigError, DataError, NumericalError
from aimspose.hipc import HipcConfig, check_normalized, hipc_features, predict_fine, train_hipc
from aimspose.pipeline import true_joints
from aimspose.skeleton import rotation_x, rotation_z


@pytest.fixture(scope="module")
def clean():
    source, _ = generate_dataset(DatasetConfig(per_class=40, test_count=0), seed=3)
    joints = true_joints(source)
    oracle = 10.0 * np.eye(4)[source.coarse_indices()]
    return source, joints, oracle, source.fine_indices()


@pytest.fixture(scope="module")
def trained(clean):
    # clean sanity run: no joint jitter, so the model can fit ground-truth joints exactly
    _, joints, oracle, y = clean
    return train_hipc(joints, oracle, y, HipcConfig(joint_noise=0.0), seed=0)


def test_feature_layout(clean):
    _, joints, _, _ = clean
    f = hipc_features(joints[0], np.zeros(4))
    assert f.shape == (76,)
    np.testing.assert_array_equal(f[-4:], 0.25)
    np.testing.assert_array_equal(f[:72], joints[0].ravel())
    assert hipc_features(joints[:5], np.zeros((5, 4))).shape == (5, 76)


def test_rotation_changes_only_joint_block(clean):
    _, joints, _, _ = clean
    logits = np.array([2.0, -1.0, 0.5, 0.0])
    R = rotation_z(0.7) @ rotation_x(-0.4)
    a = hipc_features(joints[3], logits)
    b = hipc_features(joints[3] @ R.T, logits)
    np.testing.assert_array_equal(a[72:], b[72:])
    assert np.abs(a[:72] - b[:72]).max() > 0.05


def test_unnormalized_rejected_with_reason(clean):
    _, joints, _, _ = clean
    with pytest.raises(DataError, match="pelvis"):
        hipc_features(joints[0] + 0.1, np.zeros(4))
    with pytest.raises(DataError, match="nose-pelvis"):
        hipc_features(joints[0] * 1.01, np.zeros(4))
    with pytest.raises(DataError):
        hipc_features(joints[0], np.array([0.0, np.inf, 0.0, 0.0]))
    with pytest.raises(DataError):
        hipc_features(joints[0], np.zeros(3))
    assert check_normalized(joints).shape == joints.shape


def test_oracle_logits_fit_training_set(clean, trained):
    _, joints, oracle, y = clean
    _, labels = predict_fine(trained, joints, oracle)
    assert np.mean(labels == y) >= 0.95


def test_zero_epochs_near_uniform(clean):
    _, joints, oracle, y = clean
    model = train_hipc(joints, oracle, y, HipcConfig(epochs=0), seed=0)
    probs, _ = predict_fine(model, joints, oracle)
    entropy = -(probs * np.log(probs)).sum(axis=1) / np.log(12)
    assert entropy.min() > 0.9


def test_seed_reproducible(clean):
    _, joints, oracle, y = clean
    cfg = HipcConfig(epochs=3, joint_noise=0.1)
    a = train_hipc(joints, oracle, y, cfg, seed=5)
    b = train_hipc(joints, oracle, y, cfg, seed=5)
    assert a.to_dict() == b.to_dict()
    assert a.metadata["kind"] == "hipc" and a.metadata["seed"] == 5
    assert train_hipc(joints, oracle, y, cfg, seed=6).to_dict() != a.to_dict()


def test_probs_normalized_and_single_sample(clean, trained):
    _, joints, oracle, _ = clean
    probs, labels = predict_fine(trained, joints, oracle)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    p0, l0 = predict_fine(trained, joints[0], oracle[0])
    assert p0.shape == (12,) and l0 == labels[0]


def test_opposed_logits_flip_prediction(clean, trained, taxonomy):
    source, joints, _, _ = clean
    prone, supine = taxonomy.coarse_index("Prone"), taxonomy.coarse_index("Supine")
    # a prone skeleton and its mirror image about the horizontal plane look alike from a frontal view
    i = int(np.nonzero(source.coarse_indices() == prone)[0][0])
    mirrored = joints[i] * np.array([1.0, 1.0, -1.0])
    flips = 0
    for skeleton in (joints[i], mirrored):
        pair = np.stack([skeleton, skeleton])
        logits = np.zeros((2, 4))
        logits[0, prone], logits[1, supine] = 6.0, 6.0
        _, labels = predict_fine(trained, pair, logits)
        flips += labels[0] != labels[1]
        assert taxonomy.fine_to_coarse[labels[0]] == prone
        assert taxonomy.fine_to_coarse[labels[1]] == supine
    assert flips == 2


def test_permutation_equivariance(clean, trained, rng):
    _, joints, oracle, _ = clean
    perm = rng.permutation(len(joints))
    probs, labels = predict_fine(trained, joints, oracle)
    p2, l2 = predict_fine(trained, joints[perm], oracle[perm])
    np.testing.assert_array_equal(p2, probs[perm])
    np.testing.assert_array_equal(l2, labels[perm])


def test_no_logits_variant_ignores_logits(clean):
    _, joints, oracle, y = clean
    model = train_hipc(joints, oracle, y, HipcConfig(epochs=2, use_logits=False), seed=0)
    a, _ = predict_fine(model, joints[:10], oracle[:10])
    b, _ = predict_fine(model, joints[:10], -oracle[:10])
    np.testing.assert_array_equal(a, b)


def test_gated_variant_stays_under_argmax_coarse(clean, taxonomy, rng):
    _, joints, oracle, y = clean
    model = train_hipc(joints, oracle, y, HipcConfig(epochs=2, gated=True), seed=0)
    logits = rng.normal(size=(len(joints), 4))
    probs, labels = predict_fine(model, joints, logits, taxonomy)
    np.testing.assert_array_equal(taxonomy.fine_to_coarse[labels], logits.argmax(axis=1))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ConfigError):
        HipcConfig(gated=True, use_logits=False)


def test_dimension_mismatch(clean, trained):
    _, joints, oracle, _ = clean
    with pytest.raises(DataError):
        predict_fine(trained, joints[:, :23], oracle)
    from aimspose.nn import MLP

    with pytest.raises(DataError):
        predict_fine(MLP.zeros(76, 4, 4), joints[:2], oracle[:2])


def test_nan_divergence_aborts(clean, monkeypatch):
    import aimspose.hipc as hipc

    _, joints, oracle, y = clean
    monkeypatch.setattr(hipc, "cross_entropy", lambda logits, labels: (float("nan"), np.zeros_like(logits)))
    with pytest.raises(NumericalError, match="epoch 0 step 0"):
        train_hipc(joints, oracle, y, HipcConfig(epochs=1), seed=0)


def test_training_input_validation(clean):
    _, joints, oracle, y = clean
    with pytest.raises(DataError):
        train_hipc(joints, oracle, y[:-1], HipcConfig(epochs=1))
    with pytest.raises(DataError):
        train_hipc(joints, oracle, np.full(len(y), 12), HipcConfig(epochs=1))
