import json

import numpy as np
import pytest

from aimspose.errors import DataError
from aimspose.nn import MLP, Adam, config_hash, cross_entropy, softmax


def test_softmax_rows_and_shift(rng):
    Z = rng.normal(0, 20, size=(10, 5))
    P = softmax(Z)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax(Z - 100.0), P, atol=1e-12)
    assert np.all(np.isfinite(softmax(np.array([[1e4, -1e4]]))))


def test_cross_entropy_gradient(rng):
    Z = rng.normal(size=(6, 4))
    y = rng.integers(0, 4, 6)
    loss, grad = cross_entropy(Z, y)
    assert loss == pytest.approx(-np.mean(np.log(softmax(Z)[np.arange(6), y])))
    h = 1e-6
    fd = np.zeros_like(Z)
    for idx in np.ndindex(Z.shape):
        E = np.zeros_like(Z)
        E[idx] = h
        fd[idx] = (cross_entropy(Z + E, y)[0] - cross_entropy(Z - E, y)[0]) / (2 * h)
    np.testing.assert_allclose(grad, fd, atol=1e-8)


def test_backward_matches_finite_differences(rng):
    model = MLP.init(5, 7, 3, rng)
    X = rng.normal(size=(4, 5))
    y = np.array([0, 2, 1, 2])

    def loss():
        return cross_entropy(model.forward(X)[1], y)[0]

    hidden, logits = model.forward(X)
    grads = model.backward(X, hidden, cross_entropy(logits, y)[1])
    h = 1e-6
    for name, p in model.params().items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()
            p[idx] = old - h
            down = loss()
            p[idx] = old
            assert grads[name][idx] == pytest.approx((up - down) / (2 * h), abs=1e-8)


def test_adam_minimizes_quadratic():
    w = {"W": np.array([3.0, -2.0])}
    opt = Adam(w, lr=0.1)
    for _ in range(500):
        opt.step(w, {"W": 2 * w["W"]})
    assert np.abs(w["W"]).max() < 1e-2


def test_round_trip_and_format(tmp_path, rng):
    model = MLP.init(4, 3, 2, rng, metadata={"seed": 1})
    doc = model.to_dict()
    assert doc["activation"] == "tanh" and [l["shape"] for l in doc["layers"]] == [[4, 3], [3, 2]]
    path = tmp_path / "m.json"
    model.save(path)
    back = MLP.load(path)
    for name in MLP.PARAMS:
        np.testing.assert_array_equal(getattr(back, name), getattr(model, name))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("layers"),
        lambda d: d["layers"][0].update(shape=[4, 5]),
        lambda d: d["layers"][1]["bias"].append(0.0),
        lambda d: d["layers"][0]["weights"].__setitem__(0, float("nan")),
    ],
)
def test_malformed_documents_rejected(rng, mutate):
    doc = json.loads(json.dumps(MLP.init(4, 3, 2, rng).to_dict()))
    mutate(doc)
    with pytest.raises(DataError):
        MLP.from_dict(doc)


def test_input_dimension_checked(rng):
    with pytest.raises(DataError):
        MLP.init(4, 3, 2, rng).forward(np.zeros((2, 5)))


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
