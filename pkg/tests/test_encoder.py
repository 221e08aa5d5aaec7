import numpy as np
import pytest

from dshgcn import encoder
from dshgcn.encoder import FEATURE_TYPES
from dshgcn.numerics import ShapeError, Tape

DIMS = {"emotional": 5, "attentional": 4, "upper_body": 3}
HIDDEN = 4


@pytest.fixture
def params(rng):
    p = encoder.init_params(rng, DIMS, HIDDEN, n_max=6)
    for t in FEATURE_TYPES:
        p[f"encoder.{t}.bias"] = rng.normal(size=(1, HIDDEN))
    return p


def _leaves(t, params):
    return {k: t.param(k, v) for k, v in params.items()}


def test_init_shapes_and_ranges(rng):
    p = encoder.init_params(rng, DIMS, HIDDEN, n_max=6)
    for t, d in DIMS.items():
        assert p[f"encoder.{t}.weight"].shape == (d, HIDDEN)
        assert np.all(np.abs(p[f"encoder.{t}.weight"]) <= 1 / np.sqrt(d))
        assert not p[f"encoder.{t}.bias"].any()
    assert p["encoder.student_embedding"].shape == (6, HIDDEN)


def test_project_zero_input_gives_bias(params):
    t = Tape()
    w = _leaves(t, params)
    c = encoder.project(t, t.const(np.zeros((2, 5))), w["encoder.emotional.weight"], w["encoder.emotional.bias"])
    np.testing.assert_array_equal(c.value, np.tile(params["encoder.emotional.bias"], (2, 1)))


def test_project_identity():
    t = Tape()
    x = np.arange(8.0).reshape(2, 4)
    c = encoder.project(t, t.const(x), t.const(np.eye(4)), t.const(np.zeros((1, 4))))
    np.testing.assert_array_equal(c.value, x)


def test_project_vs_matvec_oracle(params, rng):
    x = rng.normal(size=(3, 4))
    W, b = params["encoder.attentional.weight"], params["encoder.attentional.bias"]
    t = Tape()
    c = encoder.project(t, t.const(x), t.const(W), t.const(b)).value
    for i in range(3):
        want = [sum(W[k, j] * x[i, k] for k in range(4)) + b[0, j] for j in range(HIDDEN)]
        np.testing.assert_allclose(c[i], want, rtol=1e-12)


def test_project_dimension_mismatch(params):
    t = Tape()
    with pytest.raises(ShapeError):
        encoder.project(t, t.const(np.zeros((1, 7))), t.const(params["encoder.emotional.weight"]),
                        t.const(params["encoder.emotional.bias"]))


def test_student_embedding_lookup_and_gradient(params):
    t = Tape()
    table = t.param("W_s", params["encoder.student_embedding"])
    first = encoder.student_embedding(t, table, 0)
    np.testing.assert_array_equal(first.value[0], params["encoder.student_embedding"][0])
    two = encoder.student_embedding(t, table, [1, 2]).value
    assert not np.array_equal(two[0], two[1])
    g = t.backward(t.sum(encoder.student_embedding(t, table, 3)))["W_s"]
    want = np.zeros_like(g)
    want[3] = 1.0
    np.testing.assert_array_equal(g, want)
    with pytest.raises(IndexError):
        encoder.student_embedding(t, table, 6)


def _raw(t, rng, n):
    return {ft: t.const(rng.normal(size=(n, d))) for ft, d in DIMS.items()}


def test_encode_vs_composed_oracle_and_shared_embedding(params, rng):
    t = Tape()
    w = _leaves(t, params)
    raw = _raw(t, rng, 2)
    idx = [1, 4]
    nodes = encoder.encode(t, raw, idx, w).value
    assert nodes.shape == (6, HIDDEN)
    for i in range(2):
        emb = params["encoder.student_embedding"][idx[i]]
        diffs = []
        for k, ft in enumerate(FEATURE_TYPES):
            c = raw[ft].value[i] @ params[f"encoder.{ft}.weight"] + params[f"encoder.{ft}.bias"][0]
            np.testing.assert_allclose(nodes[3 * i + k], c + emb, rtol=1e-12)
            diffs.append(nodes[3 * i + k] - c)
        # (c + s) - c recovers s up to one rounding of c + s
        np.testing.assert_allclose(diffs[0], diffs[1], rtol=0, atol=1e-15)
        np.testing.assert_allclose(diffs[1], diffs[2], rtol=0, atol=1e-15)


def test_encode_zero_embedding_and_zero_projection(params, rng):
    p = dict(params)
    p["encoder.student_embedding"] = np.zeros_like(p["encoder.student_embedding"])
    t = Tape()
    raw = _raw(t, rng, 1)
    nodes = encoder.encode(t, raw, [0], _leaves(t, p)).value
    for k, ft in enumerate(FEATURE_TYPES):
        want = raw[ft].value[0] @ p[f"encoder.{ft}.weight"] + p[f"encoder.{ft}.bias"][0]
        np.testing.assert_allclose(nodes[k], want, rtol=1e-12)

    q = dict(params)
    for ft in FEATURE_TYPES:
        q[f"encoder.{ft}.weight"] = np.zeros_like(q[f"encoder.{ft}.weight"])
        q[f"encoder.{ft}.bias"] = np.zeros_like(q[f"encoder.{ft}.bias"])
    t = Tape()
    nodes = encoder.encode(t, _raw(t, rng, 1), [2], _leaves(t, q)).value
    for k in range(3):
        np.testing.assert_array_equal(nodes[k], q["encoder.student_embedding"][2])


def test_encoder_affinity(params, rng):
    x = {ft: rng.normal(size=(1, d)) for ft, d in DIMS.items()}
    delta = {ft: rng.normal(size=(1, d)) for ft, d in DIMS.items()}

    def run(inp):
        t = Tape()
        return encoder.encode(t, {k: t.const(v) for k, v in inp.items()}, [0], _leaves(t, params)).value

    shifted = run({k: x[k] + delta[k] for k in x}) - run(x)
    for k, ft in enumerate(FEATURE_TYPES):
        np.testing.assert_allclose(shifted[k], (delta[ft] @ params[f"encoder.{ft}.weight"])[0], atol=1e-12)


def test_dropped_type_gets_no_gradient(params, rng):
    t = Tape()
    w = _leaves(t, params)
    raw = _raw(t, rng, 2)
    del raw["emotional"]
    nodes = encoder.encode(t, raw, [0, 1], w, dropped=("emotional",))
    g = t.backward(t.sum_squares(nodes))
    assert not g["encoder.emotional.weight"].any() and not g["encoder.emotional.bias"].any()
    assert g["encoder.attentional.weight"].any()
    np.testing.assert_array_equal(nodes.value[0], params["encoder.student_embedding"][0])
