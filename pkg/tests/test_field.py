import math

import numpy as np
import pytest

from oral_nexf.field import (
    EncoderConfig,
    FieldError,
    FieldModel,
    ModelConfig,
    encode,
    load_checkpoint,
    query_columns,
    save_checkpoint,
)


def _small(**kw):
    kw.setdefault("encoder", EncoderConfig(n_freqs=4))
    kw.setdefault("n_layers", 5)
    kw.setdefault("width", 8)
    kw.setdefault("heads", 6)
    return ModelConfig(**kw)


def test_encode_origin():
    out = encode([0.0, 0.0], EncoderConfig(n_freqs=2))
    np.testing.assert_array_equal(out[0], [0, 0, 0, 1, 0, 1, 0, 1, 0, 1])


def test_encode_unit_coordinate():
    out = encode([1.0, 0.0], EncoderConfig(n_freqs=1))[0]
    assert out[0] == 1.0
    assert abs(out[2]) < 1e-15  # sin(pi)
    assert out[3] == -1.0       # cos(pi)


def test_encode_matches_scalar_oracle():
    cfg = EncoderConfig(n_freqs=8)
    rng = np.random.default_rng(0)
    for p in rng.uniform(-1, 1, size=(20, 2)):
        expected = list(p)
        for c in p:
            for k in range(8):
                expected += [math.sin(2**k * math.pi * c), math.cos(2**k * math.pi * c)]
        np.testing.assert_allclose(encode(p, cfg)[0], expected, atol=1e-12)


@pytest.mark.parametrize("L,inc,dim", [(32, True, 2), (6, False, 2), (10, True, 3)])
def test_out_dim_formula(L, inc, dim):
    cfg = EncoderConfig(L, inc, dim)
    assert cfg.out_dim == dim * (2 * L + int(inc))
    assert encode(np.zeros(dim), cfg).shape == (1, cfg.out_dim)


def test_encode_rejects_unnormalized_positions():
    with pytest.raises(FieldError):
        encode([1.5, 0.0], EncoderConfig())


def test_zero_head_gives_zero_output():
    model = FieldModel(_small())
    model.params[-2][:] = 0.0
    np.testing.assert_array_equal(model(np.zeros((3, 2))), 0.0)


def test_default_model_has_160_heads():
    model = FieldModel(ModelConfig(width=16, encoder=EncoderConfig(n_freqs=4)))
    assert model(np.zeros((2, 2))).shape == (2, 160)
    assert len(model.params) == 2 * 12


def _tiny_oracle(params, x, scale):
    # scalar loops: input layer, one residual pair, head
    def dense(h, W, b, relu):
        out = [sum(h[i] * W[i][j] for i in range(len(h))) + b[j] for j in range(len(b))]
        return [max(v, 0.0) for v in out] if relu else out
    W = [p.tolist() for p in params]
    h = dense(x, W[0], W[1], True)
    r = dense(dense(h, W[2], W[3], True), W[4], W[5], True)
    h = [a + b for a, b in zip(h, r)]
    return [scale * v for v in dense(h, W[6], W[7], False)]


def test_forward_matches_hand_computed_network():
    cfg = _small(n_layers=4, width=3, heads=2, encoder=EncoderConfig(n_freqs=1))
    rng = np.random.default_rng(1)
    params = [rng.normal(size=s) for s in FieldModel(cfg).param_shapes()]
    model = FieldModel(cfg, params)
    for p in rng.uniform(-1, 1, size=(5, 2)):
        x = encode(p, cfg.encoder)[0].tolist()
        np.testing.assert_allclose(model(p)[0], _tiny_oracle(params, x, 1000.0), rtol=1e-12)


def test_columns_depend_only_on_their_position():
    model = FieldModel(_small())
    rng = np.random.default_rng(2)
    xy = rng.uniform(-1, 1, size=(10, 2))
    batch = query_columns(model, xy)
    for k in range(10):
        np.testing.assert_allclose(query_columns(model, xy[k:k + 1])[0], batch[k], rtol=1e-12)


def test_single_head_columns_are_slice_queries():
    cfg = ModelConfig.single_head(n_layers=4, width=8, encoder=EncoderConfig(n_freqs=3))
    model = FieldModel(cfg)
    xy = np.array([[0.1, -0.2], [0.5, 0.3]])
    cols = query_columns(model, xy, 4)
    assert cols.shape == (2, 4)
    z = -1 + (2 * np.arange(4) + 1) / 4
    for j in range(4):
        np.testing.assert_allclose(cols[1, j], model([0.5, 0.3, z[j]])[0, 0])


def test_heads_must_match_slices():
    with pytest.raises(FieldError):
        query_columns(FieldModel(_small()), [[0.0, 0.0]], 7)


def test_invalid_configs():
    with pytest.raises(FieldError):
        ModelConfig(n_layers=1)
    with pytest.raises(FieldError):
        ModelConfig(mode="single")


def test_checkpoint_round_trip(tmp_path):
    model = FieldModel(_small(seed=3))
    save_checkpoint(model, tmp_path / "m.ckpt", iteration=12)
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert back.config == model.config
    for a, b in zip(model.params, back.params):
        np.testing.assert_array_equal(b, a.astype(np.float32))
    xy = np.random.default_rng(4).uniform(-1, 1, size=(8, 2))
    np.testing.assert_allclose(back(xy), model(xy), rtol=1e-4, atol=1e-3)


def test_truncated_checkpoint_is_rejected(tmp_path):
    save_checkpoint(FieldModel(_small()), tmp_path / "m.ckpt")
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "bad.ckpt").write_bytes(raw[:-8])
    with pytest.raises(FieldError):
        load_checkpoint(tmp_path / "bad.ckpt")
