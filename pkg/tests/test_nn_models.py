import numpy as np
import pytest

from uwbspt.nn import ModelSpec, build_model, load_model, save_model
from uwbspt.nn.layers import Conv2D, Dense, Dropout, MaxPool2D, ReLU, Softmax, SpatialDropout
from uwbspt.nn.models import (
    CHECKPOINT_MAGIC,
    num_params,
    td_stack_output_dim,
    wr_stack_output_dim,
)

TD_SHAPE = (40, 159)
WR_SHAPE = (33, 33)


def shape_oracle(shape, rounds, kernel, pool, channels):
    """Replay the conv/pool shape arithmetic step by step."""
    h, w = shape
    for _ in range(rounds):
        h, w = h - kernel[0] + 1, w - kernel[1] + 1
        h, w = h // pool[0], w // pool[1]
    return h * w * channels


def test_stack_output_dims_match_oracle():
    assert td_stack_output_dim(TD_SHAPE) == shape_oracle(TD_SHAPE, 3, (2, 3), (2, 3), 32)
    assert td_stack_output_dim(TD_SHAPE) == 512  # 4 x 4 x 32
    assert wr_stack_output_dim(WR_SHAPE) == shape_oracle(WR_SHAPE, 2, (2, 2), (2, 2), 20)
    assert wr_stack_output_dim(WR_SHAPE) == 980  # 7 x 7 x 20
    with pytest.raises(ValueError):
        td_stack_output_dim((10, 10))
    with pytest.raises(ValueError):
        wr_stack_output_dim((4, 4))


def count_oracle(kind, num_classes, td_dim, wr_dim):
    """Parameter totals from first principles."""
    conv = lambda kh, kw, ci, co: kh * kw * ci * co + co
    dense = lambda i, o: i * o + o
    td_stack = conv(2, 3, 1, 16) + conv(2, 3, 16, 32) + conv(2, 3, 32, 32)
    wr_stack = conv(2, 2, 1, 10) + conv(2, 2, 10, 20)
    if kind == "td":
        return td_stack + dense(td_dim, 64) + dense(64, num_classes)
    if kind == "wrtft":
        return wr_stack + dense(wr_dim, 20) + dense(20, 10) + dense(10, num_classes)
    return (
        td_stack
        + wr_stack
        + dense(td_dim + wr_dim, 128)
        + dense(128, 64)
        + dense(64, num_classes)
    )


def test_param_counts():
    for kind in ("td", "wrtft", "spn"):
        for c in (4, 5):
            model = build_model(ModelSpec(kind, c, TD_SHAPE, WR_SHAPE, seed=0))
            assert num_params(model) == count_oracle(kind, c, 512, 980)
    spn = build_model(ModelSpec("spn", 4, TD_SHAPE, WR_SHAPE, seed=0))
    assert num_params(spn) == 209_882


def test_td_architecture_layer_sequence():
    model = build_model(ModelSpec("td", 4, TD_SHAPE, WR_SHAPE, seed=0))
    kinds = [type(l).__name__ for l in model.net.layers]
    assert kinds == [
        "Conv2D", "SpatialDropout", "MaxPool2D",
        "Conv2D", "SpatialDropout", "MaxPool2D",
        "Conv2D", "SpatialDropout", "MaxPool2D",
        "Flatten", "Dense", "ReLU", "Dropout", "Dense", "Softmax",
    ]
    convs = [l for l in model.net.layers if isinstance(l, Conv2D)]
    assert [c.out_channels for c in convs] == [16, 32, 32]
    assert all((c.kh, c.kw) == (2, 3) for c in convs)
    assert all(l.rate == 0.3 for l in model.net.layers if isinstance(l, SpatialDropout))
    assert [l.rate for l in model.net.layers if isinstance(l, Dropout)] == [0.5]
    dense = [l for l in model.net.layers if isinstance(l, Dense)]
    assert [(d.in_dim, d.out_dim) for d in dense] == [(512, 64), (64, 4)]


def test_wrtft_architecture_layer_sequence():
    model = build_model(ModelSpec("wrtft", 4, TD_SHAPE, WR_SHAPE, seed=0))
    convs = [l for l in model.net.layers if isinstance(l, Conv2D)]
    assert [c.out_channels for c in convs] == [10, 20]
    assert all((c.kh, c.kw) == (2, 2) for c in convs)
    dense = [l for l in model.net.layers if isinstance(l, Dense)]
    assert [(d.in_dim, d.out_dim) for d in dense] == [(980, 20), (20, 10), (10, 4)]
    assert isinstance(model.net.layers[-1], Softmax)


def test_spn_architecture_and_fusion():
    model = build_model(ModelSpec("spn", 5, TD_SHAPE, WR_SHAPE, seed=0))
    head_dense = [l for l in model.head.layers if isinstance(l, Dense)]
    assert [(d.in_dim, d.out_dim) for d in head_dense] == [(1492, 128), (128, 64), (64, 5)]
    td_convs = [l for l in model.td_branch.layers if isinstance(l, Conv2D)]
    wr_convs = [l for l in model.wr_branch.layers if isinstance(l, Conv2D)]
    assert len(td_convs) == 3 and len(wr_convs) == 2


def test_forward_shapes_and_probabilities():
    rng = np.random.default_rng(0)
    x_td = rng.normal(size=(3, *TD_SHAPE, 1)).astype(np.float32)
    x_wr = rng.normal(size=(3, *WR_SHAPE, 1)).astype(np.float32)
    for kind, inputs in (("td", (x_td,)), ("wrtft", (x_wr,)), ("spn", (x_td, x_wr))):
        model = build_model(ModelSpec(kind, 4, TD_SHAPE, WR_SHAPE, seed=1))
        p = model.forward(inputs)
        assert p.shape == (3, 4)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-5)


def test_build_is_seed_deterministic():
    spec = ModelSpec("spn", 4, TD_SHAPE, WR_SHAPE, seed=7)
    a, b = build_model(spec), build_model(spec)
    for pa, pb in zip(a.params(), b.params()):
        np.testing.assert_array_equal(pa.value, pb.value)
    c = build_model(ModelSpec("spn", 4, TD_SHAPE, WR_SHAPE, seed=8))
    assert any(
        not np.array_equal(pa.value, pc.value) for pa, pc in zip(a.params(), c.params())
    )


def test_biases_start_at_zero():
    model = build_model(ModelSpec("spn", 4, TD_SHAPE, WR_SHAPE, seed=0))
    for layer in model.td_branch.layers + model.wr_branch.layers + model.head.layers:
        if isinstance(layer, (Conv2D, Dense)):
            assert np.all(layer.b.value == 0)


def test_model_spec_json_roundtrip_and_validation():
    spec = ModelSpec("spn", 4, TD_SHAPE, WR_SHAPE, seed=3)
    assert ModelSpec.from_json(spec.to_json()) == spec
    with pytest.raises(ValueError):
        ModelSpec("bogus", 4, TD_SHAPE, WR_SHAPE)
    with pytest.raises(ValueError):
        ModelSpec("td", 4, None, WR_SHAPE)
    with pytest.raises(ValueError):
        ModelSpec("spn", 1, TD_SHAPE, WR_SHAPE)


def test_checkpoint_layout_and_roundtrip(tmp_path):
    spec = ModelSpec("wrtft", 4, None, WR_SHAPE, seed=5)
    model = build_model(spec)
    path = tmp_path / "m.spnw"
    save_model(model, path)

    blob = path.read_bytes()
    assert blob[:4] == CHECKPOINT_MAGIC == b"SPNW"
    assert blob[4] == 1
    spec_len = int.from_bytes(blob[5:9], "little")
    assert ModelSpec.from_json(blob[9 : 9 + spec_len].decode()) == spec
    n_floats = (len(blob) - 9 - spec_len) // 4
    assert n_floats == num_params(model)

    rng = np.random.default_rng(0)
    x = (rng.normal(size=(2, *WR_SHAPE, 1)).astype(np.float32),)
    loaded = load_model(path)
    np.testing.assert_allclose(loaded.forward(x), model.forward(x), atol=1e-6)
    for pa, pb in zip(model.params(), loaded.params()):
        np.testing.assert_allclose(pa.value, pb.value, atol=1e-7)


def test_checkpoint_rejects_damage(tmp_path):
    spec = ModelSpec("wrtft", 4, None, WR_SHAPE, seed=5)
    model = build_model(spec)
    path = tmp_path / "m.spnw"
    save_model(model, path)
    blob = path.read_bytes()

    bad = tmp_path / "bad.spnw"
    bad.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        load_model(bad)
    cut = tmp_path / "cut.spnw"
    cut.write_bytes(blob[:-40])
    with pytest.raises(ValueError):
        load_model(cut)
    ver = tmp_path / "ver.spnw"
    ver.write_bytes(blob[:4] + bytes([7]) + blob[5:])
    with pytest.raises(ValueError):
        load_model(ver)
