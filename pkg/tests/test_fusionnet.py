import math

import numpy as np
import pytest

from vistakaap.errors import ConfigError, NumericError, RejectedConfigurationError, ShapeError
from vistakaap.fusionnet import (
    VISTA_PAIRS,
    FusionPredictor,
    TrainConfig,
    WeightedAddLayer,
    build_topology,
    forward,
    gradients,
    loss,
    make_synthetic_dataset,
    mean_loss,
    train,
    weighted_add,
)
from vistakaap.predictor import InputSpec

from conftest import SMALL

TINY = InputSpec(image_shape=(4, 4, 1), speech_shape=(4, 4), text_length=3, vocab_size=5)


def numeric_grad(topo, batch, name, idx, h=1e-6):
    p = dict(topo.parameters())[name]
    old = p[idx]
    p[idx] = old + h
    up = mean_loss(topo, batch)
    p[idx] = old - h
    down = mean_loss(topo, batch)
    p[idx] = old
    return (up - down) / (2 * h)


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


# weighted add ---------------------------------------------------------------

def test_equal_raws_average():
    x, y = np.array([1.0, 2.0]), np.array([3.0, -2.0])
    np.testing.assert_allclose(weighted_add([x, y], WeightedAddLayer("t", np.zeros(2))), (x + y) / 2)


def test_single_input_passthrough():
    x = np.array([[1.5, -2.0]])
    np.testing.assert_allclose(weighted_add([x], WeightedAddLayer("t", np.array([4.2]))), x, atol=0)


def test_log_ratio_weights():
    x, y = np.array([4.0]), np.array([8.0])
    out = weighted_add([x, y], WeightedAddLayer("t", np.log([1.0, 3.0])))
    np.testing.assert_allclose(out, 0.25 * x + 0.75 * y, atol=1e-15)


def test_weighted_add_errors():
    layer = WeightedAddLayer("t", np.zeros(2))
    with pytest.raises(ShapeError):
        weighted_add([np.zeros(2), np.zeros(3)], layer)
    with pytest.raises(ConfigError):
        weighted_add([np.zeros(2)] * 3, layer)


# topology -------------------------------------------------------------------

def test_vista_has_six_cross_modal_pairs():
    topo = build_topology(seed=0, D=4, spec=TINY)
    assert topo.pairs == VISTA_PAIRS and len(topo.pair_adds) == 6
    assert all(p != s for p, s in topo.pairs)


def test_baseline4_pairs():
    topo = build_topology(seed=0, D=4, variant="baseline#4", spec=TINY)
    assert set(topo.pairs) == {("image", "speech"), ("speech", "text"), ("text", "image")}
    assert topo.final_add.raw.size == 3


def test_baseline1_rejected():
    with pytest.raises(RejectedConfigurationError):
        build_topology(variant="baseline#1")


def test_unknown_variant():
    with pytest.raises(ConfigError):
        build_topology(variant="baseline#9")


def test_raw_init_range_and_seed():
    a = build_topology(seed=3, D=4, spec=TINY)
    b = build_topology(seed=3, D=4, spec=TINY)
    for wa in a.weighted_add_layers():
        assert np.all(np.abs(wa.raw) <= 0.05)
    for (_, p), (_, q) in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)


def test_branch_widths():
    topo = build_topology(seed=0, D=6, spec=TINY)
    for key, layers in topo.branches.items():
        assert layers[-1].W.shape[1] == 6
        assert len(layers) == (3 if key.startswith("P_") else 2)
    for head in topo.heads:
        assert head[0].W.shape == (6, 24) and head[1].W.shape == (24, 24)


# forward --------------------------------------------------------------------

def test_zero_dense_weights_give_uniform(rng):
    topo = build_topology(seed=1, D=4, spec=TINY)
    for _, p in topo.parameters():
        p[...] = 0.0
    s = TINY.random_sample(rng)
    np.testing.assert_allclose(forward(topo, s), [0.25] * 4, atol=1e-15)


def test_golden_untrained_forward():
    topo = build_topology(seed=123, D=8, spec=SMALL)
    s = SMALL.random_sample(np.random.default_rng(5))
    golden = [0.27114536597647537, 0.1059713347591215, 0.27165839464426206, 0.35122490462014105]
    np.testing.assert_allclose(forward(topo, s), golden, rtol=0, atol=1e-12)


def test_golden_trained_forward():
    spec = InputSpec()
    data = make_synthetic_dataset(200, 7, spec)
    topo = build_topology(seed=7, D=8, spec=spec)
    train(topo, data, epochs=3, lr=1e-3, optimizer="adam", patience=None)
    golden = [0.439267742674856, 0.14286649323996312, 0.2325846683305605, 0.18528109575462043]
    np.testing.assert_allclose(forward(topo, data[0]), golden, rtol=0, atol=1e-10)


def test_swapping_identical_pairs_is_noop(rng):
    topo = build_topology(seed=2, D=4, spec=TINY)
    # give pairs 1 and 2 identical heads and identical raw weights, then swap their order
    topo.heads[1] = [type(l)(l.name, topo.heads[0][i].W.copy(), topo.heads[0][i].b.copy())
                     for i, l in enumerate(topo.heads[1])]
    topo.pair_adds[1].raw[...] = topo.pair_adds[0].raw
    topo.final_add.raw[1] = topo.final_add.raw[0]
    s = TINY.random_sample(rng)
    before = forward(topo, s)
    topo.heads[0], topo.heads[1] = topo.heads[1], topo.heads[0]
    np.testing.assert_allclose(forward(topo, s), before, atol=1e-15)


def test_pair_outputs_exposed(rng):
    topo = build_topology(seed=2, D=4, spec=TINY)
    res = topo.forward_batch([TINY.random_sample(rng)])
    assert len(res.pair_outputs) == 6 and res.pair_outputs[0].shape == (1, 4)


def test_shift_invariance(rng):
    topo = build_topology(seed=4, D=4, spec=TINY)
    s = TINY.random_sample(rng)
    before = forward(topo, s)
    for wa in topo.weighted_add_layers():
        wa.raw += 3.7
    np.testing.assert_allclose(forward(topo, s), before, atol=1e-9)


def test_predictor_wrapper(rng):
    topo = build_topology(seed=4, D=4, spec=TINY)
    s = TINY.random_sample(rng)
    assert np.array_equal(FusionPredictor(topo).predict(s), forward(topo, s))


# loss -----------------------------------------------------------------------

def test_loss_perfect_prediction():
    assert loss([0, 1.0, 0, 0], 1) == 0.0


def test_loss_uniform():
    assert loss([0.25] * 4, 2) == pytest.approx(0.5 * math.log(4) + 0.5 * 0.75**2 * math.log(4), abs=1e-15)


def test_loss_monotone_in_target_probability():
    prev = math.inf
    for p in np.linspace(0.01, 1.0, 50):
        rest = (1 - p) / 3
        cur = loss([rest, p, rest, rest], 1)
        assert cur < prev
        prev = cur


def test_loss_clamps_zero_probability():
    assert math.isfinite(loss([1.0, 0.0, 0.0, 0.0], 1))


def test_loss_rejects_bad_target():
    with pytest.raises(ConfigError):
        loss([0.25] * 4, 4)


# gradients ------------------------------------------------------------------

def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    topo = build_topology(seed=5, D=4, spec=TINY)
    batch = [TINY.random_sample(rng, label=int(rng.integers(4))) for _ in range(3)]
    _, grads = gradients(topo, batch)
    params = topo.parameters()
    for _ in range(40):
        name, p = params[rng.integers(len(params))]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        assert rel_err(grads[name][idx], numeric_grad(topo, batch, name, idx)) < 1e-4, name


def test_raw_weight_gradients_sum_to_zero():
    rng = np.random.default_rng(1)
    topo = build_topology(seed=6, D=4, spec=TINY)
    batch = [TINY.random_sample(rng, label=i % 4) for i in range(4)]
    _, grads = gradients(topo, batch)
    for wa in topo.weighted_add_layers():
        assert abs(grads[f"{wa.name}.raw"].sum()) < 1e-12


def test_zero_loss_batch_has_zero_gradient():
    rng = np.random.default_rng(2)
    topo = build_topology(seed=7, D=4, spec=TINY)
    for _, p in topo.parameters():
        p[...] = 0.0
    topo.final.b[...] = [0.0, 1000.0, 0.0, 0.0]  # saturated logits, class 1 certain
    batch = [TINY.random_sample(rng, label=1) for _ in range(3)]
    value, grads = gradients(topo, batch)
    assert value == 0.0
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    assert norm < 1e-8


def test_non_finite_names_layer():
    rng = np.random.default_rng(3)
    topo = build_topology(seed=8, D=4, spec=TINY)
    topo.branches["P_image"][0].W[0, 0] = np.inf
    with pytest.raises(NumericError, match="P_image"):
        gradients(topo, [TINY.random_sample(rng, label=0)])


def test_empty_batch_rejected():
    with pytest.raises(ConfigError):
        gradients(build_topology(seed=0, D=4, spec=TINY), [])


# training -------------------------------------------------------------------

def test_lr_zero_leaves_parameters_identical():
    data = make_synthetic_dataset(40, 1, TINY)
    topo = build_topology(seed=1, D=4, spec=TINY)
    before = [p.copy() for _, p in topo.parameters()]
    train(topo, data, epochs=2, lr=0.0)
    assert all(np.array_equal(a, b) for a, (_, b) in zip(before, topo.parameters()))


@pytest.mark.parametrize("kw", [{"lr": -1.0}, {"epochs": 0}, {"optimizer": "rmsprop"}])
def test_bad_training_config(kw):
    data = make_synthetic_dataset(8, 1, TINY)
    with pytest.raises(ConfigError):
        train(build_topology(seed=1, D=4, spec=TINY), data, TrainConfig(**{"epochs": 1, **kw}))


def test_effective_weights_stay_on_simplex():
    data = make_synthetic_dataset(64, 2, TINY)
    topo = build_topology(seed=2, D=4, spec=TINY)

    def check(t, step):
        for wa in t.weighted_add_layers():
            e = wa.effective
            assert np.all(e > 0) and np.all(e < 1) and abs(e.sum() - 1) <= 1e-12

    train(topo, data, epochs=5, lr=0.05, batch_size=16, on_step=check)


def test_early_stopping_triggers():
    data = make_synthetic_dataset(48, 3, TINY)
    topo = build_topology(seed=3, D=4, spec=TINY)
    # an oversized SGD step keeps the validation loss from improving for long
    rep = train(topo, data[:32], epochs=200, lr=5.0, optimizer="sgd", val_set=data[32:], patience=2)
    assert rep.stopped_early and len(rep.records) < 200


def test_training_reduces_loss():
    data = make_synthetic_dataset(80, 4, TINY)
    topo = build_topology(seed=4, D=4, spec=TINY)
    rep = train(topo, data, epochs=20, lr=1e-2, optimizer="adam", patience=None)
    assert rep.records[-1]["loss"] < rep.records[0]["loss"]
    assert set(rep.records[-1]["weights"]) == {f"O{i}.add" for i in range(1, 7)} | {"O.add"}
