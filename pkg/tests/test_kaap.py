import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vistakaap.errors import ConfigError
from vistakaap.kaap import (
    DEFAULT_K,
    KPWeights,
    explain,
    kaap_map,
    kp_value,
    marginal_contribution,
    modality_importance,
    select_target,
)
from vistakaap.oracle import exact_shapley, reference_kaap
from vistakaap.predictor import AdditiveModel, ConstantModel, InputSpec, MultimodalSample, ValueFunction

from conftest import SMALL

finite = st.floats(-1e6, 1e6)


def linear_model(spec, w_image=None, w_speech=None, w_text=None, output="scores"):
    H, W, C = spec.image_shape
    F, T = spec.speech_shape
    return AdditiveModel(
        spec,
        bias=np.zeros(4),
        w_image=np.zeros((4, H * W * C)) if w_image is None else w_image,
        w_speech=np.zeros((4, F * T)) if w_speech is None else w_speech,
        w_text=np.zeros((spec.vocab_size, 4)) if w_text is None else w_text,
        output=output,
    )


def test_marginal_contribution():
    assert marginal_contribution(0.7, 0.2) == pytest.approx(0.5, abs=1e-15)
    assert marginal_contribution(0.3, 0.3) == 0.0


def test_majority_single_player_has_no_marginal_gain():
    game = ValueFunction.from_callable(3, lambda S: 1.0 if len(S) >= 2 else 0.0)
    assert marginal_contribution(game({0}), game(set())) == 0.0


@given(st.integers(2, 1000))
def test_kp_weights_invariants(k):
    w = KPWeights(k)
    assert w.w12 + w.w34 == 1.0
    assert abs(w.w12 - w.w34 / (k - 1)) <= 1e-12


def test_kp_value_k2_is_mean():
    assert kp_value(0.4, 0.8, 2) == pytest.approx(0.6, abs=1e-15)


def test_kp_value_k4():
    assert kp_value(1.0, 2.0, 4) == pytest.approx(0.25 + 1.5, abs=1e-15)


def test_kp_value_rejects_k1():
    with pytest.raises(ConfigError):
        kp_value(1.0, 1.0, 1)


@given(st.lists(finite, min_size=4, max_size=4))
def test_two_player_kp_is_shapley(vals):
    game = ValueFunction(2, tuple(vals))
    phi = exact_shapley(game).phi
    for i in range(2):
        kp = kp_value(game(1 << i) - game(0), game(3) - game(1 << (1 - i)), 2)
        assert abs(kp - phi[i]) < 1e-12 * max(1.0, max(map(abs, vals)))


def test_select_target():
    assert select_target([0.1, 0.6, 0.2, 0.1]) == 1
    assert select_target([0.25] * 4) == 0
    assert select_target([0.9, 0.1, 0, 0], 3) == 3
    with pytest.raises(ConfigError):
        select_target([0.25] * 4, 4)


def test_constant_model_gives_zero_unnormalized_maps(sample):
    model = ConstantModel(SMALL)
    for m in ("image", "speech", "text"):
        amap = kaap_map(model, sample, m, 4)
        assert not amap.normalized and not amap.values.any()


def test_text_hand_computed_map():
    # one scored token at position 0, l=4, k_max=3:
    # j=2 -> parts [0,2),[2,4): positions 0,1 get (2/4)*c; j=3 -> [0,2),[2,3),[3,4): (3/4)*c
    spec = InputSpec(image_shape=(2, 2, 1), speech_shape=(2, 2), text_length=4, vocab_size=5)
    w_text = np.zeros((5, 4))
    w_text[3, 0] = 2.0
    model = linear_model(spec, w_text=w_text)
    s = MultimodalSample(np.zeros((2, 2, 1)), np.zeros((2, 2)), [3, 1, 1, 1])
    amap = kaap_map(model, s, "text", 3, target=0)
    assert amap.normalized
    np.testing.assert_allclose(amap.raw_sum * amap.values, [2.5, 2.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(amap.values, [0.5, 0.5, 0, 0], atol=1e-15)


def test_text_single_word_dominates():
    spec = InputSpec(image_shape=(2, 2, 1), speech_shape=(2, 2), text_length=6, vocab_size=10)
    w_text = np.zeros((10, 4))
    w_text[7, 2] = 1.0
    model = linear_model(spec, w_text=w_text)
    s = MultimodalSample(np.zeros((2, 2, 1)), np.zeros((2, 2)), [1, 1, 1, 7, 1, 1])
    amap = kaap_map(model, s, "text", 5, target=2)
    assert int(np.argmax(amap.values)) == 3
    assert amap.values[3] > np.max(np.delete(amap.values, 3))
    assert abs(amap.values.sum() - 1) < 1e-9
    ref = reference_kaap(model, s, "text", 5, target=2)
    np.testing.assert_allclose(amap.values, ref.values, atol=1e-12)


def brute_force_image_map(model, sample, k_max, target):
    """Independent evaluation: loop over every pixel and every granularity."""
    w = sample.image.shape[0]
    zero = sample.replace(image=np.zeros_like(sample.image), speech=np.zeros_like(sample.speech),
                          text=np.zeros_like(sample.text))
    full = zero.replace(image=sample.image)
    p_f, p_b = model.predict(full)[target], model.predict(zero)[target]
    out = np.zeros((w, w))
    for j in range(2, k_max + 1):
        edges = np.cumsum([0] + [w // j + (1 if i < w % j else 0) for i in range(j)])
        for r in range(w):
            for c in range(w):
                br = np.searchsorted(edges, r, side="right") - 1
                bc = np.searchsorted(edges, c, side="right") - 1
                keep = np.zeros_like(sample.image)
                sl = (slice(edges[br], edges[br + 1]), slice(edges[bc], edges[bc + 1]))
                keep[sl] = sample.image[sl]
                drop = sample.image.copy()
                drop[sl] = 0
                p1 = model.predict(zero.replace(image=keep))[target]
                p2 = model.predict(zero.replace(image=drop))[target]
                out[r, c] += (j / w) ** 2 * ((p1 - p_b) / j + (1 - 1 / j) * (p_f - p2))
    return out


def test_single_hot_image_pixel_is_maximal(spec, sample):
    q = (5, 2)
    w_image = np.zeros((4, 8 * 8 * 3))
    flat = np.ravel_multi_index((q[0], q[1], 0), (8, 8, 3))
    w_image[1, flat] = 3.0
    model = linear_model(spec, w_image=w_image)
    amap = kaap_map(model, sample, "image", 4, target=1)
    assert amap.values[q] == amap.values.max()
    expected = brute_force_image_map(model, sample, 4, 1)
    np.testing.assert_allclose(amap.values * amap.raw_sum, expected, atol=1e-12)
    # pixels that never share a block with q are null players
    assert amap.values[0, 7] == 0.0 and amap.values[7, 7] == 0.0


def test_speech_map_is_frequency_average(spec, sample):
    model = AdditiveModel.random(spec, 21, output="probs")
    amap = kaap_map(model, sample, "speech", 3)
    assert amap.values.shape == (8,)
    ref = reference_kaap(model, sample, "speech", 3, target=amap.target_class)
    np.testing.assert_allclose(amap.values, ref.values, atol=1e-12)


def test_k_max_clamped_with_warning():
    spec = InputSpec(image_shape=(1, 1, 1), speech_shape=(1, 1), text_length=2, vocab_size=3)
    s = MultimodalSample(np.ones((1, 1, 1)), np.ones((1, 1)), [1, 2])
    model = AdditiveModel.random(spec, 0)
    with pytest.warns(RuntimeWarning, match="clamped"):
        amap = kaap_map(model, s, "image", 2)
    assert not amap.normalized and amap.values.shape == (1, 1)
    with pytest.warns(RuntimeWarning):
        kaap_map(model, s, "text", 5)


def test_threads_do_not_change_result(spec, sample):
    model = AdditiveModel.random(spec, 8, output="probs")
    a = kaap_map(model, sample, "image", 5, threads=1)
    b = kaap_map(model, sample, "image", 5, threads=4)
    assert a.values.tobytes() == b.values.tobytes()


def test_importance_additive_exact(spec, sample):
    model = AdditiveModel.random(spec, 13)
    imp = modality_importance(model, sample)
    c = model.contributions(sample)
    t = imp.target_class
    assert abs(imp.upsilon - c["image"][t]) < 1e-9
    assert abs(imp.delta - c["speech"][t]) < 1e-9
    assert abs(imp.tau - c["text"][t]) < 1e-9
    p_f = model.predict(sample)[t]
    p_b = model.predict(spec.zeros())[t]
    assert abs(imp.total() - (p_f - p_b)) < 1e-9


def test_importance_symmetric_model(spec, sample):
    off = np.array([0.2, 0.9, -0.3, 0.1])
    model = AdditiveModel(spec, np.zeros(4), np.zeros((4, 192)), np.zeros((4, 64)), np.zeros((10, 4)),
                          offsets=np.stack([off] * 3), output="probs")
    imp = modality_importance(model, sample)
    assert imp.upsilon == imp.delta == imp.tau


def test_importance_constant_zero(sample):
    imp = modality_importance(ConstantModel(SMALL), sample)
    assert (imp.upsilon, imp.delta, imp.tau) == (0.0, 0.0, 0.0)


def test_explain_uses_default_k(spec, sample):
    rep = explain(AdditiveModel.random(spec, 2, output="probs"), sample)
    assert rep.k == {"image": 7, "speech": 7, "text": 5} == DEFAULT_K
    d = rep.to_dict()
    assert set(d["modality_importance"]) == {"image", "speech", "text"}
    assert d["image_map"]["shape"] == [8, 8] and len(d["speech_map"]) == 8 and len(d["text_map"]) == 6


def test_normalized_maps_sum_to_one(spec):
    rng = np.random.default_rng(3)
    for seed in range(10):
        model = AdditiveModel.random(spec, seed, output="probs")
        s = spec.random_sample(rng)
        for m in ("image", "speech", "text"):
            amap = kaap_map(model, s, m, 4)
            if amap.normalized:
                assert abs(amap.values.sum() - 1) < 1e-9
            else:
                assert amap.raw_sum <= 0
